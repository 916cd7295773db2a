"""
Bounded worker pool for independent experiment cells.

Each cell is (key, args). A cell that raises is recorded with its error
text and the run continues; outcomes always come back in submission order.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, List, Optional, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from .errors import ConfigurationError, ShsBenchError

logger = logging.getLogger(__name__)

# Errors a cell may raise without taking the whole run down
CELL_ERRORS = (ShsBenchError, ArithmeticError, ValueError, RuntimeError)


@dataclass
class CellOutcome:
    key: Hashable
    value: Any = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ResultTable:
    """A results frame plus the failures recorded while building it."""

    frame: pd.DataFrame
    failures: List[str] = field(default_factory=list)


def _call(fn: Callable, key: Hashable, args: Tuple) -> CellOutcome:
    try:
        return CellOutcome(key, fn(*args))
    except CELL_ERRORS as exc:
        logger.warning("Cell %s failed: %s", key, exc)
        return CellOutcome(key, error=f"{type(exc).__name__}: {exc}")


def run_cells(fn: Callable, cells: Sequence[Tuple[Hashable, Tuple]], jobs: int = 1,
              desc: str = "cells", progress: bool = False) -> List[CellOutcome]:
    """
    Evaluate fn(*args) for every (key, args) cell.

    jobs > 1 uses a process pool of that size; fn and args must then be
    picklable (module-level functions, plain data, classifiers).
    """
    if jobs < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {jobs}")
    cells = list(cells)
    logger.info("Running %d %s with %d worker(s)", len(cells), desc, jobs)

    if jobs == 1 or len(cells) <= 1:
        return [_call(fn, key, args) for key, args in tqdm(cells, desc=desc, disable=not progress, leave=False)]

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_call, fn, key, args) for key, args in cells]
        return [f.result() for f in tqdm(futures, desc=desc, disable=not progress, leave=False)]
