"""
Error types shared by every shs_bench module.

Each error also derives from the builtin a caller would naturally catch
(ValueError for bad input, TypeError for unsupported operations, ...).
"""

from typing import Optional, Sequence


class ShsBenchError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(ShsBenchError, ValueError):
    """Invalid specification, rate, threshold or configuration key."""


class InvalidInputError(ShsBenchError, ValueError):
    """Vector with wrong length or non-finite values."""


class ParseError(ShsBenchError, ValueError):
    """Problem reading a CSV dataset or a model file."""

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[str] = None):
        self.path = path
        self.line = line
        self.column = column
        self.message = message
        super().__init__(self._render())

    def _render(self) -> str:
        location = ""
        if self.path is not None:
            location = str(self.path)
            if self.line is not None:
                location += f":{self.line}"
            location += ": "
        if self.column is not None:
            return f"{location}column '{self.column}': {self.message}"
        return f"{location}{self.message}"


class DegenerateFeatureError(ShsBenchError, ValueError):
    """A feature is constant over the split used to fit a scaler."""

    def __init__(self, indices: Sequence[int]):
        self.indices = tuple(int(i) for i in indices)
        super().__init__(
            f"Degenerate (constant) features at indices {list(self.indices)}; "
            "cannot scale a zero-width range"
        )


class CapabilityError(ShsBenchError, TypeError):
    """Operation not offered by this model or this access level."""


class TrainingError(ShsBenchError, RuntimeError):
    """Training diverged (non-finite loss)."""


class NumericalError(ShsBenchError, ArithmeticError):
    """An attack objective became non-finite."""
