"""
Zeroth-order optimization (ZOO) attack: stochastic coordinate descent on a
C&W-style loss over log class scores, with gradients estimated by
symmetric differences and coordinate-wise Adam updates.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .attack_core import (
    AttackConstraints,
    AttackGoal,
    BudgetedOracle,
    BudgetExhausted,
    CraftResult,
    finalize,
    prepare_input,
    project,
)
from .errors import ConfigurationError
from .models import ModelAccess

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class ZooParams:
    probe: float = 1e-4
    max_probe: float = 0.1
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    const: float = 10.0
    confidence: float = 0.0
    max_steps: int = 3000

    def __post_init__(self):
        if self.max_steps < 1:
            raise ConfigurationError("ZOO max_steps must be >= 1")
        if not 0 < self.probe <= self.max_probe:
            raise ConfigurationError("ZOO probe must satisfy 0 < probe <= max_probe")
        if not self.learning_rate > 0:
            raise ConfigurationError("ZOO learning_rate must be positive")


def symmetric_difference(f: Callable[[np.ndarray], float], x: np.ndarray, i: int, h: float) -> float:
    """[f(x + h e_i) - f(x - h e_i)] / (2h)."""
    e = np.zeros_like(np.asarray(x, dtype=np.float64))
    e[i] = h
    return (f(x + e) - f(x - e)) / (2.0 * h)


def margin_loss(scores: np.ndarray, t: int, targeted: bool, confidence: float) -> np.ndarray:
    """max(margin, -confidence) over log scores, row-wise."""
    logp = np.log(np.clip(scores, LOG_FLOOR, None))
    others = logp.copy()
    others[:, t] = -np.inf
    rival = others.max(axis=1)
    margin = rival - logp[:, t] if targeted else logp[:, t] - rival
    return np.maximum(margin, -confidence)


def zoo(access: ModelAccess, x, goal: AttackGoal, constraints: AttackConstraints,
        params: ZooParams = ZooParams(), rng: Optional[np.random.Generator] = None,
        true_label: Optional[int] = None) -> CraftResult:
    """
    Score-only coordinate descent.

    Each step evaluates the current point and a +/- probe on one random
    masked coordinate in a single batch; the probe widens tenfold (up to
    max_probe) while the difference is exactly zero.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    oracle = BudgetedOracle(access, constraints.query_budget)
    z0 = prepare_input(access, x)
    mask = constraints.mask_array(z0.size)
    coords = np.flatnonzero(mask)
    targeted = goal.is_targeted

    try:
        original_label = int(np.argmax(oracle.scores(z0)[0]))
    except BudgetExhausted:
        original_label = int(access.classifier.labels_normalized(z0[None, :])[0])
        return finalize(access, z0, z0.copy(), original_label, goal, access.queries, "zoo", true_label)
    if (targeted and original_label == int(goal.target)) or coords.size == 0:
        return finalize(access, z0, z0.copy(), original_label, goal, access.queries, "zoo", true_label)

    t = int(goal.target) if targeted else original_label
    n = z0.size
    m = np.zeros(n)
    v = np.zeros(n)
    epoch = np.ones(n)
    z = z0.copy()

    def loss(points: np.ndarray, scores: np.ndarray) -> np.ndarray:
        dist = np.sum((points - z0) ** 2, axis=1)
        return dist + params.const * margin_loss(scores, t, targeted, params.confidence)

    def probe(i: int):
        """(current point adversarial, loss difference, probe width) for coordinate i."""
        h = params.probe
        while True:
            e = np.zeros(n)
            e[i] = h
            batch = np.vstack([z, z + e, z - e])
            scores = oracle.scores(batch)
            if goal.reached(int(np.argmax(scores[0])), original_label):
                return True, 0.0, h
            values = loss(batch, scores)
            diff = values[1] - values[2]
            if diff != 0.0 or h * 10.0 > params.max_probe:
                return False, diff, h
            h *= 10.0

    steps = 0
    try:
        while steps < params.max_steps:
            i = int(rng.choice(coords))
            reached, diff, h = probe(i)
            if reached:
                logger.debug("zoo: goal reached after %d steps, %d queries", steps, access.queries)
                break
            g = diff / (2.0 * h)

            m[i] = params.beta1 * m[i] + (1 - params.beta1) * g
            v[i] = params.beta2 * v[i] + (1 - params.beta2) * g * g
            corr = np.sqrt(1 - params.beta2 ** epoch[i]) / (1 - params.beta1 ** epoch[i])
            epoch[i] += 1
            step = z.copy()
            step[i] -= params.learning_rate * corr * m[i] / (np.sqrt(v[i]) + 1e-8)
            z = project(step, z0, constraints, mask)
            steps += 1
    except BudgetExhausted:
        logger.debug("zoo: query budget exhausted after %d steps", steps)

    return finalize(access, z0, z, original_label, goal, access.queries, "zoo", true_label, steps=steps)
