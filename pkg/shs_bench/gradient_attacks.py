"""
White-box gradient attacks: fast gradient method (sign variant) and
Carlini-Wagner L2.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attack_core import AttackConstraints, AttackGoal, CraftResult, finalize, prepare_input, project
from .errors import CapabilityError, ConfigurationError, NumericalError
from .models import ModelAccess

logger = logging.getLogger(__name__)


def _require_gradient(access: ModelAccess, attack: str):
    if not access.allows("gradient"):
        raise CapabilityError(f"{attack} needs gradient access, victim offers {access.capability.name}")


def fgm(access: ModelAccess, x, goal: AttackGoal, constraints: AttackConstraints,
        true_label: Optional[int] = None) -> CraftResult:
    """
    One signed-gradient step of size epsilon = constraints.threshold.

    Untargeted steps up the loss of the predicted label; targeted steps down
    the loss of the target.
    """
    _require_gradient(access, "fgm")
    if constraints.threshold is None:
        raise ConfigurationError("fgm needs a finite threshold (epsilon)")
    eps = constraints.threshold
    z0 = prepare_input(access, x)
    original_label = int(access.labels(z0)[0])

    if goal.is_targeted:
        grad = access.loss_gradient(z0, int(goal.target))[0]
        z = z0 - eps * np.sign(grad)
    else:
        grad = access.loss_gradient(z0, original_label)[0]
        z = z0 + eps * np.sign(grad)
    z = project(z, z0, constraints)
    return finalize(access, z0, z, original_label, goal, access.queries, "fgm", true_label)


@dataclass(frozen=True)
class CarliniWagnerParams:
    confidence: float = 0.0
    learning_rate: float = 0.01
    max_iterations: int = 1000
    binary_search_steps: int = 9
    initial_const: float = 1e-2
    const_lower: float = 1e-3
    const_upper: float = 1e10
    abort_early: bool = True
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.max_iterations < 1 or self.binary_search_steps < 1:
            raise ConfigurationError("Carlini-Wagner needs at least one iteration and one search step")
        if not 0 < self.const_lower <= self.initial_const <= self.const_upper:
            raise ConfigurationError("Carlini-Wagner constant must satisfy lower <= initial <= upper")


def _margin(logits: np.ndarray, t: int, targeted: bool):
    """
    C&W objective term before clipping at -confidence, and the class that
    defines it (best rival of t).
    """
    others = logits.copy()
    others[t] = -np.inf
    rival = int(np.argmax(others))
    if targeted:
        return logits[rival] - logits[t], rival
    return logits[t] - logits[rival], rival


def carlini_wagner(access: ModelAccess, x, goal: AttackGoal, constraints: AttackConstraints,
                   params: CarliniWagnerParams = CarliniWagnerParams(),
                   true_label: Optional[int] = None) -> CraftResult:
    """
    Minimize ||delta||^2 + c * max(f, -confidence) over a tanh-reparameterized
    box, with a binary search over c.

    Only masked-in coordinates are optimized. A threshold is applied after
    the search and success is re-evaluated on the projected point.
    """
    _require_gradient(access, "carlini_wagner")
    z0 = prepare_input(access, x)
    logits0 = access.logits(z0)[0]
    original_label = int(np.argmax(logits0))
    targeted = goal.is_targeted
    t = int(goal.target) if targeted else original_label
    mask = constraints.mask_array(z0.size)

    if targeted and original_label == t:
        return finalize(access, z0, z0.copy(), original_label, goal, access.queries, "carlini_wagner", true_label)

    # keep arctanh finite at the box edges
    w0 = np.arctanh((2.0 * z0 - 1.0) * (1.0 - 1e-6))
    tanh_w0 = np.tanh(w0)

    def to_box(w):
        # offset form so that w0 maps back onto z0 exactly
        return np.where(mask, np.clip(z0 + (np.tanh(w) - tanh_w0) / 2.0, 0.0, 1.0), z0)

    const = params.initial_const
    lower, upper = 0.0, params.const_upper
    best_l2 = np.inf
    best_z = None
    last_z = z0.copy()

    for step in range(params.binary_search_steps):
        w = w0.copy()
        m = np.zeros_like(w)
        v = np.zeros_like(w)
        prev = np.inf
        found = False

        for it in range(params.max_iterations):
            z = to_box(w)
            logits = access.logits(z)[0]
            margin, rival = _margin(logits, t, targeted)
            f = max(margin, -params.confidence)
            l2sq = float(np.sum((z - z0) ** 2))
            loss = l2sq + const * f
            if not np.isfinite(loss):
                raise NumericalError(f"Carlini-Wagner loss became non-finite (c={const:g}, iteration {it})")

            label = int(np.argmax(logits))
            if goal.reached(label, original_label):
                found = True
                if l2sq < best_l2:
                    best_l2 = l2sq
                    best_z = z

            if params.abort_early and it % max(params.max_iterations // 10, 1) == 0:
                if loss > prev * 0.9999:
                    break
                prev = loss

            grad_z = 2.0 * (z - z0)
            if margin > -params.confidence:
                J = access.logit_jacobian(z)
                dmargin = (J[rival] - J[t]) if targeted else (J[t] - J[rival])
                grad_z = grad_z + const * dmargin
            grad_w = np.where(mask, grad_z * (1.0 - np.tanh(w) ** 2) / 2.0, 0.0)

            # Adam
            m = params.beta1 * m + (1 - params.beta1) * grad_w
            v = params.beta2 * v + (1 - params.beta2) * grad_w ** 2
            m_hat = m / (1 - params.beta1 ** (it + 1))
            v_hat = v / (1 - params.beta2 ** (it + 1))
            w = w - params.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
        last_z = to_box(w)

        if found:
            upper = min(upper, const)
            const = (lower + upper) / 2
        else:
            lower = max(lower, const)
            const = (lower + upper) / 2 if upper < params.const_upper else const * 10
        const = float(np.clip(const, params.const_lower, params.const_upper))
        logger.debug("C&W search step %d: found=%s next c=%g best l2=%g", step, found, const, best_l2)

    candidate = best_z if best_z is not None else last_z
    candidate = project(candidate, z0, constraints, mask)
    return finalize(access, z0, candidate, original_label, goal, access.queries, "carlini_wagner", true_label)
