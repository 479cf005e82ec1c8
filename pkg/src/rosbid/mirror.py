"""Mirror maps and the dual-variable update rules shared by the policies.

The RoS multiplier lambda follows a multiplicative-weights update driven by
the generalized negative entropy map h(u) = u log u - u; the budget
multiplier mu follows a projected subgradient step from the half-squared
map h(u) = u^2 / 2.  lambda is tracked in log space with compensated
summation so that after any update sequence it equals the closed form
exp(-alpha * sum g_i) * lambda_1 to float precision, no matter how long the
run is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

LAMBDA_MIN = 1e-300
LAMBDA_MAX = 1e300
_LOG_LAMBDA_MIN = math.log(LAMBDA_MIN)
_LOG_LAMBDA_MAX = math.log(LAMBDA_MAX)


class DomainError(ValueError):
    """Bregman divergence evaluated outside the mirror map's domain."""


class MirrorMap(Enum):
    GENERALIZED_NEG_ENTROPY = "generalized_neg_entropy"
    HALF_SQUARED = "half_squared"


def bregman(mirror_map: MirrorMap, y: float, x: float) -> float:
    """Bregman divergence V_h(y, x) between points y and x.

    For the generalized negative entropy this is y log(y/x) - y + x with the
    0 log 0 = 0 convention, so y = 0 is allowed and gives x.  For the
    half-squared map it is (y - x)^2 / 2.  The reference point x must be
    strictly positive and y nonnegative.
    """
    if x <= 0.0:
        raise DomainError(f"reference point must be positive, got x={x}")
    if y < 0.0:
        raise DomainError(f"argument must be nonnegative, got y={y}")
    if mirror_map is MirrorMap.HALF_SQUARED:
        diff = y - x
        return 0.5 * diff * diff
    if y == 0.0:
        return x
    return y * math.log(y / x) - y + x


@dataclass(slots=True)
class DualState:
    """Dual variables of one policy run.

    ``lam`` is the RoS multiplier and equals exp(log_lambda) clamped to
    [LAMBDA_MIN, LAMBDA_MAX]; ``log_lambda`` is the running sum of
    -alpha * g increments (``_log_comp`` holds the Neumaier compensation so
    the sum stays exact).  ``mu`` is the budget multiplier with its own step
    size ``eta``.  Updates mutate the state in place and return it.
    """

    lam: float = 1.0
    mu: float = 0.0
    alpha: float = 0.0
    eta: float = 0.0
    log_lambda: float = 0.0
    _log_comp: float = 0.0

    def reset_lambda(self, alpha: float) -> None:
        """Re-initialize the RoS dual to lambda = 1 with a new step size."""
        self.lam = 1.0
        self.log_lambda = 0.0
        self._log_comp = 0.0
        self.alpha = alpha


def _exp_clamped(log_value: float) -> float:
    if log_value >= _LOG_LAMBDA_MAX:
        return LAMBDA_MAX
    if log_value <= _LOG_LAMBDA_MIN:
        return LAMBDA_MIN
    return math.exp(log_value)


def update_ros_dual(state: DualState, g: float) -> DualState:
    """Multiplicative step lambda <- lambda * exp(-alpha * g), in log space.

    The increment is added to log_lambda with Neumaier compensation, then the
    compensation is folded back so log_lambda alone is the correctly rounded
    sum and lam = exp(log_lambda) holds to one rounding.
    """
    term = -state.alpha * g
    s = state.log_lambda
    t = s + term
    if abs(s) >= abs(term):
        c = state._log_comp + ((s - t) + term)
    else:
        c = state._log_comp + ((term - t) + s)
    folded = t + c
    state._log_comp = c - (folded - t)
    state.log_lambda = folded
    state.lam = _exp_clamped(folded)
    return state


def update_ros_dual_squared(state: DualState, g: float) -> DualState:
    """Projected linear step lambda <- max(0, lambda - alpha * g).

    The half-squared map admits lambda = 0, where the log-space tracking is
    meaningless; log_lambda is kept in sync as log(lam) (or -inf at zero)
    purely for diagnostics.
    """
    lam = state.lam - state.alpha * g
    if lam < 0.0:
        lam = 0.0
    state.lam = lam
    state.log_lambda = math.log(lam) if lam > 0.0 else float("-inf")
    state._log_comp = 0.0
    return state


def update_budget_dual(state: DualState, g_prime: float) -> DualState:
    """Projected step mu <- max(0, mu - eta * g_prime)."""
    mu = state.mu - state.eta * g_prime
    state.mu = mu if mu > 0.0 else 0.0
    return state
