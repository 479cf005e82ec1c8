"""Online bidding policies for value maximization under RoS and budget limits.

All policies see queries one at a time, bid, observe the realized allocation
and price, and update dual variables.  With per-round utility
g = v * x(b) - p(b), the RoS constraint asks for sum g >= 0 over the run and
the budget constraint for sum p <= rho * T.

* ``APPROX_ROS`` bids (1 + lambda)/lambda * v and updates lambda
  multiplicatively; the accumulated RoS deficit stays below 2 sqrt(T) ln T
  on every realization.
* ``STRICT_ROS`` first bids truthfully until the accumulated slack exceeds
  the threshold 2 sqrt(T) ln T, then restarts APPROX_ROS on the remaining
  rounds, which makes the final slack nonnegative on every realization.
* ``APPROX_ROS_STRICT_BUDGET`` adds a budget multiplier mu and a hard gate:
  it bids (1 + lambda)/(mu + lambda) * v only while at least one unit of
  budget remains, so the budget can never be overspent.
* ``STRICT_BOTH`` combines the truthful buffer phase (hard-exiting before
  the budget could be exhausted by truthful bids) with the budget-gated
  main loop on the remaining rounds and remaining budget.
* ``SQUARED_APPROX_ROS`` is the half-squared-map variant with a linear
  lambda update; its deficit guarantee degrades to O(T^(2/3)).
* ``TRUTHFUL_BASELINE`` always bids the value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .auctions import Query
from .mirror import (
    DualState,
    update_budget_dual,
    update_ros_dual,
    update_ros_dual_squared,
)

#: Default highest bid SQUARED_APPROX_ROS places once lambda hits zero.
DEFAULT_BID_CAP = 2.0

_G_TOL = 1e-12


class PolicyKind(Enum):
    APPROX_ROS = "approx_ros"
    STRICT_ROS = "strict_ros"
    APPROX_ROS_STRICT_BUDGET = "approx_ros_strict_budget"
    STRICT_BOTH = "strict_both"
    SQUARED_APPROX_ROS = "squared_approx_ros"
    TRUTHFUL_BASELINE = "truthful"


BUDGETED_KINDS = frozenset({PolicyKind.APPROX_ROS_STRICT_BUDGET, PolicyKind.STRICT_BOTH})
STRICT_KINDS = frozenset({PolicyKind.STRICT_ROS, PolicyKind.STRICT_BOTH})


class Phase(Enum):
    BUFFER_BUILDING = "buffer_building"
    MAIN_LOOP = "main_loop"
    EXITED = "exited"


class StateExhausted(RuntimeError):
    """policy_step called after the horizon was consumed or the policy exited."""


@dataclass(slots=True)
class StepOutcome:
    """Everything observable about one round, after the dual updates.

    ``g_prime`` and ``budget_remaining`` are None for policies without a
    budget constraint.  ``lam``/``mu`` are the post-update duals.
    """

    t: int
    value: float
    bid: float
    allocation: float
    price: float
    g: float
    g_prime: Optional[float]
    lam: float
    mu: float
    budget_remaining: Optional[float]


@dataclass(slots=True)
class PolicyState:
    """Mutable per-run state owned by exactly one trial.

    ``t`` counts completed rounds.  ``buffer`` accumulates g during the
    truthful first phase of the strict policies; they transition to the main
    loop once it exceeds ``v_ros_threshold`` = 2 sqrt(T) ln T.
    ``first_phase_length`` is recorded at the transition (and equals the
    number of completed rounds when a run ends without transitioning).
    ``rho`` is rewritten to the remaining-budget rate when STRICT_BOTH
    enters its main loop.
    """

    duals: DualState
    horizon: int
    budget_remaining: Optional[float]
    buffer: float
    phase: Phase
    v_ros_threshold: float
    rho: Optional[float]
    t: int
    first_phase_length: Optional[int]
    bid_cap: float
    intermingled: bool
    alpha_override: Optional[float]
    eta_override: Optional[float]


def default_alpha(kind: PolicyKind, horizon: int) -> float:
    if kind is PolicyKind.SQUARED_APPROX_ROS:
        return horizon ** (-1.0 / 3.0)
    return 1.0 / math.sqrt(horizon)


def init_policy_state(
    kind: PolicyKind,
    horizon: int,
    rho: Optional[float] = None,
    alpha: Optional[float] = None,
    eta: Optional[float] = None,
    bid_cap: float = DEFAULT_BID_CAP,
    intermingled: bool = False,
) -> PolicyState:
    """Fresh state for one run of ``kind`` over ``horizon`` rounds.

    ``alpha``/``eta`` override the defaults 1/sqrt(T) (or T^(-1/3) for the
    squared variant) and 1/((1 + rho^2) sqrt(T)); overrides stay pinned
    across the strict policies' phase restarts.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    budgeted = kind in BUDGETED_KINDS
    if budgeted:
        if rho is None or rho <= 0.0:
            raise ValueError(f"{kind.value} requires a positive rho, got {rho}")
    if intermingled and kind is not PolicyKind.STRICT_ROS:
        raise ValueError("intermingled mode applies to strict_ros only")

    alpha0 = alpha if alpha is not None else default_alpha(kind, horizon)
    if budgeted:
        eta0 = eta if eta is not None else 1.0 / ((1.0 + rho * rho) * math.sqrt(horizon))
    else:
        eta0 = eta if eta is not None else 0.0

    return PolicyState(
        duals=DualState(lam=1.0, mu=0.0, alpha=alpha0, eta=eta0, log_lambda=0.0),
        horizon=horizon,
        budget_remaining=rho * horizon if budgeted else None,
        buffer=0.0,
        phase=Phase.BUFFER_BUILDING if kind in STRICT_KINDS else Phase.MAIN_LOOP,
        v_ros_threshold=2.0 * math.sqrt(horizon) * math.log(horizon),
        rho=rho if budgeted else None,
        t=0,
        first_phase_length=None,
        bid_cap=bid_cap,
        intermingled=intermingled,
        alpha_override=alpha,
        eta_override=eta,
    )


def bid_approx_ros(lam: float, value: float) -> float:
    """Aggressive value-scaled bid (1 + lambda)/lambda * value."""
    return (1.0 + lam) / lam * value


def bid_combined(lam: float, mu: float, value: float, budget_remaining: float) -> float:
    """Budget-gated bid (1 + lambda)/(mu + lambda) * value.

    Returns zero once the remaining budget drops below one, the largest
    price a single round can charge, so the budget is never overspent.
    """
    if budget_remaining < 1.0:
        return 0.0
    return (1.0 + lam) / (mu + lam) * value


def _enter_main_loop(kind: PolicyKind, state: PolicyState) -> None:
    """Transition a strict policy from buffer building to its main loop,
    restarting the duals on the remaining horizon."""
    remaining = state.horizon - state.t
    state.first_phase_length = state.t
    state.phase = Phase.MAIN_LOOP
    sqrt_rem = math.sqrt(remaining)
    alpha = state.alpha_override if state.alpha_override is not None else 1.0 / sqrt_rem
    duals = state.duals
    duals.reset_lambda(alpha)
    if kind is PolicyKind.STRICT_BOTH:
        rho_hat = state.budget_remaining / remaining
        state.rho = rho_hat
        duals.mu = 0.0
        if state.eta_override is not None:
            duals.eta = state.eta_override
        else:
            duals.eta = 1.0 / ((1.0 + rho_hat * rho_hat) * sqrt_rem)


def _decide_bid(kind: PolicyKind, state: PolicyState, v: float) -> tuple[float, bool]:
    """The bid for the current round plus whether it is a truthful buffer round."""
    duals = state.duals
    if kind is PolicyKind.APPROX_ROS:
        return (1.0 + duals.lam) / duals.lam * v, False
    if kind is PolicyKind.STRICT_ROS:
        if state.phase is Phase.MAIN_LOOP:
            return (1.0 + duals.lam) / duals.lam * v, False
        if state.intermingled and state.buffer >= 1.0:
            return (1.0 + duals.lam) / duals.lam * v, False
        return v, True
    if kind is PolicyKind.APPROX_ROS_STRICT_BUDGET:
        return bid_combined(duals.lam, duals.mu, v, state.budget_remaining), False
    if kind is PolicyKind.STRICT_BOTH:
        if state.phase is Phase.MAIN_LOOP:
            return bid_combined(duals.lam, duals.mu, v, state.budget_remaining), False
        return v, True
    if kind is PolicyKind.SQUARED_APPROX_ROS:
        lam = duals.lam
        return (v / lam + v if lam > 0.0 else state.bid_cap), False
    if kind is PolicyKind.TRUTHFUL_BASELINE:
        return v, False
    raise ValueError(f"unknown policy kind {kind!r}")


def _apply_observation(
    kind: PolicyKind,
    state: PolicyState,
    v: float,
    bid: float,
    x: float,
    p: float,
    buffer_round: bool,
) -> tuple[float, Optional[float]]:
    """Dual updates and phase bookkeeping after observing (x, p); returns (g, g')."""
    duals = state.duals
    g = v * x - p

    if __debug__:
        # Gradient sandwich: whenever the bid is at most (1+lam)/lam * v and
        # prices are bounded by one, g lies in [max(-1, -1/lam), v * x].
        assert g <= v * x + _G_TOL
        _lam = duals.lam
        if p <= 1.0 + _G_TOL and _lam > 0.0 and bid <= (1.0 + _lam) / _lam * v + _G_TOL:
            assert g >= max(-1.0, -1.0 / _lam) - _G_TOL

    t_next = state.t + 1
    g_prime: Optional[float] = None

    if kind is PolicyKind.APPROX_ROS:
        update_ros_dual(duals, g)
        state.t = t_next
    elif kind is PolicyKind.STRICT_ROS:
        if buffer_round:
            state.buffer += g
            state.t = t_next
            if state.intermingled:
                state.first_phase_length = (state.first_phase_length or 0) + 1
            elif state.buffer > state.v_ros_threshold and t_next < state.horizon:
                _enter_main_loop(kind, state)
        else:
            if state.intermingled:
                state.buffer += g
            update_ros_dual(duals, g)
            state.t = t_next
    elif kind is PolicyKind.APPROX_ROS_STRICT_BUDGET:
        g_prime = state.rho - p
        update_ros_dual(duals, g)
        update_budget_dual(duals, g_prime)
        state.budget_remaining -= p
        state.t = t_next
    elif kind is PolicyKind.STRICT_BOTH:
        g_prime = state.rho - p
        if buffer_round:
            state.buffer += g
            state.budget_remaining -= p
            state.t = t_next
            # Hard exit first (it precedes the threshold recheck in the loop
            # body): stop for good when the next round index reaches rho * T.
            if t_next + 1 >= state.rho * state.horizon:
                state.phase = Phase.EXITED
                state.first_phase_length = t_next
            elif state.buffer > state.v_ros_threshold and t_next < state.horizon:
                _enter_main_loop(kind, state)
        else:
            update_ros_dual(duals, g)
            update_budget_dual(duals, g_prime)
            state.budget_remaining -= p
            state.t = t_next
    elif kind is PolicyKind.SQUARED_APPROX_ROS:
        update_ros_dual_squared(duals, g)
        state.t = t_next
    else:  # TRUTHFUL_BASELINE
        state.t = t_next

    return g, g_prime


def policy_step(kind: PolicyKind, state: PolicyState, query: Query) -> tuple[StepOutcome, PolicyState]:
    """Run one round: bid, observe the auction, update duals and bookkeeping.

    Mutates ``state`` in place and returns it alongside the outcome (each
    trial owns its state, so in-place transitions are safe).  Raises
    StateExhausted once the horizon is consumed or the policy has exited.
    """
    if state.t >= state.horizon:
        raise StateExhausted(f"horizon {state.horizon} already consumed")
    if state.phase is Phase.EXITED:
        raise StateExhausted("policy exited before the horizon")

    v = query.value
    bid, buffer_round = _decide_bid(kind, state, v)
    auction = query.auction
    x = auction.allocation(bid)
    p = auction.payment(bid)
    g, g_prime = _apply_observation(kind, state, v, bid, x, p, buffer_round)

    outcome = StepOutcome(
        t=state.t,
        value=v,
        bid=bid,
        allocation=x,
        price=p,
        g=g,
        g_prime=g_prime,
        lam=state.duals.lam,
        mu=state.duals.mu,
        budget_remaining=state.budget_remaining,
    )
    return outcome, state
