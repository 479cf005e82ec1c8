"""Built-in self-check suites behind the ``check`` subcommand.

Each suite revalidates one of the properties the library leans on:
truthfulness of the shipped auction models, the local strong convexity of
the entropy mirror map, the consistency of the incremental lambda update
with its closed form, and dominance of the LP bound over exact
enumeration on random small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .auctions import (
    LINEAR_ALLOCATION,
    AuctionModel,
    CustomAuction,
    SecondPrice,
    check_truthful,
)
from .mirror import (
    LAMBDA_MAX,
    LAMBDA_MIN,
    DualState,
    MirrorMap,
    bregman,
    update_ros_dual,
)
from .oracle import OfflineInstance, opt_exact, opt_lp_upper_bound

#: Extra models folded into the truthfulness suite; tests append broken
#: fixtures here to exercise the failure path.
EXTRA_TRUTHFULNESS_MODELS: list[AuctionModel] = []


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _check_truthfulness() -> SuiteResult:
    models: list[AuctionModel] = [
        SecondPrice(0.0),
        SecondPrice(0.3),
        SecondPrice(0.95),
        LINEAR_ALLOCATION,
        CustomAuction(lambda b: min(1.0, 0.25 * b * b), breakpoints=(2.0,)),
    ]
    models.extend(EXTRA_TRUTHFULNESS_MODELS)
    worst_resid = 0.0
    worst_mono = 0.0
    failed = []
    for model in models:
        rep = check_truthful(model)
        worst_resid = max(worst_resid, rep.max_myerson_residual)
        worst_mono = max(worst_mono, rep.max_monotonicity_violation)
        if not rep.passes:
            failed.append(type(model).__name__)
    detail = (f"max payment-identity residual {worst_resid:.3e}, "
              f"max monotonicity violation {worst_mono:.3e}")
    if failed:
        detail += f"; failed: {', '.join(failed)}"
    return SuiteResult("truthfulness", not failed, detail)


def _check_bregman() -> SuiteResult:
    rng = np.random.default_rng(1234)
    xs = np.exp(rng.uniform(-8.0, 8.0, 10_000))
    ys = np.exp(rng.uniform(-8.0, 8.0, 10_000))
    ys[:50] = 0.0  # boundary of the entropy domain
    min_margin = math.inf
    min_value = math.inf
    for x, y in zip(xs, ys):
        v_ent = bregman(MirrorMap.GENERALIZED_NEG_ENTROPY, y, x)
        quad = (y - x) ** 2 / (2.0 * max(x, y))
        min_margin = min(min_margin, v_ent - quad)
        min_value = min(min_value, v_ent,
                        bregman(MirrorMap.HALF_SQUARED, y, x))
    ok = min_margin >= -1e-12 and min_value >= -1e-12
    return SuiteResult(
        "bregman", ok,
        f"min divergence-vs-quadratic margin {min_margin:.3e}, "
        f"min divergence {min_value:.3e}")


def _check_lambda() -> SuiteResult:
    rng = np.random.default_rng(99)
    gs = rng.uniform(-1.0, 1.0, 10_000).tolist()
    state = DualState(alpha=0.013)
    for g in gs:
        update_ros_dual(state, g)
    closed = math.exp(-0.013 * math.fsum(gs))
    rel = abs(state.lam - closed) / closed
    state = DualState(alpha=1.0)
    update_ros_dual(state, -800.0)
    hi_ok = state.lam == LAMBDA_MAX
    update_ros_dual(state, 1600.0)
    lo_ok = state.lam == LAMBDA_MIN
    ok = rel <= 1e-12 and hi_ok and lo_ok
    return SuiteResult(
        "lambda", ok,
        f"closed-form relative error {rel:.3e}, clamps hit: high={hi_ok} low={lo_ok}")


def _check_oracle() -> SuiteResult:
    rng = np.random.default_rng(2718)
    worst = math.inf
    for i in range(500):
        t = int(rng.integers(1, 16))
        v = rng.uniform(0.0, 1.0, t)
        d = rng.uniform(0.0, 1.0, t)
        rho = 0.25 if i % 2 else None
        inst = OfflineInstance(v, d, rho)
        exact = opt_exact(inst).opt_value
        upper = opt_lp_upper_bound(inst).opt_value
        worst = min(worst, upper - exact)
        if upper < exact - 1e-9:
            return SuiteResult(
                "oracle", False,
                f"LP bound {upper:.12g} below exact {exact:.12g} on instance {i}")
    return SuiteResult("oracle", True, f"min LP-minus-exact gap {worst:.3e} over 500 instances")


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "truthfulness": _check_truthfulness,
    "bregman": _check_bregman,
    "lambda": _check_lambda,
    "oracle": _check_oracle,
}


def _run_one(name: str) -> SuiteResult:
    try:
        return SUITES[name]()
    except Exception as exc:  # a crashing suite is a failing suite
        return SuiteResult(name, False, f"raised {type(exc).__name__}: {exc}")


def run_checks(suite: Optional[str] = None) -> list[SuiteResult]:
    """Run one named suite or all of them; unknown names raise ValueError."""
    if suite is not None:
        if suite not in SUITES:
            raise ValueError(f"unknown suite '{suite}', have {sorted(SUITES)}")
        return [_run_one(suite)]
    return [_run_one(name) for name in sorted(SUITES)]
