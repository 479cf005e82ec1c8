"""Single-query truthful auction models.

A model is an allocation curve x(b) in [0, 1] over bids.  Truthfulness ties
the payment to the allocation through the Myerson identity

    p(b) = b * x(b) - integral_0^b x(z) dz,

so a model is fully determined by its allocation curve.  Built-in models
implement closed-form payments; arbitrary curves fall back to adaptive
quadrature.  Models are immutable after construction and safe to share
across concurrent trials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from scipy.integrate import quad

TRUTHFUL_TOL = 1e-6
QUAD_TOL = 1e-9
_CHECK_BID_MAX = 2.0


class QuadratureFailure(RuntimeError):
    """The payment integral could not be evaluated to tolerance."""


class AuctionModel:
    """Base class for truthful auction models. Subclasses set __slots__ and
    assign fields via object.__setattr__ in __init__; instances reject any
    later mutation."""

    __slots__ = ()

    def allocation(self, bid: float) -> float:
        raise NotImplementedError

    def payment(self, bid: float) -> float:
        """Myerson payment at ``bid``, by quadrature unless overridden."""
        x = self.allocation(bid)
        return bid * x - _allocation_integral(self, 0.0, bid)

    def integration_breakpoints(self) -> tuple[float, ...]:
        """Known discontinuities of the allocation curve (quadrature hints)."""
        return ()

    def __setattr__(self, name: str, value) -> None:
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __delattr__(self, name: str) -> None:
        raise AttributeError(f"{type(self).__name__} is immutable")


class SecondPrice(AuctionModel):
    """Win/lose auction against a posted competing bid.

    Bidding at or above the competing bid wins (ties win) and pays exactly
    the competing bid; losing pays nothing.  Payments are closed-form, no
    quadrature involved.
    """

    __slots__ = ("competing_bid",)

    def __init__(self, competing_bid: float):
        if competing_bid < 0.0:
            raise ValueError(f"competing bid must be nonnegative, got {competing_bid}")
        object.__setattr__(self, "competing_bid", competing_bid)

    def allocation(self, bid: float) -> float:
        return 1.0 if bid >= self.competing_bid else 0.0

    def payment(self, bid: float) -> float:
        return self.competing_bid if bid >= self.competing_bid else 0.0

    def integration_breakpoints(self) -> tuple[float, ...]:
        return (self.competing_bid,)

    def __repr__(self) -> str:
        return f"SecondPrice(competing_bid={self.competing_bid!r})"


class LinearAllocation(AuctionModel):
    """Allocation grows linearly with the bid and saturates at one.

    x(b) = min(1, b) for b >= 0, so p(b) = b^2 / 2 up to b = 1 and 1/2 beyond.
    """

    __slots__ = ()

    def allocation(self, bid: float) -> float:
        if bid <= 0.0:
            return 0.0
        return bid if bid < 1.0 else 1.0

    def payment(self, bid: float) -> float:
        if bid <= 0.0:
            return 0.0
        if bid <= 1.0:
            return 0.5 * bid * bid
        return 0.5

    def integration_breakpoints(self) -> tuple[float, ...]:
        return (1.0,)

    def __repr__(self) -> str:
        return "LinearAllocation()"


#: Shared stateless instance; reuse instead of allocating per query.
LINEAR_ALLOCATION = LinearAllocation()


class CustomAuction(AuctionModel):
    """Model defined by an arbitrary allocation callable.

    The callable must map bids to [0, 1].  Payments are computed by adaptive
    quadrature of the allocation curve at absolute tolerance ``QUAD_TOL``;
    pass ``breakpoints`` for known discontinuities so the integrator can
    split there.
    """

    __slots__ = ("allocation_fn", "breakpoints")

    def __init__(self, allocation_fn: Callable[[float], float],
                 breakpoints: Sequence[float] = ()):
        object.__setattr__(self, "allocation_fn", allocation_fn)
        object.__setattr__(self, "breakpoints", tuple(breakpoints))

    def allocation(self, bid: float) -> float:
        x = float(self.allocation_fn(bid))
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"custom allocation returned {x} at bid {bid}, "
                             "expected a value in [0, 1]")
        return x

    def integration_breakpoints(self) -> tuple[float, ...]:
        return self.breakpoints

    def __repr__(self) -> str:
        return f"CustomAuction({self.allocation_fn!r})"


@dataclass(slots=True)
class Query:
    """One incoming impression: its private value and the auction it faces.

    Treat instances as immutable.  ``value`` must lie in [0, 1]; bids may
    exceed 1 (the aggressive policies overbid on purpose).
    """

    value: float
    auction: AuctionModel

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"query value must be in [0, 1], got {self.value}")


def allocation(model: AuctionModel, bid: float) -> float:
    return model.allocation(bid)


def payment(model: AuctionModel, bid: float) -> float:
    return model.payment(bid)


def _allocation_integral(model: AuctionModel, lo: float, hi: float) -> float:
    """integral_lo^hi x(z) dz by adaptive quadrature."""
    if hi <= lo:
        return 0.0
    pts = [p for p in model.integration_breakpoints() if lo < p < hi]
    try:
        out = quad(model.allocation, lo, hi, points=pts or None,
                   epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200, full_output=1)
    except Exception as exc:  # noqa: BLE001 - integrator failures vary widely
        raise QuadratureFailure(f"quadrature failed on [{lo}, {hi}]: {exc}") from None
    if len(out) > 3:
        # quad appends an explanation message when it could not converge
        raise QuadratureFailure(f"quadrature failed on [{lo}, {hi}]: {out[3]}")
    return out[0]


@dataclass(frozen=True)
class TruthfulnessReport:
    """Grid-check result for one auction model."""

    grid_size: int
    max_monotonicity_violation: float
    max_myerson_residual: float
    passes: bool


def check_truthful(model: AuctionModel, grid_size: int = 1001) -> TruthfulnessReport:
    """Verify a model looks truthful on a uniform bid grid over [0, 2].

    Two checks, both gated at ``TRUTHFUL_TOL``:

    * the allocation curve is nondecreasing across the grid, and
    * the model's payment matches the Myerson identity, with the allocation
      integral recomputed here by quadrature (independent from whatever
      closed form the model's own payment uses).
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    step = _CHECK_BID_MAX / (grid_size - 1)
    bids = [i * step for i in range(grid_size)]
    allocs = [model.allocation(b) for b in bids]

    mono = 0.0
    for cur, nxt in zip(allocs, allocs[1:]):
        if cur - nxt > mono:
            mono = cur - nxt

    resid = 0.0
    for b, x in zip(bids, allocs):
        expected = b * x - _allocation_integral(model, 0.0, b)
        r = abs(model.payment(b) - expected)
        if r > resid:
            resid = r

    return TruthfulnessReport(
        grid_size=grid_size,
        max_monotonicity_violation=mono,
        max_myerson_residual=resid,
        passes=(mono <= TRUTHFUL_TOL and resid <= TRUTHFUL_TOL),
    )
