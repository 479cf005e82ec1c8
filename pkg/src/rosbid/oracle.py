"""Offline optimum oracles for realized query streams.

For second-price streams the offline problem collapses to choosing the set
of rounds to win: maximize the value of the winning set subject to paying
at most its value (the RoS constraint) and at most rho * T (optional
budget).  ``opt_exact`` enumerates subsets (small horizons), while
``opt_lp_upper_bound`` solves the fractional relaxation

    max sum v_t x_t   s.t.  sum (d_t - v_t) x_t <= 0,
                            sum d_t x_t <= rho * T,   0 <= x_t <= 1

through its two-multiplier dual.  Any nonnegative multiplier pair gives a
valid upper bound by weak duality; the solver minimizes the dual objective
by bisection on its subgradient and certifies near-optimality by
recovering a feasible primal from the reduced costs.  For other auction
models ``opt_grid`` runs an approximate dynamic program over a bid grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .auctions import Query, SecondPrice

EXACT_MAX_HORIZON = 25
GRID_MAX_HORIZON = 100
LP_GAP_TOL = 1e-7

_ENUM_CHUNK = 1 << 16


class TooLarge(ValueError):
    """Instance exceeds the oracle's horizon limit."""


class UnsupportedAuction(TypeError):
    """Oracle cannot handle this auction model."""


class NumericalFailure(RuntimeError):
    """LP solver could not certify its optimality gap."""


class OracleMethod(Enum):
    EXACT_ENUMERATION = "exact_enumeration"
    FRACTIONAL_LP = "fractional_lp"
    GRID_SEARCH = "grid_search"


@dataclass(frozen=True)
class OracleResult:
    """``opt_value`` plus how it was obtained.

    ``is_upper_bound`` marks relaxations; ``tolerance`` is set only by the
    approximate grid oracle.  ``chosen_set`` lists the winning rounds for
    exact enumeration.
    """

    opt_value: float
    method: OracleMethod
    is_upper_bound: bool
    chosen_set: Optional[tuple[int, ...]] = None
    tolerance: Optional[float] = None


@dataclass
class OfflineInstance:
    """A realized second-price stream reduced to (value, competing bid) pairs."""

    values: np.ndarray
    competing_bids: np.ndarray
    rho: Optional[float] = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.competing_bids = np.asarray(self.competing_bids, dtype=np.float64)
        if self.values.shape != self.competing_bids.shape:
            raise ValueError("values and competing_bids must have equal length")

    @classmethod
    def from_queries(cls, queries: Sequence[Query], rho: Optional[float] = None) -> "OfflineInstance":
        values = []
        prices = []
        for q in queries:
            if not isinstance(q.auction, SecondPrice):
                raise UnsupportedAuction(
                    f"offline reduction needs second-price queries, got {type(q.auction).__name__}")
            values.append(q.value)
            prices.append(q.auction.competing_bid)
        return cls(np.array(values), np.array(prices), rho)

    def __len__(self) -> int:
        return int(self.values.size)


def opt_exact(instance: OfflineInstance) -> OracleResult:
    """Exhaustive search over win-sets; exact for horizons up to 25.

    The reported optimum is re-summed with math.fsum over the chosen set so
    the value does not depend on the enumeration's internal summation order.
    """
    T = len(instance)
    if T > EXACT_MAX_HORIZON:
        raise TooLarge(f"exact enumeration limited to T <= {EXACT_MAX_HORIZON}, got {T}")
    v = instance.values
    d = instance.competing_bids
    cap = instance.rho * T if instance.rho is not None else math.inf

    best_value = 0.0
    best_index = 0
    n = 1 << T
    cols = np.arange(T, dtype=np.uint64)
    for start in range(0, n, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, n), dtype=np.uint64)
        bits = ((idx[:, None] >> cols[None, :]) & np.uint64(1)).astype(np.float64)
        sv = bits @ v
        sd = bits @ d
        feasible = (sd <= sv) & (sd <= cap)
        if not feasible.any():
            continue
        local = np.where(feasible, sv, -1.0)
        j = int(np.argmax(local))
        if local[j] > best_value:
            best_value = float(local[j])
            best_index = start + j

    chosen = tuple(t for t in range(T) if (best_index >> t) & 1)
    opt = float(math.fsum(v[t] for t in chosen)) if chosen else 0.0
    return OracleResult(opt_value=opt, method=OracleMethod.EXACT_ENUMERATION,
                        is_upper_bound=False, chosen_set=chosen)


class _DualSolver:
    """Minimizes the LP dual objective

        phi(u1, u2) = B*u2 + sum_t max(0, v_t + u1*(v_t - d_t) - u2*d_t)

    over u1, u2 >= 0.  The inner minimization over u2 is exact (weighted
    kink scan); the outer one bisects on the subgradient in u1.
    """

    def __init__(self, v: np.ndarray, d: np.ndarray, budget: Optional[float]):
        self.v = v
        self.d = d
        self.vmd = v - d
        self.budget = budget
        zero_d = d <= 0.0
        self.v0 = v[zero_d]
        self.vmd0 = self.vmd[zero_d]
        self.vp = v[~zero_d]
        self.dp = d[~zero_d]
        self.vmdp = self.vmd[~zero_d]
        with np.errstate(divide="ignore"):
            self.inv_dp = np.where(self.dp > 0.0, 1.0 / self.dp, 0.0)

    def evaluate(self, u1: float) -> tuple[float, float, float]:
        """phi at (u1, best u2), that u2, and a subgradient of u1 -> psi.

        For psi(u1) = min_{u2 >= 0} phi(u1, u2) a valid subgradient must be
        taken at a point of the subdifferential whose u2-component is
        stationary.  When u2 lands on a kink item, that item therefore
        enters with the fractional weight theta that makes the budget term
        exactly tight, not with weight 0 or 1.
        """
        w0 = self.v0 + u1 * self.vmd0
        act0 = w0 > 0.0
        const = float(w0[act0].sum())
        sub0 = float(self.vmd0[act0].sum())

        wp = self.vp + u1 * self.vmdp
        if self.dp.size == 0:
            return const, 0.0, sub0
        k = wp * self.inv_dp
        mask = k > 0.0
        if not mask.any():
            return const, 0.0, sub0
        km = k[mask]
        dm = self.dp[mask]
        if self.budget is None:
            u2 = 0.0
        else:
            total = float(dm.sum())
            if total <= self.budget:
                u2 = 0.0
            else:
                order = np.argsort(km, kind="stable")
                ks = km[order]
                cs = np.cumsum(dm[order])
                j = int(np.searchsorted(cs, total - self.budget, side="left"))
                j = min(j, ks.size - 1)
                u2 = float(ks[j])
        phi = const + float((dm * np.maximum(0.0, km - u2)).sum())
        if self.budget is not None:
            phi += self.budget * u2
        strict = k > u2
        sub = sub0 + float(self.vmdp[strict].sum())
        if u2 > 0.0:
            ties = k == u2
            tie_d = float(self.dp[ties].sum())
            if tie_d > 0.0:
                spend_strict = float(self.dp[strict].sum())
                theta = min(1.0, max(0.0, (self.budget - spend_strict) / tie_d))
                sub += theta * float(self.vmdp[ties].sum())
        return phi, u2, sub

    def solve(self) -> tuple[float, float, float]:
        """Returns (phi_best, u1_best, u2_best) across all evaluations."""
        phi0, u20, sub0 = self.evaluate(0.0)
        best = (phi0, 0.0, u20)
        if sub0 >= 0.0:
            return best
        # expand until the subgradient turns nonnegative
        lo = 0.0
        hi = 1.0
        for _ in range(80):
            phi, u2, sub = self.evaluate(hi)
            if phi < best[0]:
                best = (phi, hi, u2)
            if sub >= 0.0:
                break
            lo = hi
            hi *= 4.0
        else:
            # objective keeps decreasing; flat tail, current best is the bound
            return best
        for _ in range(90):
            if hi - lo <= max(1e-14, 1e-14 * hi):
                break
            mid = 0.5 * (lo + hi)
            phi, u2, sub = self.evaluate(mid)
            if phi < best[0]:
                best = (phi, mid, u2)
            if sub < 0.0:
                lo = mid
            else:
                hi = mid
        return best


def _feasible_value(x: np.ndarray, v: np.ndarray, d: np.ndarray,
                    budget: Optional[float]) -> Optional[float]:
    slack = float(((d - v) * x).sum())
    scale1 = float(np.abs(d - v).sum()) + 1.0
    if slack > 1e-9 * scale1:
        return None
    if budget is not None:
        spend = float((d * x).sum())
        if spend > budget + 1e-9 * (budget + 1.0):
            return None
    return float((v * x).sum())


def _greedy_primals(v: np.ndarray, d: np.ndarray, budget: Optional[float]) -> list[float]:
    """Feasible fractional solutions from ratio greedies, as gap certificates."""
    out = [0.0]
    good = d <= v
    cost = d - v

    # RoS greedy: take all profitable rounds, spend the slack on the best
    # value-per-deficit losers.
    x = good.astype(np.float64)
    slack = float(-cost[good].sum())
    bad_idx = np.flatnonzero(~good & (v > 0.0))
    if bad_idx.size:
        ratios = v[bad_idx] / cost[bad_idx]
        for j in bad_idx[np.argsort(-ratios, kind="stable")]:
            if slack <= 0.0:
                break
            take = min(1.0, slack / cost[j])
            x[j] = take
            slack -= take * cost[j]
    val = _feasible_value(x, v, d, budget)
    if val is not None:
        out.append(val)

    if budget is not None:
        # budget knapsack over profitable rounds only (always RoS-feasible)
        x = np.zeros_like(v)
        left = budget
        good_idx = np.flatnonzero(good & (v > 0.0))
        with np.errstate(divide="ignore"):
            eff = np.where(d[good_idx] > 0.0, v[good_idx] / np.maximum(d[good_idx], 1e-300), np.inf)
        for j in good_idx[np.argsort(-eff, kind="stable")]:
            if d[j] <= 0.0:
                x[j] = 1.0
                continue
            if left <= 0.0:
                break
            take = min(1.0, left / d[j])
            x[j] = take
            left -= take * d[j]
        val = _feasible_value(x, v, d, budget)
        if val is not None:
            out.append(val)
    return out


def _recovered_primals(v: np.ndarray, d: np.ndarray, budget: Optional[float],
                       u1: float, u2: float) -> list[float]:
    """Primal candidates from complementary slackness at the dual point.

    Items with strictly positive reduced cost go to 1, strictly negative to
    0; the few near-zero items are tried as the fractional pair completing
    the active constraints.
    """
    w = v + u1 * (v - d)
    r = w - u2 * d
    tight1 = u1 > 1e-10
    tight2 = budget is not None and u2 > 1e-10

    near = np.argsort(np.abs(r), kind="stable")[:6]
    near_set = set(int(i) for i in near)
    base = (r > 0.0)
    for i in near_set:
        base[i] = False

    eq_rows = []
    if tight1:
        eq_rows.append(d - v)
    if tight2:
        eq_rows.append(d)
    targets_full = []
    if tight1:
        targets_full.append(0.0)
    if tight2:
        targets_full.append(budget)

    candidates: list[float] = []

    def try_assignment(frac: tuple[int, ...], ones: tuple[int, ...]) -> None:
        x = base.astype(np.float64)
        for i in ones:
            x[i] = 1.0
        m = len(eq_rows)
        if m != len(frac):
            if m == 0 and not frac:
                val = _feasible_value(x, v, d, budget)
                if val is not None:
                    candidates.append(val)
            return
        if m:
            rhs = []
            mat = []
            for row, tgt in zip(eq_rows, targets_full):
                fixed = float((row * x).sum())
                rhs.append(tgt - fixed)
                mat.append([row[i] for i in frac])
            a = np.array(mat)
            b = np.array(rhs)
            try:
                if m == 1:
                    if abs(a[0, 0]) < 1e-13:
                        return
                    sol = np.array([b[0] / a[0, 0]])
                else:
                    if abs(np.linalg.det(a)) < 1e-13:
                        return
                    sol = np.linalg.solve(a, b)
            except np.linalg.LinAlgError:
                return
            for val_i in sol:
                if not -1e-9 <= val_i <= 1.0 + 1e-9:
                    return
            for i, val_i in zip(frac, sol):
                x[i] = min(1.0, max(0.0, float(val_i)))
        val = _feasible_value(x, v, d, budget)
        if val is not None:
            candidates.append(val)

    near_list = sorted(near_set)
    n_eq = len(eq_rows)
    # every way to pick the fractional items among the near-zero ones, with
    # the remaining near items resolved by the sign of their reduced cost
    from itertools import combinations

    for frac in combinations(near_list, n_eq):
        rest = [i for i in near_list if i not in frac]
        ones = tuple(i for i in rest if r[i] > 0.0)
        try_assignment(tuple(frac), ones)
    if n_eq:
        # also the plain sign assignment without fractional fills
        ones = tuple(i for i in near_list if r[i] > 0.0)
        x = base.astype(np.float64)
        for i in ones:
            x[i] = 1.0
        val = _feasible_value(x, v, d, budget)
        if val is not None:
            candidates.append(val)
    return candidates


def opt_lp_upper_bound(instance: OfflineInstance, gap_tol: float = LP_GAP_TOL) -> OracleResult:
    """Fractional-relaxation upper bound on the offline optimum.

    The reported value is the best dual objective found, so it upper-bounds
    the true optimum regardless of how well the search converged; the
    certificate only controls tightness.  Raises NumericalFailure when no
    recovered feasible primal comes within ``gap_tol`` (relative, floored
    at the same absolute value) of the dual bound.
    """
    T = len(instance)
    if T == 0:
        return OracleResult(0.0, OracleMethod.FRACTIONAL_LP, True)
    v = instance.values
    d = instance.competing_bids
    budget = instance.rho * T if instance.rho is not None else None

    solver = _DualSolver(v, d, budget)
    phi, u1, u2 = solver.solve()

    primal = max(_greedy_primals(v, d, budget) + _recovered_primals(v, d, budget, u1, u2))
    gap = phi - primal
    if gap > gap_tol * max(1.0, abs(phi)):
        raise NumericalFailure(
            f"LP gap {gap:.3e} above tolerance (dual {phi:.12g}, primal {primal:.12g}, "
            f"u1={u1:.6g}, u2={u2:.6g}, T={T})")
    return OracleResult(float(phi), OracleMethod.FRACTIONAL_LP, True)


def opt_grid(queries: Sequence[Query], rho: Optional[float] = None,
             grid_size: int = 1001, slack_bin: float = 1e-2,
             bid_max: float = 2.0) -> OracleResult:
    """Approximate offline optimum for arbitrary auction models.

    Dynamic program over bids restricted to a uniform grid on [0, bid_max]
    and the running RoS slack discretized into ``slack_bin`` bins (rounded
    up, so the result upper-bounds the best grid-restricted strategy).  The
    reported ``tolerance`` is the worst-case accumulated rounding,
    horizon * slack_bin.  Budgets are not supported here.
    """
    T = len(queries)
    if T > GRID_MAX_HORIZON:
        raise TooLarge(f"grid oracle limited to T <= {GRID_MAX_HORIZON}, got {T}")
    if rho is not None:
        raise UnsupportedAuction("grid oracle handles the RoS constraint only")
    if T == 0:
        return OracleResult(0.0, OracleMethod.GRID_SEARCH, False, tolerance=0.0)

    bids = np.linspace(0.0, bid_max, grid_size)
    lo = -(bid_max * T + 1.0)
    nbins = int(math.ceil((T + 1.0 - lo) / slack_bin)) + 1
    origin = int(round(-lo / slack_bin))

    dp = np.full(nbins, -np.inf)
    dp[origin] = 0.0
    for q in queries:
        xs = np.array([q.auction.allocation(b) for b in bids])
        ps = np.array([q.auction.payment(b) for b in bids])
        dvs = q.value * xs
        gs = dvs - ps
        shifts = np.ceil(gs / slack_bin - 1e-9).astype(np.int64)
        # one transition per distinct (shift, reward) pair
        seen: dict[tuple[int, float], None] = {}
        for s, dv in zip(shifts.tolist(), dvs.tolist()):
            seen.setdefault((s, dv), None)
        new_dp = np.full(nbins, -np.inf)
        for (s, dv) in seen:
            if s >= 0:
                np.maximum(new_dp[s:], dp[:nbins - s] + dv, out=new_dp[s:])
            else:
                np.maximum(new_dp[:nbins + s], dp[-s:] + dv, out=new_dp[:nbins + s])
        dp = new_dp

    feasible = dp[origin:]
    best = float(feasible.max())
    return OracleResult(max(best, 0.0), OracleMethod.GRID_SEARCH, False,
                        tolerance=T * slack_bin)
