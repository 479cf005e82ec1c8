"""Monte-Carlo driver: stream distributions, single trials, full experiments.

Seeding layout: every trial i draws its own seed as splitmix64(master ^ i),
independent of the horizon, so sweeps over T reuse common random numbers
per trial index.  Streams draw the value array first, then the price (or
noise) array, which pins the layout for reproducibility.

Per-round sums (reward, RoS slack, spend) are accumulated in blocks that
are folded with math.fsum, so reported totals do not drift on long runs.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Optional, Sequence, Union

import numpy as np

from .auctions import LINEAR_ALLOCATION, Query, SecondPrice
from .oracle import (
    EXACT_MAX_HORIZON,
    GRID_MAX_HORIZON,
    OfflineInstance,
    OracleResult,
    UnsupportedAuction,
    opt_exact,
    opt_grid,
    opt_lp_upper_bound,
)
from .policies import (
    BUDGETED_KINDS,
    DEFAULT_BID_CAP,
    STRICT_KINDS,
    Phase,
    PolicyKind,
    PolicyState,
    StepOutcome,
    _apply_observation,
    _decide_bid,
    init_policy_state,
)

if TYPE_CHECKING:
    from .config import ExperimentConfig

_MASK64 = (1 << 64) - 1
_BETA_SALT = 0x42455441
_SUM_BLOCK = 4096

ORACLE_CHOICES = ("auto", "exact", "lp", "grid", "none")

#: Below this conversion rate the truthful phase of the strict policies
#: needs more rounds than typical horizons provide.
LOW_BETA_WARNING = 0.05


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer; maps any 64-bit input to a well
    scrambled 64-bit output."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_trial_seed(master_seed: int, trial_index: int) -> int:
    """Seed for one trial; horizon-independent so sweeps share randomness."""
    return splitmix64((master_seed ^ trial_index) & _MASK64)


@dataclass(frozen=True)
class Stream:
    """A realized query stream: values plus either second-price competing
    bids or (when ``competing_bids`` is None) the linear allocation curve."""

    values: np.ndarray
    competing_bids: Optional[np.ndarray]

    def __len__(self) -> int:
        return int(self.values.size)

    def queries(self) -> list[Query]:
        if self.competing_bids is None:
            return [Query(float(v), LINEAR_ALLOCATION) for v in self.values]
        return [Query(float(v), SecondPrice(float(d)))
                for v, d in zip(self.values, self.competing_bids)]


@dataclass(frozen=True)
class UniformSecondPrice:
    """Independent uniforms: v ~ U(v_lo, v_hi), competing bid ~ U(d_lo, d_hi)."""

    v_lo: float = 0.0
    v_hi: float = 1.0
    d_lo: float = 0.0
    d_hi: float = 1.0

    kind = "uniform_second_price"

    def __post_init__(self) -> None:
        for lo, hi, what in ((self.v_lo, self.v_hi, "value"), (self.d_lo, self.d_hi, "price")):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"{what} range [{lo}, {hi}] must sit inside [0, 1]")

    def max_value(self) -> float:
        return self.v_hi

    def sample(self, rng: np.random.Generator, horizon: int) -> Stream:
        v = rng.uniform(self.v_lo, self.v_hi, horizon)
        d = rng.uniform(self.d_lo, self.d_hi, horizon)
        return Stream(v, d)


@dataclass(frozen=True)
class BetaSecondPrice:
    """v ~ Beta(a_v, b_v), competing bid ~ Beta(a_d, b_d), independent."""

    a_v: float
    b_v: float
    a_d: float
    b_d: float

    kind = "beta_second_price"

    def __post_init__(self) -> None:
        for p in (self.a_v, self.b_v, self.a_d, self.b_d):
            if not p > 0.0:
                raise ValueError(f"Beta shape parameters must be positive, got {p}")

    def max_value(self) -> float:
        return 1.0

    def sample(self, rng: np.random.Generator, horizon: int) -> Stream:
        v = rng.beta(self.a_v, self.b_v, horizon)
        d = rng.beta(self.a_d, self.b_d, horizon)
        return Stream(v, d)


@dataclass(frozen=True)
class CorrelatedSecondPrice:
    """Competing bid tracks the value: d = clip(v - margin + noise, 0, 1).

    ``margin`` controls how profitable truthful wins are on average and the
    Gaussian noise (sd ``noise_sd``) how often the bidder loses anyway.
    """

    margin: float
    noise_sd: float = 0.05

    kind = "correlated_second_price"

    def __post_init__(self) -> None:
        if not 0.0 <= self.margin <= 1.0:
            raise ValueError(f"margin must lie in [0, 1], got {self.margin}")
        if self.noise_sd < 0.0:
            raise ValueError(f"noise_sd must be nonnegative, got {self.noise_sd}")

    def max_value(self) -> float:
        return 1.0

    def sample(self, rng: np.random.Generator, horizon: int) -> Stream:
        v = rng.uniform(0.0, 1.0, horizon)
        noise = rng.standard_normal(horizon)
        d = np.clip(v - self.margin + self.noise_sd * noise, 0.0, 1.0)
        return Stream(v, d)


@dataclass(frozen=True)
class LinearAllocationUniform:
    """v ~ U(v_lo, v_hi) against the fixed linear allocation curve."""

    v_lo: float = 0.0
    v_hi: float = 1.0

    kind = "linear_allocation_uniform"

    def __post_init__(self) -> None:
        if not 0.0 <= self.v_lo <= self.v_hi <= 1.0:
            raise ValueError(f"value range [{self.v_lo}, {self.v_hi}] must sit inside [0, 1]")

    def max_value(self) -> float:
        return self.v_hi

    def sample(self, rng: np.random.Generator, horizon: int) -> Stream:
        v = rng.uniform(self.v_lo, self.v_hi, horizon)
        return Stream(v, None)


Distribution = Union[UniformSecondPrice, BetaSecondPrice, CorrelatedSecondPrice,
                     LinearAllocationUniform]

DISTRIBUTION_KINDS = {
    cls.kind: cls
    for cls in (UniformSecondPrice, BetaSecondPrice, CorrelatedSecondPrice,
                LinearAllocationUniform)
}


def distribution_to_dict(dist: Distribution) -> dict:
    out = {"kind": dist.kind}
    for f in fields(dist):
        out[f.name] = getattr(dist, f.name)
    return out


def generate_stream(dist: Distribution, horizon: int, seed: int,
                    target_ros: float = 1.0) -> Stream:
    """Draw one stream and pre-scale the values by the RoS target.

    Scaling values by target_ros turns the constraint "spend at most
    1/target_ros per unit of value" into the normalized "spend at most the
    scaled value", so the policies never see the target explicitly.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    if target_ros <= 0.0:
        raise ValueError(f"target_ros must be positive, got {target_ros}")
    if dist.max_value() * target_ros > 1.0 + 1e-12:
        raise ValueError(
            f"target_ros {target_ros} would scale values above 1 "
            f"(distribution max {dist.max_value()})")
    rng = np.random.default_rng(seed)
    stream = dist.sample(rng, horizon)
    if target_ros != 1.0:
        stream = Stream(stream.values * target_ros, stream.competing_bids)
    return stream


def estimate_beta(dist: Distribution, samples: int = 200_000, seed: int = 0,
                  target_ros: float = 1.0) -> float:
    """Monte-Carlo estimate of the expected truthful-bid utility
    E[max(0, v x(v) - p(v))], the per-round drift of the strict policies'
    buffer phase."""
    stream = generate_stream(dist, samples, seed, target_ros)
    v = stream.values
    if stream.competing_bids is None:
        x = np.clip(v, 0.0, 1.0)
        gains = v * x - 0.5 * x * x
    else:
        gains = v - stream.competing_bids
    return float(np.maximum(gains, 0.0).mean())


@dataclass
class TrialMetrics:
    """Per-trial summary row.

    ``first_phase_length`` is the K statistic: rounds spent in the truthful
    buffer phase (strict policies; equals the round count when the phase
    never ended), None otherwise.  ``stopping_time`` is the first round
    where spend + 1 reached the budget, None if it never did.
    ``opt_value``/``regret`` are None when no oracle ran; regret can be
    negative for the approximate policies (they may outperform the
    constrained offline optimum by violating the constraint).
    """

    trial_index: int
    seed: int
    horizon: int
    policy: str
    reward: float
    ros_slack: float
    total_spend: float
    rounds_played: int
    first_phase_length: Optional[int]
    max_mu: Optional[float]
    max_abs_log_lambda: float
    stopping_time: Optional[int]
    opt_value: Optional[float]
    regret: Optional[float]
    oracle_method: Optional[str]
    trajectory: Optional[list[StepOutcome]] = None


def resolve_oracle(requested: str, horizon: int, dist: Distribution) -> str:
    """Pick the concrete oracle for ``requested`` = "auto"."""
    if requested not in ORACLE_CHOICES:
        raise ValueError(f"oracle must be one of {ORACLE_CHOICES}, got {requested!r}")
    if requested != "auto":
        return requested
    second_price = dist.kind != LinearAllocationUniform.kind
    if second_price:
        return "exact" if horizon <= EXACT_MAX_HORIZON else "lp"
    return "grid" if horizon <= GRID_MAX_HORIZON else "none"


def _run_oracle(method: str, stream: Stream, rho: Optional[float]) -> Optional[OracleResult]:
    if method == "none":
        return None
    if method in ("exact", "lp"):
        if stream.competing_bids is None:
            raise UnsupportedAuction(
                "exact and LP oracles need second-price streams; use the grid oracle")
        instance = OfflineInstance(stream.values, stream.competing_bids, rho)
        return opt_exact(instance) if method == "exact" else opt_lp_upper_bound(instance)
    if method == "grid":
        return opt_grid(stream.queries(), rho=rho)
    raise ValueError(f"unknown oracle method {method!r}")


def run_trial(
    kind: Union[PolicyKind, str],
    dist: Distribution,
    horizon: int,
    seed: int,
    rho: Optional[float] = None,
    target_ros: float = 1.0,
    oracle: str = "auto",
    emit_trajectory: bool = False,
    alpha: Optional[float] = None,
    eta: Optional[float] = None,
    bid_cap: float = DEFAULT_BID_CAP,
    intermingled: bool = False,
    trial_index: int = 0,
) -> TrialMetrics:
    """One full policy run over a freshly drawn stream, plus the offline
    benchmark.

    The offline benchmark is constrained by the budget only when the policy
    itself is (the comparison matches what the policy must satisfy).
    """
    kind = PolicyKind(kind) if isinstance(kind, str) else kind
    stream = generate_stream(dist, horizon, seed, target_ros)
    state = init_policy_state(kind, horizon, rho=rho, alpha=alpha, eta=eta,
                              bid_cap=bid_cap, intermingled=intermingled)

    budgeted = state.budget_remaining is not None
    budget_cap = rho * horizon if budgeted else math.inf
    second_price = stream.competing_bids is not None
    vs = stream.values.tolist()
    ds = stream.competing_bids.tolist() if second_price else None
    model = LINEAR_ALLOCATION

    reward_blk: list[float] = []
    reward_tot: list[float] = []
    g_blk: list[float] = []
    g_tot: list[float] = []
    p_blk: list[float] = []
    p_tot: list[float] = []
    outcomes: Optional[list[StepOutcome]] = [] if emit_trajectory else None

    max_mu = 0.0
    ll_max = 0.0
    ll_min = 0.0
    stopping: Optional[int] = None
    spend_s = 0.0
    spend_c = 0.0
    duals = state.duals

    for i in range(horizon):
        if state.phase is Phase.EXITED:
            break
        v = vs[i]
        bid, buffer_round = _decide_bid(kind, state, v)
        if second_price:
            d = ds[i]
            if bid >= d:
                x = 1.0
                p = d
            else:
                x = 0.0
                p = 0.0
        else:
            x = model.allocation(bid)
            p = model.payment(bid)
        g, g_prime = _apply_observation(kind, state, v, bid, x, p, buffer_round)

        reward_blk.append(v * x)
        g_blk.append(g)
        p_blk.append(p)
        if len(g_blk) == _SUM_BLOCK:
            reward_tot.append(math.fsum(reward_blk))
            reward_blk.clear()
            g_tot.append(math.fsum(g_blk))
            g_blk.clear()
            p_tot.append(math.fsum(p_blk))
            p_blk.clear()

        ll = duals.log_lambda
        if ll > ll_max:
            ll_max = ll
        elif ll < ll_min and ll != -math.inf:
            ll_min = ll

        if budgeted:
            mu = duals.mu
            if mu > max_mu:
                max_mu = mu
            # Neumaier-compensated running spend for the stopping time
            s = spend_s + p
            if abs(spend_s) >= abs(p):
                spend_c += (spend_s - s) + p
            else:
                spend_c += (p - s) + spend_s
            spend_s = s
            if stopping is None and spend_s + spend_c + 1.0 >= budget_cap:
                stopping = state.t

        if outcomes is not None:
            outcomes.append(StepOutcome(
                t=state.t, value=v, bid=bid, allocation=x, price=p, g=g,
                g_prime=g_prime, lam=duals.lam, mu=duals.mu,
                budget_remaining=state.budget_remaining))

    if reward_blk:
        reward_tot.append(math.fsum(reward_blk))
        g_tot.append(math.fsum(g_blk))
        p_tot.append(math.fsum(p_blk))
    reward = math.fsum(reward_tot)
    ros_slack = math.fsum(g_tot)
    total_spend = math.fsum(p_tot)

    if kind in STRICT_KINDS:
        first_phase = state.first_phase_length if state.first_phase_length is not None else state.t
    else:
        first_phase = None

    method = resolve_oracle(oracle, horizon, dist)
    oracle_rho = rho if kind in BUDGETED_KINDS else None
    result = _run_oracle(method, stream, oracle_rho)
    opt_value = result.opt_value if result is not None else None
    regret = opt_value - reward if opt_value is not None else None

    return TrialMetrics(
        trial_index=trial_index,
        seed=seed,
        horizon=horizon,
        policy=kind.value,
        reward=reward,
        ros_slack=ros_slack,
        total_spend=total_spend,
        rounds_played=state.t,
        first_phase_length=first_phase,
        max_mu=max_mu if budgeted else None,
        max_abs_log_lambda=max(ll_max, -ll_min),
        stopping_time=stopping,
        opt_value=opt_value,
        regret=regret,
        oracle_method=method if method != "none" else None,
        trajectory=outcomes,
    )


def _trial_worker(args: tuple) -> TrialMetrics:
    (kind_value, dist, horizon, seed, trial_index, rho, target_ros, oracle,
     emit, alpha, eta, intermingled) = args
    return run_trial(PolicyKind(kind_value), dist, horizon, seed, rho=rho,
                     target_ros=target_ros, oracle=oracle, emit_trajectory=emit,
                     alpha=alpha, eta=eta, intermingled=intermingled,
                     trial_index=trial_index)


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _std(xs: Sequence[float]) -> Optional[float]:
    if len(xs) < 2:
        return None
    m = _mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))


@dataclass
class HorizonStats:
    """Aggregates over all trials at one horizon.

    ``mean_regret`` and ``std_regret`` use the positive part max(0, regret)
    per trial, so an approximate policy beating the constrained optimum
    counts as zero; ``mean_regret_raw`` keeps the sign.  Violation fields
    refer to the RoS constraint; a trial violates when its final slack is
    strictly negative.
    """

    horizon: int
    trials: int
    oracle_method: Optional[str]
    mean_reward: float
    mean_opt_value: Optional[float]
    mean_regret: Optional[float]
    mean_regret_raw: Optional[float]
    std_regret: Optional[float]
    violation_count: int
    violation_rate: float
    mean_violation: float
    max_violation: float
    budget_violation_count: Optional[int]
    mean_total_spend: float
    mean_first_phase_length: Optional[float]
    max_mu: Optional[float]
    stopping_count: Optional[int]
    mean_stopping_time: Optional[float]


def summarize_horizon(horizon: int, rho: Optional[float],
                      metrics: Sequence[TrialMetrics]) -> HorizonStats:
    n = len(metrics)
    regrets = [m.regret for m in metrics if m.regret is not None]
    pos_regrets = [max(0.0, r) for r in regrets]
    opts = [m.opt_value for m in metrics if m.opt_value is not None]
    slacks = [m.ros_slack for m in metrics]
    violations = [max(0.0, -s) for s in slacks]
    ks = [m.first_phase_length for m in metrics if m.first_phase_length is not None]
    mus = [m.max_mu for m in metrics if m.max_mu is not None]
    stops = [m.stopping_time for m in metrics if m.stopping_time is not None]
    budgeted = any(m.max_mu is not None for m in metrics)
    if budgeted and rho is not None:
        cap = rho * horizon
        budget_violations = sum(1 for m in metrics if m.total_spend > cap)
    else:
        budget_violations = None

    return HorizonStats(
        horizon=horizon,
        trials=n,
        oracle_method=metrics[0].oracle_method if metrics else None,
        mean_reward=_mean([m.reward for m in metrics]),
        mean_opt_value=_mean(opts) if opts else None,
        mean_regret=_mean(pos_regrets) if pos_regrets else None,
        mean_regret_raw=_mean(regrets) if regrets else None,
        std_regret=_std(pos_regrets) if pos_regrets else None,
        violation_count=sum(1 for s in slacks if s < 0.0),
        violation_rate=sum(1 for s in slacks if s < 0.0) / n,
        mean_violation=_mean(violations),
        max_violation=max(violations),
        budget_violation_count=budget_violations,
        mean_total_spend=_mean([m.total_spend for m in metrics]),
        mean_first_phase_length=_mean([float(k) for k in ks]) if ks else None,
        max_mu=max(mus) if mus else None,
        stopping_count=len(stops) if budgeted else None,
        mean_stopping_time=_mean([float(s) for s in stops]) if stops else None,
    )


@dataclass
class ExperimentReport:
    """Everything run_experiment produces, before any files are written."""

    beta_estimate: float
    beta_warning: bool
    horizon_stats: list[HorizonStats]
    regret_slope: Optional[float]
    trial_metrics: dict[int, list[TrialMetrics]] = field(repr=False)

    def stats_for(self, horizon: int) -> HorizonStats:
        for hs in self.horizon_stats:
            if hs.horizon == horizon:
                return hs
        raise KeyError(f"no stats for horizon {horizon}")


def fit_regret_slope(stats: Sequence[HorizonStats]) -> Optional[float]:
    """Least-squares slope of log mean positive regret against log T,
    over horizons with strictly positive mean regret.  None with fewer
    than two usable points."""
    pts = [(hs.horizon, hs.mean_regret) for hs in stats
           if hs.mean_regret is not None and hs.mean_regret > 0.0]
    if len(pts) < 2:
        return None
    xs = np.log([float(t) for t, _ in pts])
    ys = np.log([r for _, r in pts])
    return float(np.polyfit(xs, ys, 1)[0])


def run_experiment(config: "ExperimentConfig", threads: int = 1) -> ExperimentReport:
    """All trials across the horizon grid, aggregated.

    ``threads`` > 1 fans trials out over a process pool; results are
    reduced in trial order either way, so the report does not depend on
    the worker count.
    """
    beta_seed = derive_trial_seed(config.seed, _BETA_SALT)
    beta = estimate_beta(config.distribution, seed=beta_seed,
                         target_ros=config.target_ros)
    beta_warning = beta < LOW_BETA_WARNING
    if beta_warning and PolicyKind(config.policy) in STRICT_KINDS:
        warnings.warn(
            f"estimated truthful utility rate {beta:.4f} is very low; the "
            f"buffer phase may consume the whole horizon", stacklevel=2)

    all_metrics: dict[int, list[TrialMetrics]] = {}
    stats: list[HorizonStats] = []
    for horizon in config.horizons:
        oracle = resolve_oracle(config.oracle, horizon, config.distribution)
        tasks = [
            (config.policy, config.distribution, horizon,
             derive_trial_seed(config.seed, i), i, config.rho,
             config.target_ros, oracle, config.emit_trajectories,
             config.alpha_override, config.eta_override, config.intermingled)
            for i in range(config.trials)
        ]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                metrics = list(pool.map(_trial_worker, tasks))
        else:
            metrics = [_trial_worker(t) for t in tasks]
        all_metrics[horizon] = metrics
        stats.append(summarize_horizon(horizon, config.rho, metrics))

    return ExperimentReport(
        beta_estimate=beta,
        beta_warning=beta_warning,
        horizon_stats=stats,
        regret_slope=fit_regret_slope(stats),
        trial_metrics=all_metrics,
    )
