"""Online bidding under return-on-spend and budget constraints.

The package provides auction primitives, the mirror-descent dual machinery,
five bidding policies with per-realization guarantees, offline optimum
oracles, and a Monte-Carlo simulator with a CLI front end.
"""

__version__ = "0.1.0"

from .auctions import (
    LINEAR_ALLOCATION,
    AuctionModel,
    CustomAuction,
    LinearAllocation,
    Query,
    QuadratureFailure,
    SecondPrice,
    TruthfulnessReport,
    allocation,
    check_truthful,
    payment,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .mirror import (
    LAMBDA_MAX,
    LAMBDA_MIN,
    DomainError,
    DualState,
    MirrorMap,
    bregman,
    update_budget_dual,
    update_ros_dual,
    update_ros_dual_squared,
)
from .oracle import (
    NumericalFailure,
    OfflineInstance,
    OracleMethod,
    OracleResult,
    TooLarge,
    UnsupportedAuction,
    opt_exact,
    opt_grid,
    opt_lp_upper_bound,
)
from .policies import (
    DEFAULT_BID_CAP,
    Phase,
    PolicyKind,
    PolicyState,
    StateExhausted,
    StepOutcome,
    bid_approx_ros,
    bid_combined,
    default_alpha,
    init_policy_state,
    policy_step,
)
from .simulate import (
    BetaSecondPrice,
    CorrelatedSecondPrice,
    ExperimentReport,
    HorizonStats,
    LinearAllocationUniform,
    Stream,
    TrialMetrics,
    UniformSecondPrice,
    derive_trial_seed,
    estimate_beta,
    generate_stream,
    run_experiment,
    run_trial,
)

__all__ = [
    "__version__",
    "LINEAR_ALLOCATION",
    "AuctionModel",
    "CustomAuction",
    "LinearAllocation",
    "Query",
    "QuadratureFailure",
    "SecondPrice",
    "TruthfulnessReport",
    "allocation",
    "check_truthful",
    "payment",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "LAMBDA_MAX",
    "LAMBDA_MIN",
    "DomainError",
    "DualState",
    "MirrorMap",
    "bregman",
    "update_budget_dual",
    "update_ros_dual",
    "update_ros_dual_squared",
    "NumericalFailure",
    "OfflineInstance",
    "OracleMethod",
    "OracleResult",
    "TooLarge",
    "UnsupportedAuction",
    "opt_exact",
    "opt_grid",
    "opt_lp_upper_bound",
    "DEFAULT_BID_CAP",
    "Phase",
    "PolicyKind",
    "PolicyState",
    "StateExhausted",
    "StepOutcome",
    "bid_approx_ros",
    "bid_combined",
    "default_alpha",
    "init_policy_state",
    "policy_step",
    "BetaSecondPrice",
    "CorrelatedSecondPrice",
    "ExperimentReport",
    "HorizonStats",
    "LinearAllocationUniform",
    "Stream",
    "TrialMetrics",
    "UniformSecondPrice",
    "derive_trial_seed",
    "estimate_beta",
    "generate_stream",
    "run_experiment",
    "run_trial",
]
