"""Policy behavior: bids, phase transitions, and per-realization guarantees."""

import math

import numpy as np
import pytest

from rosbid.auctions import Query, SecondPrice
from rosbid.policies import (
    DEFAULT_BID_CAP,
    Phase,
    PolicyKind,
    StateExhausted,
    bid_approx_ros,
    bid_combined,
    default_alpha,
    init_policy_state,
    policy_step,
)


def run_on_arrays(kind, values, prices, **kwargs):
    """Drive a policy over explicit (value, price) arrays; returns the
    outcome list and final state."""
    state = init_policy_state(kind, len(values), **kwargs)
    outcomes = []
    for v, d in zip(values, prices):
        if state.phase is Phase.EXITED:
            break
        out, state = policy_step(kind, state, Query(v, SecondPrice(d)))
        outcomes.append(out)
    return outcomes, state


def random_uniform_arrays(rng, horizon):
    return rng.uniform(0.0, 1.0, horizon).tolist(), rng.uniform(0.0, 1.0, horizon).tolist()


class TestBidFormulas:
    def test_aggressive_bid(self):
        assert bid_approx_ros(1.0, 0.5) == 1.0
        assert bid_approx_ros(3.0, 0.75) == pytest.approx(1.0)

    def test_combined_bid(self):
        assert bid_combined(1.0, 0.0, 0.5, 10.0) == 1.0
        assert bid_combined(1.0, 1.0, 0.5, 10.0) == 0.5

    def test_budget_gate_shuts_off_bidding(self):
        assert bid_combined(1.0, 0.0, 0.5, 0.999) == 0.0
        assert bid_combined(1.0, 0.0, 0.5, 1.0) == 1.0


class TestInit:
    def test_defaults(self):
        state = init_policy_state(PolicyKind.APPROX_ROS, 100)
        assert state.duals.lam == 1.0
        assert state.duals.alpha == pytest.approx(0.1)
        assert state.phase is Phase.MAIN_LOOP
        assert state.budget_remaining is None

    def test_default_alpha_squared_uses_cube_root(self):
        assert default_alpha(PolicyKind.SQUARED_APPROX_ROS, 1000) == pytest.approx(0.1)
        assert default_alpha(PolicyKind.APPROX_ROS, 10_000) == pytest.approx(0.01)

    def test_budgeted_policy_requires_rho(self):
        with pytest.raises(ValueError):
            init_policy_state(PolicyKind.APPROX_ROS_STRICT_BUDGET, 100)
        with pytest.raises(ValueError):
            init_policy_state(PolicyKind.STRICT_BOTH, 100, rho=-0.5)

    def test_budget_and_eta(self):
        state = init_policy_state(PolicyKind.APPROX_ROS_STRICT_BUDGET, 400, rho=0.25)
        assert state.budget_remaining == 100.0
        assert state.duals.eta == pytest.approx(1.0 / ((1.0 + 0.0625) * 20.0))

    def test_strict_policies_start_in_buffer_phase(self):
        for kind, kwargs in ((PolicyKind.STRICT_ROS, {}), (PolicyKind.STRICT_BOTH, {"rho": 0.5})):
            state = init_policy_state(kind, 100, **kwargs)
            assert state.phase is Phase.BUFFER_BUILDING
            assert state.v_ros_threshold == pytest.approx(2.0 * 10.0 * math.log(100))

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValueError):
            init_policy_state(PolicyKind.APPROX_ROS, 0)

    def test_intermingled_only_for_strict_ros(self):
        with pytest.raises(ValueError):
            init_policy_state(PolicyKind.APPROX_ROS, 100, intermingled=True)


class TestApproxRos:
    def test_hand_executed_step(self):
        """T=100 so alpha=0.1; v=0.5 d=0.9: bid 1.0 wins, g=-0.4,
        lambda becomes exp(0.04)."""
        state = init_policy_state(PolicyKind.APPROX_ROS, 100)
        out, state = policy_step(PolicyKind.APPROX_ROS, state, Query(0.5, SecondPrice(0.9)))
        assert out.bid == 1.0
        assert out.allocation == 1.0
        assert out.price == 0.9
        assert out.g == pytest.approx(-0.4)
        assert out.lam == pytest.approx(math.exp(0.04), rel=1e-15)
        assert state.t == 1

    def test_losing_round_raises_lambda_not(self):
        """A loss gives g = 0, so lambda must stay put."""
        state = init_policy_state(PolicyKind.APPROX_ROS, 100)
        out, state = policy_step(PolicyKind.APPROX_ROS, state, Query(0.1, SecondPrice(0.9)))
        assert out.allocation == 0.0
        assert out.g == 0.0
        assert out.lam == 1.0

    def test_deficit_stays_above_deterministic_bound(self):
        rng = np.random.default_rng(100)
        horizon = 500
        bound = 2.0 * math.sqrt(horizon) * math.log(horizon)
        for _ in range(40):
            vs, ds = random_uniform_arrays(rng, horizon)
            outcomes, _ = run_on_arrays(PolicyKind.APPROX_ROS, vs, ds)
            slack = math.fsum(o.g for o in outcomes)
            assert slack >= -bound

    def test_exhaustion(self):
        state = init_policy_state(PolicyKind.APPROX_ROS, 2)
        q = Query(0.5, SecondPrice(0.2))
        policy_step(PolicyKind.APPROX_ROS, state, q)
        policy_step(PolicyKind.APPROX_ROS, state, q)
        with pytest.raises(StateExhausted):
            policy_step(PolicyKind.APPROX_ROS, state, q)


class TestStrictRos:
    def test_buffer_rounds_bid_truthfully(self):
        state = init_policy_state(PolicyKind.STRICT_ROS, 100)
        out, state = policy_step(PolicyKind.STRICT_ROS, state, Query(0.6, SecondPrice(0.2)))
        assert out.bid == 0.6
        assert state.buffer == pytest.approx(0.4)
        assert state.phase is Phase.BUFFER_BUILDING

    def test_transition_restarts_duals_on_remaining_horizon(self):
        """With v=1 against free wins the buffer gains 1 per round; at T=80
        the threshold 2 sqrt(80) ln 80 ~ 78.4 is crossed at round 79 with one
        round to spare."""
        horizon = 80
        vs = [1.0] * horizon
        ds = [0.0] * horizon
        outcomes, state = run_on_arrays(PolicyKind.STRICT_ROS, vs, ds)
        assert state.phase is Phase.MAIN_LOOP
        assert state.first_phase_length == 79
        assert state.duals.alpha == 1.0  # 1/sqrt(80 - 79)
        # the single aggressive round bids (1+1)/1 * 1 = 2
        assert outcomes[-1].bid == 2.0
        assert len(outcomes) == horizon

    def test_no_transition_when_threshold_met_on_last_round(self):
        """Crossing the buffer threshold with no rounds left must not flip
        the phase."""
        horizon = 77  # buffer first exceeds 2 sqrt(77) ln 77 ~ 76.2 at t = 77 = T
        vs = [1.0] * horizon
        ds = [0.0] * horizon
        _, state = run_on_arrays(PolicyKind.STRICT_ROS, vs, ds)
        assert state.phase is Phase.BUFFER_BUILDING
        assert state.first_phase_length is None

    def test_final_slack_nonnegative_with_transitions(self):
        rng = np.random.default_rng(200)
        horizon = 300
        transitioned = 0
        for _ in range(30):
            vs = rng.beta(12.0, 1.0, horizon).tolist()
            ds = rng.beta(0.08, 1.0, horizon).tolist()
            outcomes, state = run_on_arrays(PolicyKind.STRICT_ROS, vs, ds)
            slack = math.fsum(o.g for o in outcomes)
            assert slack >= 0.0
            if state.phase is Phase.MAIN_LOOP:
                transitioned += 1
        assert transitioned > 0

    def test_alpha_override_survives_restart(self):
        horizon = 80
        vs = [1.0] * horizon
        ds = [0.0] * horizon
        state = init_policy_state(PolicyKind.STRICT_ROS, horizon, alpha=0.05)
        for v, d in zip(vs, ds):
            _, state = policy_step(PolicyKind.STRICT_ROS, state, Query(v, SecondPrice(d)))
        assert state.phase is Phase.MAIN_LOOP
        assert state.duals.alpha == 0.05


class TestApproxRosStrictBudget:
    def test_budget_never_overspent(self):
        rng = np.random.default_rng(300)
        horizon = 400
        for _ in range(20):
            vs, ds = random_uniform_arrays(rng, horizon)
            outcomes, state = run_on_arrays(
                PolicyKind.APPROX_ROS_STRICT_BUDGET, vs, ds, rho=0.25)
            spend = math.fsum(o.price for o in outcomes)
            assert spend <= 0.25 * horizon
            assert state.budget_remaining >= 0.0

    def test_mu_stays_bounded(self):
        rng = np.random.default_rng(301)
        horizon = 400
        rho = 0.25
        for _ in range(10):
            vs, ds = random_uniform_arrays(rng, horizon)
            outcomes, _ = run_on_arrays(
                PolicyKind.APPROX_ROS_STRICT_BUDGET, vs, ds, rho=rho)
            assert max(o.mu for o in outcomes) <= 2.0 / rho + 1.0

    def test_g_prime_reported(self):
        state = init_policy_state(PolicyKind.APPROX_ROS_STRICT_BUDGET, 100, rho=0.3)
        out, _ = policy_step(PolicyKind.APPROX_ROS_STRICT_BUDGET, state,
                             Query(0.5, SecondPrice(0.2)))
        assert out.g_prime == pytest.approx(0.3 - 0.2)
        assert out.budget_remaining == pytest.approx(30.0 - 0.2)

    def test_gate_round_still_updates_duals(self):
        """Once the budget gate closes the bid is zero, but the pacing
        multiplier keeps integrating g' = rho."""
        state = init_policy_state(PolicyKind.APPROX_ROS_STRICT_BUDGET, 100, rho=0.3)
        state.budget_remaining = 0.5
        mu_before = state.duals.mu
        out, state = policy_step(PolicyKind.APPROX_ROS_STRICT_BUDGET, state,
                                 Query(0.9, SecondPrice(0.1)))
        assert out.bid == 0.0
        assert out.allocation == 0.0
        assert out.g_prime == pytest.approx(0.3)
        assert state.duals.mu <= mu_before


class TestStrictBoth:
    def test_hard_exit_before_budget_consumed_by_truthful_bids(self):
        """rho*T = 250: the buffer phase must stop for good after round 249."""
        horizon = 1000
        vs = [0.5] * horizon
        ds = [0.6] * horizon  # always losing, so only the exit rule can trigger
        outcomes, state = run_on_arrays(PolicyKind.STRICT_BOTH, vs, ds, rho=0.25)
        assert state.phase is Phase.EXITED
        assert state.first_phase_length == 249
        assert len(outcomes) == 249
        with pytest.raises(StateExhausted):
            policy_step(PolicyKind.STRICT_BOTH, state, Query(0.5, SecondPrice(0.6)))

    def test_transition_rescales_rho_and_eta(self):
        """High-value free-win rounds fill the buffer before the exit rule
        can bite, so the policy enters its main loop on the leftover budget."""
        horizon = 200
        rho = 0.9
        vs = [1.0] * horizon
        ds = [0.05] * horizon
        threshold = 2.0 * math.sqrt(horizon) * math.log(horizon)
        k = next(t for t in range(1, horizon) if t * 0.95 > threshold)
        _, state = run_on_arrays(PolicyKind.STRICT_BOTH, vs, ds, rho=rho)
        assert state.phase is Phase.MAIN_LOOP
        assert state.first_phase_length == k
        remaining = horizon - k
        budget_left = rho * horizon - k * 0.05
        assert state.rho == pytest.approx(budget_left / remaining)
        assert state.duals.mu == 0.0
        assert state.duals.alpha == pytest.approx(1.0 / math.sqrt(remaining))
        assert state.duals.eta == pytest.approx(
            1.0 / ((1.0 + state.rho ** 2) * math.sqrt(remaining)))

    def test_both_constraints_hold(self):
        rng = np.random.default_rng(400)
        horizon = 10_000
        rho = 0.25
        for _ in range(3):
            vs = rng.beta(12.0, 1.0, horizon).tolist()
            ds = rng.beta(0.08, 1.0, horizon).tolist()
            outcomes, state = run_on_arrays(PolicyKind.STRICT_BOTH, vs, ds, rho=rho)
            slack = math.fsum(o.g for o in outcomes)
            spend = math.fsum(o.price for o in outcomes)
            assert slack >= 0.0
            assert spend <= rho * horizon
            # this distribution fills the buffer well before the exit round
            assert state.phase is Phase.MAIN_LOOP


class TestSquaredApproxRos:
    def test_bid_formula_and_zero_lambda_cap(self):
        state = init_policy_state(PolicyKind.SQUARED_APPROX_ROS, 1000)
        out, state = policy_step(PolicyKind.SQUARED_APPROX_ROS, state,
                                 Query(0.5, SecondPrice(1.0)))
        assert out.bid == pytest.approx(1.0)  # v/lam + v with lam = 1
        state.duals.lam = 0.0
        out, state = policy_step(PolicyKind.SQUARED_APPROX_ROS, state,
                                 Query(0.5, SecondPrice(1.0)))
        assert out.bid == DEFAULT_BID_CAP

    def test_lambda_update_is_linear_and_floored(self):
        state = init_policy_state(PolicyKind.SQUARED_APPROX_ROS, 1000, alpha=1.0)
        out, state = policy_step(PolicyKind.SQUARED_APPROX_ROS, state,
                                 Query(0.9, SecondPrice(0.0)))
        # free win: g = 0.9, lambda = max(0, 1 - 0.9) = 0.1
        assert out.lam == pytest.approx(0.1, abs=1e-15)

    def test_deficit_within_polynomial_bound(self):
        rng = np.random.default_rng(500)
        horizon = 512
        bound = 2.0 * horizon ** (2.0 / 3.0)
        for _ in range(20):
            vs, ds = random_uniform_arrays(rng, horizon)
            outcomes, _ = run_on_arrays(PolicyKind.SQUARED_APPROX_ROS, vs, ds)
            assert math.fsum(o.g for o in outcomes) >= -bound


class TestTruthfulBaseline:
    def test_bids_value_and_never_violates(self):
        rng = np.random.default_rng(600)
        vs, ds = random_uniform_arrays(rng, 200)
        outcomes, _ = run_on_arrays(PolicyKind.TRUTHFUL_BASELINE, vs, ds)
        for o in outcomes:
            assert o.bid == o.value
            assert o.g >= 0.0
        assert math.fsum(o.g for o in outcomes) >= 0.0


class TestIntermingled:
    def test_aggressive_rounds_gated_by_unit_buffer(self):
        horizon = 100
        state = init_policy_state(PolicyKind.STRICT_ROS, horizon, intermingled=True)
        # two free wins at value 0.6 put the buffer at 1.2
        for _ in range(2):
            out, state = policy_step(PolicyKind.STRICT_ROS, state,
                                     Query(0.6, SecondPrice(0.0)))
            assert out.bid == 0.6
        assert state.buffer == pytest.approx(1.2)
        out, state = policy_step(PolicyKind.STRICT_ROS, state, Query(0.5, SecondPrice(0.0)))
        assert out.bid == pytest.approx(1.0)  # aggressive: (1+1)/1 * 0.5
        assert state.phase is Phase.BUFFER_BUILDING  # never leaves the mixed phase

    def test_slack_never_negative(self):
        rng = np.random.default_rng(700)
        horizon = 400
        for _ in range(10):
            vs = rng.beta(12.0, 1.0, horizon).tolist()
            ds = rng.beta(0.08, 1.0, horizon).tolist()
            outcomes, state = run_on_arrays(PolicyKind.STRICT_ROS, vs, ds,
                                            intermingled=True)
            assert math.fsum(o.g for o in outcomes) >= 0.0
            assert state.first_phase_length is not None  # counts truthful rounds
            assert state.first_phase_length < horizon


class TestDeterminism:
    def test_identical_runs_produce_identical_outcomes(self):
        rng = np.random.default_rng(800)
        vs, ds = random_uniform_arrays(rng, 300)
        a, _ = run_on_arrays(PolicyKind.APPROX_ROS, vs, ds)
        b, _ = run_on_arrays(PolicyKind.APPROX_ROS, vs, ds)
        for oa, ob in zip(a, b):
            assert oa == ob
