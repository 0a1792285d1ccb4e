import numpy as np
import pytest
from hypothesis import given, strategies as st

from rasswitch.case import SystemState
from rasswitch.experiment import ContingencySpec, ScriptedSimulator, ScriptedNode, _start, enumerate_policy_tree
from rasswitch.mdp import policy_values, random_mock_mdp, switching_values, trajectory_value, MockMDP
from rasswitch.protection import RasPolicy
from rasswitch.simulator import NativeSimulator
from rasswitch.switching import (
    EQ4_LITERAL, NEG_INF, SwitchingConfig, ValueEstimate, _argmax, check_theorem1, estimate_value, reward,
    rollout, switch,
)
from rasswitch.errors import UsageError

from .conftest import SEC4_BRANCHES

I, LS = RasPolicy.island(), RasPolicy.load_shed()
L_TOTAL = 6501.0


@pytest.mark.parametrize(
    "load, saved, expected",
    [(5224, False, 0.401), (4749, True, 0.865), (3848, False, 0.296), (2922, True, 0.725),
     (4759, False, 0.366), (4283, True, 0.829), (3463, True, 0.766)],
)
def test_reward_table_values(load, saved, expected):
    assert reward(load, 6501, saved, L_TOTAL) == pytest.approx(expected, abs=1e-3)


def test_reward_eq4_literal():
    assert reward(4000, 4000, True, L_TOTAL, EQ4_LITERAL) == 0.5
    assert reward(4000, 5000, False, L_TOTAL, EQ4_LITERAL) == pytest.approx(-1000 / 13002)


def test_reward_rejects_bad_total():
    with pytest.raises(UsageError):
        reward(1, 1, True, 0.0)
    with pytest.raises(UsageError):
        reward(1, 1, True, 1.0, "other")


@given(load=st.floats(0, L_TOTAL), saved=st.booleans())
def test_reward_in_unit_interval(load, saved):
    assert 0.0 <= reward(load, L_TOTAL, saved, L_TOTAL) <= 1.0


@pytest.mark.parametrize("kw", [dict(beta=1.5), dict(horizon_dispatches=0), dict(rollouts_per_policy=0),
                                dict(epsilon=-1), dict(reward_mode="x"), dict(dispatch_interval=0),
                                dict(workers=0)])
def test_config_validation(kw):
    with pytest.raises(UsageError):
        SwitchingConfig(**kw)


# --- a tiny simulator with fixed per-policy rewards, for tie and invariance checks


class FixedSim:
    l_total = 100.0

    def __init__(self, loads):
        self.loads = loads  # label -> load reached after applying it

    def load(self, node):
        return self.loads.get(node[-1], 100.0) if node else 100.0

    def saved(self, node):
        return False

    def acceptable(self, node):
        return False

    def metrics(self, node):
        from rasswitch.case import LossMetrics
        return LossMetrics()

    def clock(self, node):
        return 0.0

    def key(self, node):
        return node

    def step(self, node, policy, duration):
        return node + (policy.label,), []

    def perturb(self, node, rng, sigma):
        return node


def test_singleton_set_selects_member():
    chosen, est = switch(FixedSim({"LS": 10.0}), (), [LS], SwitchingConfig(), 0)
    assert chosen == LS and len(est) == 1


def test_ties_go_to_lowest_index():
    sim = FixedSim({"LS": 50.0, "I": 50.0})
    assert switch(sim, (), [I, LS], SwitchingConfig(), 0)[0] == I
    assert switch(sim, (), [LS, I], SwitchingConfig(), 0)[0] == LS


@given(values=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), c=st.floats(-1e3, 1e3))
def test_argmax_shift_invariance(values, c):
    # shift by constants that keep float ordering exact: compare on a coarse grid
    vals = [round(v, 3) for v in values]
    shifted = [v + round(c, 3) for v in vals]
    if len(set(vals)) == len(set(shifted)):
        assert _argmax(vals) == _argmax(shifted)


def test_argmax_all_infeasible():
    assert _argmax([NEG_INF, NEG_INF]) is None


def test_all_infeasible_gives_no_action():
    sim = ScriptedSimulator()
    node = ScriptedNode(("I", "I"))
    chosen, est = switch(sim, node, [I], SwitchingConfig(horizon_dispatches=1), 0)
    assert chosen.kind == "NoAction" and not est[0].feasible


# --- scripted oracle


def test_scripted_estimates():
    sim = ScriptedSimulator()
    cfg = SwitchingConfig()
    est = estimate_value(sim, sim.root(), LS, cfg, 0, policy_set=[I, LS])
    assert est.final_reward == pytest.approx(0.865, abs=1e-3)
    assert est.value == pytest.approx(0.401784 + 2 * 0.865251, abs=1e-5)
    assert est.rollouts == 1 and est.spread == 0.0


def test_scripted_switch_path():
    sim = ScriptedSimulator()
    cfg = SwitchingConfig()
    first, _ = switch(sim, sim.root(), [I, LS], cfg, 0)
    assert first == LS
    second, _ = switch(sim, ScriptedNode(("LS",)), [I, LS], cfg, 0, horizon=2)
    assert second == I


def test_beta_zero_is_first_reward():
    sim = ScriptedSimulator()
    est = estimate_value(sim, sim.root(), I, SwitchingConfig(beta=0.0), 0, policy_set=[I, LS])
    assert est.value == pytest.approx(reward(4759, 6501, False, L_TOTAL))


def test_rollout_count_does_not_change_deterministic_value():
    sim = ScriptedSimulator()
    a = estimate_value(sim, sim.root(), LS, SwitchingConfig(rollouts_per_policy=1), 3, policy_set=[I, LS])
    b = estimate_value(sim, sim.root(), LS, SwitchingConfig(rollouts_per_policy=10), 3, policy_set=[I, LS])
    assert a.value == b.value and b.rollouts == 10 and b.spread == 0.0


def test_infeasible_estimate():
    sim = ScriptedSimulator()
    est = estimate_value(sim, ScriptedNode(("I", "I")), I, SwitchingConfig(), 0)
    assert est.value == NEG_INF and not est.feasible
    assert est.to_dict()["value"] is None


def test_check_theorem1_examples():
    est = [ValueEstimate(I, 1.0, 1), ValueEstimate(LS, 2.0, 1)]
    assert check_theorem1(est, 2.0, 0.0)
    assert check_theorem1(est, 2.0 - 2 * 0.25, 0.25)
    assert not check_theorem1(est, 2.0 - 3 * 0.25, 0.25)
    with pytest.raises(UsageError):
        check_theorem1([], 0.0, 0.0)


# --- native simulator


@pytest.fixture(scope="module")
def native(ieee39):
    sim = NativeSimulator(ieee39)
    node, detected, _, _ = _start(sim, ieee39, ContingencySpec.explicit(SEC4_BRANCHES))
    assert detected
    return sim, node


def test_rollout_from_pristine_state_is_perfect(ieee39):
    sim = NativeSimulator(ieee39)
    node = sim.node(SystemState.initial(ieee39))
    trace = rollout(sim, node, [], SwitchingConfig(), 0)
    assert [d.reward.reward for d in trace.dispatches] == pytest.approx([1.0, 1.0, 1.0])
    assert trace.cumulative_value == pytest.approx(3.0)


def test_rollout_third_islanding_is_infeasible(native):
    sim, node = native
    trace = rollout(sim, node, [I, I, I], SwitchingConfig(), 0)
    assert not trace.feasible and trace.cumulative_value == NEG_INF
    assert trace.dispatches[-1].note.startswith("infeasible")


def test_rollout_is_deterministic(native):
    sim, node = native
    cfg = SwitchingConfig(load_noise_sigma=0.03)
    a = rollout(sim, node, [LS, I], cfg, 11)
    b = rollout(sim, node, [LS, I], cfg, 11)
    assert a.to_dict() == b.to_dict()


def test_rollout_too_long(native):
    sim, node = native
    with pytest.raises(UsageError):
        rollout(sim, node, [LS] * 4, SwitchingConfig(), 0)


def test_native_value_bounds(native):
    sim, node = native
    for p in (I, LS):
        v = estimate_value(sim, node, p, SwitchingConfig(), 0, policy_set=[I, LS]).value
        assert 0.0 <= v <= 3.0


def test_repeated_switch_attains_enumeration_max(native, ieee39):
    sim, node = native
    cfg = SwitchingConfig()
    rows = enumerate_policy_tree(ieee39, ContingencySpec.explicit(SEC4_BRANCHES), [I, LS], cfg, sim=sim)
    best = max(r.cumulative_value for r in rows if r.feasible)
    est = switch(sim, node, [I, LS], cfg, 0)[1]
    assert max(e.value for e in est) == pytest.approx(best, abs=1e-12)


def test_monte_carlo_spread_shrinks(native):
    sim, node = native
    spreads = {}
    for n in (1, 9):
        cfg = SwitchingConfig(horizon_dispatches=1, rollouts_per_policy=n, load_noise_sigma=0.05)
        vals = [estimate_value(sim, node, LS, cfg, seed).value for seed in range(30)]
        spreads[n] = np.std(vals, ddof=1)
    # 1/sqrt(n) predicts a ratio of 3
    assert 1.8 < spreads[1] / spreads[9] < 5.0


def test_noisy_estimate_reports_spread(native):
    sim, node = native
    est = estimate_value(sim, node, LS, SwitchingConfig(horizon_dispatches=1, rollouts_per_policy=5,
                                                        load_noise_sigma=0.05), 1)
    assert est.spread > 0 and est.rollouts == 5


# --- mock MDPs


def test_mock_values_match_trajectories():
    rng = np.random.default_rng(5)
    for _ in range(100):
        m = random_mock_mdp(rng)
        V = policy_values(m)
        W = switching_values(m)
        for s in range(m.n_states):
            for i in range(len(m.policies)):
                assert V[i, m.horizon, s] == pytest.approx(trajectory_value(m, s, lambda h, x: m.policies[i, x]))

            def chooser(h, x):
                return m.policies[int(np.argmax(V[:, h, x])), x]
            assert W[m.horizon, s] == pytest.approx(trajectory_value(m, s, chooser))


def test_switching_dominates_on_mock_mdps():
    rng = np.random.default_rng(1)
    for _ in range(500):
        m = random_mock_mdp(rng)
        V = policy_values(m)
        assert np.all(switching_values(m)[m.horizon] >= V[:, m.horizon].max(axis=0) - 1e-12)


@pytest.mark.parametrize("eps", [0.01, 0.1, 0.3])
def test_noisy_first_decision_loses_at_most_two_eps(eps):
    rng = np.random.default_rng(2)
    for _ in range(500):
        m = random_mock_mdp(rng)
        V = policy_values(m)
        noise = rng.uniform(-eps, eps, V.shape)
        W = switching_values(m, noise, noisy_steps=1)
        best = V[:, m.horizon].max(axis=0)
        assert all(check_theorem1(list(best_col), w, eps) for best_col, w in zip(V[:, m.horizon].T, W[m.horizon]))
        assert np.all(W[m.horizon] >= best - 2 * eps - 1e-12)


def test_noise_at_every_decision_bounded_per_step():
    rng = np.random.default_rng(3)
    eps = 0.1
    for _ in range(500):
        m = random_mock_mdp(rng)
        V = policy_values(m)
        W = switching_values(m, rng.uniform(-eps, eps, V.shape))
        assert np.all(W[m.horizon] >= V[:, m.horizon].max(axis=0) - 2 * eps * m.horizon - 1e-12)


def test_flat_two_eps_bound_fails_with_repeated_noisy_decisions():
    # two noisy decisions in a row can each give away almost 2*eps
    eps, d = 0.1, 0.01
    rewards = np.array([[0.0, 0.0], [1.0, 1.0], [1 - 4 * eps + 2 * d, 1 - 2 * eps + d], [0.0, 0.0]])
    transitions = np.array([[1, 2], [3, 3], [3, 3], [3, 3]])
    policies = np.array([[0, 0, 0, 0], [1, 1, 1, 1]])
    m = MockMDP(rewards, transitions, policies, horizon=2)
    V = policy_values(m)
    noise = np.zeros_like(V)
    noise[0, 2, 0], noise[1, 2, 0] = -eps, eps
    noise[0, 1, 2], noise[1, 1, 2] = eps, -eps
    W = switching_values(m, noise)
    loss = V[:, 2, 0].max() - W[2, 0]
    assert loss > 2 * eps and loss <= 4 * eps
    assert switching_values(m, noise, noisy_steps=1)[2, 0] >= V[:, 2, 0].max() - 2 * eps
