import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynodist.envs import (GridMaze, PathologicalMDP, RandomDeterministicMDP,
                           UnsupportedEnvError, make_env)
from dynodist import oracle
from dynodist.oracle import (UNREACHED, VerificationError, bfs_distance,
                             bfs_to_goal, ddl_exact_policy_iteration,
                             eq5_identity_check, exact_policy_distance,
                             expected_hitting_times,
                             pathological_branch_analysis,
                             policy_return_under_cost)


def test_bfs_open_grid_corner_to_corner():
    env = GridMaze(3, 3, set(), (0, 0))
    table = bfs_distance(env)
    assert table.values[env.cell_to_state((0, 0)), env.cell_to_state((2, 2))] == 4.0


def test_bfs_walled_off_cell_unreached():
    env = GridMaze(3, 1, {(0, 1)}, (0, 0))
    table = bfs_distance(env)
    assert table.values[0, env.cell_to_state((0, 2))] == UNREACHED


def test_bfs_smaze9_golden_corridor_length():
    env = make_env("smaze9")
    # hand-counted serpentine: 5 full rows of 8 moves + 4 two-step descents
    assert bfs_distance(env).values[env.spec.initial_state, env.goal_hint] == 48.0


def test_bfs_rejects_stochastic_env():
    with pytest.raises(UnsupportedEnvError):
        bfs_distance(PathologicalMDP(0.5))


def test_bfs_diagonal_zero_and_triangle_inequality():
    for seed in range(6):
        env = RandomDeterministicMDP(12, 2, seed=seed)
        v = bfs_distance(env).values
        states = env.enumerate_states()
        assert all(v[s, s] == 0.0 for s in states)
        for i in states:
            for j in states:
                for k in states:
                    assert v[i, k] <= v[i, j] + v[j, k] + 1e-9


def test_exact_policy_distance_on_cycle(cycle5):
    policy = np.zeros(5, dtype=int)
    est = exact_policy_distance(cycle5, policy, horizon=20)
    for s in range(5):
        assert est.table.values[s, (s + 2) % 5] == 2.0
        assert est.table.values[s, s] == 0.0


def test_exact_policy_distance_risky_policy_is_two(rng):
    env = PathologicalMDP(0.3, horizon_T=20)
    risky = np.zeros((6, 2))
    risky[:, 0] = 1.0
    est = exact_policy_distance(env, risky, mc_samples=2000, rng=rng)
    # conditioned on reaching the goal the risky route is always 2 steps
    assert est.table.values[env.S0, env.GOAL] == pytest.approx(2.0, abs=1e-9)
    assert est.table.se[env.S0, env.GOAL] == pytest.approx(0.0, abs=1e-9)


def test_exact_policy_distance_matches_exhaustive_enumeration(rng):
    # uniform policy on a 2-cell corridor: enumerate all action sequences of
    # length T with exact probabilities and compute the same pair-sampling
    # conditional mean the Monte Carlo estimator targets
    env = make_env("corridor:2", horizon_T=6)
    T = 6
    n_actions = env.n_actions
    sum_w = sum_wg = 0.0
    seqs = [[]]
    for _ in range(T):
        seqs = [s + [a] for s in seqs for a in range(n_actions)]
    prob = (1.0 / n_actions) ** T
    for seq in seqs:
        states = [0]
        for a in seq:
            states.append(env.next_state(states[-1], a))
        for i in range(T + 1):
            for j in range(i, T + 1):
                if states[i] == 0 and states[j] == 1:
                    w = prob / ((T + 1) * (T - i + 1))
                    sum_w += w
                    sum_wg += w * (j - i)
    expected = sum_wg / sum_w

    uniform = np.full((env.n_states, n_actions), 1.0 / n_actions)
    est = exact_policy_distance(env, uniform, horizon=T, mc_samples=60_000, rng=rng)
    got = est.table.values[0, 1]
    se = est.table.se[0, 1]
    assert abs(got - expected) <= 4 * se + 1e-3


def test_expected_hitting_times_two_cell_corridor():
    # only "right" (1 of 5 actions) moves toward the goal: h = 5
    env = make_env("corridor:2", horizon_T=10)
    uniform = np.full((env.n_states, env.n_actions), 0.2)
    h = expected_hitting_times(env, uniform, goal=1)
    assert h[0] == pytest.approx(5.0, abs=1e-9)
    assert h[1] == 0.0


def test_policy_distance_never_beats_bfs(rng):
    for seed in range(5):
        env = RandomDeterministicMDP(10, 3, seed=seed)
        bfs = bfs_distance(env).values
        policy = rng.integers(0, 3, size=env.n_states)
        est = exact_policy_distance(env, policy, horizon=50)
        mask = np.isfinite(est.table.values)
        assert (est.table.values[mask] >= bfs[mask] - 1e-9).all()


def test_iteration_converges_to_shortest_paths():
    env = RandomDeterministicMDP(10, 2, seed=1)
    res = ddl_exact_policy_iteration(env, env.goal_hint, gamma=0.99)
    assert res.converged and not res.violations
    for s in env.enumerate_states():
        assert res.final_distances[s] == res.bfs[s]


def test_iteration_from_optimal_policy_fixpoint_in_one_round():
    env = RandomDeterministicMDP(12, 3, seed=4)
    optimal = ddl_exact_policy_iteration(env, env.goal_hint).rounds[-1].policy
    res = ddl_exact_policy_iteration(env, env.goal_hint, initial_policy=optimal)
    assert res.converged
    assert len(res.rounds) == 2  # one improvement round confirms the fixpoint


def test_iteration_monotonicity_log_every_round():
    for seed in (0, 3, 8, 13):
        env = RandomDeterministicMDP(24, 2, seed=seed)
        res = ddl_exact_policy_iteration(env, env.goal_hint)
        states = env.enumerate_states()
        for prev, cur in zip(res.rounds, res.rounds[1:]):
            for s in states:
                assert cur.distances[s] <= prev.distances[s] + 1e-9


def test_iteration_rejects_stochastic_env():
    with pytest.raises(UnsupportedEnvError):
        ddl_exact_policy_iteration(PathologicalMDP(0.5), 4)


def test_eq5_exact_on_k_step_path():
    for k in (3, 5, 8):
        env = make_env(f"corridor:{k + 1}", horizon_T=3 * k)
        policy = np.full(env.n_states, 3)
        res = eq5_identity_check(env, policy, env.cell_to_state((0, k)), gamma=1.0)
        assert res.exact
        assert res.lhs == pytest.approx(-k * (k + 1) / 2, abs=1e-9)
        assert res.rhs == pytest.approx(-k * (k + 1) / 2, abs=1e-9)
        assert res.diff < 1e-9


def test_eq5_three_step_value_is_minus_six():
    env = make_env("corridor:4", horizon_T=12)
    res = eq5_identity_check(env, np.full(env.n_states, 3),
                             env.cell_to_state((0, 3)), gamma=1.0)
    assert res.lhs == pytest.approx(-6.0, abs=1e-12)


def test_eq5_monte_carlo_on_risky_safe_mdp(rng):
    env = PathologicalMDP(0.5, horizon_T=20)
    policy = np.full((6, 2), 0.5)
    res = eq5_identity_check(env, policy, env.GOAL, gamma=0.99,
                             mc_samples=500, rng=rng)
    assert not res.exact
    assert res.diff <= 4 * max(res.se, 1e-12)


def test_eq5_monte_carlo_with_real_variance(rng):
    env = GridMaze(3, 3, set(), (0, 0), horizon_T=200)
    uniform = np.full((env.n_states, env.n_actions), 0.2)
    res = eq5_identity_check(env, uniform, env.cell_to_state((2, 2)),
                             gamma=0.9, mc_samples=300, rng=rng)
    assert res.se > 0
    assert res.diff <= 4 * res.se


def test_branch_analysis_grid_and_crossover():
    analysis = pathological_branch_analysis((0.01, 0.1, 0.5, 0.99, 1.0),
                                            gamma=0.99, d_max=20.0, horizon=20)
    rows = {r.p: r for r in analysis.rows}
    assert rows[1.0].greedy_choice == "risky"
    assert rows[1.0].cumulative_choice == "risky"
    assert rows[0.01].greedy_choice == "risky"
    assert rows[0.01].cumulative_choice == "safe"
    for p in (0.1, 0.5, 0.99):
        assert rows[p].greedy_choice == "risky"
        assert rows[p].cumulative_choice == "safe"
    # frozen golden, cross-checked against the closed form
    g, T, D = 0.99, 20, 20.0
    closed = 1 - (g + g * g) * (1 - g) / (D * (g**2 - g**T))
    assert analysis.crossover_p == pytest.approx(0.9939266822797028, abs=1e-9)
    assert analysis.crossover_p == pytest.approx(closed, abs=1e-9)


def test_branch_analysis_p_zero_greedy_goes_safe():
    analysis = pathological_branch_analysis((0.0,), gamma=0.99, d_max=20.0,
                                            horizon=20)
    assert analysis.rows[0].greedy_choice == "safe"


def test_policy_return_handles_cycles():
    env = RandomDeterministicMDP(8, 2, seed=0)
    cost = np.ones(env.n_states)
    looping = np.zeros(env.n_states, dtype=int)
    val = policy_return_under_cost(env, looping, cost, 0.9, env.goal_hint, 0)
    assert math.isfinite(val)
    assert val <= 0


def test_verification_error_raised_on_forced_violation(monkeypatch):
    env = RandomDeterministicMDP(8, 2, seed=5)
    real = oracle.follow_policy_distances

    def corrupted(e, policy, goal):
        out = real(e, policy, goal)
        out[0] += 50.0  # inject a monotonicity violation
        return out

    monkeypatch.setattr(oracle, "follow_policy_distances", corrupted)
    with pytest.raises(VerificationError):
        ddl_exact_policy_iteration(env, env.goal_hint)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_bfs_to_goal_matches_all_pairs_table(seed):
    env = RandomDeterministicMDP(9, 2, seed=seed)
    table = bfs_distance(env).values
    vec = bfs_to_goal(env, env.goal_hint)
    for s in env.enumerate_states():
        assert vec[s] == table[s, env.goal_hint]
