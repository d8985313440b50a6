import math

import numpy as np
import pytest

from dynodist.envs import (EnvError, EnvSpec, GridMaze, PathologicalMDP,
                           RandomDeterministicMDP, UnsupportedEnvError,
                           make_env, render_grid)


def test_grid_reset_is_start_cell():
    env = GridMaze(3, 3, set(), (0, 0))
    assert env.reset() == env.cell_to_state((0, 0)) == 0


def test_grid_open_move_and_wall_block():
    env = GridMaze(3, 3, {(0, 1)}, (0, 0))
    right = 3
    tr = env.step(env.cell_to_state((1, 0)), right)
    assert tr.next_state == env.cell_to_state((1, 1)) and not tr.terminal
    # cell left of the wall: moving right is blocked, state unchanged
    blocked = env.step(env.cell_to_state((0, 0)), right)
    assert blocked.next_state == env.cell_to_state((0, 0))


def test_grid_boundary_moves_stay_in_place():
    env = GridMaze(2, 2, set(), (0, 0))
    up, left = 0, 2
    assert env.step(0, up).next_state == 0
    assert env.step(0, left).next_state == 0


def test_invalid_action_and_state_raise():
    env = GridMaze(2, 2, set(), (0, 0))
    with pytest.raises(EnvError):
        env.step(0, 9)
    with pytest.raises(EnvError):
        env.step(99, 0)


def test_step_into_wall_state_rejected():
    env = GridMaze(2, 1, {(0, 1)}, (0, 0))
    with pytest.raises(EnvError):
        env.step(env.cell_to_state((0, 1)), 0)


def test_enumerate_states_counts():
    assert len(GridMaze(3, 3, set(), (0, 0)).enumerate_states()) == 9
    assert len(PathologicalMDP(0.5).enumerate_states()) == 6
    assert len(RandomDeterministicMDP(10, 2, seed=7).enumerate_states()) == 10


def test_pathological_reset_and_forced_failure():
    env = PathologicalMDP(0.0)
    assert env.reset() == env.S0
    tr = env.step(env.RISKY, 0, np.random.default_rng(0))
    assert tr.next_state == env.DEAD and tr.terminal


def test_pathological_goal_is_terminal():
    env = PathologicalMDP(1.0)
    tr = env.step(env.RISKY, 1, np.random.default_rng(0))
    assert tr.next_state == env.GOAL and tr.terminal


def test_goal_termination_flag():
    env = GridMaze(3, 1, set(), (0, 0))
    goal = env.cell_to_state((0, 1))
    tr = env.step(0, 3, goal=goal)
    assert tr.terminal
    assert not env.step(0, 3).terminal  # no goal passed, no termination


def test_determinism_of_step():
    for env in (GridMaze(4, 4, {(1, 1)}, (0, 0)),
                RandomDeterministicMDP(12, 3, seed=4)):
        for s in env.enumerate_states():
            for a in range(env.n_actions):
                assert env.step(s, a).next_state == env.step(s, a).next_state


def test_random_mdp_regenerable_from_seed():
    a = RandomDeterministicMDP(20, 3, seed=11)
    b = RandomDeterministicMDP(20, 3, seed=11)
    assert np.array_equal(a._next, b._next)
    assert a.reset() == 0 and a.goal_hint == 19


def test_random_mdp_goal_connected():
    for seed in range(20):
        env = RandomDeterministicMDP(16, 2, seed=seed)
        dist = env.min_step_distances(env.goal_hint)
        assert all(math.isfinite(dist[s]) for s in env.enumerate_states())


def test_pathological_success_frequency(rng):
    p, m = 0.3, 4000
    env = PathologicalMDP(p)
    hits = sum(env.step(env.RISKY, 0, rng).next_state == env.GOAL for _ in range(m))
    assert abs(hits / m - p) <= 3 * math.sqrt(p * (1 - p) / m)


def test_rollouts_never_exceed_horizon_and_avoid_walls(rng):
    from dynodist.policy import RolloutConfig, TabularPolicy, rollout

    env = make_env("smaze9", horizon_T=37)
    policy = TabularPolicy(env.n_states, env.n_actions)
    for _ in range(25):
        traj = rollout(env, policy, env.goal_hint, RolloutConfig(37, 0.9, True), rng)
        assert len(traj) <= 37
        assert not any(env.is_wall(s) for s in traj.states)


def test_grid_file_parsing_assets():
    env = make_env("smaze9")
    assert env.width == env.height == 9
    assert env.start_cell == (0, 0)
    assert env.goal_hint == env.cell_to_state((8, 8))
    corridor = make_env("corridor:40")
    assert corridor.width == 40 and corridor.height == 1


@pytest.mark.parametrize("text,msg", [
    ("S.\n.S", "exactly one start"),
    ("..\n.", "same length"),
    ("S?", "unknown grid character"),
    ("..\n..", "exactly one start"),
    ("SG\nGG", "at most one goal"),
])
def test_grid_file_errors(text, msg):
    with pytest.raises(EnvError, match=msg):
        GridMaze.from_text(text)


def test_grid_roundtrip_through_file(tmp_path):
    path = tmp_path / "mini.txt"
    path.write_text("S.#\n..G\n")
    env = GridMaze.from_file(path)
    assert env.walls == {(0, 2)}
    assert env.goal_hint == env.cell_to_state((1, 2))


def test_render_grid_kinds_and_overlay():
    env = GridMaze.from_text("S.#\n..G\n")
    cells = render_grid(env)
    kinds = [[c["kind"] for c in row] for row in cells]
    assert kinds == [["start", "free", "wall"], ["free", "free", "goal"]]
    assert all(c["value"] is None for row in cells for c in row)

    overlay = np.arange(6, dtype=float).reshape(2, 3)
    cells = render_grid(env, overlay=overlay)
    assert cells[1][0]["value"] == 3.0
    assert cells[0][2]["value"] is None  # wall carries no overlay value

    marks = {env.cell_to_state((1, 1)): "candidate"}
    assert render_grid(env, marks=marks)[1][1]["kind"] == "candidate"


def test_render_grid_shape_mismatch_and_non_grid():
    env = GridMaze(3, 2, set(), (0, 0))
    with pytest.raises(EnvError):
        render_grid(env, overlay=np.zeros((5, 5)))
    with pytest.raises(UnsupportedEnvError):
        render_grid(PathologicalMDP(0.5))


def test_env_spec_validation():
    with pytest.raises(EnvError):
        EnvSpec(state_count=3, action_count=0, horizon_T=5, initial_state=0)
    with pytest.raises(EnvError):
        EnvSpec(state_count=3, action_count=1, horizon_T=0, initial_state=0)
    with pytest.raises(EnvError):
        EnvSpec(state_count=3, action_count=1, horizon_T=5, initial_state=7)


def test_make_env_descriptors():
    assert isinstance(make_env("pathological:0.25"), PathologicalMDP)
    env = make_env("random:12x3:5")
    assert isinstance(env, RandomDeterministicMDP) and env.n_states == 12
    with pytest.raises(EnvError):
        make_env("nosuch")
