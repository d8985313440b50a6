import logging

import numpy as np
import pytest

from dynodist.distance import OnPolicyPool, TabularDistance, Trajectory
from dynodist.envs import GridMaze, make_env
from dynodist.goals import (CallableProvider, PreferenceQuery, PreferenceResponse,
                            ProviderTimeout, QueryCounter, ScriptedBfsOracle,
                            ScriptedXMaxOracle, ddlfp_choose, ddlus_choose,
                            fixed_goal)


def corridor_pool(k: int) -> OnPolicyPool:
    pool = OnPolicyPool(1000)
    pool.append(Trajectory(list(range(k + 1)), [3] * k))
    return pool


def corridor_distance_model(n: int) -> TabularDistance:
    model = TabularDistance(n, d_max=99)
    for s in range(n):
        model.mean[0, s] = float(s)
        model.count[0, s] = 1
    return model


def test_ddlus_single_candidate():
    pool = OnPolicyPool(10)
    pool.append(Trajectory([7, 7], [4]))
    model = TabularDistance(10, d_max=5)
    assert ddlus_choose(model, pool, s0=7).state == 7


def test_ddlus_picks_corridor_frontier():
    # tabular distances on a corridor are exactly the cell index
    pool = corridor_pool(6)
    model = corridor_distance_model(10)
    goal = ddlus_choose(model, pool, s0=0)
    assert goal.state == 6 and goal.source == "DDLUS"


def test_ddlus_all_default_ties_pick_most_recent():
    pool = OnPolicyPool(100)
    pool.append(Trajectory([0, 1, 2], [3, 3]))
    pool.append(Trajectory([0, 4, 5], [3, 3]))
    model = TabularDistance(6, d_max=31)  # every prediction is d_max
    assert ddlus_choose(model, pool, s0=0).state == 5


def test_ddlus_empty_pool_raises():
    with pytest.raises(ValueError):
        ddlus_choose(TabularDistance(3, 1), OnPolicyPool(5), 0)


class TransformedModel:
    def __init__(self, inner, fn):
        self.inner = inner
        self.fn = fn

    def predict_from(self, s):
        return self.fn(self.inner.predict_from(s))


@pytest.mark.parametrize("fn", [np.exp, lambda x: 3 * x + 2, lambda x: x**3])
def test_ddlus_argmax_invariant_under_increasing_transforms(fn, rng):
    pool = OnPolicyPool(1000)
    for _ in range(4):
        states = [0] + list(rng.integers(0, 30, size=8))
        pool.append(Trajectory(states, [0] * 8))
    model = TabularDistance(30, d_max=50)
    model.mean = rng.uniform(0, 20, size=(30, 30))
    model.count = np.ones((30, 30), dtype=np.int64)
    base = ddlus_choose(model, pool, 0).state
    assert ddlus_choose(TransformedModel(model, fn), pool, 0).state == base


def test_ddlfp_scripted_bfs_oracle_picks_closest():
    env = make_env("smaze9")
    hidden = env.cell_to_state((2, 4))
    provider = ScriptedBfsOracle(env, hidden)
    candidates = [env.cell_to_state(c) for c in [(0, 0), (2, 2), (0, 8), (2, 8), (4, 0)]]
    goal, query = ddlfp_choose(candidates, provider, None, QueryCounter())
    assert goal.state == env.cell_to_state((2, 2))
    assert query.candidates == tuple(candidates)


def test_ddlfp_keep_previous_when_previous_is_closer():
    env = make_env("smaze9")
    hidden = env.cell_to_state((2, 4))
    provider = ScriptedBfsOracle(env, hidden)
    prev = env.cell_to_state((2, 4))  # already exactly the target
    candidates = [env.cell_to_state(c) for c in [(0, 0), (0, 5), (4, 4)]]
    goal, _ = ddlfp_choose(candidates, provider, prev, QueryCounter())
    assert goal.state == prev


def test_ddlfp_explicit_keep_index():
    provider = CallableProvider(
        lambda q: PreferenceResponse(q.query_id, len(q.candidates)))
    goal, _ = ddlfp_choose([4, 5, 6], provider, previous_goal=9,
                           counter=QueryCounter())
    assert goal.state == 9


def test_ddlfp_xmax_oracle():
    env = make_env("corridor:12")
    provider = ScriptedXMaxOracle(env)
    goal, _ = ddlfp_choose([3, 9, 5], provider, None, QueryCounter())
    assert goal.state == 9
    goal, _ = ddlfp_choose([3, 9, 5], provider, previous_goal=11,
                           counter=QueryCounter())
    assert goal.state == 11  # previous goal is further right


def test_ddlfp_timeout_keeps_previous(caplog):
    def timeout(_query):
        raise ProviderTimeout("nobody answered")

    with caplog.at_level(logging.WARNING, logger="dynodist.goals"):
        goal, _ = ddlfp_choose([1, 2], CallableProvider(timeout), 5, QueryCounter())
    assert goal.state == 5
    assert any("timed out" in r.message for r in caplog.records)


def test_ddlfp_malformed_reasks_once_then_keeps_previous():
    calls = []

    def bad(query):
        calls.append(query.query_id)
        return PreferenceResponse(query.query_id, 99)  # out of range

    goal, _ = ddlfp_choose([1, 2], CallableProvider(bad), 5, QueryCounter())
    assert goal.state == 5
    assert len(calls) == 2  # asked, re-asked once


def test_ddlfp_wrong_query_id_is_malformed():
    provider = CallableProvider(lambda q: PreferenceResponse(q.query_id + 7, 0))
    goal, _ = ddlfp_choose([1, 2], provider, None, QueryCounter())
    assert goal is None  # no previous goal to fall back on


def test_ddlfp_slate_size_enforced():
    provider = CallableProvider(lambda q: PreferenceResponse(q.query_id, 0))
    with pytest.raises(ValueError):
        ddlfp_choose([1, 2, 3], provider, None, QueryCounter(), slate_size=5)


def test_query_ids_strictly_increase():
    counter = QueryCounter()
    provider = CallableProvider(lambda q: PreferenceResponse(q.query_id, 0))
    ids = [ddlfp_choose([1], provider, None, counter)[1].query_id for _ in range(4)]
    assert ids == [0, 1, 2, 3]


def test_slate_bounds():
    with pytest.raises(ValueError):
        PreferenceQuery(0, tuple(range(17)), None, 0)
    with pytest.raises(ValueError):
        PreferenceQuery(0, (), None, 0)


def test_fixed_goal_validates_state():
    env = GridMaze(3, 3, {(1, 1)}, (0, 0))
    assert fixed_goal(env.cell_to_state((2, 2)), env).state == 8
    with pytest.raises(ValueError):
        fixed_goal(env.cell_to_state((1, 1)), env)  # wall is not a state
    with pytest.raises(ValueError):
        fixed_goal(99, env)


def test_fixed_goal_warns_when_not_in_pool(caplog):
    env = GridMaze(3, 1, set(), (0, 0))
    pool = OnPolicyPool(10)
    pool.append(Trajectory([0, 1], [3]))
    with caplog.at_level(logging.WARNING, logger="dynodist.goals"):
        fixed_goal(2, env, pool=pool)
    assert any("not yet in the replay pool" in r.message for r in caplog.records)
