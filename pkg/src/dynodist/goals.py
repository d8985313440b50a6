"""Goal proposal: most-distant-state selection and preference slates.

Both strategies pick goals from states the agent has actually visited, so
the distance model is only ever queried on its training distribution. The
preference path issues a slate of the N most recent episode-final states
(plus the previous goal as a keep option) to a provider, which may be a
scripted chooser or a human behind the serve endpoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .distance import OnPolicyPool
from .envs import FiniteEnv, GridMaze
from .oracle import bfs_to_goal

log = logging.getLogger(__name__)

KEEP_PREVIOUS = "keep"  # choice_index == len(candidates) keeps the previous goal


class ProviderTimeout(TimeoutError):
    """The preference provider produced no response in time."""


@dataclass(frozen=True)
class PreferenceQuery:
    query_id: int
    candidates: tuple[int, ...]
    previous_goal: int | None
    issued_at_env_step: int

    def __post_init__(self):
        if not (1 <= len(self.candidates) <= 16):
            raise ValueError("slate must hold between 1 and 16 candidates")


@dataclass(frozen=True)
class PreferenceResponse:
    query_id: int
    choice_index: int


@dataclass(frozen=True)
class GoalState:
    state: int
    source: str  # DDLUS | DDLfP | Fixed
    chosen_at_env_step: int = 0


class QueryCounter:
    """Strictly increasing query ids."""

    def __init__(self):
        self._next = 0

    def take(self) -> int:
        qid = self._next
        self._next += 1
        return qid


def ddlus_choose(distance_model, candidate_pool: OnPolicyPool, s0: int,
                 env_step: int = 0) -> GoalState:
    """Most distant visited state from the start, by estimated distance;
    ties go to the most recently visited candidate."""
    candidates = candidate_pool.states_most_recent_first()
    if not candidates:
        raise ValueError("cannot choose a goal from an empty pool")
    row = distance_model.predict_from(s0)
    best, best_d = candidates[0], row[candidates[0]]
    for s in candidates[1:]:
        if row[s] > best_d:  # strict: earlier (more recent) wins ties
            best, best_d = s, row[s]
    return GoalState(int(best), "DDLUS", env_step)


def ddlfp_choose(recent_terminals, provider, previous_goal: int | None,
                 counter: QueryCounter, env_step: int = 0,
                 slate_size: int | None = None) -> tuple[GoalState | None, PreferenceQuery]:
    """Issue one preference query over the slate of recent episode-final
    states and return the chosen goal (None only if there is neither a
    valid choice nor a previous goal to keep).

    Provider timeouts keep the previous goal; a malformed response is
    rejected, the query re-asked once, then the previous goal kept.
    """
    candidates = tuple(int(s) for s in recent_terminals)
    if slate_size is not None and len(candidates) != slate_size:
        raise ValueError(f"slate must have exactly {slate_size} candidates")
    query = PreferenceQuery(counter.take(), candidates, previous_goal, env_step)
    n = len(candidates)

    def keep() -> GoalState | None:
        if previous_goal is None:
            return None
        return GoalState(previous_goal, "DDLfP", env_step)

    for attempt in range(2):
        try:
            response = provider.ask(query)
        except ProviderTimeout:
            log.warning("preference query %d timed out; keeping previous goal", query.query_id)
            return keep(), query
        if (response is not None and response.query_id == query.query_id
                and 0 <= response.choice_index <= n
                and not (response.choice_index == n and previous_goal is None)):
            if response.choice_index == n:
                return keep(), query
            return GoalState(candidates[response.choice_index], "DDLfP", env_step), query
        log.warning("malformed response to query %d (attempt %d)", query.query_id, attempt + 1)
    return keep(), query


def fixed_goal(state: int, env: FiniteEnv, pool: OnPolicyPool | None = None,
               env_step: int = 0) -> GoalState:
    """Constant goal provider for supervised goal-reaching runs; flags (via
    a log line) goals not yet present in the pool, where the distance model
    will fall back to its default."""
    if not (0 <= state < env.n_states) or state not in env.enumerate_states():
        raise ValueError(f"invalid goal state {state}")
    if pool is not None and state not in set(pool.states_most_recent_first()):
        log.warning("fixed goal %d not yet in the replay pool; distance defaults apply", state)
    return GoalState(int(state), "Fixed", env_step)


# ---------------------------------------------------------------------------
# Providers

class CallableProvider:
    """Wraps a function (query -> PreferenceResponse) as a provider."""

    def __init__(self, fn):
        self.fn = fn

    def ask(self, query: PreferenceQuery) -> PreferenceResponse:
        return self.fn(query)


class ScriptedBfsOracle:
    """Synthetic chooser with a hidden target state: picks the slate entry
    with the smallest true shortest-path distance to the target, answering
    "keep previous" when the previous goal is strictly closest."""

    def __init__(self, env: FiniteEnv, hidden_target: int):
        self.env = env
        self.hidden_target = hidden_target
        self._dist = bfs_to_goal(env, hidden_target)

    def ask(self, query: PreferenceQuery) -> PreferenceResponse:
        scores = [self._dist[s] for s in query.candidates]
        best = int(np.argmin(scores))
        if (query.previous_goal is not None
                and self._dist[query.previous_goal] < scores[best]):
            best = len(query.candidates)
        return PreferenceResponse(query.query_id, best)


class ScriptedXMaxOracle:
    """Locomotion-style chooser: prefers the state with the largest x
    coordinate (grid column), keeping the previous goal when it is
    strictly further right than every candidate."""

    def __init__(self, env: GridMaze):
        if not isinstance(env, GridMaze):
            raise ValueError("x-progress oracle needs a grid env")
        self.env = env

    def _x(self, state: int) -> int:
        return self.env.state_to_cell(state)[1]

    def ask(self, query: PreferenceQuery) -> PreferenceResponse:
        xs = [self._x(s) for s in query.candidates]
        best = int(np.argmax(xs))
        if query.previous_goal is not None and self._x(query.previous_goal) > xs[best]:
            best = len(query.candidates)
        return PreferenceResponse(query.query_id, best)
