"""Goal-conditioned tabular policies and their improvement rules.

The policy optimizer is deliberately plain: tabular Q-learning (epsilon-
greedy or Boltzmann action selection) over replayed transitions, with the
reward supplied externally. For the main algorithm the reward is the
negative learned distance to the current goal; the sparse -1 reward and
one-step greedy distance descent exist as ablation baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import FiniteEnv, UnsupportedEnvError


@dataclass
class RolloutConfig:
    horizon_T: int
    explore_switch_fraction: float = 0.9
    stop_at_goal: bool = True

    def __post_init__(self):
        if not (0.0 <= self.explore_switch_fraction <= 1.0):
            raise ValueError("explore_switch_fraction must be in [0, 1]")
        if self.horizon_T < 1:
            raise ValueError("horizon_T must be >= 1")

    @property
    def switch_step(self) -> int:
        return int(self.explore_switch_fraction * self.horizon_T)


class TabularPolicy:
    """Q table per goal context. kind 'q' acts epsilon-greedily, kind
    'softmax' samples from a Boltzmann distribution over Q values; the
    greedy action is always the lowest-index argmax."""

    def __init__(self, n_states: int, n_actions: int, kind: str = "q",
                 epsilon: float = 0.1, temperature: float = 1.0,
                 learning_rate: float = 0.5):
        if kind not in ("q", "softmax"):
            raise ValueError("policy kind must be 'q' or 'softmax'")
        if epsilon < 0 or temperature < 0:
            raise ValueError("epsilon and temperature must be nonnegative")
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.n_states = n_states
        self.n_actions = n_actions
        self.kind = kind
        self.epsilon = epsilon
        self.temperature = temperature
        self.learning_rate = learning_rate
        self._q: dict[int, np.ndarray] = {}
        self._last_goal: int | None = None

    def q_table(self, goal: int) -> np.ndarray:
        if goal not in self._q:
            # warm start: a goal change only swaps the reward, so the value
            # landscape of the previous goal is the best available init
            if self._last_goal is not None and self._last_goal in self._q:
                self._q[goal] = self._q[self._last_goal].copy()
            else:
                self._q[goal] = np.zeros((self.n_states, self.n_actions))
        self._last_goal = goal
        return self._q[goal]

    def greedy_action(self, state: int, goal: int) -> int:
        return int(np.argmax(self.q_table(goal)[state]))

    def action_probs(self, state: int, goal: int) -> np.ndarray:
        q = self.q_table(goal)[state]
        if self.kind == "q":
            probs = np.full(self.n_actions, self.epsilon / self.n_actions)
            probs[int(np.argmax(q))] += 1.0 - self.epsilon
            return probs
        t = max(self.temperature, 1e-8)
        z = (q - q.max()) / t
        e = np.exp(z)
        return e / e.sum()

    def sample_action(self, state: int, goal: int, rng: np.random.Generator) -> int:
        if self.kind == "q":
            if self.epsilon > 0.0 and rng.random() < self.epsilon:
                return int(rng.integers(0, self.n_actions))
            return self.greedy_action(state, goal)
        return int(rng.choice(self.n_actions, p=self.action_probs(state, goal)))

    def to_matrix(self, goal: int) -> np.ndarray:
        return np.vstack([self.action_probs(s, goal) for s in range(self.n_states)])

    def greedy_vector(self, goal: int) -> np.ndarray:
        return self.q_table(goal).argmax(axis=1)

    def save_csv(self, path, goal: int) -> None:
        q = self.q_table(goal)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# dynodist policy v1 kind={self.kind} epsilon={self.epsilon} "
                     f"temperature={self.temperature} goal={goal} "
                     f"n_states={self.n_states} n_actions={self.n_actions}\n")
            fh.write("state,action,q\n")
            for s in range(self.n_states):
                for a in range(self.n_actions):
                    fh.write(f"{s},{a},{float(q[s, a])!r}\n")

    @classmethod
    def load_csv(cls, path) -> tuple["TabularPolicy", int]:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
            if "policy v1" not in header:
                raise ValueError(f"{path}: not a policy checkpoint")
            meta = dict(kv.split("=") for kv in header.split() if "=" in kv)
            policy = cls(int(meta["n_states"]), int(meta["n_actions"]),
                         kind=meta["kind"], epsilon=float(meta["epsilon"]),
                         temperature=float(meta["temperature"]))
            goal = int(meta["goal"])
            q = policy.q_table(goal)
            fh.readline()
            for line in fh:
                s, a, v = line.strip().split(",")
                q[int(s), int(a)] = float(v)
        return policy, goal


class GreedyDescentActor:
    """Acts by one-step lookahead descent on a distance model (the greedy
    ablation baseline); epsilon adds the same random mixing the Q policy
    uses, and the rollout's uniform tail applies unchanged."""

    def __init__(self, env: FiniteEnv, distance_model, epsilon: float = 0.1):
        self.env = env
        self.distance_model = distance_model
        self.epsilon = epsilon

    def sample_action(self, state: int, goal: int, rng: np.random.Generator) -> int:
        if self.epsilon > 0.0 and rng.random() < self.epsilon:
            return int(rng.integers(0, self.env.n_actions))
        return greedy_step_baseline(self.distance_model, self.env, state, goal)

    def greedy_action(self, state: int, goal: int) -> int:
        return greedy_step_baseline(self.distance_model, self.env, state, goal)


def rollout(env: FiniteEnv, policy, goal: int | None, config: RolloutConfig,
            rng: np.random.Generator):
    """Sample one episode of at most horizon_T transitions; actions come
    from the policy until the exploration switch step, then uniform random.
    With no goal the whole episode is uniform (pure exploration)."""
    from .distance import Trajectory

    s = env.reset(rng)
    states, actions = [s], []
    terminal = False
    switch = config.switch_step
    for t in range(config.horizon_T):
        if goal is not None and t < switch:
            a = policy.sample_action(s, goal, rng)
        else:
            a = int(rng.integers(0, env.n_actions))
        tr = env.step(s, a, rng, goal=goal if config.stop_at_goal else None)
        actions.append(a)
        states.append(tr.next_state)
        s = tr.next_state
        if tr.terminal:
            terminal = True
            break
    return Trajectory(states, actions, terminal=terminal)


# ---------------------------------------------------------------------------
# Improvement rules

@dataclass
class ImproveStats:
    updates: int = 0
    mean_abs_td_error: float = 0.0
    goal_supported: bool = True


def _absorbing_value(reward_at_state: float, gamma: float) -> float:
    # discounted self-loop: staying in an absorbing non-goal state forever
    if gamma >= 1.0:
        return reward_at_state * 1e9
    return reward_at_state / (1.0 - gamma)


def _q_learning(policy: TabularPolicy, env: FiniteEnv, goal: int,
                reward: np.ndarray, n_updates: int, transitions,
                rng: np.random.Generator, gamma: float) -> ImproveStats:
    """Generic tabular Q-learning over replayed transitions with a state
    reward vector; goal termination bootstraps 0, other absorbing states
    bootstrap their closed-form self-loop value."""
    s_arr, a_arr, ns_arr = transitions
    if len(s_arr) == 0:
        raise ValueError("no transitions to learn from")
    q = policy.q_table(goal)
    alpha = policy.learning_rate
    idx = rng.integers(0, len(s_arr), size=n_updates)
    acc = 0.0
    for k in idx:
        s, a, ns = int(s_arr[k]), int(a_arr[k]), int(ns_arr[k])
        if s == goal:
            continue
        if ns == goal:
            nxt = 0.0
        elif env.is_absorbing(ns):
            nxt = _absorbing_value(reward[ns], gamma)
        else:
            nxt = q[ns].max()
        target = reward[s] + gamma * nxt
        delta = target - q[s, a]
        q[s, a] += alpha * delta
        acc += abs(delta)
    return ImproveStats(updates=n_updates,
                        mean_abs_td_error=acc / max(n_updates, 1))


def improve(policy: TabularPolicy, distance_model, goal: int, env: FiniteEnv,
            n_updates: int, transitions, rng: np.random.Generator,
            gamma: float = 0.99) -> ImproveStats:
    """Q-learning with reward -d(s, goal) from the (frozen) distance model.
    Flags (without failing) the case where the model has never been
    regressed toward the goal, i.e. every prediction is the d_max default."""
    reward = -distance_model.predict_to_goal(goal)
    stats = _q_learning(policy, env, goal, reward, n_updates, transitions, rng, gamma)
    stats.goal_supported = distance_model.goal_supported(goal)
    return stats


def sparse_reward_improve(policy: TabularPolicy, goal: int, env: FiniteEnv,
                          n_updates: int, transitions, rng: np.random.Generator,
                          gamma: float = 0.99) -> ImproveStats:
    """Identical machinery with a -1 reward for every non-goal step."""
    reward = np.full(env.n_states, -1.0)
    reward[goal] = 0.0
    return _q_learning(policy, env, goal, reward, n_updates, transitions, rng, gamma)


def greedy_step_baseline(distance_model, env: FiniteEnv, state: int, goal: int) -> int:
    """argmin over actions of the expected model distance of the successor
    to the goal; ties break to the lowest action index. Needs afterstate
    access: deterministic dynamics or an exact transition distribution."""
    d = distance_model.predict_to_goal(goal)
    scores = np.empty(env.n_actions)
    if env.deterministic:
        for a in range(env.n_actions):
            scores[a] = d[env.next_state(state, a)]
    else:
        try:
            dists = [env.transition_dist(state, a) for a in range(env.n_actions)]
        except (NotImplementedError, UnsupportedEnvError) as exc:
            raise UnsupportedEnvError(
                "greedy descent on a stochastic env needs afterstate access") from exc
        for a, dist in enumerate(dists):
            scores[a] = sum(p * d[ns] for ns, p in dist)
    return int(np.argmin(scores))
