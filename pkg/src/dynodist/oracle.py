"""Brute-force ground truth for the learned components.

Everything here is exact (graph search, linear solves, closed-form
geometric tails) or plain Monte Carlo with reported standard errors, and
deliberately independent of the learning code paths it is used to check.

Policies are passed as arrays indexed by raw state id: an integer vector
is a deterministic policy, a (n_states, n_actions) float matrix is a
stochastic one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envs import FiniteEnv, PathologicalMDP, UnsupportedEnvError

UNREACHED = math.inf


class VerificationError(AssertionError):
    """A formal property that should hold was violated."""


@dataclass
class ExactDistanceTable:
    """Dense (state, state) -> steps table; UNREACHED (inf) marks pairs the
    oracle could not connect. Monte Carlo estimates carry per-cell standard
    errors; exact tables have se=None."""

    values: np.ndarray
    se: np.ndarray | None = None

    def reached(self, s: int, s2: int) -> bool:
        return bool(np.isfinite(self.values[s, s2]))


def _policy_probs(policy, n_states: int, n_actions: int) -> np.ndarray:
    policy = np.asarray(policy)
    if policy.ndim == 1:
        probs = np.zeros((n_states, n_actions))
        probs[np.arange(n_states), policy.astype(int)] = 1.0
        return probs
    if policy.shape != (n_states, n_actions):
        raise ValueError(f"policy matrix must be ({n_states}, {n_actions})")
    return policy.astype(float)


def _is_deterministic_policy(policy) -> bool:
    return np.asarray(policy).ndim == 1


def sample_action(policy, state: int, rng: np.random.Generator) -> int:
    policy = np.asarray(policy)
    if policy.ndim == 1:
        return int(policy[state])
    return int(rng.choice(policy.shape[1], p=policy[state]))


def sample_trajectory(env: FiniteEnv, policy, rng: np.random.Generator,
                      horizon: int | None = None, goal: int | None = None):
    """Roll the policy out from the initial state; stops on absorbing or
    goal states (goal termination) or after `horizon` steps. Returns
    (states, actions)."""
    horizon = horizon if horizon is not None else env.spec.horizon_T
    s = env.reset(rng)
    states, actions = [s], []
    for _ in range(horizon):
        if env.is_absorbing(s) or (goal is not None and s == goal):
            break
        a = sample_action(policy, s, rng)
        s = env.step(s, a, rng, goal=goal).next_state
        actions.append(a)
        states.append(s)
    return states, actions


# ---------------------------------------------------------------------------
# Shortest paths

def bfs_distance(env: FiniteEnv) -> ExactDistanceTable:
    """All-pairs shortest step counts over the deterministic action graph."""
    if not env.deterministic:
        raise UnsupportedEnvError("bfs_distance requires a deterministic env")
    n = env.n_states
    states = env.enumerate_states()
    succ = {s: sorted({env.next_state(s, a) for a in range(env.n_actions)})
            for s in states}
    values = np.full((n, n), UNREACHED)
    for src in states:
        dist = values[src]
        dist[src] = 0.0
        frontier = [src]
        while frontier:
            nxt = []
            for s in frontier:
                for ns in succ[s]:
                    if dist[ns] == UNREACHED:
                        dist[ns] = dist[s] + 1.0
                        nxt.append(ns)
            frontier = nxt
    return ExactDistanceTable(values)


def bfs_to_goal(env: FiniteEnv, goal: int) -> np.ndarray:
    """Shortest step counts from every state to `goal` (deterministic envs)."""
    if not env.deterministic:
        raise UnsupportedEnvError("bfs_to_goal requires a deterministic env")
    return env.min_step_distances(goal)


# ---------------------------------------------------------------------------
# Policy-conditioned distances

@dataclass
class PolicyDistanceEstimate:
    table: ExactDistanceTable
    weight: np.ndarray | None = None  # total sampling weight per cell (MC only)


def exact_policy_distance(env: FiniteEnv, policy, horizon: int | None = None,
                          mc_samples: int = 0, rng: np.random.Generator | None = None,
                          goal: int | None = None) -> PolicyDistanceEstimate:
    """Policy-conditioned distance table.

    Deterministic env + deterministic policy: exact first-hit step counts
    along the unique trajectory from each state. Otherwise: Monte Carlo
    under the same pair-sampling measure the regression uses (trajectory,
    then i uniform in [0, L], j uniform in [i, L]), with per-cell standard
    errors of the weighted conditional mean.
    """
    horizon = horizon if horizon is not None else env.spec.horizon_T
    n = env.n_states
    if env.deterministic and _is_deterministic_policy(policy):
        policy = np.asarray(policy, dtype=int)
        values = np.full((n, n), UNREACHED)
        for src in env.enumerate_states():
            values[src, src] = 0.0
            s = src
            for t in range(1, horizon + 1):
                if env.is_absorbing(s) or (goal is not None and s == goal):
                    break
                s = env.next_state(s, int(policy[s]))
                if values[src, s] == UNREACHED:
                    values[src, s] = float(t)
        return PolicyDistanceEstimate(ExactDistanceTable(values))

    if mc_samples < 1:
        raise ValueError("stochastic env/policy requires mc_samples >= 1")
    if rng is None:
        raise ValueError("Monte Carlo estimation requires an rng")
    sum_w = np.zeros((n, n))
    sum_w2 = np.zeros((n, n))
    sum_wg = np.zeros((n, n))
    sum_wg2 = np.zeros((n, n))
    for _ in range(mc_samples):
        states, actions = sample_trajectory(env, policy, rng, horizon, goal=goal)
        arr = np.asarray(states)
        length = len(actions)
        ii, jj = np.triu_indices(length + 1)
        w = 1.0 / ((length + 1) * (length + 1 - ii))
        gaps = (jj - ii).astype(float)
        si, sj = arr[ii], arr[jj]
        np.add.at(sum_w, (si, sj), w)
        np.add.at(sum_w2, (si, sj), w * w)
        np.add.at(sum_wg, (si, sj), w * gaps)
        np.add.at(sum_wg2, (si, sj), w * gaps * gaps)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = sum_wg / sum_w
        var = np.maximum(sum_wg2 / sum_w - mean**2, 0.0)
        neff = np.where(sum_w2 > 0, sum_w**2 / sum_w2, 1.0)
        se_all = np.sqrt(var / np.maximum(neff, 1.0))
    values = np.where(sum_w > 0, mean, UNREACHED)
    se = np.where(sum_w > 0, se_all, UNREACHED)
    return PolicyDistanceEstimate(ExactDistanceTable(values, se), weight=sum_w)


def expected_hitting_times(env: FiniteEnv, policy, goal: int) -> np.ndarray:
    """Exact expected steps to reach `goal` under a (possibly stochastic)
    policy, by solving the absorbing-chain linear system. Requires
    absorption with probability one (raises otherwise)."""
    states = env.enumerate_states()
    pos = {s: i for i, s in enumerate(states)}
    m = len(states)
    probs = _policy_probs(policy, env.n_states, env.n_actions)
    P = np.zeros((m, m))
    for s in states:
        i = pos[s]
        for a in range(env.n_actions):
            pa = probs[s, a]
            if pa == 0.0:
                continue
            for ns, pt in env.transition_dist(s, a):
                P[i, pos[ns]] += pa * pt
    g = pos[goal]
    keep = [i for i in range(m) if i != g]
    A = np.eye(m - 1) - P[np.ix_(keep, keep)]
    try:
        h = np.linalg.solve(A, np.ones(m - 1))
    except np.linalg.LinAlgError as exc:
        raise UnsupportedEnvError("hitting times undefined: goal not almost-surely reached") from exc
    if not np.all(np.isfinite(h)) or np.any(h < -1e-9):
        raise UnsupportedEnvError("hitting times undefined: goal not almost-surely reached")
    full = np.zeros(m)
    full[keep] = h
    full[g] = 0.0
    out = np.full(env.n_states, UNREACHED)
    for s, i in pos.items():
        out[s] = full[i]
    return out


# ---------------------------------------------------------------------------
# Exact policy iteration with the distance-as-reward objective

@dataclass
class IterationRound:
    policy: np.ndarray           # deterministic action per state (raw ids)
    distances: np.ndarray        # d(s, goal) per raw state id


@dataclass
class IterationResult:
    rounds: list[IterationRound] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    converged: bool = False
    bfs: np.ndarray | None = None

    @property
    def final_distances(self) -> np.ndarray:
        return self.rounds[-1].distances


def follow_policy_distances(env: FiniteEnv, policy: np.ndarray, goal: int) -> np.ndarray:
    """Steps to first reach `goal` following a deterministic policy from
    each state; UNREACHED on cycles."""
    out = np.full(env.n_states, UNREACHED)
    states = env.enumerate_states()
    limit = len(states) + 1
    for src in states:
        s, steps = src, 0
        while s != goal and steps <= limit:
            s = env.next_state(s, int(policy[s]))
            steps += 1
        if s == goal:
            out[src] = float(steps)
    out[goal] = 0.0
    return out


def optimal_policy_for_cost(env: FiniteEnv, cost: np.ndarray, gamma: float,
                            goal: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact optimal deterministic policy for reward -cost(s) with the goal
    absorbing at value 0, via Howard policy iteration (linear-solve
    evaluation; an action changes only on a definite improvement, so ties
    cannot cycle). Returns (policy, values) over raw state ids."""
    if not env.deterministic:
        raise UnsupportedEnvError("exact policy optimization requires deterministic dynamics")
    states = env.enumerate_states()
    pos = {s: i for i, s in enumerate(states)}
    m = len(states)
    nxt = np.array([[pos[env.next_state(s, a)] for a in range(env.n_actions)]
                    for s in states])
    c = np.array([cost[s] for s in states], dtype=float)
    c[pos[goal]] = 0.0
    g = pos[goal]
    sigma = np.zeros(m, dtype=int)

    def evaluate(sig: np.ndarray) -> np.ndarray:
        P = np.zeros((m, m))
        P[np.arange(m), nxt[np.arange(m), sig]] = 1.0
        P[g, :] = 0.0  # absorbing goal, value 0
        V = np.linalg.solve(np.eye(m) - gamma * P, -c)
        return V

    V = evaluate(sigma)
    for _ in range(10_000):
        succ_vals = V[nxt]                       # (m, n_actions)
        best = succ_vals.argmax(axis=1)
        improved = succ_vals[np.arange(m), best] > succ_vals[np.arange(m), sigma] + 1e-10
        improved[g] = False
        if not improved.any():
            break
        sigma = np.where(improved, best, sigma)
        V = evaluate(sigma)
    else:
        raise VerificationError("policy iteration failed to terminate")
    out_pol = np.zeros(env.n_states, dtype=int)
    out_V = np.full(env.n_states, -np.inf)
    for s, i in pos.items():
        out_pol[s] = sigma[i]
        out_V[s] = V[i]
    return out_pol, out_V


def ddl_exact_policy_iteration(env: FiniteEnv, goal: int, gamma: float = 0.99,
                               max_rounds: int | None = None,
                               raise_on_violation: bool = True,
                               initial_policy: np.ndarray | None = None) -> IterationResult:
    """Alternate exact distance evaluation and exact policy optimization of
    the cumulative-distance objective, starting from the uniform-random
    policy (or a given deterministic one). Checks, every round, that
    distances never increase pointwise, and at the fixpoint that they equal
    the shortest-path distances."""
    if not env.deterministic:
        raise UnsupportedEnvError("the improvement theorem assumes deterministic dynamics")
    states = env.enumerate_states()
    bfs = bfs_to_goal(env, goal)
    if any(not np.isfinite(bfs[s]) for s in states):
        raise UnsupportedEnvError("goal must be reachable from every state")
    result = IterationResult(bfs=bfs)
    if initial_policy is None:
        uniform = np.full((env.n_states, env.n_actions), 1.0 / env.n_actions)
        d_prev = expected_hitting_times(env, uniform, goal)
        first = IterationRound(policy=np.full(env.n_states, -1), distances=d_prev)
    else:
        initial_policy = np.asarray(initial_policy, dtype=int)
        d_prev = follow_policy_distances(env, initial_policy, goal)
        first = IterationRound(policy=initial_policy, distances=d_prev)
    result.rounds.append(first)
    limit = max_rounds if max_rounds is not None else len(states) * len(states) + 10
    for _ in range(limit):
        cost = np.where(np.isfinite(d_prev), d_prev, float(len(states)) * 10.0)
        policy, _ = optimal_policy_for_cost(env, cost, gamma, goal)
        d = follow_policy_distances(env, policy, goal)
        for s in states:
            if d[s] > d_prev[s] + 1e-9:
                result.violations.append(
                    f"monotonicity: d(s={s}) rose {d_prev[s]:.6f} -> {d[s]:.6f}")
        result.rounds.append(IterationRound(policy=policy, distances=d))
        same = all(d[s] == d_prev[s] for s in states)
        if same:
            result.converged = True
            for s in states:
                if d[s] != bfs[s]:
                    result.violations.append(
                        f"fixpoint: d(s={s})={d[s]} != shortest path {bfs[s]}")
            break
        d_prev = d
    if not result.converged:
        result.violations.append("no fixpoint within round limit")
    if raise_on_violation and result.violations:
        raise VerificationError("; ".join(result.violations))
    return result


def policy_return_under_cost(env: FiniteEnv, policy: np.ndarray, cost: np.ndarray,
                             gamma: float, goal: int, start: int) -> float:
    """Exact discounted return sum_t gamma^t * (-cost(s_t)) of a deterministic
    policy on a deterministic env, with the goal absorbing at 0; cycles are
    summed with their closed-form geometric tail."""
    if not env.deterministic:
        raise UnsupportedEnvError("exact return evaluation requires deterministic dynamics")
    first_seen: dict[int, int] = {}
    rewards: list[float] = []
    s, t = start, 0
    while s != goal and s not in first_seen:
        first_seen[s] = t
        rewards.append(-float(cost[s]))
        s = env.next_state(s, int(policy[s]))
        t += 1
    total = sum(r * gamma**k for k, r in enumerate(rewards))
    if s != goal:  # entered a cycle at time first_seen[s]
        t0 = first_seen[s]
        cycle = rewards[t0:]
        csum = sum(r * gamma**k for k, r in enumerate(cycle))
        if gamma >= 1.0:
            return -math.inf if csum < 0 else total
        total += gamma**t0 * csum * (gamma ** len(cycle)) / (1.0 - gamma ** len(cycle))
    return total


# ---------------------------------------------------------------------------
# Objective identity: nested double-sum form vs collapsed (t+1)-weighted form

@dataclass
class IdentityCheckResult:
    lhs: float
    rhs: float
    diff: float
    se: float
    samples: int
    exact: bool


def eq5_identity_check(env: FiniteEnv, policy, goal: int, gamma: float,
                       mc_samples: int = 0, rng: np.random.Generator | None = None,
                       horizon_cap: int | None = None) -> IdentityCheckResult:
    """Evaluate the nested objective -E[sum_t gamma^t * Q(s_t,a_t)], where Q
    is the expected discounted count of non-terminal steps after (s_t,a_t),
    against its collapsed form -E[sum_t gamma^t (t+1) c(s_t)], with
    c(s) = 0 at goal/terminal states and 1 elsewhere.

    Deterministic env + deterministic policy: both forms computed exactly
    along the unique trajectory. Otherwise: paired Monte Carlo (one inner
    rollout per outer step), returning the standard error of the paired
    difference.
    """

    def indicator(s: int) -> float:
        return 0.0 if (s == goal or env.is_absorbing(s)) else 1.0

    if env.deterministic and _is_deterministic_policy(policy):
        policy = np.asarray(policy, dtype=int)
        s = env.reset()
        path = [s]
        seen = {s}
        while indicator(s) > 0.0:
            s = env.next_state(s, int(policy[s]))
            if s in path and indicator(s) > 0.0:
                raise UnsupportedEnvError(
                    "exact identity evaluation needs a goal-reaching policy")
            path.append(s)
            seen.add(s)
        M = len(path) - 1
        # suffix discounted indicator sums: q[t] = sum_k gamma^k c(path[t+k])
        q = 0.0
        qs = [0.0] * (M + 1)
        for t in range(M - 1, -1, -1):
            q = indicator(path[t]) + gamma * q
            qs[t] = q
        lhs = -sum(gamma**t * qs[t] for t in range(M + 1))
        rhs = -sum(gamma**t * (t + 1) * indicator(path[t]) for t in range(M + 1))
        return IdentityCheckResult(lhs, rhs, abs(lhs - rhs), 0.0, 1, True)

    if mc_samples < 2:
        raise ValueError("stochastic identity check requires mc_samples >= 2")
    if rng is None:
        raise ValueError("Monte Carlo identity check requires an rng")
    if horizon_cap is None:
        if gamma >= 1.0:
            raise ValueError("gamma must be < 1 for the Monte Carlo identity check")
        horizon_cap = min(int(math.log(1e-10) / math.log(gamma)) + 1, 20_000)

    def inner_rollout(s0: int, a0: int) -> float:
        total, disc = 0.0, 1.0
        s = s0
        a = a0
        for _ in range(horizon_cap):
            if indicator(s) == 0.0:
                break
            total += disc
            disc *= gamma
            s = env.step(s, a, rng).next_state
            a = sample_action(policy, s, rng) if indicator(s) > 0.0 else 0
        return total

    xs = np.empty(mc_samples)
    ys = np.empty(mc_samples)
    for k in range(mc_samples):
        states, actions = sample_trajectory(env, policy, rng, horizon=horizon_cap, goal=goal)
        x = y = 0.0
        disc = 1.0
        for t, a in enumerate(actions):
            if indicator(states[t]) == 0.0:
                break
            x += disc * inner_rollout(states[t], a)
            y += disc * (t + 1) * indicator(states[t])
            disc *= gamma
        xs[k] = x
        ys[k] = y
    d = xs - ys
    se = float(d.std(ddof=1) / math.sqrt(mc_samples))
    return IdentityCheckResult(-float(xs.mean()), -float(ys.mean()),
                               abs(float(d.mean())), se, mc_samples, False)


# ---------------------------------------------------------------------------
# Risky/safe branch analysis

@dataclass
class BranchRow:
    p: float
    greedy_choice: str       # "risky" | "safe"
    cumulative_choice: str
    risky_return: float
    safe_return: float


@dataclass
class BranchAnalysis:
    rows: list[BranchRow]
    crossover_p: float
    gamma: float
    d_max: float
    horizon: int


def _conditional_distance_table(p: float, d_max: float) -> np.ndarray:
    """Optimal conditional (reached-only) distances to the goal for the
    two-branch MDP; pairs never connected get d_max."""
    E = PathologicalMDP
    d = np.zeros(6)
    d[E.GOAL] = 0.0
    d[E.DEAD] = d_max
    d[E.SAFE2] = 1.0
    d[E.SAFE1] = 2.0
    d[E.RISKY] = 1.0 if p > 0.0 else d_max
    d[E.S0] = 2.0 if p > 0.0 else 3.0
    return d


def _branch_returns(p: float, d: np.ndarray, gamma: float, horizon: int) -> tuple[float, float]:
    """Exact expected finite-horizon returns of the risky-first and
    safe-first policies under reward -d(s_t); absorbing states accrue their
    own cost for the remaining steps."""
    E = PathologicalMDP

    def path_return(states: list[int]) -> float:
        padded = states + [states[-1]] * (horizon - len(states))
        return sum(-d[s] * gamma**t for t, s in enumerate(padded[:horizon]))

    risky = (p * path_return([E.S0, E.RISKY, E.GOAL])
             + (1.0 - p) * path_return([E.S0, E.RISKY, E.DEAD]))
    safe = path_return([E.S0, E.SAFE1, E.SAFE2, E.GOAL])
    return risky, safe


def pathological_branch_analysis(p_grid, gamma: float = 0.99, d_max: float = 20.0,
                                 horizon: int = 20) -> BranchAnalysis:
    """For each success probability p: which branch one-step greedy descent
    on the conditional distance picks, and which branch the cumulative
    objective picks, both evaluated exactly. Also returns the crossover p*
    above which the cumulative objective switches to the risky branch
    (the returns are affine in p, so two evaluations pin the root)."""
    E = PathologicalMDP
    rows = []
    for p in p_grid:
        d = _conditional_distance_table(p, d_max)
        greedy = "risky" if d[E.RISKY] < d[E.SAFE1] else "safe"
        risky_ret, safe_ret = _branch_returns(p, d, gamma, horizon)
        cumulative = "risky" if risky_ret > safe_ret else "safe"
        rows.append(BranchRow(float(p), greedy, cumulative, risky_ret, safe_ret))
    d_pos = _conditional_distance_table(0.5, d_max)  # table in the p > 0 regime
    r0, s0 = _branch_returns(0.0, d_pos, gamma, horizon)
    r1, s1 = _branch_returns(1.0, d_pos, gamma, horizon)
    # risky(p) - safe = (r0 - s0) + p * (r1 - r0); safe return is p-free
    crossover = (s0 - r0) / (r1 - r0)
    return BranchAnalysis(rows, float(crossover), gamma, float(d_max), horizon)
