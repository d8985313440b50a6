"""Policy-conditioned distance estimation from trajectory pairs.

The estimator regresses the empirical gap j - i between two states of the
same trajectory onto a distance model: a tabular running mean per state
pair, or a small MLP trained by minibatch gradient descent. A TD(0)
variant toward a fixed goal exists purely as an ablation baseline.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    """Ordered states/actions of one episode; len(states) == len(actions)+1.
    terminal marks episodes that ended by reaching an absorbing/goal state
    rather than the horizon."""

    states: list[int]
    actions: list[int]
    terminal: bool = False
    env_step_stamp: int = 0

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("trajectory needs exactly one more state than actions")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def final_state(self) -> int:
        return self.states[-1]


@dataclass(frozen=True)
class PairSample:
    s_i: int
    s_j: int
    gap: int

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("gap must be nonnegative")


class OnPolicyPool:
    """Recency window of trajectories, bounded by total stored transitions;
    eviction is oldest-trajectory-first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.trajectories: deque[Trajectory] = deque()
        self.total_transitions = 0

    def __len__(self) -> int:
        return len(self.trajectories)

    def append(self, traj: Trajectory) -> None:
        self.trajectories.append(traj)
        self.total_transitions += len(traj)
        while self.total_transitions > self.capacity and len(self.trajectories) > 1:
            dropped = self.trajectories.popleft()
            self.total_transitions -= len(dropped)

    def states_most_recent_first(self) -> list[int]:
        """Unique states ordered from most recently visited to oldest."""
        seen: set[int] = set()
        out: list[int] = []
        for traj in reversed(self.trajectories):
            for s in reversed(traj.states):
                if s not in seen:
                    seen.add(s)
                    out.append(s)
        return out


def sample_pairs(pool: OnPolicyPool, count: int, rng: np.random.Generator) -> list[PairSample]:
    """Draw state pairs: trajectory uniform, i uniform in [0, L], j uniform
    in [i, L]; the gap is j - i."""
    if len(pool) == 0:
        raise ValueError("cannot sample pairs from an empty pool")
    trajs = pool.trajectories
    t_idx = rng.integers(0, len(trajs), size=count)
    out = []
    for k in t_idx:
        traj = trajs[int(k)]
        top = len(traj)
        i = int(rng.integers(0, top + 1))
        j = int(rng.integers(i, top + 1))
        out.append(PairSample(traj.states[i], traj.states[j], j - i))
    return out


# ---------------------------------------------------------------------------
# Models

class TabularDistance:
    """Dense running mean of observed gaps per (state, state) cell; cells
    never regressed predict the configured default d_max."""

    kind = "tabular"

    def __init__(self, n_states: int, d_max: float):
        self.n_states = n_states
        self.d_max = float(d_max)
        self.mean = np.zeros((n_states, n_states))
        self.count = np.zeros((n_states, n_states), dtype=np.int64)

    def fit_batch(self, batch: list[PairSample]) -> float:
        preds = np.array([self.predict(p.s_i, p.s_j) for p in batch])
        gaps = np.array([p.gap for p in batch], dtype=float)
        for p in batch:
            c = self.count[p.s_i, p.s_j] + 1
            self.count[p.s_i, p.s_j] = c
            self.mean[p.s_i, p.s_j] += (p.gap - self.mean[p.s_i, p.s_j]) / c
        return float(np.mean((preds - gaps) ** 2))

    def predict(self, s: int, s2: int) -> float:
        if self.count[s, s2] == 0:
            return self.d_max
        return max(float(self.mean[s, s2]), 0.0)

    def predict_from(self, s: int) -> np.ndarray:
        return np.where(self.count[s] > 0, np.maximum(self.mean[s], 0.0), self.d_max)

    def predict_to_goal(self, goal: int) -> np.ndarray:
        col = self.count[:, goal] > 0
        return np.where(col, np.maximum(self.mean[:, goal], 0.0), self.d_max)

    def goal_supported(self, goal: int) -> bool:
        return bool((self.count[:, goal] > 0).any())

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# dynodist tabular distance v1 d_max={self.d_max} n_states={self.n_states}\n")
            fh.write("s,sp,mean,count\n")
            rows, cols = np.nonzero(self.count)
            for s, s2 in zip(rows, cols):
                fh.write(f"{s},{s2},{float(self.mean[s, s2])!r},{int(self.count[s, s2])}\n")

    @classmethod
    def load_csv(cls, path) -> "TabularDistance":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
            if "tabular distance v1" not in header:
                raise ValueError(f"{path}: not a tabular distance checkpoint")
            meta = dict(kv.split("=") for kv in header.split() if "=" in kv)
            model = cls(int(meta["n_states"]), float(meta["d_max"]))
            fh.readline()  # column header
            for line in fh:
                s, s2, mean, count = line.strip().split(",")
                model.mean[int(s), int(s2)] = float(mean)
                model.count[int(s), int(s2)] = int(count)
        return model


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class ParametricDistance:
    """Small fully connected regressor d(s, s') >= 0 over concatenated state
    encodings: two tanh hidden layers, softplus output, Adam updates on the
    squared-gap loss."""

    kind = "parametric"

    def __init__(self, state_encoding: np.ndarray, hidden: tuple[int, int] = (64, 64),
                 learning_rate: float = 3e-4, d_max: float | None = None,
                 seed: int = 0):
        self.encoding = np.asarray(state_encoding, dtype=float)
        self.n_states = self.encoding.shape[0]
        self.d_max = d_max
        self.learning_rate = learning_rate
        rng = np.random.default_rng(seed)
        dims = [2 * self.encoding.shape[1], hidden[0], hidden[1], 1]
        self.params: list[np.ndarray] = []
        for din, dout in zip(dims[:-1], dims[1:]):
            scale = 1.0 / np.sqrt(din)
            self.params.append(rng.uniform(-scale, scale, size=(dout, din)))
            self.params.append(np.zeros(dout))
        self._adam_m = [np.zeros_like(p) for p in self.params]
        self._adam_v = [np.zeros_like(p) for p in self.params]
        self._adam_t = 0

    def _inputs(self, si: np.ndarray, sj: np.ndarray) -> np.ndarray:
        return np.concatenate([self.encoding[si], self.encoding[sj]], axis=1)

    def _forward(self, x: np.ndarray, params: list[np.ndarray] | None = None):
        W1, b1, W2, b2, W3, b3 = params if params is not None else self.params
        z1 = x @ W1.T + b1
        h1 = np.tanh(z1)
        z2 = h1 @ W2.T + b2
        h2 = np.tanh(z2)
        z3 = h2 @ W3.T + b3
        d = _softplus(z3)[:, 0]
        return d, (x, h1, h2, z3)

    def loss(self, si, sj, gaps, params=None) -> float:
        d, _ = self._forward(self._inputs(np.asarray(si), np.asarray(sj)), params)
        return 0.5 * float(np.mean((d - np.asarray(gaps, dtype=float)) ** 2))

    def loss_gradient(self, si, sj, gaps, params=None) -> tuple[float, list[np.ndarray]]:
        """Analytic gradient of the half-mean-squared gap loss."""
        p = params if params is not None else self.params
        W1, b1, W2, b2, W3, b3 = p
        x = self._inputs(np.asarray(si), np.asarray(sj))
        gaps = np.asarray(gaps, dtype=float)
        d, (x, h1, h2, z3) = self._forward(x, p)
        B = x.shape[0]
        loss = 0.5 * float(np.mean((d - gaps) ** 2))
        dd = (d - gaps)[:, None] / B                    # dL/dd
        dz3 = dd * _sigmoid(z3)                         # softplus'
        gW3 = dz3.T @ h2
        gb3 = dz3.sum(axis=0)
        dh2 = dz3 @ W3
        dz2 = dh2 * (1.0 - h2**2)
        gW2 = dz2.T @ h1
        gb2 = dz2.sum(axis=0)
        dh1 = dz2 @ W2
        dz1 = dh1 * (1.0 - h1**2)
        gW1 = dz1.T @ x
        gb1 = dz1.sum(axis=0)
        return loss, [gW1, gb1, gW2, gb2, gW3, gb3]

    def fit_batch(self, batch: list[PairSample]) -> float:
        si = np.array([p.s_i for p in batch])
        sj = np.array([p.s_j for p in batch])
        gaps = np.array([p.gap for p in batch], dtype=float)
        loss, grads = self.loss_gradient(si, sj, gaps)
        self._adam_t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        lr = self.learning_rate
        for i, g in enumerate(grads):
            self._adam_m[i] = b1 * self._adam_m[i] + (1 - b1) * g
            self._adam_v[i] = b2 * self._adam_v[i] + (1 - b2) * g * g
            mhat = self._adam_m[i] / (1 - b1**self._adam_t)
            vhat = self._adam_v[i] / (1 - b2**self._adam_t)
            self.params[i] -= lr * mhat / (np.sqrt(vhat) + eps)
        return loss

    def predict(self, s: int, s2: int) -> float:
        d, _ = self._forward(self._inputs(np.array([s]), np.array([s2])))
        return float(d[0])

    def predict_from(self, s: int) -> np.ndarray:
        si = np.full(self.n_states, s)
        d, _ = self._forward(self._inputs(si, np.arange(self.n_states)))
        return d

    def predict_to_goal(self, goal: int) -> np.ndarray:
        sj = np.full(self.n_states, goal)
        d, _ = self._forward(self._inputs(np.arange(self.n_states), sj))
        return d

    def goal_supported(self, goal: int) -> bool:
        return True

    def save_npz(self, path) -> None:
        np.savez(path, version=1, encoding=self.encoding,
                 **{f"p{i}": p for i, p in enumerate(self.params)})

    @classmethod
    def load_npz(cls, path) -> "ParametricDistance":
        data = np.load(path)
        model = cls(data["encoding"], hidden=(len(data["p1"]), len(data["p3"])))
        model.params = [data[f"p{i}"] for i in range(6)]
        return model


class TDDistance:
    """Goal-conditioned distance learned with a TD(0) rule along stored
    transitions (ablation baseline; not used by the main algorithm).
    Unvisited states stay at the d_max initialization."""

    kind = "td"

    def __init__(self, n_states: int, goal: int, d_max: float,
                 learning_rate: float = 0.1, gamma_d: float = 1.0):
        self.n_states = n_states
        self.goal = goal
        self.d_max = float(d_max)
        self.learning_rate = learning_rate
        self.gamma_d = gamma_d
        self.values = np.full(n_states, float(d_max))
        self.values[goal] = 0.0

    def update(self, s: int, s2: int) -> float:
        if s == self.goal:
            return 0.0
        bootstrap = 0.0 if s2 == self.goal else self.values[s2]
        target = 1.0 + self.gamma_d * bootstrap
        delta = target - self.values[s]
        self.values[s] += self.learning_rate * delta
        return float(delta * delta)

    def predict(self, s: int, s2: int) -> float:
        if s2 != self.goal:
            return self.d_max
        return float(self.values[s])

    def predict_to_goal(self, goal: int) -> np.ndarray:
        if goal != self.goal:
            return np.full(self.n_states, self.d_max)
        return self.values.copy()

    def predict_from(self, s: int) -> np.ndarray:
        out = np.full(self.n_states, self.d_max)
        out[self.goal] = self.values[s]
        return out

    def goal_supported(self, goal: int) -> bool:
        return goal == self.goal


# ---------------------------------------------------------------------------
# Training entry points

@dataclass
class FitStats:
    losses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def steps(self) -> int:
        return len(self.losses)

    @property
    def mean_loss(self) -> float:
        return float(self.losses.mean()) if len(self.losses) else 0.0


def fit(model, pool: OnPolicyPool, steps: int, batch_size: int,
        rng: np.random.Generator) -> FitStats:
    """Run `steps` regression steps, each on a fresh batch of sampled pairs;
    returns the per-step mean squared loss (measured before each update)."""
    if len(pool) == 0:
        raise ValueError("cannot fit a distance model on an empty pool")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    losses = np.empty(steps)
    for k in range(steps):
        batch = sample_pairs(pool, batch_size, rng)
        losses[k] = model.fit_batch(batch)
    return FitStats(losses)


def td_fit(model: TDDistance, pool: OnPolicyPool, steps: int,
           rng: np.random.Generator, batch_size: int = 64) -> FitStats:
    """TD(0) sweeps toward the model's goal along randomly drawn stored
    transitions."""
    if len(pool) == 0:
        raise ValueError("cannot fit a distance model on an empty pool")
    trajs = [t for t in pool.trajectories if len(t) > 0]
    if not trajs:
        raise ValueError("pool has no transitions")
    losses = np.empty(steps)
    for k in range(steps):
        acc = 0.0
        for _ in range(batch_size):
            traj = trajs[int(rng.integers(0, len(trajs)))]
            t = int(rng.integers(0, len(traj)))
            acc += model.update(traj.states[t], traj.states[t + 1])
        losses[k] = acc / batch_size
    return FitStats(losses)
