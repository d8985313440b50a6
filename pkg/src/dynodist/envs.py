"""Small finite MDPs used for training and for exact verification.

All environments share one contract: integer state ids in [0, n_states),
integer action ids in [0, n_actions), an explicit transition distribution,
and a horizon. Environments are immutable after construction; episode
state (current state, step counter) is owned by the caller, so one env
instance can serve many concurrent rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np


class EnvError(ValueError):
    """Contract violation against an environment (bad state/action/shape)."""


class UnsupportedEnvError(EnvError):
    """Operation not defined for this environment kind."""


@dataclass(frozen=True)
class EnvSpec:
    state_count: int
    action_count: int
    horizon_T: int
    initial_state: int
    goal_terminal: bool = True

    def __post_init__(self):
        if self.horizon_T < 1:
            raise EnvError("horizon_T must be >= 1")
        if self.action_count < 1:
            raise EnvError("action_count must be >= 1")
        if not (0 <= self.initial_state < self.state_count):
            raise EnvError("initial_state must be a valid state id")


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    next_state: int
    terminal: bool


class FiniteEnv:
    """Base for finite MDPs. Subclasses fill in the transition structure."""

    spec: EnvSpec
    deterministic: bool
    goal_hint: int | None = None

    @property
    def n_states(self) -> int:
        return self.spec.state_count

    @property
    def n_actions(self) -> int:
        return self.spec.action_count

    def reset(self, rng: np.random.Generator | None = None) -> int:
        return self.spec.initial_state

    def step(self, state: int, action: int, rng: np.random.Generator | None = None,
             goal: int | None = None) -> Transition:
        """One transition. terminal is true iff the next state is absorbing,
        or equals the goal while the env terminates on goal-reaching."""
        self._check_state(state)
        if not (0 <= action < self.n_actions):
            raise EnvError(f"invalid action id {action} (env has {self.n_actions} actions)")
        ns = self._sample_next(state, action, rng)
        terminal = self.is_absorbing(ns) or (
            goal is not None and ns == goal and self.spec.goal_terminal)
        return Transition(state, action, ns, terminal)

    def enumerate_states(self) -> list[int]:
        raise NotImplementedError

    def transition_dist(self, state: int, action: int) -> list[tuple[int, float]]:
        """Exact successor distribution as (next_state, prob) pairs."""
        raise NotImplementedError

    def next_state(self, state: int, action: int) -> int:
        raise UnsupportedEnvError("next_state requires a deterministic env")

    def is_absorbing(self, state: int) -> bool:
        return False

    def _sample_next(self, state: int, action: int, rng) -> int:
        raise NotImplementedError

    def _check_state(self, state: int) -> None:
        if not (0 <= state < self.n_states):
            raise EnvError(f"invalid state id {state}")

    def min_step_distances(self, goal: int) -> np.ndarray:
        """Fewest feasible steps from every state to `goal`, BFS over the
        support of the transition distribution (reporting metric; for
        stochastic envs this counts possible, not certain, steps)."""
        self._check_state(goal)
        dist = np.full(self.n_states, np.inf)
        preds: list[list[int]] = [[] for _ in range(self.n_states)]
        for s in self.enumerate_states():
            for a in range(self.n_actions):
                for ns, p in self.transition_dist(s, a):
                    if p > 0.0:
                        preds[ns].append(s)
        dist[goal] = 0.0
        frontier = [goal]
        while frontier:
            nxt = []
            for s in frontier:
                for q in preds[s]:
                    if dist[q] == np.inf:
                        dist[q] = dist[s] + 1.0
                        nxt.append(q)
            frontier = nxt
        return dist


# ---------------------------------------------------------------------------
# Grid mazes

GRID_ACTIONS = ("up", "down", "left", "right", "stay")
GRID_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))  # (dr, dc) per action


class GridMaze(FiniteEnv):
    """Deterministic 2D maze. State id = row * width + col; moves into walls
    or out of bounds leave the state unchanged. Wall cells are not valid
    states."""

    deterministic = True

    def __init__(self, width: int, height: int, walls: set[tuple[int, int]],
                 start_cell: tuple[int, int], goal_cell: tuple[int, int] | None = None,
                 horizon_T: int = 100, goal_terminal: bool = True):
        if width < 1 or height < 1:
            raise EnvError("grid dimensions must be positive")
        if start_cell in walls:
            raise EnvError("start cell must not be a wall")
        if goal_cell is not None and goal_cell in walls:
            raise EnvError("goal cell must not be a wall")
        self.width = width
        self.height = height
        self.walls = frozenset(walls)
        self.start_cell = start_cell
        self.spec = EnvSpec(
            state_count=width * height,
            action_count=len(GRID_ACTIONS),
            horizon_T=horizon_T,
            initial_state=self.cell_to_state(start_cell),
            goal_terminal=goal_terminal,
        )
        self.goal_hint = self.cell_to_state(goal_cell) if goal_cell is not None else None
        self._free = [
            (r, c) for r in range(height) for c in range(width) if (r, c) not in walls
        ]
        self._next = np.empty((self.n_states, self.n_actions), dtype=np.int64)
        for r in range(height):
            for c in range(width):
                s = r * width + c
                for a, (dr, dc) in enumerate(GRID_MOVES):
                    nr, nc = r + dr, c + dc
                    blocked = (
                        nr < 0 or nr >= height or nc < 0 or nc >= width
                        or (nr, nc) in walls
                    )
                    self._next[s, a] = s if blocked else nr * width + nc

    def cell_to_state(self, cell: tuple[int, int]) -> int:
        r, c = cell
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise EnvError(f"cell {cell} out of bounds")
        return r * self.width + c

    def state_to_cell(self, state: int) -> tuple[int, int]:
        self._check_state(state)
        return divmod(state, self.width)

    def is_wall(self, state: int) -> bool:
        return self.state_to_cell(state) in self.walls

    def enumerate_states(self) -> list[int]:
        return [r * self.width + c for (r, c) in self._free]

    def next_state(self, state: int, action: int) -> int:
        return int(self._next[state, action])

    def transition_dist(self, state, action):
        return [(int(self._next[state, action]), 1.0)]

    def _sample_next(self, state, action, rng):
        if self.is_wall(state):
            raise EnvError(f"state {state} is a wall cell")
        return int(self._next[state, action])

    def encode_states(self) -> np.ndarray:
        """(n_states, 2) array of (x, y) normalized to [0,1]^2 for the
        parametric distance model."""
        enc = np.zeros((self.n_states, 2))
        for s in range(self.n_states):
            r, c = divmod(s, self.width)
            enc[s, 0] = c / max(self.width - 1, 1)
            enc[s, 1] = r / max(self.height - 1, 1)
        return enc

    @classmethod
    def from_text(cls, text: str, horizon_T: int = 100,
                  goal_terminal: bool = True) -> "GridMaze":
        """Parse the plain-text grid format: '#' wall, '.' free, 'S' start,
        optional 'G' goal hint, one row per line."""
        rows = [line for line in text.splitlines() if line.strip()]
        if not rows:
            raise EnvError("empty grid file")
        width = len(rows[0])
        if any(len(row) != width for row in rows):
            raise EnvError("grid rows must all have the same length")
        walls, start, goal = set(), None, None
        for r, row in enumerate(rows):
            for c, ch in enumerate(row):
                if ch == "#":
                    walls.add((r, c))
                elif ch == "S":
                    if start is not None:
                        raise EnvError("grid must have exactly one start cell")
                    start = (r, c)
                elif ch == "G":
                    if goal is not None:
                        raise EnvError("grid may have at most one goal cell")
                    goal = (r, c)
                elif ch != ".":
                    raise EnvError(f"unknown grid character {ch!r}")
        if start is None:
            raise EnvError("grid must have exactly one start cell")
        return cls(width, len(rows), walls, start, goal,
                   horizon_T=horizon_T, goal_terminal=goal_terminal)

    @classmethod
    def from_file(cls, path, horizon_T: int = 100, goal_terminal: bool = True) -> "GridMaze":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), horizon_T=horizon_T, goal_terminal=goal_terminal)


def render_grid(env: FiniteEnv, overlay=None, marks: dict[int, str] | None = None):
    """Cell matrix for heatmap export and UI rendering.

    Returns a height x width nested list of {"kind", "value"} cells. kinds:
    wall/free/start/goal, overridden per cell by `marks` (e.g. agent,
    candidate). `overlay` is an optional scalar per cell: a (height, width)
    array or a {state_id: value} mapping; walls carry value None.
    """
    if not isinstance(env, GridMaze):
        raise UnsupportedEnvError("render_grid requires a grid env")
    overlay_arr = None
    if overlay is not None and not isinstance(overlay, dict):
        overlay_arr = np.asarray(overlay, dtype=float)
        if overlay_arr.shape != (env.height, env.width):
            raise EnvError(
                f"overlay shape {overlay_arr.shape} does not match grid "
                f"({env.height}, {env.width})")
    matrix = []
    for r in range(env.height):
        row = []
        for c in range(env.width):
            s = r * env.width + c
            if (r, c) in env.walls:
                kind = "wall"
            elif (r, c) == env.start_cell:
                kind = "start"
            elif env.goal_hint is not None and s == env.goal_hint:
                kind = "goal"
            else:
                kind = "free"
            if marks and s in marks:
                kind = marks[s]
            value = None
            if (r, c) not in env.walls:
                if overlay_arr is not None:
                    value = float(overlay_arr[r, c])
                elif isinstance(overlay, dict) and s in overlay:
                    value = float(overlay[s])
            row.append({"kind": kind, "value": value})
        matrix.append(row)
    return matrix


# ---------------------------------------------------------------------------
# Two-branch risky/safe MDP

class PathologicalMDP(FiniteEnv):
    """Six-state MDP with a short risky path and a longer certain path.

    From the start, action 0 enters the risky branch (reaches the goal with
    probability p, else falls into an absorbing failure state); action 1
    enters the safe branch, which reaches the goal deterministically in 3
    steps from the start. Goal and failure states are absorbing.
    """

    S0, RISKY, SAFE1, SAFE2, GOAL, DEAD = range(6)
    deterministic = False

    def __init__(self, p: float, horizon_T: int = 20):
        if not (0.0 <= p <= 1.0):
            raise EnvError("p must be in [0, 1]")
        self.p = float(p)
        self.spec = EnvSpec(state_count=6, action_count=2, horizon_T=horizon_T,
                            initial_state=self.S0, goal_terminal=True)
        self.goal_hint = self.GOAL

    def enumerate_states(self):
        return list(range(6))

    def is_absorbing(self, state):
        return state in (self.GOAL, self.DEAD)

    def transition_dist(self, state, action):
        self._check_state(state)
        if state == self.S0:
            return [(self.RISKY if action == 0 else self.SAFE1, 1.0)]
        if state == self.RISKY:
            out = []
            if self.p > 0.0:
                out.append((self.GOAL, self.p))
            if self.p < 1.0:
                out.append((self.DEAD, 1.0 - self.p))
            return out
        if state == self.SAFE1:
            return [(self.SAFE2, 1.0)]
        if state == self.SAFE2:
            return [(self.GOAL, 1.0)]
        return [(state, 1.0)]

    def _sample_next(self, state, action, rng):
        dist = self.transition_dist(state, action)
        if len(dist) == 1:
            return dist[0][0]
        if rng is None:
            raise EnvError("stochastic transition requires an rng")
        return self.GOAL if rng.random() < self.p else self.DEAD


# ---------------------------------------------------------------------------
# Seeded random deterministic MDPs (theorem-check fodder)

class RandomDeterministicMDP(FiniteEnv):
    """Deterministic MDP with a seeded random transition table, rejection-
    sampled until the designated goal (highest state id) is reachable from
    every state, so optimal distances are finite everywhere."""

    deterministic = True
    _MAX_ATTEMPTS = 1000

    def __init__(self, state_count: int, action_count: int, seed: int,
                 horizon_T: int | None = None):
        if not (2 <= state_count <= 64):
            raise EnvError("state_count must be in [2, 64]")
        if not (1 <= action_count <= 4):
            raise EnvError("action_count must be in [1, 4]")
        self.seed = int(seed)
        goal = state_count - 1
        rng = np.random.default_rng(self.seed)
        for _ in range(self._MAX_ATTEMPTS):
            table = rng.integers(0, state_count, size=(state_count, action_count))
            if self._goal_connected(table, goal):
                break
        else:
            raise EnvError("could not sample a goal-connected transition table")
        self._next = table.astype(np.int64)
        self.spec = EnvSpec(state_count=state_count, action_count=action_count,
                            horizon_T=horizon_T or 4 * state_count,
                            initial_state=0, goal_terminal=True)
        self.goal_hint = goal

    @staticmethod
    def _goal_connected(table: np.ndarray, goal: int) -> bool:
        n = table.shape[0]
        seen = np.zeros(n, dtype=bool)
        seen[goal] = True
        frontier = [goal]
        preds = [[] for _ in range(n)]
        for s in range(n):
            for ns in table[s]:
                preds[ns].append(s)
        while frontier:
            s = frontier.pop()
            for q in preds[s]:
                if not seen[q]:
                    seen[q] = True
                    frontier.append(q)
        return bool(seen.all())

    def enumerate_states(self):
        return list(range(self.n_states))

    def next_state(self, state, action):
        self._check_state(state)
        return int(self._next[state, action])

    def transition_dist(self, state, action):
        return [(self.next_state(state, action), 1.0)]

    def _sample_next(self, state, action, rng):
        return int(self._next[state, action])


# ---------------------------------------------------------------------------
# Builders and descriptors

def _asset_text(name: str) -> str:
    return resources.files("dynodist.assets").joinpath(name).read_text(encoding="utf-8")


def make_env(descriptor: str, horizon_T: int = 100) -> FiniteEnv:
    """Build an env from a config descriptor.

    Forms: smaze9 | smaze15 | corridor:<len> | grid:<path> |
    pathological:<p> | random:<states>x<actions>:<seed>
    """
    name, _, arg = descriptor.partition(":")
    if name == "smaze9":
        return GridMaze.from_text(_asset_text("smaze9.txt"), horizon_T=horizon_T)
    if name == "smaze15":
        return GridMaze.from_text(_asset_text("smaze15.txt"), horizon_T=horizon_T)
    if name == "corridor":
        length = int(arg) if arg else 40
        return GridMaze(length, 1, set(), (0, 0), horizon_T=horizon_T)
    if name == "grid":
        if not arg:
            raise EnvError("grid descriptor needs a file path: grid:<path>")
        return GridMaze.from_file(arg, horizon_T=horizon_T)
    if name == "pathological":
        return PathologicalMDP(float(arg) if arg else 0.1, horizon_T=horizon_T)
    if name == "random":
        shape, _, seed = arg.partition(":")
        ns, _, na = shape.partition("x")
        return RandomDeterministicMDP(int(ns), int(na) if na else 2,
                                      int(seed) if seed else 0, horizon_T=horizon_T)
    raise EnvError(f"unknown env descriptor {descriptor!r}")
