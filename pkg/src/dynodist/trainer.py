"""Training loop: rollout, pool update, distance fit, goal choice, policy
improvement; plus evaluation and heatmap export.

All hyperparameters live in TrainerConfig, which maps 1:1 onto the flat
key=value config file format. Runs are deterministic given (config, seed,
scripted provider): one numpy Generator drives every random draw in a
fixed order, and the metrics stream is written with a stable JSON
encoding.
"""

from __future__ import annotations

import json
import math
import os
from collections import deque
from dataclasses import dataclass, field, fields
from fractions import Fraction

import numpy as np

from . import distance as dist_mod
from . import goals as goals_mod
from . import policy as policy_mod
from .distance import OnPolicyPool, ParametricDistance, TabularDistance, TDDistance, Trajectory
from .envs import FiniteEnv, GridMaze, UnsupportedEnvError, make_env
from .goals import GoalState, QueryCounter
from .policy import GreedyDescentActor, RolloutConfig, TabularPolicy

METHODS = ("DDLUS", "DDLfP", "FixedGoal")
BASELINES = ("None", "Greedy", "TD", "Sparse")
METRIC_KEYS = ("episode", "env_steps", "final_distance_to_goal",
               "distance_loss", "queries_used", "goal")


class ConfigError(ValueError):
    """Invalid configuration; the message names the violated invariant."""


@dataclass
class TrainerConfig:
    env: str = "smaze9"
    method: str = "FixedGoal"
    baseline: str = "None"
    gamma: float = 0.99
    horizon_T: int = 100
    total_env_steps: int = 100_000
    N_d: int | None = None              # fixed fit steps per iteration; None = use ratio
    N_pi: int = 400
    lambda_d: float = 3e-4
    lambda_pi: float = 0.5
    distance_steps_per_env_step: Fraction = Fraction(1, 16)
    distance_batch_size: int = 64
    on_policy_pool_capacity: int = 100_000
    replay_pool_capacity: int = 200_000
    slate_size: int = 5
    query_interval_env_steps: int = 10_000
    query_budget: int = 10
    query_timeout_seconds: float = 300.0
    explore_switch_fraction: float = 0.9
    stop_at_goal: str = "auto"          # auto | true | false
    policy_kind: str = "TabularQ"
    epsilon: float = 0.15
    temperature: float = 1.0
    distance_kind: str = "Tabular"
    d_max: float | None = None          # None = horizon_T
    fixed_goal_state: str | None = None  # "hint" | "<row>,<col>" | "<state id>"
    provider: str | None = None         # "bfs:<cell|id>" | "xmax" | "mailbox"
    checkpoint_interval_episodes: int = 200
    seed: int = 0

    def validate(self) -> None:
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigError("gamma must be in [0, 1)")
        for name in ("horizon_T", "total_env_steps", "N_pi", "distance_batch_size",
                     "on_policy_pool_capacity", "replay_pool_capacity",
                     "query_interval_env_steps", "checkpoint_interval_episodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.N_d is not None and self.N_d < 1:
            raise ConfigError("N_d must be a positive integer when set")
        if self.lambda_d <= 0 or self.lambda_pi <= 0:
            raise ConfigError("learning rates lambda_d and lambda_pi must be positive")
        if self.distance_steps_per_env_step <= 0:
            raise ConfigError("distance_steps_per_env_step must be a positive fraction")
        if not (1 <= self.slate_size <= 16):
            raise ConfigError("slate_size must be between 1 and 16")
        if self.query_budget < 0:
            raise ConfigError("query_budget must be nonnegative")
        if not (0.0 <= self.explore_switch_fraction <= 1.0):
            raise ConfigError("explore_switch_fraction must be in [0, 1]")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ConfigError("epsilon must be in [0, 1]")
        if self.temperature < 0:
            raise ConfigError("temperature must be nonnegative")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}")
        if self.baseline != "None" and self.method != "FixedGoal":
            raise ConfigError("baselines require method=FixedGoal")
        if self.policy_kind not in ("TabularQ", "TabularSoftmax"):
            raise ConfigError("policy_kind must be TabularQ or TabularSoftmax")
        if self.distance_kind not in ("Tabular", "Parametric"):
            raise ConfigError("distance_kind must be Tabular or Parametric")
        if self.d_max is not None and self.d_max <= 0:
            raise ConfigError("d_max must be positive when set")
        if self.stop_at_goal not in ("auto", "true", "false"):
            raise ConfigError("stop_at_goal must be auto, true, or false")
        if self.query_timeout_seconds <= 0:
            raise ConfigError("query_timeout_seconds must be positive")

    @property
    def effective_d_max(self) -> float:
        return float(self.d_max) if self.d_max is not None else float(self.horizon_T)

    @property
    def effective_stop_at_goal(self) -> bool:
        if self.stop_at_goal == "auto":
            return self.method == "FixedGoal"
        return self.stop_at_goal == "true"


_STR_FIELDS = {"env", "method", "baseline", "policy_kind", "distance_kind",
               "stop_at_goal", "fixed_goal_state", "provider"}
_OPTIONAL = {"N_d", "d_max", "fixed_goal_state", "provider"}


def _convert(name: str, raw: str):
    raw = raw.strip()
    if name in _OPTIONAL and raw.lower() in ("", "none", "null"):
        return None
    if name in _STR_FIELDS:
        return raw
    if name == "distance_steps_per_env_step":
        return Fraction(raw)
    ftypes = {f.name: f.type for f in fields(TrainerConfig)}
    t = ftypes[name]
    if t.startswith("int"):
        return int(raw)
    if t.startswith("float"):
        return float(raw)
    raise ConfigError(f"cannot convert config key {name}")


def config_from_mapping(mapping: dict[str, str]) -> TrainerConfig:
    known = {f.name for f in fields(TrainerConfig)}
    kwargs = {}
    for key, raw in mapping.items():
        if key not in known:
            raise ConfigError(f"unknown config key: {key}")
        try:
            kwargs[key] = _convert(key, raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
    cfg = TrainerConfig(**kwargs)
    cfg.validate()
    return cfg


def parse_config_file(path) -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def config_to_text(cfg: TrainerConfig) -> str:
    lines = []
    for f in fields(TrainerConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name}={'' if v is None else v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Replay pool

class TrajectoryPool:
    """FIFO trajectory store bounded by total transitions, with flat
    (state, action, next_state) views for replay sampling."""

    _INITIAL = 1024

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.trajectories: deque[Trajectory] = deque()
        self.total_transitions = 0
        cap = self._INITIAL
        self._s = np.empty(cap, dtype=np.int64)
        self._a = np.empty(cap, dtype=np.int64)
        self._ns = np.empty(cap, dtype=np.int64)
        self._start = 0
        self._end = 0

    def __len__(self) -> int:
        return len(self.trajectories)

    def _grow(self, need: int) -> None:
        cap = len(self._s)
        used = self._end - self._start
        if self._start > 0 and (self._end + need > cap):
            for buf in (self._s, self._a, self._ns):
                buf[:used] = buf[self._start:self._end]
            self._start, self._end = 0, used
        while self._end + need > len(self._s):
            for name in ("_s", "_a", "_ns"):
                old = getattr(self, name)
                new = np.empty(len(old) * 2, dtype=np.int64)
                new[:self._end] = old[:self._end]
                setattr(self, name, new)

    def append(self, traj: Trajectory) -> None:
        n = len(traj)
        self._grow(n)
        sl = slice(self._end, self._end + n)
        self._s[sl] = traj.states[:-1]
        self._a[sl] = traj.actions
        self._ns[sl] = traj.states[1:]
        self._end += n
        self.trajectories.append(traj)
        self.total_transitions += n
        while self.total_transitions > self.capacity and len(self.trajectories) > 1:
            old = self.trajectories.popleft()
            self.total_transitions -= len(old)
            self._start += len(old)

    def transitions(self):
        sl = slice(self._start, self._end)
        return self._s[sl], self._a[sl], self._ns[sl]


# ---------------------------------------------------------------------------
# Training

@dataclass
class TrainResult:
    config: TrainerConfig
    metrics: list[dict] = field(default_factory=list)
    distance_model: object | None = None
    actor: object | None = None
    goal: GoalState | None = None
    queries: list = field(default_factory=list)
    env_steps: int = 0
    episodes: int = 0
    fit_steps_total: int = 0
    visit_counts: np.ndarray | None = None


def resolve_fixed_goal(env: FiniteEnv, cfg: TrainerConfig) -> int:
    raw = cfg.fixed_goal_state
    if raw is None or raw == "hint":
        if env.goal_hint is None:
            raise ConfigError("method=FixedGoal needs fixed_goal_state or an env goal hint")
        return env.goal_hint
    if "," in raw:
        if not isinstance(env, GridMaze):
            raise ConfigError("cell-form fixed_goal_state needs a grid env")
        r, c = (int(x) for x in raw.split(","))
        return env.cell_to_state((r, c))
    return int(raw)


def make_provider(env: FiniteEnv, cfg: TrainerConfig):
    desc = cfg.provider
    if desc is None:
        return None
    name, _, arg = desc.partition(":")
    if name == "bfs":
        if "," in arg:
            r, c = (int(x) for x in arg.split(","))
            target = env.cell_to_state((r, c))
        else:
            target = int(arg)
        return goals_mod.ScriptedBfsOracle(env, target)
    if name == "xmax":
        return goals_mod.ScriptedXMaxOracle(env)
    if name == "mailbox":
        raise ConfigError("provider=mailbox only works under the serve subcommand")
    raise ConfigError(f"unknown provider descriptor {desc!r}")


def _make_distance_model(env: FiniteEnv, cfg: TrainerConfig, goal: int | None):
    d_max = cfg.effective_d_max
    if cfg.baseline == "Sparse":
        return None
    if cfg.baseline == "TD":
        if goal is None:
            raise ConfigError("TD baseline needs a fixed goal")
        return TDDistance(env.n_states, goal, d_max, learning_rate=0.2)
    if cfg.distance_kind == "Parametric":
        if not isinstance(env, GridMaze):
            raise ConfigError("Parametric distance needs a grid env encoding")
        return ParametricDistance(env.encode_states(), learning_rate=cfg.lambda_d,
                                  d_max=d_max, seed=cfg.seed)
    return TabularDistance(env.n_states, d_max)


def train(env: FiniteEnv, cfg: TrainerConfig, provider=None, out_dir=None,
          on_episode=None, stop_event=None) -> TrainResult:
    """Run the full loop until the env-step budget (or stop_event). Writes
    metrics.jsonl, checkpoints, and report figures when out_dir is given."""
    cfg.validate()
    if cfg.method == "DDLfP" and provider is None:
        provider = make_provider(env, cfg)
        if provider is None:
            raise ConfigError("method=DDLfP requires a preference provider")
    rng = np.random.default_rng(cfg.seed)
    d_max = cfg.effective_d_max

    goal: GoalState | None = None
    if cfg.method == "FixedGoal":
        goal = goals_mod.fixed_goal(resolve_fixed_goal(env, cfg), env)

    model = _make_distance_model(env, cfg, goal.state if goal else None)
    policy = TabularPolicy(env.n_states, env.n_actions,
                           kind="softmax" if cfg.policy_kind == "TabularSoftmax" else "q",
                           epsilon=cfg.epsilon, temperature=cfg.temperature,
                           learning_rate=cfg.lambda_pi)
    actor = (GreedyDescentActor(env, model, epsilon=cfg.epsilon)
             if cfg.baseline == "Greedy" else policy)

    on_pool = OnPolicyPool(cfg.on_policy_pool_capacity)
    replay = TrajectoryPool(cfg.replay_pool_capacity)
    recent_finals: deque[int] = deque(maxlen=cfg.slate_size)
    counter = QueryCounter()
    rollout_cfg = RolloutConfig(cfg.horizon_T, cfg.explore_switch_fraction,
                                cfg.effective_stop_at_goal)

    result = TrainResult(config=cfg, distance_model=model, actor=actor,
                         visit_counts=np.zeros(env.n_states, dtype=np.int64))
    metrics_fh = None
    ckpt_dir = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(config_to_text(cfg))
        metrics_fh = open(os.path.join(out_dir, "metrics.jsonl"), "w", encoding="utf-8")

    goal_dist_cache: dict[int, np.ndarray] = {}

    def true_distance(state: int, g: int) -> float | None:
        if g not in goal_dist_cache:
            goal_dist_cache[g] = env.min_step_distances(g)
        d = float(goal_dist_cache[g][state])
        return d if math.isfinite(d) else None

    def write_checkpoints() -> None:
        if ckpt_dir is None:
            return
        if isinstance(model, TabularDistance):
            model.save_csv(os.path.join(ckpt_dir, "distance.csv"))
        elif isinstance(model, ParametricDistance):
            model.save_npz(os.path.join(ckpt_dir, "distance.npz"))
        elif isinstance(model, TDDistance):
            np.savetxt(os.path.join(ckpt_dir, "distance_td.csv"),
                       model.values, delimiter=",")
        if goal is not None and isinstance(policy, TabularPolicy):
            policy.save_csv(os.path.join(ckpt_dir, "policy.csv"), goal.state)

    carry = 0.0
    try:
        while result.env_steps < cfg.total_env_steps:
            if stop_event is not None and stop_event.is_set():
                break
            traj = policy_mod.rollout(env, actor, goal.state if goal else None,
                                      rollout_cfg, rng)
            result.episodes += 1
            result.env_steps += len(traj)
            traj.env_step_stamp = result.env_steps
            on_pool.append(traj)
            replay.append(traj)
            recent_finals.append(traj.final_state)
            np.add.at(result.visit_counts, traj.states, 1)

            # distance evaluation
            distance_loss = None
            if model is not None:
                if cfg.N_d is not None:
                    n_fit = cfg.N_d
                else:
                    carry += float(cfg.distance_steps_per_env_step) * len(traj)
                    n_fit = int(carry)
                    carry -= n_fit
                if n_fit > 0:
                    if isinstance(model, TDDistance):
                        stats = dist_mod.td_fit(model, on_pool, n_fit, rng,
                                                batch_size=cfg.distance_batch_size)
                    else:
                        stats = dist_mod.fit(model, on_pool, n_fit,
                                             cfg.distance_batch_size, rng)
                    result.fit_steps_total += stats.steps
                    distance_loss = stats.mean_loss

            # goal choice
            if cfg.method == "DDLUS" and model is not None:
                goal = goals_mod.ddlus_choose(model, on_pool, env.spec.initial_state,
                                              result.env_steps)
            elif cfg.method == "DDLfP":
                while (len(result.queries) < cfg.query_budget
                       and result.env_steps >= (len(result.queries) + 1) * cfg.query_interval_env_steps
                       and len(recent_finals) == cfg.slate_size):
                    chosen, query = goals_mod.ddlfp_choose(
                        list(recent_finals), provider,
                        goal.state if goal else None, counter,
                        env_step=result.env_steps, slate_size=cfg.slate_size)
                    result.queries.append(query)
                    if chosen is not None:
                        goal = chosen

            # policy improvement
            if goal is not None and cfg.baseline != "Greedy":
                transitions = replay.transitions()
                if cfg.baseline == "Sparse":
                    policy_mod.sparse_reward_improve(policy, goal.state, env,
                                                     cfg.N_pi, transitions, rng,
                                                     gamma=cfg.gamma)
                else:
                    policy_mod.improve(policy, model, goal.state, env, cfg.N_pi,
                                       transitions, rng, gamma=cfg.gamma)

            record = {
                "episode": result.episodes,
                "env_steps": result.env_steps,
                "final_distance_to_goal": (
                    true_distance(traj.final_state, goal.state) if goal else None),
                "distance_loss": distance_loss,
                "queries_used": len(result.queries),
                "goal": goal.state if goal else None,
            }
            result.metrics.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            if on_episode is not None:
                on_episode(record)
            if result.episodes % cfg.checkpoint_interval_episodes == 0:
                try:
                    write_checkpoints()
                except OSError:
                    if metrics_fh is not None:
                        metrics_fh.flush()
                    raise
        try:
            write_checkpoints()
        except OSError:
            if metrics_fh is not None:
                metrics_fh.flush()
            raise
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    result.goal = goal
    if out_dir is not None:
        from . import report
        report.save_learning_curve(result.metrics,
                                   os.path.join(out_dir, "learning_curve.png"))
        if isinstance(env, GridMaze) and goal is not None and model is not None:
            matrix = export_heatmap(model, env, goal.state,
                                    os.path.join(out_dir, "heatmap.csv"))
            report.save_heatmap_figure(matrix, env, goal.state,
                                       os.path.join(out_dir, "heatmap.png"))
    return result


# ---------------------------------------------------------------------------
# Evaluation and export

@dataclass
class EvalResult:
    success_rate: float
    mean_steps_to_goal: float | None
    episodes: int


def evaluate(env: FiniteEnv, actor, goal: int, episodes: int,
             rng: np.random.Generator, horizon: int | None = None,
             policy_goal: int | None = None) -> EvalResult:
    """Greedy rollouts (no exploration tail); success means the goal state
    is visited within the horizon. policy_goal conditions the actor when it
    differs from the success goal (e.g. judging a preference-trained policy
    against the chooser's hidden target)."""
    horizon = horizon if horizon is not None else env.spec.horizon_T
    policy_goal = policy_goal if policy_goal is not None else goal
    successes, steps = 0, []
    for _ in range(episodes):
        s = env.reset(rng)
        if s == goal:
            successes += 1
            steps.append(0)
            continue
        for t in range(1, horizon + 1):
            a = actor.greedy_action(s, policy_goal)
            tr = env.step(s, a, rng, goal=goal)
            s = tr.next_state
            if s == goal:
                successes += 1
                steps.append(t)
                break
            if tr.terminal:
                break
    return EvalResult(successes / episodes if episodes else 0.0,
                      float(np.mean(steps)) if steps else None, episodes)


def export_heatmap(distance_model, env: FiniteEnv, goal: int,
                   csv_path=None) -> np.ndarray:
    """(height, width) matrix of predicted distances to the goal, walls
    encoded as -1; optionally written as a CSV file."""
    if not isinstance(env, GridMaze):
        raise UnsupportedEnvError("heatmap export requires a grid env")
    values = distance_model.predict_to_goal(goal)
    matrix = np.full((env.height, env.width), -1.0)
    for s in env.enumerate_states():
        r, c = env.state_to_cell(s)
        matrix[r, c] = values[s]
    if csv_path is not None:
        np.savetxt(csv_path, matrix, delimiter=",", fmt="%.6g")
    return matrix
