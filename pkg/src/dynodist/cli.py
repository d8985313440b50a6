"""Command-line entry point: train / eval / verify / heatmap / serve.

Exit codes: 0 success, 1 configuration error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import report, verify as verify_mod
from .distance import ParametricDistance, TabularDistance
from .envs import EnvError, GridMaze, make_env
from .policy import GreedyDescentActor, TabularPolicy
from .trainer import (ConfigError, TrainerConfig, config_from_mapping, evaluate,
                      export_heatmap, parse_config_file, train)


def _build_config(args) -> TrainerConfig:
    mapping: dict[str, str] = {}
    if getattr(args, "config", None):
        mapping.update(parse_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        mapping["seed"] = str(args.seed)
    return config_from_mapping(mapping)


def _load_run(run_dir: str):
    cfg_path = os.path.join(run_dir, "config.txt")
    if not os.path.exists(cfg_path):
        raise ConfigError(f"{run_dir} has no config.txt (not a run directory?)")
    cfg = config_from_mapping(parse_config_file(cfg_path))
    env = make_env(cfg.env, horizon_T=cfg.horizon_T)
    ckpt = os.path.join(run_dir, "checkpoints")
    model = None
    if os.path.exists(os.path.join(ckpt, "distance.csv")):
        model = TabularDistance.load_csv(os.path.join(ckpt, "distance.csv"))
    elif os.path.exists(os.path.join(ckpt, "distance.npz")):
        model = ParametricDistance.load_npz(os.path.join(ckpt, "distance.npz"))
    policy = goal = None
    if os.path.exists(os.path.join(ckpt, "policy.csv")):
        policy, goal = TabularPolicy.load_csv(os.path.join(ckpt, "policy.csv"))
    return cfg, env, model, policy, goal


def cmd_train(args) -> int:
    cfg = _build_config(args)
    env = make_env(cfg.env, horizon_T=cfg.horizon_T)
    result = train(env, cfg, out_dir=args.out)
    print(f"trained {result.episodes} episodes / {result.env_steps} env steps; "
          f"goal={result.goal.state if result.goal else None}; "
          f"artifacts in {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg, env, model, policy, goal = _load_run(args.run)
    if goal is None:
        raise ConfigError("run has no policy checkpoint to evaluate")
    if cfg.baseline == "Greedy":
        if model is None:
            raise ConfigError("greedy-baseline run has no distance checkpoint")
        actor = GreedyDescentActor(env, model, epsilon=0.0)
    else:
        actor = policy
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.seed)
    res = evaluate(env, actor, goal, args.episodes, rng)
    payload = {"success_rate": res.success_rate,
               "mean_steps_to_goal": res.mean_steps_to_goal,
               "episodes": res.episodes, "goal": goal}
    print(json.dumps(payload))
    with open(os.path.join(args.run, "eval.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    return 0


def cmd_verify(args) -> int:
    name = verify_mod.SUITE_ALIASES.get(args.suite, args.suite)
    if name not in verify_mod.SUITE_NAMES and name != "all":
        raise ConfigError(
            f"unknown suite {args.suite!r}; choose from "
            f"{verify_mod.SUITE_NAMES + ('all',)} (aliases: appendixB, eq5)")
    os.makedirs(args.out, exist_ok=True)
    if name == "pathological":
        passed, records, analysis = verify_mod.pathological_suite()
        _write_branch_artifacts(analysis, args.out)
    else:
        passed, records = verify_mod.run_suite(name, seeds=args.seeds)
    report_path = os.path.join(args.out, "report.jsonl")
    with open(report_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
    failed = [r for r in records if not r.get("passed", True)]
    print(f"suite {args.suite}: {len(records) - len(failed)}/{len(records)} checks passed; "
          f"report at {report_path}")
    for r in failed[:20]:
        print(f"  FAILED: {json.dumps(r)}", file=sys.stderr)
    return 0 if passed else 2


def _write_branch_artifacts(analysis, out_dir: str) -> None:
    csv_path = os.path.join(out_dir, "branch_analysis.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("p,greedy_choice,cumulative_choice,risky_return,safe_return\n")
        for row in analysis.rows:
            fh.write(f"{row.p},{row.greedy_choice},{row.cumulative_choice},"
                     f"{float(row.risky_return)!r},{float(row.safe_return)!r}\n")
    report.save_branch_analysis_figure(analysis,
                                       os.path.join(out_dir, "branch_analysis.png"))


def cmd_heatmap(args) -> int:
    cfg, env, model, _policy, goal = _load_run(args.run)
    if not isinstance(env, GridMaze):
        raise ConfigError("heatmap requires a grid env run")
    if model is None:
        raise ConfigError("run has no distance checkpoint")
    if args.goal is not None:
        goal = env.cell_to_state(tuple(int(x) for x in args.goal.split(","))) \
            if "," in args.goal else int(args.goal)
    if goal is None:
        raise ConfigError("no goal recorded; pass --goal")
    out_dir = args.out or args.run
    os.makedirs(out_dir, exist_ok=True)
    matrix = export_heatmap(model, env, goal, os.path.join(out_dir, "heatmap.csv"))
    report.save_heatmap_figure(matrix, env, goal, os.path.join(out_dir, "heatmap.png"))
    print(f"heatmap written to {out_dir}/heatmap.csv and heatmap.png")
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    cfg = _build_config(args)
    if cfg.method != "DDLfP":
        raise ConfigError("serve requires method=DDLfP")
    env = make_env(cfg.env, horizon_T=cfg.horizon_T)
    try:
        result = serve(env, cfg, port=args.port, out_dir=args.out)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"serve run finished: {result.episodes} episodes, "
          f"{len(result.queries)} queries answered or timed out")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynodist",
        description="Learned dynamical distances for goal-reaching control, "
                    "with exact verification oracles.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override (repeatable; wins over the file)")
        p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
        p.add_argument("--out", required=out_required, help="output directory")

    p_train = sub.add_parser("train", help="run the training loop")
    common(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="greedy evaluation of a finished run")
    p_eval.add_argument("--run", required=True, help="train output directory")
    p_eval.add_argument("--episodes", type=int, default=50)
    p_eval.add_argument("--seed", type=int)
    p_eval.set_defaults(fn=cmd_eval)

    p_verify = sub.add_parser("verify", help="run an exact verification suite")
    p_verify.add_argument("--suite", required=True,
                          help="theorem|identity|pathological|gradcheck|all "
                               "(aliases: appendixB, eq5)")
    p_verify.add_argument("--seeds", type=int, default=100,
                          help="seed count for the theorem suite")
    p_verify.add_argument("--out", required=True)
    p_verify.set_defaults(fn=cmd_verify)

    p_heat = sub.add_parser("heatmap", help="export the learned distance field")
    p_heat.add_argument("--run", required=True)
    p_heat.add_argument("--goal", help="state id or row,col (default: run goal)")
    p_heat.add_argument("--out", help="output directory (default: run dir)")
    p_heat.set_defaults(fn=cmd_heatmap)

    p_serve = sub.add_parser("serve", help="interactive preference training")
    common(p_serve)
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, EnvError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
