"""Command line front end: train, eval, sweep-tradeoff, sweep-budget, calibrate-snr."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError
from .harness import (
    calibrate_snr,
    default_experiment_config,
    evaluate_run,
    load_config,
    run_budget_sweep,
    run_dir,
    run_tradeoff_sweep,
    run_train,
)
from .surrogate import CalibrationError


def _load(args):
    return load_config(args.config) if args.config else default_experiment_config()


def _seeds(args):
    return [int(s) for s in args.seed.split(",")] if args.seed else None


def _cmd_train(args):
    cfg = _load(args)
    summaries = run_train(cfg, algo=args.algo, seeds=_seeds(args), out_root=args.out)
    for s in summaries:
        rewards = ", ".join(f"{r:.4f}" for r in s["mean_reward_last_100"])
        print(f"{s['algo']} seed {s['seed']}: {s['episodes']} episodes, "
              f"mean reward last 100 = [{rewards}]")
    return 0


def _cmd_eval(args):
    cfg = _load(args)
    ckpt = args.ckpt or (run_dir(args.out or cfg.out_dir, args.algo, args.seed)
                         if args.algo != "sib" else None)
    summary = evaluate_run(cfg, args.algo, args.seed, ckpt_dir=ckpt, episodes=args.episodes)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def _cmd_sweep_tradeoff(args):
    cfg = _load(args)
    algos = args.algos.split(",") if args.algos else None
    rows = run_tradeoff_sweep(cfg, out_dir=args.out, algos=algos, seeds=_seeds(args))
    print(f"wrote {len(rows)} rows to {args.out}/tradeoff.csv")
    return 0


def _cmd_sweep_budget(args):
    cfg = _load(args)
    splits = [float(s) for s in args.splits.split(",")] if args.splits else None
    rows = run_budget_sweep(cfg, out_dir=args.out, splits=splits, seeds=_seeds(args))
    print(f"wrote {len(rows)} rows to {args.out}/budget.csv")
    return 0


def _cmd_calibrate_snr(args):
    cfg = _load(args)
    snrs = calibrate_snr(cfg.system, args.target, mc_samples=args.samples)
    print(json.dumps({f"md{idx}": snr for idx, snr in snrs.items()}, sort_keys=True, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="edgebid",
        description="Cooperative edge inference simulator with learned resource bidding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one algorithm across seeds")
    p.add_argument("--config", help="YAML experiment config (defaults used if omitted)")
    p.add_argument("--algo", help="maddpg, maddpg-dd, maddpg-dt, maddpg-mc, dqn, or sib")
    p.add_argument("--seed", help="seed, or comma separated seed list")
    p.add_argument("--out", help="output root directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a trained run")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--algo", default="maddpg")
    p.add_argument("--seed", type=int, default=1, help="evaluation seed")
    p.add_argument("--ckpt", help="checkpoint directory (defaults to <out>/<algo>/seed_<seed>)")
    p.add_argument("--out", help="output root the run was trained under")
    p.add_argument("--episodes", type=int, help="evaluation episode count")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-tradeoff", help="accuracy/privacy weight sweep")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--algos", help="comma separated algorithm subset")
    p.add_argument("--seed", help="seed, or comma separated seed list")
    p.add_argument("--out", required=True, help="directory for tradeoff.csv")
    p.set_defaults(func=_cmd_sweep_tradeoff)

    p = sub.add_parser("sweep-budget", help="budget split sweep for the bidding learner")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--splits", help="comma separated budget amounts for device 1")
    p.add_argument("--seed", help="seed, or comma separated seed list")
    p.add_argument("--out", required=True, help="directory for budget.csv")
    p.set_defaults(func=_cmd_sweep_budget)

    p = sub.add_parser("calibrate-snr", help="mean SNR per device for a feasibility target")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--target", type=float, default=0.5, help="full-payload feasibility")
    p.add_argument("--samples", type=int, default=100_000, help="Monte-Carlo fading draws")
    p.set_defaults(func=_cmd_calibrate_snr)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CalibrationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
