"""Command line entry point: ``marlhospital {train,eval,matrix,replay}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from .config import ExperimentConfig, load_config
from .errors import MarlHospitalError
from .fairness import FAIRNESS_MODES
from .learners import ALGORITHMS


def add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, help="workload weight in the composite penalty")
    p.add_argument("--lambda", dest="lam", type=float, help="penalty scale")
    p.add_argument("--fairness", choices=FAIRNESS_MODES)
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--energy", choices=("on", "off"))


def apply_overrides(data: dict, args: argparse.Namespace) -> dict:
    fair = data.setdefault("fairness", {})
    if args.alpha is not None:
        fair["alpha"] = args.alpha
    if args.lam is not None:
        fair["lambda"] = args.lam
    if args.fairness is not None:
        fair["mode"] = args.fairness
    if args.algo is not None:
        learner = data.setdefault("learner", {})
        if learner.get("algorithm") != args.algo:
            # hyperparameters belong to the algorithm they were written for
            learner["hyper"] = {}
        learner["algorithm"] = args.algo
    if args.energy is not None:
        data.setdefault("energy", {})["enabled"] = args.energy == "on"
    return data


def _config_with_overrides(path: Optional[str], args) -> ExperimentConfig:
    cfg = load_config(path) if path else ExperimentConfig()
    data = apply_overrides(cfg.model_dump(by_alias=True, exclude_unset=True), args)
    return ExperimentConfig.model_validate(data)


def cmd_train(args) -> int:
    from .harness import run_training

    cfg = _config_with_overrides(args.config, args)
    seeds = [args.seed] if args.seed is not None else cfg.schedule.seeds
    for seed in seeds:
        run_dir = run_training(cfg, seed, args.out)
        print(run_dir)
    return 0


def cmd_eval(args) -> int:
    from .harness import evaluate

    cfg = load_config(args.config).resolve() if args.config else None
    report = evaluate(args.checkpoint, args.episodes, cfg, args.seed)
    print(json.dumps(asdict(report), indent=2))
    return 0


def cmd_matrix(args) -> int:
    from .matrix import experiment_matrix, load_matrix

    base, cells, seeds, workers = load_matrix(args.spec)
    base = apply_overrides(base, args)
    path = experiment_matrix(base, cells, seeds, args.out, args.workers or workers)
    print(path)
    return 0


def cmd_replay(args) -> int:
    from .replay import replay_dump

    text = replay_dump(args.run, args.episode)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marlhospital")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run per seed")
    p.add_argument("--config", help="experiment JSON (defaults when omitted)")
    p.add_argument("--seed", type=int, help="single seed (default: schedule.seeds)")
    p.add_argument("--out", default="runs")
    add_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--config", help="config to check against the checkpoint hash")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("matrix", help="run an experiment grid")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", default="matrix_runs")
    p.add_argument("--workers", type=int)
    add_overrides(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("replay", help="text trace of a recorded episode")
    p.add_argument("--run", required=True)
    p.add_argument("--episode", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (MarlHospitalError, FileNotFoundError, IndexError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
