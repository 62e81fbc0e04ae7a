"""Training loop, periodic evaluation and run artifacts.

A run directory holds ``metrics.csv``, ``resolved_config.json``, ``meta.json``,
``checkpoint.pt`` and ``episodes.jsonl`` (recorded evaluation episodes used by
the replay dump).
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from . import __version__
from .config import ExperimentConfig, build_env, config_hash, config_json
from .environment import HospitalEnv
from .errors import HashMismatch, NaNDetected
from .fairness import FairnessReport, contribution_pct, contribution_range
from .learners import Learner, make_learner
from .observations import encoding_info

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "marlhospital-checkpoint-v1"
MOVING_WINDOW = 100
EVAL_SEED_OFFSET = 1_000_003

Policy = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class EpisodeStats:
    success: bool
    base_return: float
    shaped_return: float
    ticks: int
    counts: list[int]
    l1: float
    l2: float
    l3: float
    start: tuple[str, ...] = ()
    actions: list[list[int]] = field(default_factory=list)


def run_episode(env: HospitalEnv, policy: Policy, record: bool = False) -> EpisodeStats:
    obs = env.reset()
    start = env.state.agent_station
    actions_log = []
    while True:
        masks = env.masks()
        actions = policy(obs, masks)
        if record:
            actions_log.append([int(a) for a in actions])
        res = env.step(actions)
        obs = res.obs
        if res.done:
            break
    ledger = env.ledger
    return EpisodeStats(
        success=res.terminated,
        base_return=env.episode_base_return,
        shaped_return=env.episode_return,
        ticks=env.state.tick,
        counts=list(ledger.counts),
        l1=ledger.l1(),
        l2=ledger.l2(),
        l3=ledger.l3(),
        start=start,
        actions=actions_log,
    )


def random_policy(rng: np.random.Generator) -> Policy:
    def act(obs: np.ndarray, masks: np.ndarray) -> np.ndarray:
        return np.array([rng.choice(np.flatnonzero(m)) for m in masks])

    return act


def learner_policy(learner: Learner, mode: str = "eval") -> Policy:
    return lambda obs, masks: learner.act(obs, masks, mode)


def summarize(episodes: Sequence[EpisodeStats], window: Optional[int] = None) -> FairnessReport:
    """Average episode metrics; contribution shares average over episodes with work done."""
    if not episodes:
        raise ValueError("no episodes to summarize")
    n_agents = len(episodes[0].counts)
    worked = [contribution_pct(e.counts) for e in episodes if sum(e.counts) > 0]
    pct = tuple(np.mean(worked, axis=0).tolist()) if worked else (0.0,) * n_agents
    return FairnessReport(
        l1=float(np.mean([e.l1 for e in episodes])),
        l2=float(np.mean([e.l2 for e in episodes])),
        l3=float(np.mean([e.l3 for e in episodes])),
        contribution_pct=pct,
        range=contribution_range(pct),
        success_rate=float(np.mean([e.success for e in episodes])),
        episodes=len(episodes),
        window=window,
    )


def evaluate_policy(env: HospitalEnv, policy: Policy, episodes: int, seed: int) -> FairnessReport:
    if episodes < 1:
        raise ValueError("evaluation needs at least one episode")
    env.rng = np.random.default_rng([seed, EVAL_SEED_OFFSET])
    return summarize([run_episode(env, policy) for _ in range(episodes)])


def random_baseline(cfg: ExperimentConfig, episodes: int = 100, seed: int = 0) -> FairnessReport:
    env = build_env(cfg, seed)
    return evaluate_policy(env, random_policy(np.random.default_rng([seed, 7])), episodes, seed)


def build_hash() -> str:
    """Digest of the package sources, recorded so results can be tied to a build."""
    h = hashlib.sha256(__version__.encode())
    for path in sorted(Path(__file__).parent.rglob("*.py")):
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def metrics_header(n_agents: int) -> list[str]:
    return (
        ["run_id", "seed", "step", "train_episodes", "train_return", "train_window",
         "eval_success", "l1", "l2", "l3"]
        + [f"a{i}_pct" for i in range(n_agents)]
        + ["range"]
    )


def _metrics_row(run_id, seed, step, n_train, window_returns, report: FairnessReport) -> list:
    train_return = float(np.mean(window_returns)) if window_returns else 0.0
    return (
        [run_id, seed, step, n_train, train_return, len(window_returns),
         report.success_rate, report.l1, report.l2, report.l3]
        + list(report.contribution_pct)
        + [report.range]
    )


def _save_checkpoint(path: Path, learner: Learner, cfg_hash: str) -> None:
    torch.save(
        {"format": CHECKPOINT_FORMAT, "config_hash": cfg_hash, "algo": learner.algo,
         "learner": learner.state_dict()},
        path,
    )


def make_run_learner(cfg: ExperimentConfig, env: HospitalEnv, seed: int) -> Learner:
    return make_learner(
        cfg.learner.algorithm, env.n_agents, env.obs_dim, env.n_actions, cfg.learner.hyper, seed
    )


def run_training(
    config: ExperimentConfig,
    seed: int,
    out_dir: Path | str = "runs",
    run_id: Optional[str] = None,
) -> Path:
    """Train one learner for ``schedule.total_steps`` env ticks and write its artifacts."""
    torch.set_num_threads(1)
    cfg = config.resolve()
    cfg_hash = config_hash(cfg)
    run_id = run_id or f"{cfg.name}-{cfg.learner.algorithm}-s{seed}"
    run_dir = Path(out_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "resolved_config.json").write_text(config_json(cfg))

    sched = cfg.schedule
    env = build_env(cfg, seed)
    eval_env = build_env(cfg, seed)
    learner = make_run_learner(cfg, env, seed)
    baseline = random_baseline(cfg, sched.eval_episodes, seed)

    meta = {
        "run_id": run_id,
        "seed": seed,
        "config_hash": cfg_hash,
        "build_hash": build_hash(),
        "package_version": __version__,
        "encoding": encoding_info(env.world),
        "random_baseline": baseline.success_rate,
        "status": "running",
    }
    header = metrics_header(env.n_agents)
    rows: list[list] = []
    wall_clock: list[float] = []
    window: deque = deque(maxlen=MOVING_WINDOW)
    n_train = 0
    illegal = 0
    t0 = time.perf_counter()

    def write_outputs() -> None:
        with open(run_dir / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        meta["eval_wall_clock_s"] = wall_clock
        meta["illegal_selections"] = illegal
        meta["learner_updates"] = learner.updates
        if hasattr(learner, "probes_run") and learner.mixer is not None:
            meta["monotonicity_probes"] = learner.probes_run
            meta["min_probe_grad"] = learner.min_probe_grad
        (run_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def evaluate_now(step: int) -> None:
        report = evaluate_policy(
            eval_env, learner_policy(learner, "eval"), sched.eval_episodes, seed
        )
        rows.append(_metrics_row(run_id, seed, step, n_train, list(window), report))
        wall_clock.append(round(time.perf_counter() - t0, 3))
        log.info("%s step %d: eval success %.3f", run_id, step, report.success_rate)

    try:
        obs = env.reset()
        masks = env.masks()
        for step in range(1, sched.total_steps + 1):
            actions = learner.act(obs, masks, "train")
            illegal += int((~masks[np.arange(env.n_agents), actions]).sum())
            res = env.step(actions)
            next_masks = env.masks()
            learner.observe(
                obs, masks, actions, res.rewards, res.obs, res.terminated, next_masks,
                truncated=res.truncated,
            )
            if res.done:
                window.append(env.episode_return)
                n_train += 1
                obs = env.reset()
                masks = env.masks()
            else:
                obs, masks = res.obs, next_masks
            if step % sched.eval_interval == 0 or step == sched.total_steps:
                evaluate_now(step)
    except NaNDetected as exc:
        meta["status"] = f"failed: {exc}"
        write_outputs()
        _save_checkpoint(run_dir / "checkpoint.pt", learner, cfg_hash)
        raise

    _save_checkpoint(run_dir / "checkpoint.pt", learner, cfg_hash)
    record_episodes(run_dir, eval_env, learner, sched.record_episodes, seed)
    meta["status"] = "complete"
    write_outputs()
    return run_dir


def record_episodes(
    run_dir: Path, env: HospitalEnv, learner: Learner, count: int, seed: int
) -> None:
    env.rng = np.random.default_rng([seed, EVAL_SEED_OFFSET, 1])
    policy = learner_policy(learner, "eval")
    with open(run_dir / "episodes.jsonl", "w") as fh:
        for k in range(count):
            ep = run_episode(env, policy, record=True)
            fh.write(json.dumps({"episode": k, "start": list(ep.start), "actions": ep.actions}) + "\n")


def load_run_config(run_dir: Path) -> ExperimentConfig:
    return ExperimentConfig.model_validate_json((run_dir / "resolved_config.json").read_text())


def load_checkpoint(
    checkpoint: Path | str, config: Optional[ExperimentConfig] = None
) -> tuple[Learner, ExperimentConfig]:
    checkpoint = Path(checkpoint)
    cfg = (config or load_run_config(checkpoint.parent)).resolve()
    data = torch.load(checkpoint, weights_only=True)
    if data.get("format") != CHECKPOINT_FORMAT:
        raise HashMismatch(f"{checkpoint} is not a {CHECKPOINT_FORMAT} file")
    if data["config_hash"] != config_hash(cfg):
        raise HashMismatch(
            f"checkpoint config hash {data['config_hash'][:12]} does not match "
            f"config hash {config_hash(cfg)[:12]}"
        )
    env = build_env(cfg)
    learner = make_run_learner(cfg, env, None)
    learner.load_state_dict(data["learner"])
    return learner, cfg


def evaluate(
    checkpoint: Path | str,
    episodes: int = 100,
    config: Optional[ExperimentConfig] = None,
    seed: Optional[int] = None,
) -> FairnessReport:
    """Evaluate a saved policy in eval mode; deterministic for a given seed."""
    if episodes < 1:
        raise ValueError("evaluation needs at least one episode")
    learner, cfg = load_checkpoint(checkpoint, config)
    if seed is None:
        meta_path = Path(checkpoint).parent / "meta.json"
        seed = json.loads(meta_path.read_text())["seed"] if meta_path.exists() else 0
    env = build_env(cfg, seed)
    return evaluate_policy(env, learner_policy(learner, "eval"), episodes, seed)
