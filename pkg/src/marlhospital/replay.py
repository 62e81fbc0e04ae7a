"""Text replays of recorded evaluation episodes."""
from __future__ import annotations

import json
from pathlib import Path

from .config import build_env
from .core import render_text
from .goals import heuristic
from .harness import load_run_config


def load_episodes(run_dir: Path | str) -> list[dict]:
    path = Path(run_dir) / "episodes.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"{run_dir} has no recorded episodes")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def replay_dump(run_dir: Path | str, episode: int) -> str:
    """Tick-by-tick frames with base/shaped rewards and ledger count deltas.

    The trace is a pure function of the run directory, so re-dumps are identical.
    """
    run_dir = Path(run_dir)
    episodes = load_episodes(run_dir)
    if not 0 <= episode < len(episodes):
        raise IndexError(f"episode {episode} out of range; run has {len(episodes)} recorded")
    rec = episodes[episode]
    env = build_env(load_run_config(run_dir))
    env.reset(start=rec["start"])
    h0 = heuristic(env.state, env.goal)

    out = [f"# replay {run_dir.name} episode {episode}", "", "## tick 0", render_text(env.state).rstrip()]
    total_base = 0.0
    success = False
    for joint in rec["actions"]:
        before = list(env.ledger.counts)
        names = [f"{env.actions[a].kind.value}({env.actions[a].target or ''})" for a in joint]
        res = env.step(joint)
        total_base += res.base_reward
        success = res.terminated
        delta = [c - b for c, b in zip(env.ledger.counts, before)]
        out += [
            "",
            f"## tick {env.state.tick}",
            "actions: " + " ".join(f"a{i}={n}" for i, n in enumerate(names)),
            f"base_reward: {res.base_reward:+.1f}",
            "shaped_reward: " + " ".join(f"{r:+.6f}" for r in res.rewards),
            f"ledger_delta: {delta}  L1={env.ledger.l1():.6f} L2={env.ledger.l2():.6f}",
            render_text(env.state).rstrip(),
        ]
    h1 = heuristic(env.state, env.goal)
    out += [
        "",
        "## summary",
        f"sum_base_reward: {total_base:+.1f}",
        f"H_final_minus_initial: {h1 - h0:+d}",
        f"success: {success}",
        "",
    ]
    return "\n".join(out)
