"""Acceptance criteria, one test per criterion.

Each test carries a ``criterion`` marker; conftest prints one PASS/FAIL line per
criterion in the terminal summary.
"""
import csv
import itertools
import json
import time
from fractions import Fraction

import numpy as np
import pytest
import torch

from marlhospital.actions import ActionKind
from marlhospital.config import ExperimentConfig, build_env
from marlhospital.core import CANONICAL_STATIONS
from marlhospital.fairness import composite_l3, gini_l1
from marlhospital.goals import heuristic
from marlhospital.harness import (
    evaluate_policy,
    learner_policy,
    make_run_learner,
    random_baseline,
    random_policy,
    run_episode,
    run_training,
)
from marlhospital.learners import make_learner
from marlhospital.learners.mappo import clipped_surrogate, masked_log_probs
from marlhospital.matrix import ablation_cells, aggregate_header, experiment_matrix
from marlhospital.observations import joint_encode

from conftest import random_rollout

LOC, HELD, SKILL = slice(4, 22), slice(22, 31), slice(31, 49)


def cfg_of(**data):
    return ExperimentConfig.model_validate(data)


def act_id(env, kind, target=None):
    return next(i for i, a in enumerate(env.actions) if a.kind is kind and a.target == target)


def gini_double_sum(x):
    n, total = len(x), sum(x)
    if total == 0:
        return Fraction(0)
    return Fraction(sum(abs(a - b) for a in x for b in x), 2 * n * total)


@pytest.mark.criterion(1, "Gini oracle")
def test_gini_oracle():
    t0 = time.perf_counter()
    checked = 0
    for n in range(1, 6):
        for x in itertools.product(range(7), repeat=n):
            assert abs(gini_l1(list(x)) - float(gini_double_sum(x))) <= 1e-12
            checked += 1
    assert gini_l1([5, 5, 5]) == 0.0
    assert gini_l1([2, 1, 0]) == pytest.approx(4 / 9, abs=1e-12)
    assert gini_l1([1, 0, 0]) == pytest.approx(2 / 3, abs=1e-12)
    assert checked == sum(7**n for n in range(1, 6))
    assert time.perf_counter() - t0 < 5.0


@pytest.mark.criterion(2, "Fairness identities")
def test_fairness_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    for l1, l2 in rng.random((1000, 2)):
        assert composite_l3(l1, l2, 1.0) == l1
        assert composite_l3(l1, l2, 0.0) == l2
    for mode in ("fairskill", "workload_only", "fen"):
        shaped = build_env(cfg_of(fairness={"mode": mode, "lambda": 0.0}), seed=7)
        plain = build_env(cfg_of(fairness={"mode": "none"}), seed=7)
        pick = np.random.default_rng(7)
        for _ in range(30):
            shaped.reset(), plain.reset()
            while True:
                masks = shaped.masks()
                assert np.array_equal(masks, plain.masks())
                acts = [pick.choice(np.flatnonzero(m)) for m in masks]
                a, b = shaped.step(acts), plain.step(acts)
                assert a.rewards.tolist() == b.rewards.tolist()
                assert a.base_reward == b.base_reward
                if a.done:
                    assert b.done
                    break
    assert time.perf_counter() - t0 < 60.0


def _scripted_single_executor(env):
    """Agent 0 places the board and gives every compression; others idle."""
    env.reset(start=("table1", "hospital_cart1", "hospital_cart_left1"))
    noop = act_id(env, ActionKind.NOOP)
    plan = [act_id(env, ActionKind.PICK_UP),
            act_id(env, ActionKind.MOVE, "patient_bed_station1"),
            act_id(env, ActionKind.STACK_UNDER)]
    for a in plan:
        env.step([a, noop, noop])
    compress = act_id(env, ActionKind.COMPRESS_CHEST)
    for _ in range(10):
        if env.step([compress, noop, noop]).done:
            break
    return env


@pytest.mark.criterion(3, "L2 attainment")
def test_l2_attainment():
    t0 = time.perf_counter()
    expert = _scripted_single_executor(build_env(ExperimentConfig(), seed=0))
    assert expert.state.patient.chest_compressed
    assert expert.ledger.l2() == 0.0

    profiles = [{"compress_chest": "beginner", "manipulation": "beginner"}] + [
        {"compress_chest": "expert", "manipulation": "expert"}
    ] * 2
    cfg = cfg_of(agents={"composition": None, "profiles": profiles})
    beginner = _scripted_single_executor(build_env(cfg, seed=0))
    assert beginner.state.patient.chest_compressed
    assert beginner.ledger.counts == [3, 0, 0]
    assert beginner.ledger.l2() == 0.5
    assert time.perf_counter() - t0 < 10.0


@pytest.mark.criterion(4, "Reward telescoping")
def test_reward_telescoping():
    t0 = time.perf_counter()
    for goal in ("cpr", "rescue_breaths"):
        env = build_env(cfg_of(goal={"name": goal}), seed=1)
        rng = np.random.default_rng(1)
        episodes = 0
        h0 = None
        for prev, res, nxt in random_rollout(env, rng, 1000):
            if h0 is None:
                h0 = heuristic(prev, env.goal)
            if res.done:
                assert env.episode_base_return == heuristic(nxt, env.goal) - h0
                episodes += 1
                h0 = None
        assert episodes == 1000
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.criterion(5, "Energy mechanics")
def test_energy_mechanics():
    t0 = time.perf_counter()
    env = build_env(cfg_of(energy={"enabled": True}), seed=2)
    params = env.world.energy
    assert (params.cost_of(ActionKind.COMPRESS_CHEST), params.recharge_rate, params.e_max) == (3, 1, 3)
    rng = np.random.default_rng(2)
    last_compress = {}
    episodes = 0
    for prev, res, nxt in random_rollout(env, rng, 1000):
        assert all(0 <= e <= 3 for e in nxt.energy)
        for subtask, agent in res.recorded:
            if subtask == "compress_chest":
                assert last_compress.get(agent) != prev.tick
                last_compress[agent] = nxt.tick
        if res.done:
            last_compress.clear()
            episodes += 1
    assert episodes == 1000

    free = build_env(cfg_of(energy={"enabled": True, "cost": {"compress_chest": 0}}), seed=3)
    off = build_env(ExperimentConfig(), seed=3)
    pick = np.random.default_rng(3)
    for _ in range(300):
        free.reset(), off.reset()
        while True:
            masks = free.masks()
            assert np.array_equal(masks, off.masks())
            acts = [pick.choice(np.flatnonzero(m)) for m in masks]
            a, b = free.step(acts), off.step(acts)
            assert free.state.agent_station == off.state.agent_station
            assert free.state.patient == off.state.patient
            if a.done:
                assert b.done
                break
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.criterion(6, "Observation layout")
def test_observation_layout():
    t0 = time.perf_counter()
    env = build_env(ExperimentConfig(), seed=4)
    obs = env.reset()
    assert obs.shape == (3, 58) and obs.size == 174
    rng = np.random.default_rng(4)
    states = 0
    for _, _, s in random_rollout(env, rng, 10_000):
        joint = joint_encode(s, env.world)
        assert joint.size == 174
        assert ((joint == 0) | (joint == 1)).all()
        loc = joint[:, LOC].reshape(3, 3, 6)
        assert (loc.sum(-1) == 1).all()
        for i, st in enumerate(s.agent_station):
            assert (loc[:, i, CANONICAL_STATIONS.index(st)] == 1).all()
        assert (joint[:, HELD].reshape(3, 3, 3).sum(-1) <= 1).all()
        assert (joint[:, SKILL].reshape(3, 3, 2, 3).sum(-1) == 1).all()
        states += 1
        if states >= 10_000:
            break
    assert states == 10_000
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion("7a", "Masked selection")
def test_masked_selection():
    rng = np.random.default_rng(5)
    for algo in ("iql", "vdn", "qmix", "mappo"):
        learner = make_learner(algo, 3, 58, 16, {}, seed=0)
        for trial in range(10_000):
            masks = rng.random((3, 16)) < 0.3
            masks[:, 15] = True
            obs = rng.integers(0, 2, (3, 58)).astype(np.uint8)
            mode = "train" if trial % 2 else "eval"
            a = learner.act(obs, masks, mode)
            assert masks[np.arange(3), a].all()


@pytest.mark.criterion("7b", "QMIX monotonicity")
def test_qmix_monotonicity_full_run(tmp_path):
    cfg = cfg_of(
        name="qmix50k",
        learner={"algorithm": "qmix"},
        schedule={"total_steps": 50_000, "eval_interval": 50_000, "eval_episodes": 10,
                  "record_episodes": 0},
    )
    run_dir = run_training(cfg, seed=0, out_dir=tmp_path)
    meta = json.loads((run_dir / "meta.json").read_text())
    assert meta["status"] == "complete"
    assert meta["monotonicity_probes"] == meta["learner_updates"] > 40_000
    assert meta["min_probe_grad"] >= 0.0


@pytest.mark.criterion("7c", "MAPPO surrogate gradient")
def test_surrogate_finite_differences():
    torch.manual_seed(1)
    logits = torch.randn(6, 3, dtype=torch.float64, requires_grad=True)
    masks = torch.ones(6, 3, dtype=torch.bool)
    actions = torch.tensor([0, 1, 2, 2, 1, 0])
    noise = 0.1 * torch.randn(6, 3, dtype=torch.float64)
    old = masked_log_probs(logits.detach() + noise, masks).gather(-1, actions[:, None]).squeeze(-1)
    adv = torch.randn(6, dtype=torch.float64)

    def f(lg):
        lp = masked_log_probs(lg, masks).gather(-1, actions[:, None]).squeeze(-1)
        return clipped_surrogate(lp, old, adv, 0.2)

    (grad,) = torch.autograd.grad(f(logits), logits)
    fd = torch.zeros_like(grad)
    with torch.no_grad():
        for idx in np.ndindex(*logits.shape):
            up, down = logits.clone(), logits.clone()
            up[idx] += 1e-6
            down[idx] -= 1e-6
            fd[idx] = (f(up) - f(down)) / 2e-6
    assert ((grad - fd).norm() / fd.norm()).item() < 1e-4


LEARNING_BUDGET = 200_000
LEARNING_EVAL_EVERY = 20_000
LEARNING_SEEDS = (0, 1)
BASELINE_EPISODES = 1000


def train_until(algo, seed, target):
    """Train on uniform-team CPR, evaluating every 20k ticks; stop at the target."""
    torch.set_num_threads(1)
    cfg = cfg_of(learner={"algorithm": algo},
                 schedule={"total_steps": LEARNING_BUDGET}).resolve()
    env, eval_env = build_env(cfg, seed), build_env(cfg, seed)
    learner = make_run_learner(cfg, env, seed)
    cpu0 = time.process_time()
    obs, masks = env.reset(), env.masks()
    history = []
    for step in range(1, LEARNING_BUDGET + 1):
        actions = learner.act(obs, masks, "train")
        res = env.step(actions)
        nm = env.masks()
        learner.observe(obs, masks, actions, res.rewards, res.obs, res.terminated, nm,
                        truncated=res.truncated)
        obs, masks = (env.reset(), env.masks()) if res.done else (res.obs, nm)
        if step % LEARNING_EVAL_EVERY == 0:
            report = evaluate_policy(eval_env, learner_policy(learner), 100, seed)
            history.append((step, report.success_rate))
            if report.success_rate >= target:
                break
    return history, time.process_time() - cpu0


@pytest.mark.slow
@pytest.mark.criterion("7d", "Scaled-down learning")
def test_scaled_down_learning(capsys):
    cfg = ExperimentConfig()
    finals = {}
    failures = []
    for seed in LEARNING_SEEDS:
        baseline = random_baseline(cfg, BASELINE_EPISODES, seed).success_rate
        target = 3 * baseline
        for algo in ("iql", "vdn"):
            history, cpu = train_until(algo, seed, target)
            best = max(s for _, s in history)
            finals.setdefault(algo, []).append(history[-1][0] if best >= target else None)
            line = (f"7d {algo} seed {seed}: baseline {baseline:.3f} target {target:.3f} "
                    f"best {best:.2f} at {history[-1][0]} steps, {cpu:.0f}s CPU, "
                    f"curve {[s for _, s in history]}")
            with capsys.disabled():
                print(line)
            if best < target or cpu >= 1800:
                failures.append(line)
    with capsys.disabled():
        # directional echo only, not gated: runs stop at the target, so compare
        # steps needed to reach it (None = never reached)
        print(f"7d steps to target (recorded, not gated): vdn {finals['vdn']}, "
              f"iql {finals['iql']}")
    assert not failures, failures


@pytest.mark.criterion(8, "Protocol fidelity")
def test_protocol_fidelity(tmp_path):
    cfg = ExperimentConfig()
    assert cfg.schedule.eval_episodes == 100
    assert cfg.goal.max_episode_ticks == 50
    env = build_env(cfg, seed=0)
    report = evaluate_policy(env, random_policy(np.random.default_rng(0)), 100, seed=0)
    assert report.episodes == 100
    ticks = [run_episode(env, random_policy(np.random.default_rng(k))).ticks for k in range(30)]
    assert max(ticks) == 50

    cells = ablation_cells()
    assert [(c.alpha, c.lam) for c in cells] == [(0.0, 1.0), (0.5, 1.0), (0.7, 1.0), (1.0, 1.0)]
    tiny = {"learner": {"hyper": {"learning_starts": 20}},
            "schedule": {"total_steps": 40, "eval_interval": 40, "eval_episodes": 2,
                         "record_episodes": 0}}
    path = experiment_matrix(tiny, cells, [0], tmp_path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)
    for column in ("Success", "Gini", "A0", "A1", "A2", "Range"):
        assert column in aggregate_header()
        assert all(r[column] != "" for r in rows)


@pytest.mark.criterion(9, "Determinism")
def test_determinism(tmp_path):
    cfg = cfg_of(name="det", learner={"algorithm": "vdn", "hyper": {"learning_starts": 200}},
                 fairness={"mode": "fairskill", "lambda": 1.0},
                 schedule={"total_steps": 3000, "eval_interval": 1000, "eval_episodes": 10,
                           "record_episodes": 1})
    a = run_training(cfg, seed=5, out_dir=tmp_path / "a")
    b = run_training(cfg, seed=5, out_dir=tmp_path / "b")
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
