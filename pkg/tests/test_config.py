import json

import pytest
from pydantic import ValidationError

from marlhospital.config import (
    ExperimentConfig,
    build_env,
    build_world,
    config_hash,
    config_json,
    load_config,
)
from marlhospital.errors import ConfigError, Unsatisfiable


def test_defaults_build():
    env = build_env(ExperimentConfig(), seed=0)
    assert env.world.n_agents == 3 and env.goal.n_compressions == 2
    assert env.goal.max_episode_ticks == 50


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"bogus": 1})
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"energy": {"enabeld": True}})


def test_unknown_hyper_rejected():
    cfg = ExperimentConfig.model_validate({"learner": {"hyper": {"learning_rate": 0.1}}})
    with pytest.raises(ConfigError):
        cfg.resolve()


def test_resolve_idempotent_and_hash_stable():
    cfg = ExperimentConfig()
    r = cfg.resolve()
    assert r.resolve() == r
    assert config_hash(r) == config_hash(ExperimentConfig().resolve())
    other = ExperimentConfig.model_validate({"fairness": {"lambda": 1.0}}).resolve()
    assert config_hash(other) != config_hash(r)


def test_resolve_fills_algorithm_defaults():
    for algo, lr in [("iql", 0.0005), ("vdn", 0.001), ("qmix", 0.001), ("mappo", 0.002)]:
        cfg = ExperimentConfig.model_validate({"learner": {"algorithm": algo}}).resolve()
        assert cfg.learner.hyper["lr"] == lr
    cfg = ExperimentConfig.model_validate({"learner": {"algorithm": "qmix"}}).resolve()
    assert cfg.learner.hyper["eval_epsilon"] == 0.1
    cfg = ExperimentConfig.model_validate({"learner": {"algorithm": "mappo"}}).resolve()
    assert cfg.learner.hyper["target_tau"] == 0.05


def test_epsilon_anneal_is_tenth_of_budget():
    cfg = ExperimentConfig.model_validate({"schedule": {"total_steps": 50_000}}).resolve()
    assert cfg.learner.hyper["eps_anneal_steps"] == 5_000


def test_lambda_alias_roundtrip(tmp_path):
    cfg = ExperimentConfig.model_validate({"fairness": {"mode": "fairskill", "lambda": 4}})
    assert cfg.fairness.lam == 4
    path = tmp_path / "c.json"
    path.write_text(config_json(cfg))
    assert '"lambda"' in path.read_text()
    assert load_config(path) == cfg


def test_load_config_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"goal": {"n_compressions": -1}}))
    with pytest.raises(ConfigError):
        load_config(path)


def test_profiles_length_mismatch():
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(
            {"agents": {"n_agents": 2, "profiles": [{"compress_chest": "expert"}]}}
        )


def test_profile_missing_goal_subtask():
    profiles = [{"compress_chest": "expert"}, {"give_rescue_breaths": "expert"},
                {"compress_chest": "beginner"}]
    cfg = ExperimentConfig.model_validate({"agents": {"composition": None, "profiles": profiles}})
    with pytest.raises(ConfigError):
        build_world(cfg)


def test_unsatisfiable_composition():
    cfg = ExperimentConfig.model_validate(
        {"agents": {"n_agents": 1, "composition": "forced_cooperation"}}
    )
    with pytest.raises((ConfigError, Unsatisfiable, ValueError)):
        build_env(cfg)


def test_invalid_energy():
    cfg = ExperimentConfig.model_validate({"energy": {"enabled": True, "cost": {"compress_chest": 9}}})
    with pytest.raises(ConfigError):
        build_world(cfg)


def test_shipped_configs_validate():
    from pathlib import Path

    for path in sorted(Path(__file__).parents[1].joinpath("configs").glob("*.json")):
        data = json.loads(path.read_text())
        if "cells" in data or "grid" in data:
            continue
        build_env(load_config(path), seed=0)
