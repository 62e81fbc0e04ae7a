"""Experiment configuration schema and builders for worlds, goals and environments."""
from __future__ import annotations

import hashlib
import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .actions import SUBTASK_ACTION, TREATMENT_SUBTASK, ActionKind
from .core import (
    CANONICAL_ITEMS,
    CANONICAL_STATIONS,
    DEFAULT_AGENT_START,
    DEFAULT_STACKS,
    Layout,
    World,
)
from .environment import HospitalEnv, goal_treatments
from .errors import ConfigError
from .fairness import FAIRNESS_MODES
from .goals import GoalSpec, goal_from_dict
from .learners import ALGORITHMS, MAPPOHyper, ValueHyper
from .skills import (
    COMPOSITIONS,
    LEVEL_NAMES,
    MANIPULATION,
    TREATMENT_SUBTASKS,
    EnergyParams,
    parse_level,
    team_from_composition,
)

ALGO_DEFAULTS: dict[str, dict[str, Any]] = {
    "iql": {"lr": 0.0005, "eval_epsilon": 0.0},
    "vdn": {"lr": 0.001, "eval_epsilon": 0.0},
    "qmix": {"lr": 0.001, "eval_epsilon": 0.1},
    "mappo": {
        "lr": 0.002,
        "entropy_coef": 0.01,
        "target_tau": 0.05,
        "clip": 0.2,
        "reward_standardisation": True,
    },
}
# hard target-sync intervals in full-length episodes; value learners update every
# tick, so resolve() converts them to updates using the episode cap
TARGET_SYNC_EPISODES = {"iql": 20, "vdn": 25, "qmix": 25}
EPS_ANNEAL_FRACTION = 0.1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class LayoutConfig(_Strict):
    stations: list[str] = Field(default_factory=lambda: list(CANONICAL_STATIONS))
    items: list[str] = Field(default_factory=lambda: list(CANONICAL_ITEMS))
    initial_stacks: dict[str, list[str]] = Field(
        default_factory=lambda: {k: list(v) for k, v in DEFAULT_STACKS.items()}
    )
    agent_start: Optional[list[str]] = None
    randomize_start: bool = True
    adjacency: Optional[dict[str, list[str]]] = None
    treatment_stations: list[str] = Field(
        default_factory=lambda: ["patient_bed_station1", "patient_legs1"]
    )


class AgentsConfig(_Strict):
    n_agents: int = Field(3, ge=1)
    composition: Optional[Literal["uniform", "specialized", "forced_cooperation"]] = "uniform"
    profiles: Optional[list[dict[str, Union[str, float]]]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.profiles is None and self.composition is None:
            raise ValueError("give either a team composition or explicit profiles")
        if self.profiles is not None:
            if len(self.profiles) != self.n_agents:
                raise ValueError(f"{len(self.profiles)} profiles for {self.n_agents} agents")
            known = set(TREATMENT_SUBTASKS) | {MANIPULATION}
            for p in self.profiles:
                for key, level in p.items():
                    if key not in known:
                        raise ValueError(f"unknown subtask {key!r} in skill profile")
                    parse_level(level)
        return self


class EnergyConfig(_Strict):
    enabled: bool = False
    cost: dict[str, int] = Field(default_factory=lambda: {"compress_chest": 3})
    recharge_rate: int = Field(1, ge=0)
    e_max: int = Field(3, ge=0)


class GoalConfig(_Strict):
    name: str = "cpr"
    steps: Optional[list[dict[str, Any]]] = None
    n_compressions: int = Field(2, ge=0)
    max_episode_ticks: int = Field(50, ge=1)


class FairnessConfig(_Strict):
    mode: Literal["fairskill", "workload_only", "fen", "none"] = "none"
    alpha: float = Field(0.7, ge=0.0, le=1.0)
    lam: float = Field(0.0, ge=0.0, alias="lambda")


class LearnerConfig(_Strict):
    algorithm: Literal["iql", "vdn", "qmix", "mappo"] = "vdn"
    hyper: dict[str, Any] = Field(default_factory=dict)


class ScheduleConfig(_Strict):
    total_steps: int = Field(100_000, ge=1)
    eval_interval: int = Field(10_000, ge=1)
    eval_episodes: int = Field(100, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0])
    record_episodes: int = Field(3, ge=0)


class ObservationConfig(_Strict):
    hide_others: bool = False


class ExperimentConfig(_Strict):
    name: str = "experiment"
    layout: LayoutConfig = Field(default_factory=LayoutConfig)
    agents: AgentsConfig = Field(default_factory=AgentsConfig)
    energy: EnergyConfig = Field(default_factory=EnergyConfig)
    goal: GoalConfig = Field(default_factory=GoalConfig)
    fairness: FairnessConfig = Field(default_factory=FairnessConfig)
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    observations: ObservationConfig = Field(default_factory=ObservationConfig)

    def resolve(self) -> "ExperimentConfig":
        """Copy with every default that affects results written out explicitly."""
        data = self.model_dump(by_alias=True)
        n = self.agents.n_agents
        if data["layout"]["agent_start"] is None:
            order = list(DEFAULT_AGENT_START) + [
                s for s in self.layout.stations if s not in DEFAULT_AGENT_START
            ]
            order = [s for s in order if s in self.layout.stations]
            if len(order) < n:
                raise ConfigError(f"{n} agents need at least {n} stations")
            data["layout"]["agent_start"] = order[:n]
        if self.agents.profiles is None:
            team = team_from_composition(self.agents.composition, n)
            data["agents"]["profiles"] = [
                {k: LEVEL_NAMES[v] for k, v in p.items()} for p in team
            ]
        algo = self.learner.algorithm
        hyper_cls = MAPPOHyper if algo == "mappo" else ValueHyper
        allowed = {f.name for f in fields(hyper_cls)}
        unknown = set(self.learner.hyper) - allowed
        if unknown:
            raise ConfigError(f"unknown {algo} hyperparameters: {sorted(unknown)}")
        hyper = {f.name: getattr(hyper_cls(), f.name) for f in fields(hyper_cls)}
        hyper.update(ALGO_DEFAULTS[algo])
        if algo != "mappo":
            hyper["eps_anneal_steps"] = max(
                1, int(EPS_ANNEAL_FRACTION * self.schedule.total_steps)
            )
            hyper["target_update"] = TARGET_SYNC_EPISODES[algo] * self.goal.max_episode_ticks
        hyper.update(self.learner.hyper)
        data["learner"]["hyper"] = hyper
        return ExperimentConfig.model_validate(data)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate_json(Path(path).read_text())
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}:\n{exc}") from exc


def config_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(by_alias=True), indent=2, sort_keys=True) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(cfg.model_dump(by_alias=True), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def build_goal(cfg: ExperimentConfig) -> GoalSpec:
    g = cfg.goal
    try:
        return goal_from_dict(g.name, g.steps, g.n_compressions, g.max_episode_ticks)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid goal: {exc}") from exc


def build_world(cfg: ExperimentConfig) -> World:
    cfg = cfg.resolve()
    lay = cfg.layout
    for st in lay.initial_stacks:
        if st not in lay.stations:
            raise ConfigError(f"initial stack at unknown station {st!r}")
    layout = Layout(
        stations=tuple(lay.stations),
        items=tuple(lay.items),
        initial_stacks={k: tuple(v) for k, v in lay.initial_stacks.items()},
        agent_start=tuple(lay.agent_start),
        adjacency=None
        if lay.adjacency is None
        else {k: frozenset(v) for k, v in lay.adjacency.items()},
        treatment_stations=tuple(lay.treatment_stations),
    )
    if len(layout.agent_start) != cfg.agents.n_agents:
        raise ConfigError("agent_start length must equal n_agents")
    skills = tuple(
        {k: parse_level(v) for k, v in p.items()} for p in cfg.agents.profiles
    )
    energy = None
    if cfg.energy.enabled:
        try:
            cost = {
                SUBTASK_ACTION.get(k) or ActionKind(k): v for k, v in cfg.energy.cost.items()
            }
            energy = EnergyParams(cost, cfg.energy.recharge_rate, cfg.energy.e_max)
        except ValueError as exc:
            raise ConfigError(f"invalid energy settings: {exc}") from exc
    goal = build_goal(cfg)
    _check_goal_coverage(goal, skills)
    return World(layout, skills, energy, goal.n_compressions)


def _check_goal_coverage(goal: GoalSpec, skills) -> None:
    needed = {TREATMENT_SUBTASK[k] for k in goal_treatments(goal)}
    for i, p in enumerate(skills):
        missing = needed - set(p)
        if missing:
            raise ConfigError(f"agent {i} profile lacks goal subtasks {sorted(missing)}")


def build_env(cfg: ExperimentConfig, seed: Optional[int] = None) -> HospitalEnv:
    cfg = cfg.resolve()
    fair = cfg.fairness
    if fair.mode not in FAIRNESS_MODES:
        raise ConfigError(f"unknown fairness mode {fair.mode!r}")
    return HospitalEnv(
        build_world(cfg),
        build_goal(cfg),
        fairness_mode=fair.mode,
        alpha=fair.alpha,
        lam=fair.lam if fair.mode != "none" else 0.0,
        randomize_start=cfg.layout.randomize_start,
        hide_others=cfg.observations.hide_others,
        seed=seed,
    )


__all__ = [
    "ALGORITHMS",
    "COMPOSITIONS",
    "ExperimentConfig",
    "load_config",
    "config_json",
    "config_hash",
    "build_env",
    "build_goal",
    "build_world",
]
