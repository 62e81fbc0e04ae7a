"""Skill profiles, team compositions and the shared-task energy mechanic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .actions import TREATMENTS, TREATMENT_SUBTASK, ActionKind
from .errors import Unsatisfiable, ZeroSkill

UNSKILLED = 0.0
BEGINNER = 0.5
EXPERT = 1.0

LEVELS = {"unskilled": UNSKILLED, "beginner": BEGINNER, "expert": EXPERT}
LEVEL_NAMES = {v: k for k, v in LEVELS.items()}

TREATMENT_SUBTASKS = (
    "compress_chest",
    "give_rescue_breaths",
    "give_shock",
    "give_medicine",
)
# manipulation steps are skill-neutral unless a profile says otherwise
MANIPULATION = "manipulation"
DEFAULT_MANIPULATION_SKILL = EXPERT

COMPOSITIONS = ("uniform", "specialized", "forced_cooperation")

SkillProfile = Mapping[str, float]


def parse_level(value: float | str) -> float:
    if isinstance(value, str):
        try:
            return LEVELS[value]
        except KeyError:
            raise ValueError(f"unknown skill level {value!r}") from None
    level = float(value)
    if level not in LEVEL_NAMES:
        raise ValueError(f"skill level must be one of {sorted(LEVEL_NAMES)}, got {value}")
    return level


def skill_of(profile: SkillProfile, subtask: str) -> float:
    if subtask == MANIPULATION:
        return profile.get(MANIPULATION, DEFAULT_MANIPULATION_SKILL)
    return profile.get(subtask, UNSKILLED)


@dataclass(frozen=True)
class EnergyParams:
    cost: Mapping[ActionKind, int] = field(
        default_factory=lambda: {ActionKind.COMPRESS_CHEST: 3}
    )
    recharge_rate: int = 1
    e_max: int = 3

    def __post_init__(self):
        if self.recharge_rate < 0:
            raise ValueError("recharge_rate must be >= 0")
        if self.e_max < 0:
            raise ValueError("e_max must be >= 0")
        for kind, c in self.cost.items():
            if not 0 <= c <= self.e_max:
                raise ValueError(f"cost for {kind.value} must lie in [0, e_max], got {c}")

    def cost_of(self, kind: ActionKind) -> int:
        return self.cost.get(kind, 0)


def energy_after(e: int, action: ActionKind, params: EnergyParams) -> int:
    """Energy after one tick in which ``action`` is started.

    A costed action that is affordable drains its cost; anything else recharges,
    clamped to ``e_max``. Unaffordable costed actions never reach here in practice
    (they are masked), and are treated as rest.
    """
    cost = params.cost_of(action)
    if cost > 0 and cost <= e:
        return e - cost
    return min(e + params.recharge_rate, params.e_max)


def action_duration(action: ActionKind, skill: float) -> int:
    if action not in TREATMENTS:
        return 1
    if skill <= 0:
        raise ZeroSkill(f"{action.value} cannot be performed at skill {skill}")
    return math.ceil(1.0 / skill - 1e-9)


def team_from_composition(
    kind: str, n_agents: int, subtasks: tuple[str, ...] = TREATMENT_SUBTASKS
) -> list[dict[str, float]]:
    """Build per-agent skill profiles for one of the three team compositions.

    ``specialized`` makes agent ``i`` expert at ``subtasks[i % K]`` and beginner
    elsewhere. ``forced_cooperation`` deals subtasks round-robin so that every
    subtask has a capable agent while each agent is unskilled at two or more.
    """
    if n_agents < 2:
        raise ValueError("a team needs at least two agents")
    k = len(subtasks)
    if kind == "uniform":
        return [{s: EXPERT for s in subtasks} for _ in range(n_agents)]
    if kind == "specialized":
        return [
            {s: EXPERT if j == i % k else BEGINNER for j, s in enumerate(subtasks)}
            for i in range(n_agents)
        ]
    if kind == "forced_cooperation":
        capable = [set() for _ in range(n_agents)]
        for j in range(k):
            capable[j % n_agents].add(j)
        if k < 3 or any(len(c) > k - 2 for c in capable):
            raise Unsatisfiable(
                f"cannot mask two of {k} subtasks per agent for {n_agents} agents "
                "while keeping every subtask covered"
            )
        return [
            {s: EXPERT if j in capable[i] else UNSKILLED for j, s in enumerate(subtasks)}
            for i in range(n_agents)
        ]
    raise ValueError(f"unknown composition {kind!r}; expected one of {COMPOSITIONS}")


def treatment_skill(profile: SkillProfile, action: ActionKind) -> float:
    return skill_of(profile, TREATMENT_SUBTASK[action])
