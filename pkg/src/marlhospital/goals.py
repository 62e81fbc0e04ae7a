"""Goal specifications, the subgoal progress heuristic and the base team reward."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Optional

from .core import WorldState, items_on_patient, items_under_patient

PREDICATE_KINDS = (
    "item_under_patient",
    "item_on_patient",
    "compressions_at_least",
    "patient_flag",
)
PATIENT_FLAGS = ("chest_compressed", "rescue_breathed", "shocked", "medicated")


@dataclass(frozen=True)
class SubgoalPredicate:
    kind: str
    item: Optional[str] = None
    count: Optional[int] = None
    flag: Optional[str] = None
    prerequisite: Optional[int] = None

    def __post_init__(self):
        if self.kind not in PREDICATE_KINDS:
            raise ValueError(f"unknown predicate kind {self.kind!r}")
        if self.kind.startswith("item_") and not self.item:
            raise ValueError(f"{self.kind} needs an item")
        if self.kind == "compressions_at_least" and (self.count is None or self.count < 0):
            raise ValueError("compressions_at_least needs a non-negative count")
        if self.kind == "patient_flag" and self.flag not in PATIENT_FLAGS:
            raise ValueError(f"patient_flag needs one of {PATIENT_FLAGS}")

    def holds(self, state: WorldState) -> bool:
        if self.kind == "item_under_patient":
            return self.item in items_under_patient(state)
        if self.kind == "item_on_patient":
            return self.item in items_on_patient(state)
        if self.kind == "compressions_at_least":
            return state.patient.compressions_done >= self.count
        return bool(getattr(state.patient, self.flag))

    @property
    def is_placement(self) -> bool:
        return self.kind in ("item_under_patient", "item_on_patient")


@dataclass(frozen=True)
class GoalSpec:
    name: str
    steps: tuple[SubgoalPredicate, ...]
    n_compressions: int = 2
    max_episode_ticks: int = 50

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a goal needs at least one step")
        for i, s in enumerate(self.steps):
            if s.prerequisite is not None and not 0 <= s.prerequisite < i:
                raise ValueError(
                    f"step {i} prerequisite {s.prerequisite} must point to an earlier step"
                )
        if self.max_episode_ticks < 1:
            raise ValueError("max_episode_ticks must be >= 1")

    def __len__(self) -> int:
        return len(self.steps)


def cpr_goal(n_compressions: int = 2, max_episode_ticks: int = 50) -> GoalSpec:
    return GoalSpec(
        name="cpr",
        steps=(
            SubgoalPredicate("item_under_patient", item="cpr_board1"),
            SubgoalPredicate("compressions_at_least", count=n_compressions, prerequisite=0),
        ),
        n_compressions=n_compressions,
        max_episode_ticks=max_episode_ticks,
    )


def rescue_breaths_goal(n_compressions: int = 2, max_episode_ticks: int = 50) -> GoalSpec:
    cpr = cpr_goal(n_compressions, max_episode_ticks)
    return GoalSpec(
        name="rescue_breaths",
        steps=cpr.steps
        + (
            SubgoalPredicate("item_on_patient", item="pump1", prerequisite=1),
            SubgoalPredicate("patient_flag", flag="rescue_breathed", prerequisite=2),
        ),
        n_compressions=n_compressions,
        max_episode_ticks=max_episode_ticks,
    )


def shock_goal(n_compressions: int = 2, max_episode_ticks: int = 50) -> GoalSpec:
    cpr = cpr_goal(n_compressions, max_episode_ticks)
    return GoalSpec(
        name="shock",
        steps=cpr.steps
        + (
            SubgoalPredicate("item_on_patient", item="aed1", prerequisite=1),
            SubgoalPredicate("patient_flag", flag="shocked", prerequisite=2),
        ),
        n_compressions=n_compressions,
        max_episode_ticks=max_episode_ticks,
    )


def medicine_goal(n_compressions: int = 2, max_episode_ticks: int = 50) -> GoalSpec:
    return GoalSpec(
        name="medicine",
        steps=(
            SubgoalPredicate("item_on_patient", item="syringe1"),
            SubgoalPredicate("patient_flag", flag="medicated", prerequisite=0),
        ),
        n_compressions=n_compressions,
        max_episode_ticks=max_episode_ticks,
    )


NAMED_GOALS = {
    "cpr": cpr_goal,
    "rescue_breaths": rescue_breaths_goal,
    "shock": shock_goal,
    "medicine": medicine_goal,
}


def goal_from_dict(
    name: str,
    steps: Optional[list[Mapping[str, Any]]] = None,
    n_compressions: int = 2,
    max_episode_ticks: int = 50,
) -> GoalSpec:
    if steps is None:
        try:
            factory = NAMED_GOALS[name]
        except KeyError:
            raise ValueError(
                f"unknown goal {name!r}; give inline steps or one of {sorted(NAMED_GOALS)}"
            ) from None
        return factory(n_compressions, max_episode_ticks)
    return GoalSpec(
        name=name,
        steps=tuple(SubgoalPredicate(**dict(s)) for s in steps),
        n_compressions=n_compressions,
        max_episode_ticks=max_episode_ticks,
    )


def completed_steps(state: WorldState, goal: GoalSpec) -> list[bool]:
    """Per step: its predicate holds and its prerequisite step is complete."""
    done: list[bool] = []
    for s in goal.steps:
        ok = s.holds(state) and (s.prerequisite is None or done[s.prerequisite])
        done.append(ok)
    return done


def heuristic(state: WorldState, goal: GoalSpec) -> int:
    return sum(completed_steps(state, goal))


def base_reward(prev: WorldState, next_state: WorldState, goal: GoalSpec) -> float:
    return float(heuristic(next_state, goal) - heuristic(prev, goal))


def is_success(state: WorldState, goal: GoalSpec) -> bool:
    return heuristic(state, goal) == len(goal.steps)
