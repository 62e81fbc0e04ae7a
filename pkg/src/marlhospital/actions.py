from __future__ import annotations

from enum import Enum
from typing import NamedTuple, Optional


class ActionKind(str, Enum):
    MOVE = "move"
    PICK_UP = "pick_up"
    PLACE = "place"
    STACK = "stack"
    UNSTACK = "unstack"
    STACK_UNDER = "stack_under"
    COMPRESS_CHEST = "compress_chest"
    GIVE_RESCUE_BREATHS = "give_rescue_breaths"
    GIVE_SHOCK = "give_shock"
    GIVE_MEDICINE = "give_medicine"
    NOOP = "noop"


class Action(NamedTuple):
    kind: ActionKind
    target: Optional[str] = None  # destination station for MOVE

    def __str__(self) -> str:
        if self.kind is ActionKind.MOVE:
            return f"move({self.target})"
        return self.kind.value


NOOP = Action(ActionKind.NOOP)

MANIPULATIONS = frozenset(
    {
        ActionKind.PICK_UP,
        ActionKind.PLACE,
        ActionKind.STACK,
        ActionKind.UNSTACK,
        ActionKind.STACK_UNDER,
    }
)

# treatment action -> subtask name used in skill profiles and the fairness ledger
TREATMENT_SUBTASK = {
    ActionKind.COMPRESS_CHEST: "compress_chest",
    ActionKind.GIVE_RESCUE_BREATHS: "give_rescue_breaths",
    ActionKind.GIVE_SHOCK: "give_shock",
    ActionKind.GIVE_MEDICINE: "give_medicine",
}
TREATMENTS = frozenset(TREATMENT_SUBTASK)
SUBTASK_ACTION = {v: k for k, v in TREATMENT_SUBTASK.items()}

# non-move actions in their fixed enumeration order
_FIXED_KINDS = (
    ActionKind.PICK_UP,
    ActionKind.PLACE,
    ActionKind.STACK,
    ActionKind.UNSTACK,
    ActionKind.STACK_UNDER,
    ActionKind.COMPRESS_CHEST,
    ActionKind.GIVE_RESCUE_BREATHS,
    ActionKind.GIVE_SHOCK,
    ActionKind.GIVE_MEDICINE,
    ActionKind.NOOP,
)


def enumerate_actions(stations: tuple[str, ...]) -> tuple[Action, ...]:
    """Per-agent discrete action space: one MOVE per station, then the fixed kinds.

    The index of an action in this tuple is its id for networks and masks.
    """
    return tuple(Action(ActionKind.MOVE, s) for s in stations) + tuple(
        Action(k) for k in _FIXED_KINDS
    )
