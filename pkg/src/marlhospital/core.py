"""Station-graph world model: state, action legality and the joint transition."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Optional, Sequence

from .actions import (
    MANIPULATIONS,
    NOOP,
    TREATMENT_SUBTASK,
    TREATMENTS,
    Action,
    ActionKind,
    enumerate_actions,
)
from .errors import InconsistentState
from .skills import EnergyParams, SkillProfile, action_duration, energy_after, skill_of

CANONICAL_STATIONS = (
    "hospital_cart_right1",
    "table1",
    "hospital_cart1",
    "hospital_cart_left1",
    "patient_legs1",
    "patient_bed_station1",
)
CANONICAL_ITEMS = ("cpr_board1", "pump1", "aed1", "syringe1", "patient1")
PATIENT = "patient1"
CPR_BOARD = "cpr_board1"

DEFAULT_STACKS = {
    "hospital_cart_right1": ("aed1",),
    "table1": ("cpr_board1",),
    "hospital_cart1": ("pump1",),
    "hospital_cart_left1": ("syringe1",),
    "patient_legs1": (),
    "patient_bed_station1": ("patient1",),
}
DEFAULT_AGENT_START = ("hospital_cart_right1", "hospital_cart1", "hospital_cart_left1")

# item that must be on (above) the patient for each treatment; compressions need
# the board underneath instead
ATTACHMENT = {
    ActionKind.GIVE_RESCUE_BREATHS: "pump1",
    ActionKind.GIVE_SHOCK: "aed1",
    ActionKind.GIVE_MEDICINE: "syringe1",
}


@dataclass(frozen=True)
class Layout:
    stations: tuple[str, ...] = CANONICAL_STATIONS
    items: tuple[str, ...] = CANONICAL_ITEMS
    initial_stacks: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_STACKS)
    )
    agent_start: tuple[str, ...] = DEFAULT_AGENT_START
    # None means fully connected
    adjacency: Optional[Mapping[str, frozenset]] = None
    treatment_stations: tuple[str, ...] = ("patient_bed_station1", "patient_legs1")
    immovable: frozenset = frozenset({PATIENT})
    under_stackable: frozenset = frozenset({CPR_BOARD})
    attachments: Mapping[ActionKind, str] = field(default_factory=lambda: dict(ATTACHMENT))

    @property
    def n_agents(self) -> int:
        return len(self.agent_start)

    def neighbours(self, station: str) -> tuple[str, ...]:
        if self.adjacency is None:
            return tuple(s for s in self.stations if s != station)
        return tuple(s for s in self.stations if s in self.adjacency.get(station, ()))

    @property
    def is_canonical(self) -> bool:
        return (
            self.stations == CANONICAL_STATIONS
            and set(self.items) == set(CANONICAL_ITEMS)
        )


@dataclass(frozen=True)
class World:
    """Everything static about an episode: layout, skills, energy rules."""

    layout: Layout
    skills: tuple[SkillProfile, ...]
    energy: Optional[EnergyParams] = None
    n_compressions: int = 2

    def __post_init__(self):
        if len(self.skills) != self.layout.n_agents:
            raise ValueError(
                f"{len(self.skills)} skill profiles for {self.layout.n_agents} agents"
            )

    @property
    def n_agents(self) -> int:
        return self.layout.n_agents

    @property
    def actions(self) -> tuple[Action, ...]:
        return enumerate_actions(self.layout.stations)


@dataclass(frozen=True)
class PatientFlags:
    chest_compressed: bool = False
    rescue_breathed: bool = False
    shocked: bool = False
    medicated: bool = False
    compressions_done: int = 0


class Event(NamedTuple):
    """An action that took effect on a tick: a manipulation or a finished treatment."""

    agent: int
    kind: ActionKind
    item: Optional[str] = None


@dataclass(frozen=True)
class WorldState:
    agent_station: tuple[str, ...]
    holding: tuple[Optional[str], ...]
    stacks: Mapping[str, tuple[str, ...]]
    patient: PatientFlags
    energy: tuple[int, ...]
    # (action, remaining ticks) per agent
    in_progress: tuple[Optional[tuple[Action, int]], ...]
    tick: int = 0
    last_events: tuple[Event, ...] = ()


def initial_state(world: World, agent_start: Optional[Sequence[str]] = None) -> WorldState:
    layout = world.layout
    start = tuple(agent_start) if agent_start is not None else layout.agent_start
    n = layout.n_agents
    e0 = world.energy.e_max if world.energy is not None else 0
    state = WorldState(
        agent_station=start,
        holding=(None,) * n,
        stacks={s: tuple(layout.initial_stacks.get(s, ())) for s in layout.stations},
        patient=PatientFlags(),
        energy=(e0,) * n,
        in_progress=(None,) * n,
    )
    check_consistency(state, world)
    return state


def check_consistency(state: WorldState, world: World) -> None:
    layout = world.layout
    n = layout.n_agents
    if not (len(state.agent_station) == len(state.holding) == len(state.energy)
            == len(state.in_progress) == n):
        raise InconsistentState("per-agent fields do not match the agent count")
    for st in state.agent_station:
        if st not in layout.stations:
            raise InconsistentState(f"unknown station {st!r}")
    if len(set(state.agent_station)) != n:
        raise InconsistentState("two agents share a station")
    placed = Counter(state.holding[i] for i in range(n) if state.holding[i] is not None)
    for st, stack in state.stacks.items():
        if st not in layout.stations:
            raise InconsistentState(f"stack at unknown station {st!r}")
        placed.update(stack)
        if PATIENT in stack:
            below = stack[: stack.index(PATIENT)]
            if any(item not in layout.under_stackable for item in below):
                raise InconsistentState(f"{below} cannot lie under the patient")
    if placed != Counter(layout.items):
        raise InconsistentState(f"item multiset {dict(placed)} differs from layout")
    for held in state.holding:
        if held in layout.immovable:
            raise InconsistentState(f"{held} is immovable")
    if world.energy is not None:
        for e in state.energy:
            if not 0 <= e <= world.energy.e_max:
                raise InconsistentState(f"energy {e} outside [0, {world.energy.e_max}]")


def patient_station(state: WorldState) -> Optional[str]:
    for st, stack in state.stacks.items():
        if PATIENT in stack:
            return st
    return None


def items_under_patient(state: WorldState) -> tuple[str, ...]:
    st = patient_station(state)
    if st is None:
        return ()
    stack = state.stacks[st]
    return stack[: stack.index(PATIENT)]


def items_on_patient(state: WorldState) -> tuple[str, ...]:
    st = patient_station(state)
    if st is None:
        return ()
    stack = state.stacks[st]
    return stack[stack.index(PATIENT) + 1:]


def _treatment_ready(state: WorldState, agent: int, kind: ActionKind, world: World) -> bool:
    layout = world.layout
    if state.agent_station[agent] not in layout.treatment_stations:
        return False
    if patient_station(state) is None:
        return False
    if kind is ActionKind.COMPRESS_CHEST:
        if CPR_BOARD not in items_under_patient(state):
            return False
    elif layout.attachments.get(kind) not in items_on_patient(state):
        return False
    if skill_of(world.skills[agent], TREATMENT_SUBTASK[kind]) <= 0:
        return False
    if world.energy is not None and world.energy.cost_of(kind) > state.energy[agent]:
        return False
    return True


def _locked(stack: tuple[str, ...], layout: Layout) -> bool:
    """Top item is a treatment attachment sitting on the patient and cannot come off."""
    if PATIENT not in stack:
        return False
    return stack.index(PATIENT) < len(stack) - 1 and stack[-1] in layout.attachments.values()


def legal_actions(state: WorldState, agent: int, world: World) -> set[Action]:
    if state.in_progress[agent] is not None:
        # busy agents may only keep going
        return {NOOP}
    layout = world.layout
    here = state.agent_station[agent]
    occupied = {s for j, s in enumerate(state.agent_station) if j != agent}
    legal = {NOOP}
    for st in layout.neighbours(here):
        if st not in occupied:
            legal.add(Action(ActionKind.MOVE, st))
    stack = state.stacks[here]
    hand = state.holding[agent]
    if hand is None:
        if len(stack) == 1 and stack[0] not in layout.immovable:
            legal.add(Action(ActionKind.PICK_UP))
        if (len(stack) >= 2 and stack[-1] not in layout.immovable
                and not _locked(stack, layout)):
            legal.add(Action(ActionKind.UNSTACK))
    else:
        if not stack:
            legal.add(Action(ActionKind.PLACE))
        else:
            legal.add(Action(ActionKind.STACK))
            if hand in layout.under_stackable:
                legal.add(Action(ActionKind.STACK_UNDER))
    for kind in TREATMENTS:
        if _treatment_ready(state, agent, kind, world):
            legal.add(Action(kind))
    return legal


def step(
    state: WorldState, joint_action: Sequence[Action], world: World
) -> tuple[WorldState, tuple[bool, ...]]:
    """Apply one joint action and advance the clock by a tick.

    Agents act in ascending index order against the partially updated state, so
    when two actions conflict the lower index wins and the other is coerced to
    a no-op. Returns the successor state and whether each agent's submitted
    action took effect.
    """
    check_consistency(state, world)
    n = world.n_agents
    if len(joint_action) != n:
        raise ValueError(f"expected {n} actions, got {len(joint_action)}")
    energy_params = world.energy
    stations = list(state.agent_station)
    holding = list(state.holding)
    stacks = dict(state.stacks)
    energy = list(state.energy)
    in_progress = list(state.in_progress)
    flags = state.patient
    executed = [False] * n
    events: list[Event] = []

    def finish(agent: int, kind: ActionKind) -> None:
        nonlocal flags
        if kind is ActionKind.COMPRESS_CHEST:
            done = flags.compressions_done + 1
            flags = replace(
                flags,
                compressions_done=done,
                chest_compressed=flags.chest_compressed or done >= world.n_compressions,
            )
        elif kind is ActionKind.GIVE_RESCUE_BREATHS:
            flags = replace(flags, rescue_breathed=True)
        elif kind is ActionKind.GIVE_SHOCK:
            flags = replace(flags, shocked=True)
        elif kind is ActionKind.GIVE_MEDICINE:
            flags = replace(flags, medicated=True)
        events.append(Event(agent, kind))

    for i in range(n):
        costed_tick = False
        busy = in_progress[i]
        if busy is not None:
            action, remaining = busy
            remaining -= 1
            in_progress[i] = None if remaining == 0 else (action, remaining)
            if remaining == 0:
                finish(i, action.kind)
            executed[i] = True
            costed_tick = energy_params is not None and energy_params.cost_of(action.kind) > 0
        else:
            action = joint_action[i]
            current = WorldState(
                agent_station=tuple(stations),
                holding=tuple(holding),
                stacks=stacks,
                patient=flags,
                energy=tuple(energy),
                in_progress=tuple(in_progress),
                tick=state.tick,
            )
            if action not in legal_actions(current, i, world):
                action = NOOP
            else:
                executed[i] = True
            kind = action.kind
            here = stations[i]
            if kind is ActionKind.MOVE:
                stations[i] = action.target
            elif kind is ActionKind.PICK_UP or kind is ActionKind.UNSTACK:
                holding[i] = stacks[here][-1]
                stacks[here] = stacks[here][:-1]
                events.append(Event(i, kind, holding[i]))
            elif kind is ActionKind.PLACE or kind is ActionKind.STACK:
                stacks[here] = stacks[here] + (holding[i],)
                events.append(Event(i, kind, holding[i]))
                holding[i] = None
            elif kind is ActionKind.STACK_UNDER:
                stacks[here] = (holding[i],) + stacks[here]
                events.append(Event(i, kind, holding[i]))
                holding[i] = None
            elif kind in TREATMENTS:
                if energy_params is not None and energy_params.cost_of(kind) > 0:
                    energy[i] = energy_after(energy[i], kind, energy_params)
                    costed_tick = True
                duration = action_duration(kind, skill_of(world.skills[i], TREATMENT_SUBTASK[kind]))
                if duration == 1:
                    finish(i, kind)
                else:
                    in_progress[i] = (action, duration - 1)
        if energy_params is not None and not costed_tick:
            energy[i] = energy_after(energy[i], ActionKind.NOOP, energy_params)

    new_state = WorldState(
        agent_station=tuple(stations),
        holding=tuple(holding),
        stacks=stacks,
        patient=flags,
        energy=tuple(energy),
        in_progress=tuple(in_progress),
        tick=state.tick + 1,
        last_events=tuple(events),
    )
    return new_state, tuple(executed)


def render_text(state: WorldState) -> str:
    """Line-oriented dump of a state; equal states give equal strings."""
    lines = []
    for st, stack in state.stacks.items():
        lines.append(f"station {st}: [{', '.join(stack)}]")
    for i, st in enumerate(state.agent_station):
        busy = state.in_progress[i]
        busy_txt = "-" if busy is None else f"{busy[0]}({busy[1]})"
        lines.append(
            f"agent {i} @ {st} holding={state.holding[i] or '-'} "
            f"energy={state.energy[i]} busy={busy_txt}"
        )
    p = state.patient
    lines.append(
        f"patient: compressed={int(p.chest_compressed)} breathed={int(p.rescue_breathed)} "
        f"shocked={int(p.shocked)} medicated={int(p.medicated)} "
        f"compressions={p.compressions_done}"
    )
    return "\n".join(lines) + "\n"


__all__ = [
    "ActionKind",
    "Action",
    "NOOP",
    "MANIPULATIONS",
    "CANONICAL_STATIONS",
    "CANONICAL_ITEMS",
    "Layout",
    "World",
    "WorldState",
    "PatientFlags",
    "Event",
    "initial_state",
    "check_consistency",
    "legal_actions",
    "step",
    "render_text",
    "patient_station",
    "items_on_patient",
    "items_under_patient",
]
