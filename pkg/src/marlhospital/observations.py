"""Boolean per-agent observation vectors.

Wire format (frozen, version ``ENCODING_VERSION``), one block after another:

* patient state, 4 bits: chest compressed, rescue breathed, treated (medicated), shocked
* agent locations, one one-hot over the stations per agent, in station order
* held items, one one-hot over ``HELD_ITEMS`` per agent (all zero when empty-handed)
* skill levels, per agent and per ``OBSERVED_SKILLS`` entry a one-hot over
  unskilled/beginner/expert
* available actions for the observing agent: treat patient, move to each
  station, move an item (pick up/place/stack/unstack), stack under

With the canonical six stations and three agents this is 58 bits per agent.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .actions import MANIPULATIONS, TREATMENTS, Action, ActionKind
from .core import World, WorldState, legal_actions
from .errors import NonCanonicalLayout
from .skills import BEGINNER, EXPERT, UNSKILLED, skill_of

ENCODING_VERSION = "obs-v1"
HELD_ITEMS = ("pump1", "cpr_board1", "patient1")
OBSERVED_SKILLS = ("compress_chest", "give_rescue_breaths")
SKILL_LEVELS = (UNSKILLED, BEGINNER, EXPERT)
N_PATIENT_BITS = 4


def obs_length(n_stations: int, n_agents: int) -> int:
    return (
        N_PATIENT_BITS
        + n_stations * n_agents
        + len(HELD_ITEMS) * n_agents
        + len(OBSERVED_SKILLS) * len(SKILL_LEVELS) * n_agents
        + (n_stations + 3)
    )


def require_canonical(world: World) -> None:
    if not world.layout.is_canonical:
        raise NonCanonicalLayout(
            "station/item sets differ from the canonical hospital layout; "
            f"observations use the generalized length {obs_length(len(world.layout.stations), world.n_agents)}"
        )


def encoding_info(world: World) -> dict:
    return {
        "version": ENCODING_VERSION,
        "canonical": world.layout.is_canonical,
        "length": obs_length(len(world.layout.stations), world.n_agents),
        "stations": list(world.layout.stations),
        "held_items": list(HELD_ITEMS),
        "observed_skills": list(OBSERVED_SKILLS),
    }


def _shared_blocks(state: WorldState, world: World) -> np.ndarray:
    stations = world.layout.stations
    n = world.n_agents
    p = state.patient
    patient = [p.chest_compressed, p.rescue_breathed, p.medicated, p.shocked]
    loc = np.zeros((n, len(stations)), dtype=np.uint8)
    held = np.zeros((n, len(HELD_ITEMS)), dtype=np.uint8)
    skills = np.zeros((n, len(OBSERVED_SKILLS), len(SKILL_LEVELS)), dtype=np.uint8)
    for j in range(n):
        loc[j, stations.index(state.agent_station[j])] = 1
        item = state.holding[j]
        if item in HELD_ITEMS:
            held[j, HELD_ITEMS.index(item)] = 1
        for k, name in enumerate(OBSERVED_SKILLS):
            skills[j, k, SKILL_LEVELS.index(skill_of(world.skills[j], name))] = 1
    return np.asarray(patient, dtype=np.uint8), loc, held, skills


def availability_bits(legal: set[Action], stations: Sequence[str]) -> np.ndarray:
    bits = np.zeros(len(stations) + 3, dtype=np.uint8)
    for a in legal:
        if a.kind in TREATMENTS:
            bits[0] = 1
        elif a.kind is ActionKind.MOVE:
            bits[1 + stations.index(a.target)] = 1
        elif a.kind is ActionKind.STACK_UNDER:
            bits[-1] = 1
        elif a.kind in MANIPULATIONS:
            bits[-2] = 1
    return bits


def _assemble(shared, agent: int, avail: np.ndarray, hide_others: bool) -> np.ndarray:
    patient, loc, held, skills = shared
    if hide_others:
        keep = np.zeros((loc.shape[0], 1), dtype=np.uint8)
        keep[agent] = 1
        loc, held = loc * keep, held * keep
        skills = skills * keep[:, :, None]
    return np.concatenate([patient, loc.ravel(), held.ravel(), skills.ravel(), avail])


def encode(
    state: WorldState,
    agent: int,
    world: World,
    legal: Optional[set[Action]] = None,
    hide_others: bool = False,
) -> np.ndarray:
    if legal is None:
        legal = legal_actions(state, agent, world)
    avail = availability_bits(legal, world.layout.stations)
    return _assemble(_shared_blocks(state, world), agent, avail, hide_others)


def joint_encode(
    state: WorldState,
    world: World,
    legal: Optional[Sequence[set[Action]]] = None,
    hide_others: bool = False,
) -> np.ndarray:
    """Stack of per-agent vectors, shape ``(n_agents, obs_length)``."""
    if legal is None:
        legal = [legal_actions(state, i, world) for i in range(world.n_agents)]
    shared = _shared_blocks(state, world)
    return np.stack(
        [
            _assemble(shared, i, availability_bits(legal[i], world.layout.stations), hide_others)
            for i in range(world.n_agents)
        ]
    )
