"""Episode-level wrapper: integer actions in, observations, masks and shaped rewards out."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .actions import TREATMENT_SUBTASK, ActionKind
from .core import World, WorldState, initial_state, legal_actions, step
from .fairness import FairnessLedger, shaped_team_rewards
from .goals import GoalSpec, completed_steps, heuristic, is_success
from .observations import joint_encode, obs_length
from .skills import MANIPULATION

_PLACING = (ActionKind.STACK, ActionKind.STACK_UNDER, ActionKind.PLACE)


_FLAG_TREATMENT = {
    "chest_compressed": ActionKind.COMPRESS_CHEST,
    "rescue_breathed": ActionKind.GIVE_RESCUE_BREATHS,
    "shocked": ActionKind.GIVE_SHOCK,
    "medicated": ActionKind.GIVE_MEDICINE,
}


def goal_treatments(goal: GoalSpec) -> frozenset:
    """Treatment kinds whose completions advance some step of ``goal``."""
    kinds = set()
    for s in goal.steps:
        if s.kind == "compressions_at_least":
            kinds.add(ActionKind.COMPRESS_CHEST)
        elif s.kind == "patient_flag":
            kinds.add(_FLAG_TREATMENT[s.flag])
    return frozenset(kinds)


@dataclass
class StepResult:
    obs: np.ndarray
    rewards: np.ndarray  # shaped, per agent
    base_reward: float
    terminated: bool
    truncated: bool
    executed: tuple[bool, ...]
    recorded: list[tuple[str, int]] = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class HospitalEnv:
    def __init__(
        self,
        world: World,
        goal: GoalSpec,
        fairness_mode: str = "none",
        alpha: float = 0.7,
        lam: float = 0.0,
        randomize_start: bool = False,
        hide_others: bool = False,
        seed: Optional[int] = None,
    ):
        if world.n_compressions != goal.n_compressions:
            raise ValueError("world and goal disagree on the number of compressions")
        self.world = world
        self.goal = goal
        self.fairness_mode = fairness_mode
        self.randomize_start = randomize_start
        self.hide_others = hide_others
        self.rng = np.random.default_rng(seed)
        self.actions = world.actions
        self.action_index = {a: i for i, a in enumerate(self.actions)}
        self.ledger = FairnessLedger(world.skills, alpha=alpha, lam=lam)
        self.goal_treatments = goal_treatments(goal)
        self.state: Optional[WorldState] = None
        self._legal: list[set] = []
        self.episode_return = 0.0
        self.episode_base_return = 0.0

    @property
    def n_agents(self) -> int:
        return self.world.n_agents

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def obs_dim(self) -> int:
        return obs_length(len(self.world.layout.stations), self.n_agents)

    def sample_start(self) -> tuple[str, ...]:
        stations = self.world.layout.stations
        picks = self.rng.choice(len(stations), size=self.n_agents, replace=False)
        return tuple(stations[int(k)] for k in picks)

    def reset(self, start: Optional[Sequence[str]] = None) -> np.ndarray:
        if start is None and self.randomize_start:
            start = self.sample_start()
        self.state = initial_state(self.world, start)
        self.ledger.reset()
        self.episode_return = 0.0
        self.episode_base_return = 0.0
        self._refresh_legal()
        return self.observe()

    def _refresh_legal(self) -> None:
        self._legal = [legal_actions(self.state, i, self.world) for i in range(self.n_agents)]

    def observe(self) -> np.ndarray:
        return joint_encode(self.state, self.world, self._legal, self.hide_others)

    def masks(self) -> np.ndarray:
        m = np.zeros((self.n_agents, self.n_actions), dtype=bool)
        for i, legal in enumerate(self._legal):
            for a in legal:
                m[i, self.action_index[a]] = True
        return m

    def global_state(self, obs: np.ndarray) -> np.ndarray:
        return obs.reshape(-1)

    def step(self, action_ids: Sequence[int]) -> StepResult:
        prev = self.state
        joint = [self.actions[int(a)] for a in action_ids]
        nxt, executed = step(prev, joint, self.world)
        self.state = nxt
        recorded = self._record_subtasks(prev, nxt)
        base = float(heuristic(nxt, self.goal) - heuristic(prev, self.goal))
        rewards = np.asarray(
            shaped_team_rewards(base, self.ledger, self.fairness_mode), dtype=np.float64
        )
        terminated = is_success(nxt, self.goal)
        truncated = not terminated and nxt.tick >= self.goal.max_episode_ticks
        self.episode_return += float(rewards.mean())
        self.episode_base_return += base
        self._refresh_legal()
        return StepResult(self.observe(), rewards, base, terminated, truncated, executed, recorded)

    def _record_subtasks(self, prev: WorldState, nxt: WorldState) -> list[tuple[str, int]]:
        """Feed the ledger: every finished treatment the goal asks for, plus each
        placement goal step the first time its predicate becomes true (credited to
        the placing agent)."""
        recorded = []
        for ev in nxt.last_events:
            if ev.kind in self.goal_treatments:
                recorded.append((TREATMENT_SUBTASK[ev.kind], ev.agent))
        for pred in self.goal.steps:
            if pred.is_placement and not pred.holds(prev) and pred.holds(nxt):
                for ev in nxt.last_events:
                    if ev.kind in _PLACING and ev.item == pred.item:
                        recorded.append((MANIPULATION, ev.agent))
                        break
        for subtask, agent in recorded:
            self.ledger.record(subtask, agent)
        return recorded

    def progress(self) -> list[bool]:
        return completed_steps(self.state, self.goal)
