"""Workload and skill-alignment disparity metrics, reward shaping and baselines.

Sign conventions: every disparity is non-negative and 0 means fair. The
composite weight ``alpha`` multiplies the workload (Gini) term, so ``alpha=1``
is workload-only and ``alpha=0`` is alignment-only.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import UnknownSubtask
from .skills import MANIPULATION, TREATMENT_SUBTASKS, SkillProfile, skill_of

FAIRNESS_MODES = ("fairskill", "workload_only", "fen", "none")


class DegenerateDenominator(RuntimeWarning):
    pass


def gini_l1(counts: Sequence[float]) -> float:
    """Gini index of per-agent workloads; 0 for an all-zero vector."""
    n = len(counts)
    if n == 0:
        raise ValueError("need at least one agent")
    total = float(sum(counts))
    if total == 0:
        return 0.0
    xs = sorted(float(c) for c in counts)
    # sum_i sum_j |x_i - x_j| == 2 * sum_k (2k - n + 1) x_(k) over the sorted vector
    pair_sum = 2.0 * sum((2 * k - n + 1) * x for k, x in enumerate(xs))
    return pair_sum / (2.0 * n * total)


def composite_l3(l1: float, l2: float, alpha: float) -> float:
    if alpha == 1.0:
        return l1
    if alpha == 0.0:
        return l2
    return alpha * l1 + (1.0 - alpha) * l2


def shaped_reward(base: float, l3: float, lam: float) -> float:
    if lam == 0.0:
        return base
    return base - lam * l3


def fen_penalty(counts: Sequence[float]) -> list[float]:
    """Per-agent deviation from mean utilization, scaled by max(mean, 1)."""
    n = len(counts)
    if n == 0:
        raise ValueError("need at least one agent")
    mean = sum(counts) / n
    scale = max(mean, 1.0)
    return [abs(c - mean) / scale for c in counts]


def contribution_pct(counts: Sequence[float]) -> list[float]:
    total = sum(counts)
    if total == 0:
        return [0.0] * len(counts)
    return [100.0 * c / total for c in counts]


def contribution_range(pcts: Sequence[float]) -> float:
    return max(pcts) - min(pcts) if pcts else 0.0


@dataclass
class FairnessLedger:
    """Running per-episode record of who completed which subtask."""

    skills: tuple[SkillProfile, ...]
    alpha: float = 0.7
    lam: float = 0.0
    counts: list[int] = field(init=False)
    executed: list[tuple[str, int]] = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        self.counts = [0] * len(self.skills)
        self.executed = []
        self._domain = {MANIPULATION, *TREATMENT_SUBTASKS}
        for p in self.skills:
            self._domain.update(p)
        self._aligned = 0.0
        self._attainable = 0.0

    @property
    def n_agents(self) -> int:
        return len(self.skills)

    @property
    def m(self) -> int:
        return len(self.executed)

    def record(self, subtask: str, executor: int) -> "FairnessLedger":
        if subtask not in self._domain:
            raise UnknownSubtask(subtask)
        if not 0 <= executor < self.n_agents:
            raise IndexError(f"executor {executor} out of range")
        self.counts[executor] += 1
        self.executed.append((subtask, executor))
        levels = [skill_of(p, subtask) for p in self.skills]
        self._aligned += levels[executor]
        self._attainable += max(levels)
        return self

    def l1(self) -> float:
        return gini_l1(self.counts)

    def l2(self) -> float:
        return skill_alignment_l2(self)

    def l3(self) -> float:
        return composite_l3(self.l1(), self.l2(), self.alpha)

    def reset(self) -> None:
        self.counts = [0] * self.n_agents
        self.executed = []
        self._aligned = 0.0
        self._attainable = 0.0


def record_subtask(ledger: FairnessLedger, subtask: str, executor: int) -> FairnessLedger:
    return ledger.record(subtask, executor)


def skill_alignment_l2(ledger: FairnessLedger) -> float:
    """One minus executors' skill sum over the best attainable skill sum.

    An empty ledger scores 0. If subtasks were executed but nobody had any skill
    for them, the ratio is undefined; that case also scores 0 and warns.
    """
    if ledger.m == 0:
        return 0.0
    aligned = ledger._aligned
    attainable = ledger._attainable
    if attainable == 0:
        warnings.warn(
            "no agent holds any skill for the executed subtasks; L2 set to 0",
            DegenerateDenominator,
            stacklevel=2,
        )
        return 0.0
    return 1.0 - aligned / attainable


def shaped_team_rewards(
    base: float, ledger: FairnessLedger, mode: str
) -> list[float]:
    """Per-agent shaped rewards for one tick under the selected fairness mode."""
    n = ledger.n_agents
    lam = ledger.lam
    if mode == "none" or lam == 0.0:
        return [base] * n
    if mode == "fairskill":
        r = shaped_reward(base, ledger.l3(), lam)
        return [r] * n
    if mode == "workload_only":
        r = shaped_reward(base, ledger.l1(), lam)
        return [r] * n
    if mode == "fen":
        return [shaped_reward(base, p, lam) for p in fen_penalty(ledger.counts)]
    raise ValueError(f"unknown fairness mode {mode!r}; expected one of {FAIRNESS_MODES}")


@dataclass(frozen=True)
class FairnessReport:
    l1: float
    l2: float
    l3: float
    contribution_pct: tuple[float, ...]
    range: float
    success_rate: float
    episodes: int = 0
    window: Optional[int] = None
