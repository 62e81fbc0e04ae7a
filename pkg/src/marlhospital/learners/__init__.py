"""Desk-scale MARL learners sharing one acting/observing interface."""
from __future__ import annotations

from typing import Optional, Union

from .mappo import MAPPOHyper, MAPPOLearner
from .value import VALUE_ALGOS, QMixer, ValueHyper, ValueLearner

ALGORITHMS = VALUE_ALGOS + ("mappo",)

Learner = Union[ValueLearner, MAPPOLearner]


def make_learner(
    algo: str,
    n_agents: int,
    obs_dim: int,
    n_actions: int,
    hyper: Optional[dict] = None,
    seed: Optional[int] = None,
) -> Learner:
    hyper = dict(hyper or {})
    if algo == "mappo":
        return MAPPOLearner(n_agents, obs_dim, n_actions, MAPPOHyper(**hyper), seed)
    if algo in VALUE_ALGOS:
        return ValueLearner(algo, n_agents, obs_dim, n_actions, ValueHyper(**hyper), seed)
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")


__all__ = [
    "ALGORITHMS",
    "Learner",
    "MAPPOHyper",
    "MAPPOLearner",
    "QMixer",
    "ValueHyper",
    "ValueLearner",
    "make_learner",
]
