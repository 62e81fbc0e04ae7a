"""Fairness-aware multi-agent RL in a simulated hospital resuscitation task."""
__version__ = "0.1.0"

from .config import ExperimentConfig, build_env, load_config
from .core import World, WorldState, legal_actions, step
from .environment import HospitalEnv
from .fairness import FairnessLedger, composite_l3, gini_l1, shaped_reward

__all__ = [
    "ExperimentConfig",
    "FairnessLedger",
    "HospitalEnv",
    "World",
    "WorldState",
    "build_env",
    "composite_l3",
    "gini_l1",
    "legal_actions",
    "load_config",
    "shaped_reward",
    "step",
]
