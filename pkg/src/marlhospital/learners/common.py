from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from ..errors import NaNDetected

NEG_INF = -1e9


class MLP(nn.Module):
    """Two hidden layers with ReLU, shared by all agents (agent id appended to the input)."""

    def __init__(self, in_dim: int, out_dim: int, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
            nn.Linear(hidden, out_dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class QNetwork(MLP):
    def __init__(self, obs_dim: int, n_agents: int, n_actions: int, hidden: int = 64):
        super().__init__(obs_dim + n_agents, n_actions, hidden)
        self.n_agents = n_agents
        self.n_actions = n_actions


def with_agent_ids(obs: torch.Tensor) -> torch.Tensor:
    """Append a one-hot agent id to ``(..., n_agents, d)`` observations."""
    n = obs.shape[-2]
    eye = torch.eye(n, dtype=obs.dtype)
    eye = eye.expand(*obs.shape[:-2], n, n)
    return torch.cat([obs, eye], dim=-1)


def masked_argmax(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Greedy choice over legal entries; ties go to the lowest index."""
    masked = np.where(mask, values, -np.inf)
    return np.argmax(masked, axis=-1)


def epsilon_greedy(
    q: np.ndarray, masks: np.ndarray, epsilon: float, rng: np.random.Generator
) -> np.ndarray:
    greedy = masked_argmax(q, masks)
    if epsilon <= 0:
        return greedy
    out = greedy.copy()
    explore = rng.random(len(greedy)) < epsilon
    for i in np.flatnonzero(explore):
        legal = np.flatnonzero(masks[i])
        out[i] = legal[rng.integers(len(legal))]
    return out


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw per row; zero-probability entries are never returned."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=-1)
    # guard against u landing on the float tail
    for i, k in enumerate(idx):
        if k >= probs.shape[1] or probs[i, k] == 0:
            idx[i] = int(np.flatnonzero(probs[i] > 0)[-1])
    return idx


@dataclass
class LinearSchedule:
    start: float
    end: float
    steps: int

    def __call__(self, t: int) -> float:
        if self.steps <= 0 or t >= self.steps:
            return self.end
        return self.start + (self.end - self.start) * t / self.steps


class ReplayBuffer:
    """FIFO transition store with seeded uniform sampling."""

    def __init__(self, capacity: int, n_agents: int, obs_dim: int, n_actions: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, n_agents, obs_dim), dtype=np.uint8)
        self.next_obs = np.zeros_like(self.obs)
        self.actions = np.zeros((capacity, n_agents), dtype=np.int64)
        self.rewards = np.zeros((capacity, n_agents), dtype=np.float32)
        self.terminated = np.zeros(capacity, dtype=np.float32)
        self.masks = np.zeros((capacity, n_agents, n_actions), dtype=bool)
        self.next_masks = np.zeros_like(self.masks)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, masks, actions, rewards, next_obs, terminated, next_masks) -> None:
        i = self.pos
        self.obs[i] = obs
        self.masks[i] = masks
        self.actions[i] = actions
        self.rewards[i] = rewards
        self.next_obs[i] = next_obs
        self.terminated[i] = float(terminated)
        self.next_masks[i] = next_masks
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, torch.Tensor]:
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": torch.as_tensor(self.obs[idx], dtype=torch.float32),
            "masks": torch.as_tensor(self.masks[idx]),
            "actions": torch.as_tensor(self.actions[idx]),
            "rewards": torch.as_tensor(self.rewards[idx]),
            "next_obs": torch.as_tensor(self.next_obs[idx], dtype=torch.float32),
            "terminated": torch.as_tensor(self.terminated[idx]),
            "next_masks": torch.as_tensor(self.next_masks[idx]),
        }


def check_finite(loss: torch.Tensor, **diagnostics) -> None:
    value = float(loss.detach())
    if not math.isfinite(value):
        details = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        raise NaNDetected(f"non-finite loss {value}; {details}")


def hard_update(target: nn.Module, source: nn.Module) -> None:
    target.load_state_dict(source.state_dict())


def soft_update(target: nn.Module, source: nn.Module, tau: float) -> None:
    with torch.no_grad():
        for t, s in zip(target.parameters(), source.parameters()):
            t.mul_(1.0 - tau).add_(s, alpha=tau)


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


@contextmanager
def seeded_init(seed: Optional[int]):
    """Seed torch's global generator for parameter init, restoring it afterwards."""
    with torch.random.fork_rng(devices=[]):
        if seed is not None:
            torch.manual_seed(seed)
        yield
