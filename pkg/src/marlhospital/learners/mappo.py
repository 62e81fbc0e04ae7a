"""MAPPO: shared actor on local observations, centralised critic on the joint observation."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .common import (
    MLP,
    NEG_INF,
    check_finite,
    masked_argmax,
    restore_rng,
    rng_state,
    sample_categorical,
    seeded_init,
    soft_update,
    with_agent_ids,
)


@dataclass
class MAPPOHyper:
    lr: float = 0.002
    gamma: float = 0.9
    gae_lambda: float = 0.95
    hidden: int = 64
    clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    target_tau: float = 0.05
    reward_standardisation: bool = True
    rollout_len: int = 400
    epochs: int = 4
    minibatches: int = 4
    grad_clip: float = 10.0


def masked_log_probs(logits: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    return torch.log_softmax(logits.masked_fill(~masks, NEG_INF), dim=-1)


def clipped_surrogate(
    log_probs: torch.Tensor, old_log_probs: torch.Tensor, advantages: torch.Tensor, clip: float
) -> torch.Tensor:
    """PPO policy loss (to minimise): minus the mean of the pessimistic clipped objective."""
    ratio = torch.exp(log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * advantages
    return -torch.min(unclipped, clipped).mean()


def masked_entropy(log_probs: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    p = log_probs.exp()
    return -(p * log_probs.masked_fill(~masks, 0.0)).sum(dim=-1)


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    next_values: np.ndarray,
    terminated: np.ndarray,
    episode_end: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimates along the time axis (axis 0).

    ``terminated`` cuts bootstrapping; ``episode_end`` (terminal or truncated)
    cuts the advantage recursion so episodes do not leak into each other.
    """
    adv = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0])
    for t in range(len(rewards) - 1, -1, -1):
        nonterminal = 1.0 - terminated[t]
        delta = rewards[t] + gamma * nonterminal * next_values[t] - values[t]
        running = delta + gamma * lam * (1.0 - episode_end[t]) * running
        adv[t] = running
    return adv, adv + values


class RunningMeanStd:
    def __init__(self):
        self.mean = 0.0
        self.var = 1.0
        self.count = 1e-4

    def update(self, x: np.ndarray) -> None:
        batch_mean, batch_var, n = float(x.mean()), float(x.var()), x.size
        delta = batch_mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        m2 = self.var * self.count + batch_var * n + delta**2 * self.count * n / total
        self.var = m2 / total
        self.count = total

    def normalise(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / np.sqrt(self.var + 1e-8)


class MAPPOLearner:
    def __init__(
        self,
        n_agents: int,
        obs_dim: int,
        n_actions: int,
        hyper: Optional[MAPPOHyper] = None,
        seed: Optional[int] = None,
    ):
        self.algo = "mappo"
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.hyper = hyper or MAPPOHyper()
        h = self.hyper
        with seeded_init(seed):
            self.actor = MLP(obs_dim + n_agents, n_actions, h.hidden)
            self.critic = MLP(n_agents * obs_dim + n_agents, 1, h.hidden)
        self.target_critic = copy.deepcopy(self.critic)
        self.params = list(self.actor.parameters()) + list(self.critic.parameters())
        self.optimizer = torch.optim.Adam(self.params, lr=h.lr)
        self.rng = np.random.default_rng(seed)
        self.reward_stats = RunningMeanStd()
        self.rollout: list[tuple] = []
        self.t = 0
        self.updates = 0
        self.last_loss = float("nan")

    # -- acting ---------------------------------------------------------------
    def policy_log_probs(self, obs: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
        return masked_log_probs(self.actor(with_agent_ids(obs)), masks)

    def act(self, obs: np.ndarray, masks: np.ndarray, mode: str = "train") -> np.ndarray:
        with torch.no_grad():
            logp = self.policy_log_probs(
                torch.as_tensor(obs, dtype=torch.float32), torch.as_tensor(masks)
            )
        if mode == "train":
            probs = np.exp(logp.double().numpy())
            probs[~masks] = 0.0
            actions = sample_categorical(probs, self.rng)
        else:
            actions = masked_argmax(logp.numpy(), masks)
        assert masks[np.arange(self.n_agents), actions].all(), "selected a masked action"
        return actions

    def values(self, critic: nn.Module, obs: torch.Tensor) -> torch.Tensor:
        """Per-agent values ``(T, n)`` from the joint observation plus an agent id."""
        t = obs.shape[0]
        state = obs.reshape(t, 1, -1).expand(t, self.n_agents, -1)
        eye = torch.eye(self.n_agents).expand(t, -1, -1)
        return critic(torch.cat([state, eye], dim=-1)).squeeze(-1)

    # -- learning -------------------------------------------------------------
    def observe(
        self, obs, masks, actions, rewards, next_obs, terminated, next_masks, truncated=False
    ) -> None:
        self.rollout.append(
            (obs, masks, actions, rewards, next_obs, float(terminated), float(terminated or truncated))
        )
        self.t += 1
        if len(self.rollout) >= self.hyper.rollout_len:
            self.update(self.build_batch())
            self.rollout.clear()

    def build_batch(self) -> dict[str, torch.Tensor]:
        h = self.hyper
        obs, masks, actions, rewards, next_obs, terminated, ends = map(np.asarray, zip(*self.rollout))
        rewards = rewards.astype(np.float64)
        if h.reward_standardisation:
            self.reward_stats.update(rewards)
            rewards = self.reward_stats.normalise(rewards)
        obs_t = torch.as_tensor(obs, dtype=torch.float32)
        masks_t = torch.as_tensor(masks)
        actions_t = torch.as_tensor(actions, dtype=torch.int64)
        with torch.no_grad():
            old_logp = self.policy_log_probs(obs_t, masks_t).gather(-1, actions_t.unsqueeze(-1)).squeeze(-1)
            v = self.values(self.target_critic, obs_t).double().numpy()
            v_next = self.values(self.target_critic, torch.as_tensor(next_obs, dtype=torch.float32)).double().numpy()
        adv, returns = gae(
            rewards, v, v_next, terminated[:, None], ends[:, None], h.gamma, h.gae_lambda
        )
        return {
            "obs": obs_t,
            "masks": masks_t,
            "actions": actions_t,
            "old_log_probs": old_logp,
            "advantages": torch.as_tensor(adv, dtype=torch.float32),
            "returns": torch.as_tensor(returns, dtype=torch.float32),
        }

    def loss(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        h = self.hyper
        logp_all = self.policy_log_probs(batch["obs"], batch["masks"])
        logp = logp_all.gather(-1, batch["actions"].unsqueeze(-1)).squeeze(-1)
        adv = batch["advantages"]
        if adv.numel() > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        policy_loss = clipped_surrogate(logp, batch["old_log_probs"], adv, h.clip)
        entropy = masked_entropy(logp_all, batch["masks"]).mean()
        value_loss = F.mse_loss(self.values(self.critic, batch["obs"]), batch["returns"])
        return policy_loss + h.value_coef * value_loss - h.entropy_coef * entropy

    def update(self, batch: dict[str, torch.Tensor]) -> float:
        h = self.hyper
        size = batch["obs"].shape[0]
        mb = max(1, size // h.minibatches)
        losses = []
        for _ in range(h.epochs):
            order = self.rng.permutation(size)
            for start in range(0, size, mb):
                idx = torch.as_tensor(order[start:start + mb])
                loss = self.loss({k: v[idx] for k, v in batch.items()})
                check_finite(loss, algo="mappo", update=self.updates, t=self.t)
                self.optimizer.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(self.params, h.grad_clip)
                self.optimizer.step()
                losses.append(float(loss.detach()))
        soft_update(self.target_critic, self.critic, h.target_tau)
        self.updates += 1
        self.last_loss = float(np.mean(losses))
        return self.last_loss

    # -- persistence ----------------------------------------------------------
    def state_dict(self) -> dict:
        # detached copies: optimizer state tensors would otherwise be shared on reload
        return copy.deepcopy({
            "algo": self.algo,
            "hyper": asdict(self.hyper),
            "actor": self.actor.state_dict(),
            "critic": self.critic.state_dict(),
            "target_critic": self.target_critic.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "reward_stats": vars(self.reward_stats).copy(),
            "t": self.t,
            "updates": self.updates,
            "rng": rng_state(self.rng),
        })

    def load_state_dict(self, state: dict) -> None:
        if state["algo"] != self.algo:
            raise ValueError(f"checkpoint is for {state['algo']}, learner is mappo")
        self.actor.load_state_dict(state["actor"])
        self.critic.load_state_dict(state["critic"])
        self.target_critic.load_state_dict(state["target_critic"])
        self.optimizer.load_state_dict(state["optimizer"])
        vars(self.reward_stats).update(state["reward_stats"])
        self.t = state["t"]
        self.updates = state["updates"]
        self.rng = restore_rng(state["rng"])
