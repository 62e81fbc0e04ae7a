"""IQL, VDN and QMIX over a parameter-shared feed-forward Q network."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import MonotonicityViolation
from .common import (
    NEG_INF,
    LinearSchedule,
    QNetwork,
    ReplayBuffer,
    check_finite,
    epsilon_greedy,
    hard_update,
    restore_rng,
    rng_state,
    seeded_init,
    with_agent_ids,
)

VALUE_ALGOS = ("iql", "vdn", "qmix")


@dataclass
class ValueHyper:
    lr: float = 0.0005
    gamma: float = 0.9
    hidden: int = 64
    batch_size: int = 32
    buffer_size: int = 50_000
    target_update: int = 1_000  # learner updates between hard target syncs
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_steps: int = 10_000
    eval_epsilon: float = 0.0
    update_every: int = 1
    learning_starts: int = 1_000
    grad_clip: float = 10.0
    mixer_embed: int = 32
    monotonicity_probes: int = 16
    double_q: bool = True


class QMixer(nn.Module):
    """Monotonic mixer: hypernetworks map the global state to non-negative weights."""

    def __init__(self, n_agents: int, state_dim: int, embed: int = 32):
        super().__init__()
        self.n_agents = n_agents
        self.embed = embed
        self.hyper_w1 = nn.Linear(state_dim, n_agents * embed)
        self.hyper_b1 = nn.Linear(state_dim, embed)
        self.hyper_w2 = nn.Linear(state_dim, embed)
        self.hyper_b2 = nn.Sequential(nn.Linear(state_dim, embed), nn.ReLU(), nn.Linear(embed, 1))

    def forward(self, agent_qs: torch.Tensor, states: torch.Tensor) -> torch.Tensor:
        b = agent_qs.shape[0]
        w1 = torch.abs(self.hyper_w1(states)).view(b, self.n_agents, self.embed)
        b1 = self.hyper_b1(states).view(b, 1, self.embed)
        hidden = F.elu(torch.bmm(agent_qs.view(b, 1, self.n_agents), w1) + b1)
        w2 = torch.abs(self.hyper_w2(states)).view(b, self.embed, 1)
        b2 = self.hyper_b2(states).view(b, 1, 1)
        return (torch.bmm(hidden, w2) + b2).view(b)


def monotonicity_probe(
    mixer: QMixer, states: torch.Tensor, rng: np.random.Generator, scale: float = 5.0
) -> float:
    """Smallest dQ_tot/dQ_i over random agent-Q probes at the given states."""
    qs = torch.as_tensor(
        rng.normal(0.0, scale, size=(states.shape[0], mixer.n_agents)), dtype=torch.float32
    ).requires_grad_(True)
    total = mixer(qs, states).sum()
    (grad,) = torch.autograd.grad(total, qs)
    return float(grad.min())


def _masked_max(q: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    return q.masked_fill(~masks, NEG_INF).max(dim=-1).values


class ValueLearner:
    """Off-policy learner; ``algo`` selects how per-agent Q values are combined."""

    def __init__(
        self,
        algo: str,
        n_agents: int,
        obs_dim: int,
        n_actions: int,
        hyper: Optional[ValueHyper] = None,
        seed: Optional[int] = None,
    ):
        if algo not in VALUE_ALGOS:
            raise ValueError(f"unknown value algorithm {algo!r}")
        self.algo = algo
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.hyper = hyper or ValueHyper()
        h = self.hyper
        with seeded_init(seed):
            self.net = QNetwork(obs_dim, n_agents, n_actions, h.hidden)
            self.mixer = (
                QMixer(n_agents, n_agents * obs_dim, h.mixer_embed) if algo == "qmix" else None
            )
        self.target_net = copy.deepcopy(self.net)
        self.target_mixer = copy.deepcopy(self.mixer)
        params = list(self.net.parameters())
        if self.mixer is not None:
            params += list(self.mixer.parameters())
        self.params = params
        self.optimizer = torch.optim.Adam(params, lr=h.lr)
        self.rng = np.random.default_rng(seed)
        self.buffer = ReplayBuffer(h.buffer_size, n_agents, obs_dim, n_actions)
        self.epsilon = LinearSchedule(h.eps_start, h.eps_end, h.eps_anneal_steps)
        self.t = 0
        self.updates = 0
        self.last_loss = float("nan")
        self.min_probe_grad = float("inf")
        self.probes_run = 0

    # -- acting ---------------------------------------------------------------
    def q_values(self, obs: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            x = with_agent_ids(torch.as_tensor(obs, dtype=torch.float32))
            return self.net(x).numpy()

    def act(self, obs: np.ndarray, masks: np.ndarray, mode: str = "train") -> np.ndarray:
        eps = self.epsilon(self.t) if mode == "train" else self.hyper.eval_epsilon
        actions = epsilon_greedy(self.q_values(obs), masks, eps, self.rng)
        assert masks[np.arange(self.n_agents), actions].all(), "selected a masked action"
        return actions

    # -- learning -------------------------------------------------------------
    def observe(
        self, obs, masks, actions, rewards, next_obs, terminated, next_masks, truncated=False
    ) -> None:
        # time-limit truncation bootstraps, so only true termination is stored
        self.buffer.add(obs, masks, actions, rewards, next_obs, terminated, next_masks)
        self.t += 1
        h = self.hyper
        if len(self.buffer) >= max(h.learning_starts, h.batch_size) and self.t % h.update_every == 0:
            self.update(self.buffer.sample(h.batch_size, self.rng))

    def td_targets(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        g = self.hyper.gamma
        not_done = 1.0 - batch["terminated"]
        with torch.no_grad():
            next_in = with_agent_ids(batch["next_obs"])
            next_q = self.target_net(next_in)
            if self.hyper.double_q:
                # online net picks the action, target net scores it
                online = self.net(next_in).masked_fill(~batch["next_masks"], NEG_INF)
                next_max = next_q.gather(-1, online.argmax(-1, keepdim=True)).squeeze(-1)
            else:
                next_max = _masked_max(next_q, batch["next_masks"])  # (B, n)
            if self.algo == "iql":
                return batch["rewards"] + g * not_done[:, None] * next_max
            team_r = batch["rewards"].mean(dim=1)
            if self.algo == "vdn":
                return team_r + g * not_done * next_max.sum(dim=1)
            next_state = batch["next_obs"].reshape(next_max.shape[0], -1)
            return team_r + g * not_done * self.target_mixer(next_max, next_state)

    def predictions(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        q = self.net(with_agent_ids(batch["obs"]))
        chosen = q.gather(-1, batch["actions"].unsqueeze(-1)).squeeze(-1)  # (B, n)
        if self.algo == "iql":
            return chosen
        if self.algo == "vdn":
            return chosen.sum(dim=1)
        return self.mixer(chosen, batch["obs"].reshape(chosen.shape[0], -1))

    def loss(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        return F.mse_loss(self.predictions(batch), self.td_targets(batch))

    def update(self, batch: dict[str, torch.Tensor]) -> float:
        loss = self.loss(batch)
        check_finite(loss, algo=self.algo, update=self.updates, t=self.t)
        self.optimizer.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(self.params, self.hyper.grad_clip)
        self.optimizer.step()
        self.updates += 1
        if self.updates % self.hyper.target_update == 0:
            self.sync_targets()
        if self.mixer is not None:
            self._probe(batch)
        self.last_loss = float(loss.detach())
        return self.last_loss

    def _probe(self, batch: dict[str, torch.Tensor]) -> None:
        n = min(self.hyper.monotonicity_probes, batch["obs"].shape[0])
        states = batch["obs"][:n].reshape(n, -1)
        g = monotonicity_probe(self.mixer, states, self.rng)
        self.probes_run += 1
        self.min_probe_grad = min(self.min_probe_grad, g)
        if g < -1e-6:
            raise MonotonicityViolation(f"dQ_tot/dQ_i = {g} after update {self.updates}")

    def sync_targets(self) -> None:
        hard_update(self.target_net, self.net)
        if self.mixer is not None:
            hard_update(self.target_mixer, self.mixer)

    # -- persistence ----------------------------------------------------------
    def state_dict(self) -> dict:
        state = {
            "algo": self.algo,
            "hyper": asdict(self.hyper),
            "net": self.net.state_dict(),
            "target_net": self.target_net.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "t": self.t,
            "updates": self.updates,
            "rng": rng_state(self.rng),
        }
        if self.mixer is not None:
            state["mixer"] = self.mixer.state_dict()
            state["target_mixer"] = self.target_mixer.state_dict()
        # detached copies: optimizer state tensors would otherwise be shared on reload
        return copy.deepcopy(state)

    def load_state_dict(self, state: dict) -> None:
        if state["algo"] != self.algo:
            raise ValueError(f"checkpoint is for {state['algo']}, learner is {self.algo}")
        self.net.load_state_dict(state["net"])
        self.target_net.load_state_dict(state["target_net"])
        if self.mixer is not None:
            self.mixer.load_state_dict(state["mixer"])
            self.target_mixer.load_state_dict(state["target_mixer"])
        self.optimizer.load_state_dict(state["optimizer"])
        self.t = state["t"]
        self.updates = state["updates"]
        self.rng = restore_rng(state["rng"])

