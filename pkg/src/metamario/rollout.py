"""Episode collection shared by the trainers and the evaluation harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .replay import ExperienceTuple


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """G_t = Σ_{l≥0} γ^l r_{t+l}, computed backwards."""
    out = np.zeros(len(rewards))
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


@dataclass
class Episode:
    obs: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    next_obs: list[np.ndarray] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    infos: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return math.fsum(self.rewards)

    @property
    def final_info(self) -> dict:
        return self.infos[-1] if self.infos else {}

    def returns_to_go(self, gamma: float) -> np.ndarray:
        return discounted_returns(self.rewards, gamma)

    def tuples(self, gamma: float) -> list[ExperienceTuple]:
        g = self.returns_to_go(gamma)
        return [
            ExperienceTuple(o, a, r, n, d, float(gt))
            for o, a, r, n, d, gt in zip(self.obs, self.actions, self.rewards, self.next_obs, self.dones, g)
        ]


def run_episode(env, act: Callable[[np.ndarray], int], max_steps: int | None = None) -> Episode:
    """Play one episode from reset with the action rule ``act(obs)``."""
    ep = Episode()
    obs = env.reset()
    done = False
    while not done:
        a = int(act(obs))
        res = env.step(a)
        ep.obs.append(obs)
        ep.actions.append(a)
        ep.rewards.append(res.reward)
        ep.next_obs.append(res.obs)
        # truncation is not a terminal state
        ep.dones.append(bool(res.done and not res.info.get("truncated", False)))
        ep.infos.append(res.info)
        obs = res.obs
        done = res.done or (max_steps is not None and len(ep) >= max_steps)
    return ep
