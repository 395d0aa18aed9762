"""PPO with the clipped surrogate, value loss and entropy bonus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .metrics import EpisodeMetrics
from .optim import AdamState, adam_step, clip_grad_norm
from .policy import NetConfig, PolicyNetwork, sample_from


@dataclass
class PPOConfig:
    clip_epsilon: float = 0.2
    c1: float = 0.5
    c2: float = 0.01
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_length: int = 512
    epochs: int = 4
    batch_size: int = 64
    lr: float = 1e-3
    reward_scale: float = 0.01
    max_grad_norm: float | None = 0.5
    budget: int = 200  # episodes

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")
        if not (0.0 < self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma must lie in (0, 1] and gae_lambda in [0, 1]")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


@dataclass
class RolloutBuffer:
    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    values: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    last_value: float = 0.0
    advantages: np.ndarray | None = None
    value_targets: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.actions)

    def add(self, obs, action, reward, done, value, log_prob) -> None:
        self.obs.append(obs)
        self.actions.append(action)
        self.rewards.append(reward)
        self.dones.append(done)
        self.values.append(value)
        self.log_probs.append(log_prob)


def compute_advantages(rewards, values, dones, last_value: float, gamma: float, lam: float,
                       normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """GAE(λ) advantages and value targets A_t + V(s_t).

    ``dones[t]`` marks s_{t+1} as terminal; ``last_value`` bootstraps the
    step after the rollout. Normalisation (if on) is applied to the returned
    advantages only, after the targets are formed.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("cannot compute advantages of an empty rollout")
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    next_values = np.append(values[1:], last_value)
    delta = rewards + gamma * next_values * (~dones) - values
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        running = delta[t] + gamma * lam * (0.0 if dones[t] else running)
        adv[t] = running
    targets = adv + values
    if normalize:
        adv = adv - adv.mean()
        std = adv.std()
        if std > 1e-4:  # variance guard (std² > 1e-8)
            adv = adv / std
    return adv, targets


def clip_g(epsilon: float, advantage):
    """(1+ε)A for A ≥ 0, (1−ε)A otherwise."""
    a = np.asarray(advantage, dtype=np.float64)
    out = np.where(a >= 0, (1.0 + epsilon) * a, (1.0 - epsilon) * a)
    return float(out) if out.ndim == 0 else out


def ppo_losses(batch: dict, net: PolicyNetwork, config: PPOConfig) -> dict[str, T.Tensor]:
    """Surrogate, value and entropy terms plus the minimised combination −L_clip + c1·L_vf − c2·S."""
    logits, values = net.logits_and_value(batch["obs"])
    logp_all = T.log_softmax(logits)
    logp = T.pick(logp_all, batch["actions"])
    ratio = T.exp(T.sub(logp, batch["old_log_probs"]))
    adv = np.asarray(batch["advantages"], dtype=np.float64)
    surrogate = T.minimum(T.mul(ratio, adv), clip_g(config.clip_epsilon, adv))
    l_clip = surrogate.mean()
    l_vf = T.mul(T.square(T.sub(values, batch["value_targets"])).mean(), 0.5)
    probs = T.softmax(logits)
    entropy = T.mul(T.mul(probs, logp_all).sum(axis=-1), -1.0).mean()
    combined = T.add(T.sub(T.mul(l_vf, config.c1), l_clip), T.mul(entropy, -config.c2))
    return {"l_clip": l_clip, "l_vf": l_vf, "entropy": entropy, "combined": combined}


def train_ppo(env_factory: Callable[[], object], config: PPOConfig, seed: int = 0,
              net_config: NetConfig | None = None,
              net: PolicyNetwork | None = None) -> tuple[PolicyNetwork, list[EpisodeMetrics]]:
    rng = np.random.default_rng([int(seed), 10])
    env = env_factory()
    if net is None:
        if net_config is None:
            net_config = NetConfig(input_shape=tuple(env.observation_shape), n_actions=env.n_actions)
        net = PolicyNetwork(net_config, np.random.default_rng([int(seed), 0]))
    if not net.config.value_head:
        raise ValueError("PPO needs a network with a value head")
    opt = AdamState(net.params, lr=config.lr)
    metrics: list[EpisodeMetrics] = []
    obs = env.reset()
    ep_reward, iteration = [], 0
    while len(metrics) < config.budget:
        roll = RolloutBuffer()
        while len(roll) < config.rollout_length and len(metrics) < config.budget:
            logits, value = net.logits_and_value(obs)
            probs = T.softmax(logits).data
            a = sample_from(probs, rng)
            res = env.step(a)
            terminal = res.done and not res.info.get("truncated", False)
            roll.add(obs, a, config.reward_scale * res.reward, terminal, value.item(), float(np.log(probs[a])))
            ep_reward.append(res.reward)
            obs = res.obs
            if res.done:
                info = res.info
                metrics.append(EpisodeMetrics(iteration, 0, len(metrics), math.fsum(ep_reward),
                                              int(info["distance"]), int(info["moves"])))
                ep_reward = []
                obs = env.reset()
                # truncated episodes are cut like terminal ones for GAE
                if not terminal:
                    roll.dones[-1] = True
        roll.last_value = 0.0 if roll.dones[-1] else net.logits_and_value(obs)[1].item()
        roll.advantages, roll.value_targets = compute_advantages(
            roll.rewards, roll.values, roll.dones, roll.last_value, config.gamma, config.gae_lambda)
        data = {
            "obs": np.stack(roll.obs),
            "actions": np.asarray(roll.actions, dtype=np.int64),
            "old_log_probs": np.asarray(roll.log_probs),
            "advantages": roll.advantages,
            "value_targets": roll.value_targets,
        }
        n = len(roll)
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = np.sort(order[start : start + config.batch_size])
                batch = {k: v[idx] for k, v in data.items()}
                net.zero_grad()
                T.backprop(ppo_losses(batch, net, config)["combined"])
                grads = clip_grad_norm([p.grad for p in net.params], config.max_grad_norm)
                adam_step(opt, grads)
        iteration += 1
    return net, metrics

