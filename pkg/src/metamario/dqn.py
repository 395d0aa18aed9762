"""DQN: replayed Q-learning against a periodically synced target network."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .metrics import EpisodeMetrics
from .optim import AdamState, adam_step, clip_grad_norm
from .policy import NetConfig, PolicyNetwork, select_epsilon_greedy
from .replay import ExperienceTuple, ReplayBuffer, stack_batch


@dataclass
class DQNConfig:
    gamma: float = 0.99
    sync_period: int = 500  # learner steps
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 10_000  # environment steps
    buffer_capacity: int = 10_000
    batch_size: int = 32
    lr: float = 1e-3
    warmup: int = 500
    train_every: int = 1
    reward_scale: float = 0.01
    max_grad_norm: float | None = 10.0
    budget: int = 200  # episodes

    def __post_init__(self):
        if self.sync_period < 1:
            raise ValueError("sync_period must be >= 1")
        for e in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= e <= 1.0:
                raise ValueError("epsilon schedule must stay within [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    def epsilon(self, env_step: int) -> float:
        frac = min(1.0, env_step / self.epsilon_decay_steps) if self.epsilon_decay_steps > 0 else 1.0
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


class TargetNetwork:
    """Frozen copy θ⁻ of a live Q-network."""

    def __init__(self, net: PolicyNetwork):
        self.net = net.clone()
        self.synced = True

    def __call__(self, obs) -> np.ndarray:
        return self.net(obs).data


def sync_target(net: PolicyNetwork, target: TargetNetwork) -> None:
    target.net.set_weights(net.get_weights())
    target.synced = True


def td_target(reward, next_obs, done, target: TargetNetwork, gamma: float) -> np.ndarray:
    """y = r for terminal transitions, r + γ max_a' Q(s', a'; θ⁻) otherwise."""
    reward = np.asarray(reward, dtype=np.float64)
    done = np.asarray(done, dtype=bool)
    if not target.synced:
        raise RuntimeError("target network has never been synced")
    q_next = target(next_obs).max(axis=-1)
    return np.where(done, reward, reward + gamma * q_next)


def td_loss(batch: dict, net: PolicyNetwork, target: TargetNetwork, gamma: float,
            reward_scale: float = 1.0) -> T.Tensor:
    """Mean squared error between y and Q(s, a) of the taken action."""
    y = td_target(reward_scale * batch["rewards"], batch["next_obs"], batch["dones"], target, gamma)
    q = T.pick(net(batch["obs"]), batch["actions"])
    return T.square(T.sub(y, q)).mean()


def train_dqn(env_factory: Callable[[], object], config: DQNConfig, seed: int = 0,
              net_config: NetConfig | None = None,
              net: PolicyNetwork | None = None) -> tuple[PolicyNetwork, list[EpisodeMetrics]]:
    rng = np.random.default_rng([int(seed), 20])
    env = env_factory()
    if net is None:
        if net_config is None:
            net_config = NetConfig(input_shape=tuple(env.observation_shape), n_actions=env.n_actions,
                                   value_head=False)
        net = PolicyNetwork(net_config, np.random.default_rng([int(seed), 0]))
    target = TargetNetwork(net)
    params = net.policy_params
    opt = AdamState(params, lr=config.lr)
    buffer = ReplayBuffer(config.buffer_capacity)
    metrics: list[EpisodeMetrics] = []
    env_steps = learner_steps = 0
    while len(metrics) < config.budget:
        obs = env.reset()
        rewards = []
        done = False
        while not done:
            a = select_epsilon_greedy(net, obs, config.epsilon(env_steps), rng)
            res = env.step(a)
            terminal = res.done and not res.info.get("truncated", False)
            buffer.push(ExperienceTuple(obs, a, res.reward, res.obs, terminal))
            rewards.append(res.reward)
            obs, done = res.obs, res.done
            env_steps += 1
            if env_steps > config.warmup and env_steps % config.train_every == 0:
                batch = stack_batch(buffer.sample(config.batch_size, rng))
                net.zero_grad()
                T.backprop(td_loss(batch, net, target, config.gamma, config.reward_scale))
                adam_step(opt, clip_grad_norm([p.grad for p in params], config.max_grad_norm))
                learner_steps += 1
                if learner_steps % config.sync_period == 0:
                    sync_target(net, target)
        info = res.info
        metrics.append(EpisodeMetrics(0, 0, len(metrics), math.fsum(rewards),
                                      int(info["distance"]), int(info["moves"])))
    return net, metrics
