"""conv(32, 3x3) -> relu -> flatten -> dense(|A|) network, with an optional value head."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .env import N_ACTIONS
from .tensor import DimensionError, Parameter, Tensor


@dataclass(frozen=True)
class NetConfig:
    input_shape: tuple[int, int, int] = (32, 24, 4)
    filters: int = 32
    kernel: int = 3
    n_actions: int = N_ACTIONS
    value_head: bool = True

    @property
    def flat_dim(self) -> int:
        w, h, _ = self.input_shape
        return (w - self.kernel + 1) * (h - self.kernel + 1) * self.filters


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class PolicyNetwork:
    """Shared by all three trainers; DQN reads the logits as Q-values."""

    def __init__(self, config: NetConfig = NetConfig(), rng: np.random.Generator | int | None = 0):
        self.config = config
        rng = np.random.default_rng(rng)
        _, _, c = config.input_shape
        k, f = config.kernel, config.filters
        self.conv_w = Parameter(fan_in_uniform(rng, (k, k, c, f), k * k * c), "conv/kernel")
        self.conv_b = Parameter(np.zeros(f), "conv/bias")
        self.out_w = Parameter(
            fan_in_uniform(rng, (config.flat_dim, config.n_actions), config.flat_dim), "dense/kernel"
        )
        self.out_b = Parameter(np.zeros(config.n_actions), "dense/bias")
        if config.value_head:
            # zero-initialised so the baseline starts at 0
            self.value_w = Parameter(np.zeros((config.flat_dim, 1)), "value/kernel")
            self.value_b = Parameter(np.zeros(1), "value/bias")

    # -- parameter plumbing
    @property
    def policy_params(self) -> list[Parameter]:
        return [self.conv_w, self.conv_b, self.out_w, self.out_b]

    @property
    def value_params(self) -> list[Parameter]:
        if not self.config.value_head:
            return []
        return [self.value_w, self.value_b]

    @property
    def params(self) -> list[Parameter]:
        return self.policy_params + self.value_params

    def param_count(self) -> int:
        return sum(p.size for p in self.params)

    def zero_grad(self) -> None:
        T.zero_grads(self.params)

    def get_weights(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params]

    def set_weights(self, weights: Sequence[np.ndarray]) -> None:
        if len(weights) != len(self.params):
            raise DimensionError(f"expected {len(self.params)} arrays, got {len(weights)}")
        for p, w in zip(self.params, weights):
            if p.shape != np.shape(w):
                raise DimensionError(f"{p.name}: {p.shape} vs {np.shape(w)}")
            p.data[...] = w

    def clone(self) -> "PolicyNetwork":
        return copy.deepcopy(self)

    # -- forward
    def features(self, obs) -> Tensor:
        obs = T.as_tensor(obs)
        batched = obs.data.ndim == 4
        if tuple(obs.shape[-3:]) != tuple(self.config.input_shape):
            raise DimensionError(f"observation shape {obs.shape} != {self.config.input_shape}")
        h = T.relu(T.conv2d(obs, self.conv_w, self.conv_b))
        return T.flatten(h, batched=batched)

    def logits_and_value(self, obs) -> tuple[Tensor, Tensor | None]:
        feats = self.features(obs)
        logits = T.dense(feats, self.out_w, self.out_b)
        value = None
        if self.config.value_head:
            value = T.dense(feats, self.value_w, self.value_b)
            value = value.reshape(value.shape[:-1])
        return logits, value

    def __call__(self, obs) -> Tensor:
        return T.dense(self.features(obs), self.out_w, self.out_b)

    def value(self, obs, detach_features: bool = False) -> Tensor:
        if not self.config.value_head:
            raise RuntimeError("value head is disabled for this network")
        feats = self.features(obs)
        if detach_features:
            feats = feats.detach()
        v = T.dense(feats, self.value_w, self.value_b)
        return v.reshape(v.shape[:-1])

    # -- checkpoints
    def save(self, path: str | Path) -> None:
        meta = asdict(self.config)
        meta["input_shape"] = list(self.config.input_shape)
        T.save_params(path, self.params, meta)

    @classmethod
    def load(cls, path: str | Path) -> "PolicyNetwork":
        arrays, meta = T.load_params(path)
        meta["input_shape"] = tuple(meta["input_shape"])
        net = cls(NetConfig(**meta))
        for p in net.params:
            p.data[...] = arrays[p.name]
        return net


def forward_logits(net: PolicyNetwork, obs) -> np.ndarray:
    return net(obs).data


def action_distribution(net: PolicyNetwork, obs) -> np.ndarray:
    return T.softmax(net(obs)).data


def select_greedy(net: PolicyNetwork, obs) -> int:
    # np.argmax returns the lowest maximising index
    return int(np.argmax(forward_logits(net, obs)))


def sample_from(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw in index order."""
    u = rng.random()
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def select_sample(net: PolicyNetwork, obs, rng: np.random.Generator) -> int:
    return sample_from(action_distribution(net, obs), rng)


def select_epsilon_greedy(net: PolicyNetwork, obs, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(net.config.n_actions))
    return select_greedy(net, obs)
