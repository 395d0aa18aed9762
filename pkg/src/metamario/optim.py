"""Plain gradient steps and Adam, applied in place to Parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import DimensionError, Parameter


def _check_shapes(params: Sequence[Parameter], grads: Sequence[np.ndarray]) -> None:
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise DimensionError(f"{p.name}: parameter {p.shape} vs gradient {np.shape(g)}")


def sgd_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], lr: float) -> None:
    """θ ← θ − lr·g, elementwise."""
    _check_shapes(params, grads)
    for p, g in zip(params, grads):
        p.data -= lr * np.asarray(g)


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    """Rescale the gradient list so its global L2 norm is at most ``max_norm``."""
    if max_norm is None:
        return list(grads)
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if total <= max_norm:
        return list(grads)
    scale = max_norm / total
    return [g * scale for g in grads]


@dataclass
class AdamState:
    params: Sequence[Parameter]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("Adam learning rate must be non-negative")
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]
        for p, m in zip(self.params, self.m):
            if p.shape != m.shape:
                raise DimensionError(f"{p.name}: moment shape {m.shape} != {p.shape}")


def adam_step(state: AdamState, grads: Sequence[np.ndarray] | None = None) -> None:
    """One bias-corrected Adam update. ``grads`` defaults to the params' grad slots."""
    params = state.params
    if grads is None:
        grads = [p.grad for p in params]
    _check_shapes(params, grads)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
