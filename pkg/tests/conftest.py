import numpy as np
import pytest

from metamario import tensor as T


def naive_conv2d(x, k, b):
    """Direct quadruple loop: out[i, j, f] = Σ_{di,dj,c} x[i+di, j+dj, c]·k[di, dj, c, f] + b[f]."""
    W, H, C = x.shape
    K, _, _, F = k.shape
    out = np.zeros((W - K + 1, H - K + 1, F))
    for i in range(W - K + 1):
        for j in range(H - K + 1):
            for f in range(F):
                acc = b[f]
                for di in range(K):
                    for dj in range(K):
                        for c in range(C):
                            acc += x[i + di, j + dj, c] * k[di, dj, c, f]
                out[i, j, f] = acc
    return out


def naive_dense(x, w, b):
    n, m = w.shape
    out = np.zeros(m)
    for j in range(m):
        acc = b[j]
        for i in range(n):
            acc += x[i] * w[i, j]
        out[j] = acc
    return out


def max_rel_err(a, b, floor=1e-6):
    a = np.asarray(a)
    b = np.asarray(b)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_env(task: int = 0, max_steps: int = 25):
    """Short flat level with one 2-tile gap, pooled to 8x6 observations."""
    from metamario.env import MicroMario, flat_level

    level = flat_level(width=30, gaps=[(6 + int(task) % 5, 2)], seed=int(task))
    return MicroMario(level, pool_factor=4, max_steps=max_steps)


class ZeroRewardEnv:
    """Three-step episodes with reward 0 and random-looking observations."""

    observation_shape = (8, 6, 4)
    n_actions = 5

    def __init__(self, task: int = 0):
        self.rng = np.random.default_rng(task)

    def reset(self):
        self.t = 0
        return self.rng.random(self.observation_shape)

    def step(self, action):
        from metamario.env import StepResult

        self.t += 1
        obs = self.rng.random(self.observation_shape)
        return StepResult(obs, obs[..., 0], 0.0, self.t >= 3, {"distance": 0, "moves": self.t})


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
