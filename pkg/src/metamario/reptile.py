"""First-order meta-learning (Reptile) over MicroMario levels.

Outer structure: random init -> vanilla meta-init (REINFORCE steps summed
over a few tasks) -> for each meta-iteration: fine-tune a copy of θ on one
sampled level with replayed policy-gradient steps, then interpolate θ
toward the fine-tuned weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .metrics import EpisodeMetrics
from .optim import AdamState, adam_step, clip_grad_norm, sgd_step
from .policy import NetConfig, PolicyNetwork, select_sample
from .replay import ReplayBuffer, stack_batch
from .rollout import Episode, run_episode

log = logging.getLogger(__name__)

INNER_MODES = ("reinforce", "paper-literal")

# keys for derive_rng
RNG_NET, RNG_INIT, RNG_TASK, RNG_INNER = 0, 1, 2, 3


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *keys])


@dataclass
class ReptileConfig:
    meta_iterations: int = 10  # K: tasks visited by the outer loop
    episodes_per_task: int = 10  # K_i
    num_grad_steps: int = 10
    alpha: float = 1e-3  # vanilla meta-init rate
    epsilon_inner: float = 0.1
    beta: float = 0.1
    gamma: float = 0.99
    buffer_capacity: int = 10_000  # B
    batch_size: int = 32  # M
    budget: int | None = None  # N: when set, meta-iterations run until N episodes are spent
    init_iterations: int = 3
    init_tasks: int = 2
    init_episodes: int = 2
    mode: str = "reinforce"
    outer: str = "serial"
    meta_batch: int = 5
    reset_buffer_per_task: bool = False
    use_baseline: bool = True
    baseline_lr: float = 1e-3
    reward_scale: float = 0.01
    normalize_advantages: bool = True
    max_grad_norm: float | None = 10.0  # guard against blow-ups; tighter clips stall learning
    max_episode_steps: int | None = None
    task_seeds: Sequence[int] = field(default_factory=lambda: tuple(range(10)))

    def __post_init__(self):
        for name in ("alpha", "epsilon_inner", "beta", "gamma", "baseline_lr", "reward_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("mini-batch size M must not exceed replay capacity B")
        if self.mode not in INNER_MODES:
            raise ValueError(f"unknown inner mode {self.mode!r}; expected one of {INNER_MODES}")
        if self.outer not in ("serial", "batched"):
            raise ValueError(f"unknown outer mode {self.outer!r}")
        if not self.task_seeds:
            raise ValueError("task_seeds must not be empty")


@dataclass
class TaskWeights:
    task: int
    weights: list[np.ndarray]


# ---------------------------------------------------------------- losses

def reinforce_loss(net: PolicyNetwork, obs, actions, returns, baseline=None,
                   normalize: bool = False, reduction: str = "sum") -> T.Tensor:
    """−Σ log p(a_t|X_t) · (G_t − b(X_t)); minimising it ascends expected return.

    ``baseline`` holds precomputed b(X_t) values (no gradient flows into it).
    """
    obs = np.asarray(obs)
    returns = np.asarray(returns, dtype=np.float64)
    adv = returns if baseline is None else returns - np.asarray(baseline, dtype=np.float64)
    if normalize and adv.size > 1:
        std = adv.std()
        adv = (adv - adv.mean()) / std if std > 1e-8 else adv - adv.mean()
    logp = T.pick(T.log_softmax(net(obs)), actions)
    weighted = T.mul(logp, adv)
    total = weighted.sum() if reduction == "sum" else weighted.mean()
    return -total


def episodes_to_batch(episodes: Sequence[Episode], gamma: float):
    if not episodes or any(len(ep) == 0 for ep in episodes):
        raise ValueError("episodes must be non-empty")
    obs = np.stack([o for ep in episodes for o in ep.obs])
    actions = np.array([a for ep in episodes for a in ep.actions], dtype=np.int64)
    returns = np.concatenate([ep.returns_to_go(gamma) for ep in episodes])
    return obs, actions, returns


def value_loss(net: PolicyNetwork, obs, targets) -> T.Tensor:
    """Mean squared error of the value head; conv features are held fixed."""
    v = net.value(np.asarray(obs), detach_features=True)
    return T.square(T.sub(v, np.asarray(targets, dtype=np.float64))).mean()


def baseline_value(net: PolicyNetwork, obs) -> np.ndarray:
    return net.value(np.asarray(obs)).data


def fit_baseline_step(net: PolicyNetwork, opt: AdamState, obs, targets) -> float:
    net.zero_grad()
    loss = value_loss(net, obs, targets)
    T.backprop(loss)
    adam_step(opt, [p.grad for p in net.value_params])
    return loss.item()


def paper_literal_loss(net: PolicyNetwork, batch: dict, gamma: float, reward_scale: float) -> T.Tensor:
    """(1/M) Σ log softmax(f)(s,a) · (r + γ max f(s',·) − f(s,a)), TD factor held constant."""
    logits = net(batch["obs"])
    q_next = net(batch["next_obs"]).data.max(axis=-1)
    q_taken = logits.data[np.arange(len(batch["actions"])), batch["actions"]]
    td = reward_scale * batch["rewards"] + gamma * q_next - q_taken
    logp = T.pick(T.log_softmax(logits), batch["actions"])
    return T.mul(logp, td).mean()


def vanilla_task_loss(net: PolicyNetwork, episodes: Sequence[Episode], reward_scale: float = 1.0) -> T.Tensor:
    """L_i = −Σ_j log p(a^j_{1:T} | X^j_{1:T}) · R^j with R^j the episode's total reward."""
    if not episodes or any(len(ep) == 0 for ep in episodes):
        raise ValueError("episodes must be non-empty")
    obs = np.stack([o for ep in episodes for o in ep.obs])
    actions = np.array([a for ep in episodes for a in ep.actions], dtype=np.int64)
    weights = np.concatenate([np.full(len(ep), ep.total_reward * reward_scale) for ep in episodes])
    logp = T.pick(T.log_softmax(net(obs)), actions)
    return -T.mul(logp, weights).sum()


def meta_loss(theta: Sequence[np.ndarray], task_weights: Sequence[Sequence[np.ndarray]]):
    """Σ_i ‖w_i − θ‖² and its gradient −2 Σ_i (w_i − θ)."""
    if not task_weights:
        raise ValueError("meta_loss needs at least one task")
    loss = 0.0
    grads = [np.zeros_like(t) for t in theta]
    for w in task_weights:
        if len(w) != len(theta):
            raise T.DimensionError("task weights and θ hold different numbers of tensors")
        for g, wi, ti in zip(grads, w, theta):
            if np.shape(wi) != np.shape(ti):
                raise T.DimensionError(f"shape {np.shape(wi)} vs {np.shape(ti)}")
            diff = wi - ti
            loss += float(np.sum(diff * diff))
            g -= 2.0 * diff
    return loss, grads


def reptile_outer_update(theta: Sequence[np.ndarray], target, beta: float) -> list[np.ndarray]:
    """(1 − β)θ + β·target, where target is one weight list or a list of them (averaged)."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    if target and isinstance(target[0], (list, tuple)):
        target = [np.mean(np.stack(ws), axis=0) for ws in zip(*target)]
    if len(target) != len(theta):
        raise T.DimensionError("target and θ hold different numbers of tensors")
    out = []
    for t, w in zip(theta, target):
        if np.shape(t) != np.shape(w):
            raise T.DimensionError(f"shape {np.shape(w)} vs {np.shape(t)}")
        if beta == 1.0:
            out.append(np.array(w, dtype=np.float64, copy=True))
        else:
            # clip guards against rounding past either endpoint
            out.append(np.clip(t + beta * (w - t), np.minimum(t, w), np.maximum(t, w)))
    return out


# ---------------------------------------------------------------- loops

def collect_episode(env, net: PolicyNetwork, rng: np.random.Generator, max_steps: int | None = None) -> Episode:
    return run_episode(env, lambda obs: select_sample(net, obs, rng), max_steps)


def _record(metrics, meta_iter, task, j, ep: Episode) -> None:
    if metrics is None:
        return
    info = ep.final_info
    metrics.append(EpisodeMetrics(meta_iter, int(task), j, ep.total_reward,
                                  int(info.get("distance", 0)), int(info.get("moves", len(ep)))))


def _inner_grads(net: PolicyNetwork, batch: dict, config: ReptileConfig) -> list[np.ndarray]:
    net.zero_grad()
    if config.mode == "reinforce":
        baseline = None
        if config.use_baseline and net.config.value_head:
            baseline = baseline_value(net, batch["obs"])
        loss = reinforce_loss(net, batch["obs"], batch["actions"], config.reward_scale * batch["returns"],
                              baseline, normalize=config.normalize_advantages, reduction="mean")
    else:
        loss = paper_literal_loss(net, batch, config.gamma, config.reward_scale)
    T.backprop(loss)
    return clip_grad_norm([p.grad.copy() for p in net.policy_params], config.max_grad_norm)


def inner_task_update(net: PolicyNetwork, env, config: ReptileConfig, rng: np.random.Generator,
                      buffer: ReplayBuffer | None = None, baseline_opt: AdamState | None = None,
                      task: int = 0, meta_iter: int = 0, metrics: list | None = None,
                      episodes: int | None = None) -> TaskWeights:
    """Fine-tune on one task and return w_i. ``net`` is restored to its entry weights.

    ``episodes`` overrides K_i, which lets the last task of a budgeted run end early.
    """
    if config.mode not in INNER_MODES:
        raise ValueError(f"unknown inner mode {config.mode!r}")
    original = net.get_weights()
    buffer = ReplayBuffer(config.buffer_capacity) if buffer is None else buffer
    fit_baseline = config.use_baseline and net.config.value_head and config.mode == "reinforce"
    if fit_baseline and baseline_opt is None:
        baseline_opt = AdamState(net.value_params, lr=config.baseline_lr)
    try:
        for j in range(config.episodes_per_task if episodes is None else episodes):
            ep = collect_episode(env, net, rng, config.max_episode_steps)
            _record(metrics, meta_iter, task, j, ep)
            for item in ep.tuples(config.gamma):
                buffer.push(item)
            for _ in range(config.num_grad_steps):
                batch = stack_batch(buffer.sample(config.batch_size, rng))
                grads = _inner_grads(net, batch, config)
                sgd_step(net.policy_params, grads, config.epsilon_inner)
                if fit_baseline:
                    fit_baseline_step(net, baseline_opt, batch["obs"], config.reward_scale * batch["returns"])
            if config.mode == "paper-literal":
                # discounted-return REINFORCE step on the episode just played
                net.zero_grad()
                disc = config.gamma ** np.arange(len(ep))
                ep_return = float(np.sum(disc * np.asarray(ep.rewards)))
                obs = np.stack(ep.obs)
                logp = T.pick(T.log_softmax(net(obs)), ep.actions)
                T.backprop(-(logp.sum() * (config.reward_scale * ep_return)))
                grads = clip_grad_norm([p.grad.copy() for p in net.policy_params], config.max_grad_norm)
                sgd_step(net.policy_params, grads, config.epsilon_inner)
        return TaskWeights(task, net.get_weights())
    finally:
        net.set_weights(original)


def vanilla_meta_init(net: PolicyNetwork, env_factory: Callable[[int], object], config: ReptileConfig,
                      rng: np.random.Generator, metrics: list | None = None) -> PolicyNetwork:
    """θ ← θ − α ∇ Σ_i L_i(θ), repeated ``init_iterations`` times."""
    for it in range(config.init_iterations):
        total = [np.zeros_like(p.data) for p in net.policy_params]
        for _ in range(config.init_tasks):
            task = config.task_seeds[int(rng.integers(len(config.task_seeds)))]
            env = env_factory(task)
            episodes = [collect_episode(env, net, rng, config.max_episode_steps)
                        for _ in range(config.init_episodes)]
            for j, ep in enumerate(episodes):
                _record(metrics, -1, task, it * config.init_episodes + j, ep)
            net.zero_grad()
            T.backprop(vanilla_task_loss(net, episodes, config.reward_scale))
            for acc, p in zip(total, net.policy_params):
                acc += p.grad
        sgd_step(net.policy_params, clip_grad_norm(total, config.max_grad_norm), config.alpha)
    return net


def train_reptile(env_factory: Callable[[int], object], config: ReptileConfig, mode: str | None = None,
                  seed: int = 0, net_config: NetConfig | None = None,
                  net: PolicyNetwork | None = None) -> tuple[PolicyNetwork, list[EpisodeMetrics]]:
    """Full meta-training loop. Returns the trained network and one metrics record per episode."""
    if mode is not None and mode != config.mode:
        config = ReptileConfig(**{**config.__dict__, "mode": mode})
    if net is None:
        if net_config is None:
            probe = env_factory(config.task_seeds[0])
            net_config = NetConfig(input_shape=tuple(probe.observation_shape), n_actions=probe.n_actions)
        net = PolicyNetwork(net_config, derive_rng(seed, RNG_NET))
    metrics: list[EpisodeMetrics] = []
    init_cost = config.init_iterations * config.init_tasks * config.init_episodes
    if config.budget is None or init_cost <= config.budget:
        vanilla_meta_init(net, env_factory, config, derive_rng(seed, RNG_INIT), metrics)

    buffer = ReplayBuffer(config.buffer_capacity)
    baseline_opt = AdamState(net.value_params, lr=config.baseline_lr) if net.config.value_head else None

    def run_task(k: int, episodes: int) -> TaskWeights:
        task = config.task_seeds[int(derive_rng(seed, RNG_TASK, k).integers(len(config.task_seeds)))]
        if config.reset_buffer_per_task:
            buffer.clear()
        return inner_task_update(net, env_factory(task), config, derive_rng(seed, RNG_INNER, k),
                                 buffer, baseline_opt, task, k, metrics, episodes)

    k = 0
    pending: list[TaskWeights] = []
    while True:
        if config.budget is None:
            if k >= config.meta_iterations:
                break
            episodes = config.episodes_per_task
        else:
            # the final task is cut short so exactly N episodes are played
            episodes = min(config.episodes_per_task, config.budget - len(metrics))
            if episodes <= 0:
                break
        tw = run_task(k, episodes)
        if config.outer == "serial":
            net.set_weights(reptile_outer_update(net.get_weights(), tw.weights, config.beta))
        else:
            pending.append(tw)
            if len(pending) == config.meta_batch:
                net.set_weights(reptile_outer_update(net.get_weights(), [p.weights for p in pending], config.beta))
                pending = []
        log.debug("meta-iteration %d task %d done (%d episodes so far)", k, tw.task, len(metrics))
        k += 1
    if pending:
        net.set_weights(reptile_outer_update(net.get_weights(), [p.weights for p in pending], config.beta))
    return net, metrics
