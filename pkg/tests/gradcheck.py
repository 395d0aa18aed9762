"""Finite-difference gradient checks on small random networks, shared by the unit and acceptance suites."""

import numpy as np

from metamario import tensor as T
from metamario.dqn import TargetNetwork, td_loss
from metamario.policy import NetConfig, PolicyNetwork
from metamario.ppo import PPOConfig, ppo_losses
from metamario.reptile import reinforce_loss

SMALL = NetConfig(input_shape=(5, 4, 2), filters=3, kernel=3, n_actions=5, value_head=True)
KINK_MARGIN = 1e-3
H = 1e-5
REL_FLOOR = 1e-6


def random_net(rng, config=SMALL):
    net = PolicyNetwork(config, rng)
    # non-zero biases and value head so every parameter carries gradient
    for p in net.params:
        if p.name.endswith("bias") or p.name.startswith("value"):
            p.data[...] = rng.normal(scale=0.5, size=p.shape)
    return net


def conv_preactivation(net, obs):
    return T.conv2d(T.Tensor(obs), net.conv_w, net.conv_b).data


def kink_free(net, obs):
    return np.min(np.abs(conv_preactivation(net, obs))) > KINK_MARGIN


def rel_error(loss_fn, params):
    T.zero_grads(params)
    T.backprop(loss_fn())
    analytic = [p.grad.copy() for p in params]
    numeric = T.finite_difference_gradient(params, loss_fn, H)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst


def _instance(rng, batch):
    while True:
        net = random_net(rng)
        obs = rng.uniform(size=(batch, *SMALL.input_shape))
        if kink_free(net, obs):
            return net, obs


def forward_instance(rng):
    """Single observation through conv -> flatten -> dense -> log-softmax -> log-prob of one action."""
    net, obs = _instance(rng, 1)
    a = int(rng.integers(SMALL.n_actions))
    loss = lambda: T.pick(T.log_softmax(net(obs[0])), a)
    return rel_error(loss, net.policy_params)


def reinforce_instance(rng, batch=4):
    net, obs = _instance(rng, batch)
    actions = rng.integers(SMALL.n_actions, size=batch)
    returns = rng.normal(size=batch) * 3
    baseline = rng.normal(size=batch)
    loss = lambda: reinforce_loss(net, obs, actions, returns, baseline)
    return rel_error(loss, net.policy_params)


def ppo_instance(rng, batch=4, config=PPOConfig()):
    eps = config.clip_epsilon
    while True:
        net, obs = _instance(rng, batch)
        actions = rng.integers(SMALL.n_actions, size=batch)
        logp = T.pick(T.log_softmax(net(obs)), actions).data
        old = logp - rng.normal(scale=0.2, size=batch)
        ratio = np.exp(logp - old)
        if np.min(np.abs(np.abs(ratio - 1.0) - eps)) > KINK_MARGIN:
            break
    b = {
        "obs": obs,
        "actions": actions,
        "old_log_probs": old,
        "advantages": rng.normal(size=batch),
        "value_targets": rng.normal(size=batch),
    }
    loss = lambda: ppo_losses(b, net, config)["combined"]
    return rel_error(loss, net.params)


def td_instance(rng, batch=4, gamma=0.9):
    net, obs = _instance(rng, batch)
    target = TargetNetwork(random_net(rng))
    b = {
        "obs": obs,
        "actions": rng.integers(SMALL.n_actions, size=batch),
        "rewards": rng.normal(size=batch),
        "next_obs": rng.uniform(size=obs.shape),
        "dones": rng.random(batch) < 0.3,
    }
    loss = lambda: td_loss(b, net, target, gamma)
    return rel_error(loss, net.policy_params)


CHECKS = {
    "forward": forward_instance,
    "reinforce_loss": reinforce_instance,
    "ppo_combined": ppo_instance,
    "td_loss": td_instance,
}


def worst_error(name, trials, seed=0):
    rng = np.random.default_rng([seed, len(name)])
    return max(CHECKS[name](rng) for _ in range(trials))
