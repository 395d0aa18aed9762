import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metamario.policy import (
    NetConfig,
    PolicyNetwork,
    action_distribution,
    forward_logits,
    sample_from,
    select_epsilon_greedy,
    select_greedy,
    select_sample,
)
from metamario.tensor import DimensionError

from conftest import naive_conv2d, naive_dense

SMALL = NetConfig(input_shape=(6, 5, 2), filters=4)


def naive_forward(net, obs):
    h = np.maximum(naive_conv2d(obs, net.conv_w.data, net.conv_b.data), 0.0)
    return naive_dense(h.reshape(-1), net.out_w.data, net.out_b.data)


def test_zero_output_layer_gives_zero_logits(rng):
    net = PolicyNetwork(SMALL, 0)
    net.out_w.data[...] = 0.0
    obs = rng.random(SMALL.input_shape)
    assert np.all(forward_logits(net, obs) == 0.0)
    np.testing.assert_allclose(action_distribution(net, obs), 0.2)


def test_forward_matches_naive_loops(rng):
    for seed in range(5):
        net = PolicyNetwork(SMALL, seed)
        net.conv_b.data[...] = rng.normal(size=4) * 0.1
        obs = rng.random(SMALL.input_shape)
        assert np.max(np.abs(forward_logits(net, obs) - naive_forward(net, obs))) < 1e-10
        assert np.array_equal(forward_logits(net, obs), forward_logits(net, obs.copy()))


def test_default_network_shapes():
    net = PolicyNetwork()
    obs = np.zeros((32, 24, 4))
    assert forward_logits(net, obs).shape == (5,)
    assert net.config.flat_dim == 30 * 22 * 32
    no_value = PolicyNetwork(NetConfig(value_head=False))
    assert net.param_count() - no_value.param_count() == net.config.flat_dim + 1


def test_observation_shape_mismatch():
    with pytest.raises(DimensionError):
        forward_logits(PolicyNetwork(SMALL), np.zeros((5, 5, 2)))


def test_parameter_names_unique():
    names = [p.name for p in PolicyNetwork(SMALL).params]
    assert len(names) == len(set(names))


def test_init_is_seeded_and_bounded():
    a, b = PolicyNetwork(SMALL, 3), PolicyNetwork(SMALL, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.get_weights(), b.get_weights()))
    bound = np.sqrt(6.0 / (3 * 3 * 2))
    assert np.max(np.abs(a.conv_w.data)) <= bound
    assert np.all(a.conv_b.data == 0.0) and np.all(a.value_w.data == 0.0)


def test_clone_is_independent(rng):
    net = PolicyNetwork(SMALL, 0)
    twin = net.clone()
    twin.out_w.data += 1.0
    obs = rng.random(SMALL.input_shape)
    assert not np.array_equal(forward_logits(net, obs), forward_logits(twin, obs))


def test_checkpoint_roundtrip(tmp_path, rng):
    net = PolicyNetwork(SMALL, 4)
    net.value_b.data[...] = 0.25
    net.save(tmp_path / "net.json")
    back = PolicyNetwork.load(tmp_path / "net.json")
    assert back.config == net.config
    assert all(np.array_equal(x, y) for x, y in zip(back.get_weights(), net.get_weights()))


# ---------------------------------------------------------------- action selection

def _net_with_logits(logits):
    net = PolicyNetwork(SMALL, 0)
    net.out_w.data[...] = 0.0
    net.out_b.data[...] = logits
    return net


def test_greedy_tie_breaks_to_lowest_index():
    obs = np.zeros(SMALL.input_shape)
    assert select_greedy(_net_with_logits([0, 0, 0, 0, 0]), obs) == 0
    assert select_greedy(_net_with_logits([1, 3, 2, 0, 0]), obs) == 1
    assert select_greedy(_net_with_logits([1, 3, 3, 0, 0]), obs) == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=5, max_size=5), st.floats(-100, 100))
def test_greedy_shift_invariance_and_softmax_consistency(logits, c):
    obs = np.zeros(SMALL.input_shape)
    net = _net_with_logits(logits)
    a = select_greedy(net, obs)
    p = action_distribution(net, obs)
    assert abs(p.sum() - 1.0) < 1e-6
    assert a == int(np.argmax(logits))
    if np.sort(logits)[-1] - np.sort(logits)[-2] > 1e-9:
        assert a == int(np.argmax(p))
        assert select_greedy(_net_with_logits(np.asarray(logits) + c), obs) == a


def test_sample_one_hot():
    rng = np.random.default_rng(0)
    probs = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    assert {sample_from(probs, rng) for _ in range(1000)} == {2}


def test_sample_uniform_frequencies():
    net = _net_with_logits(np.zeros(5))
    obs = np.zeros(SMALL.input_shape)
    probs = action_distribution(net, obs)
    rng = np.random.default_rng(42)
    draws = np.array([sample_from(probs, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=5) / draws.size
    assert np.all(np.abs(freq - 0.2) < 0.01)
    a = select_sample(net, obs, np.random.default_rng(9))
    assert a == select_sample(net, obs, np.random.default_rng(9))


def test_epsilon_greedy():
    obs = np.zeros(SMALL.input_shape)
    net = _net_with_logits([0, 0, 0, 5, 0])
    rng = np.random.default_rng(1)
    assert all(select_epsilon_greedy(net, obs, 0.0, rng) == 3 for _ in range(100))
    draws = np.array([select_epsilon_greedy(net, obs, 1.0, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=5) / draws.size
    assert np.all(np.abs(freq - 0.2) < 0.01)
    a = select_epsilon_greedy(net, obs, 0.5, np.random.default_rng(5))
    assert a == select_epsilon_greedy(net, obs, 0.5, np.random.default_rng(5))
    with pytest.raises(ValueError):
        select_epsilon_greedy(net, obs, 1.5, rng)
