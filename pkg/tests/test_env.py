import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metamario.env import (
    Action,
    AgentState,
    CorridorMDP,
    EpisodeOverError,
    Level,
    MicroMario,
    Tile,
    flat_level,
    generate_level,
    physics_step,
    preprocess,
    render_frame,
    scripted_oracle_completes,
)


def test_generation_is_deterministic():
    a, b = generate_level(7, 3), generate_level(7, 3)
    assert np.array_equal(a.tiles, b.tiles)
    assert a.spawn == b.spawn and a.goal_x == b.goal_x


def test_difficulty_zero_is_flat():
    level = generate_level(123, 0)
    assert level.gaps() == []
    assert np.all(level.tiles[0] == Tile.GROUND)
    assert not np.isin(level.tiles[1:], [Tile.BLOCK, Tile.PIPE]).any()


def test_difficulty_adds_gaps():
    assert len(generate_level(3, 2).gaps()) > 0


@pytest.mark.parametrize("difficulty", range(6))
def test_generated_levels_respect_invariants(difficulty):
    for seed in range(30):
        level = generate_level(seed, difficulty)
        level.validate()
        assert all(w <= 6 for _, w in level.gaps())
        assert scripted_oracle_completes(level)


def test_level_json_roundtrip(tmp_path):
    level = generate_level(5, 4)
    path = tmp_path / "level.json"
    level.save(path)
    back = Level.load(path)
    assert np.array_equal(back.tiles, level.tiles)
    assert (back.spawn, back.goal_x, back.seed, back.difficulty) == (level.spawn, level.goal_x, 5, 4)


# ---------------------------------------------------------------- reset / step

def test_reset_contract():
    env = MicroMario(generate_level(1, 2))
    a = env.reset()
    env.step(Action.RIGHT)
    b = env.reset()
    assert np.array_equal(a, b)
    assert env.distance == env.level.spawn[0] * 10
    assert a.shape == (32, 24, 4)
    assert np.max(np.abs(a - a[..., :1])) == 0.0


def test_noop_on_flat_ground():
    env = MicroMario(flat_level())
    res = env.step(Action.NOOP)
    assert res.reward == pytest.approx(-0.1, abs=0)
    assert res.info["x"] == 2 and not res.done


def test_flat_run_ten_steps_scores_99():
    # 10 steps x (1 tile x 10 - 0.1) = 99.0
    env = MicroMario(flat_level())
    x0 = env.state.x
    for _ in range(10):
        res = env.step(Action.RIGHT)
    assert env.state.x - x0 == 10
    assert res.info["score"] == 99.0
    assert res.info["moves"] == 10


def test_walking_into_wide_gap_dies():
    # x: 2 -> 5 puts the agent over the gap on step 3; it then falls 0, 1, 2 tiles
    # on steps 3, 4, 5 and passes y = -1 during step 5.
    env = MicroMario(flat_level(gaps=[(5, 6)]))
    rewards = []
    for _ in range(5):
        res = env.step(Action.RIGHT)
        rewards.append(res.reward)
    assert res.done and res.info["death"]
    assert rewards[-1] == pytest.approx(10 - 0.1 - 100)
    assert res.info["score"] == pytest.approx(math.fsum(rewards))


def test_jump_clears_six_tile_gap():
    level = flat_level(gaps=[(10, 6)])
    s = AgentState(9, 1)
    s = physics_step(level, s, Action.RIGHT_JUMP)
    for _ in range(12):
        if s.on_ground:
            break
        s = physics_step(level, s, Action.RIGHT)
    assert s.on_ground and s.y == 1 and s.x >= 16


def test_jump_trajectory():
    level = flat_level()
    s = AgentState(2, 1)
    heights = []
    for a in [Action.JUMP] + [Action.NOOP] * 9:
        s = physics_step(level, s, a)
        heights.append(s.y)
    assert heights[:9] == [5, 8, 10, 11, 11, 10, 8, 5, 1]
    assert s.on_ground


def test_blocks_stop_horizontal_motion():
    level = flat_level()
    level.tiles[1, 4] = Tile.BLOCK
    s = AgentState(3, 1)
    s = physics_step(level, s, Action.RIGHT)
    assert s.x == 3


def test_no_tunnelling_through_ceiling():
    level = flat_level()
    level.tiles[3, 2] = Tile.BLOCK
    s = physics_step(level, AgentState(2, 1), Action.JUMP)
    assert s.y == 2


def test_step_after_done_is_an_error():
    env = MicroMario(flat_level(width=20, goal_x=4))
    for _ in range(2):
        res = env.step(Action.RIGHT)
    assert res.done and res.info["flag"]
    with pytest.raises(EpisodeOverError):
        env.step(Action.RIGHT)


def test_flag_bonus():
    env = MicroMario(flat_level(width=20, goal_x=3))
    res = env.step(Action.RIGHT)
    assert res.done and res.reward == pytest.approx(10 - 0.1 + 500)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(list(Action)), min_size=1, max_size=120), st.integers(0, 50))
def test_determinism_and_score_accounting(actions, seed):
    level = generate_level(seed, 2)
    envs = [MicroMario(level), MicroMario(level)]
    rewards = []
    for a in actions:
        r1, r2 = envs[0].step(a), envs[1].step(a)
        assert np.array_equal(r1.obs, r2.obs) and r1.reward == r2.reward and r1.info == r2.info
        rewards.append(r1.reward)
        assert r1.info["moves"] == len(rewards)
        assert r1.info["score"] == math.fsum(rewards)
        assert r1.info["y"] >= -2
        if r1.done:
            break


# ---------------------------------------------------------------- rendering

def test_render_flat_ground():
    level = flat_level()
    frame = render_frame(level, AgentState(8, 1))
    assert frame.shape == (32, 24)
    # bottom tile row (py 22..23) is ground, the rest sky except the agent
    assert np.all(frame[:, 22:] == 1.0)
    sky = frame[:, :22].copy()
    assert np.count_nonzero(sky == 0.5) == 4
    sky[sky == 0.5] = 0.0
    assert np.all(sky == 0.0)


def test_render_agent_cells():
    frame = render_frame(flat_level(), AgentState(8, 1))
    ys, xs = np.nonzero(frame.T == 0.5)
    # agent at viewport column 8, row 1 from the bottom -> tile row 10 from the top
    assert sorted(set(xs)) == [16, 17] and sorted(set(ys)) == [20, 21]
    assert np.array_equal(frame, render_frame(flat_level(), AgentState(8, 1)))


def test_render_clamps_at_edges():
    level = flat_level()
    assert render_frame(level, AgentState(0, 1))[0, 20] == 0.5
    frame = render_frame(level, AgentState(level.width - 1, 1))
    assert frame[31, 20] == 0.5


def test_preprocess_examples(rng):
    frames = [rng.random((32, 24)) for _ in range(4)]
    out = preprocess(frames, 1)
    assert out.shape == (32, 24, 4)
    assert np.array_equal(out[..., 3], frames[3])
    const = preprocess([np.full((32, 24), 0.3)] * 2, 4)
    assert const.shape == (8, 6, 2) and np.allclose(const, 0.3, atol=1e-15)
    assert preprocess([np.array([[0.0, 1.0], [1.0, 0.0]])], 2)[0, 0, 0] == 0.5
    with pytest.raises(ValueError):
        preprocess(frames, 5)


def test_pooled_env_observation_shape():
    env = MicroMario(flat_level(), pool_factor=2)
    assert env.reset().shape == (16, 12, 4) == env.observation_shape


# ---------------------------------------------------------------- corridor

def test_corridor_transitions():
    assert CorridorMDP.transition(0, Action.RIGHT) == (1, pytest.approx(0.099), False)
    nxt, r, done = CorridorMDP.transition(2, Action.RIGHT)
    assert nxt == 3 and done and r < -0.9
    nxt, r, done = CorridorMDP.transition(4, Action.RIGHT)
    assert nxt == 5 and done and r > 5
    assert CorridorMDP.transition(0, Action.LEFT)[0] == 0
