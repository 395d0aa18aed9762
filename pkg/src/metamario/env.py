"""MicroMario: a deterministic tile platformer plus its observation pipeline.

Coordinates are in tiles with ``y = 0`` the bottom row; the tile grid is
stored as ``tiles[y, x]``. Everything below row 0 is bottomless, columns
outside ``[0, width)`` are walls, rows above the grid are open sky.

Frames are ``(W, H) = (32, 24)`` arrays indexed ``frame[px, py]`` with
``py = 0`` the top of the viewport.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np


class Tile(IntEnum):
    SKY = 0
    GROUND = 1
    BLOCK = 2
    PIPE = 3
    FLAG = 4


class Action(IntEnum):
    NOOP = 0
    RIGHT = 1
    RIGHT_JUMP = 2
    JUMP = 3
    LEFT = 4


N_ACTIONS = len(Action)
SOLID_TILES = (Tile.GROUND, Tile.BLOCK, Tile.PIPE)
TILE_INTENSITY = np.array([0.0, 1.0, 0.8, 0.6, 0.9])
AGENT_INTENSITY = 0.5

JUMP_SPEED = 4
RUN_SPEED = 1
DEATH_Y = -1
STEP_COST = 0.1
FLAG_BONUS = 500.0
DEATH_PENALTY = 100.0
DISTANCE_PER_TILE = 10

VIEW_TILES_W = 16
VIEW_TILES_H = 12
TILE_PX = 2
MAX_GAP = 6
MIN_SLOT = 18  # widest gap + landing run-out + slack


class LevelGenerationError(RuntimeError):
    pass


class EpisodeOverError(RuntimeError):
    """step() called on a finished episode."""


@dataclass
class Level:
    tiles: np.ndarray
    spawn: tuple[int, int]
    goal_x: int
    seed: int = 0
    difficulty: int = 0

    @property
    def width(self) -> int:
        return self.tiles.shape[1]

    @property
    def height(self) -> int:
        return self.tiles.shape[0]

    def solid(self, x: int, y: int) -> bool:
        if x < 0 or x >= self.width:
            return True
        if y < 0 or y >= self.height:
            return False
        return self.tiles[y, x] in SOLID_TILES

    def gap_columns(self) -> np.ndarray:
        return np.flatnonzero(self.tiles[0] != Tile.GROUND)

    def gaps(self) -> list[tuple[int, int]]:
        """(start, width) runs of consecutive bottomless columns."""
        runs = []
        cols = self.gap_columns()
        start = prev = None
        for c in cols:
            if start is None:
                start = prev = c
            elif c == prev + 1:
                prev = c
            else:
                runs.append((int(start), int(prev - start + 1)))
                start = prev = c
        if start is not None:
            runs.append((int(start), int(prev - start + 1)))
        return runs

    def validate(self) -> None:
        flag_cols = np.flatnonzero((self.tiles == Tile.FLAG).any(axis=0))
        if flag_cols.tolist() != [self.goal_x]:
            raise ValueError(f"expected one FLAG column at {self.goal_x}, found {flag_cols.tolist()}")
        sx, sy = self.spawn
        if not self.solid(sx, sy - 1) or self.solid(sx, sy):
            raise ValueError(f"spawn {self.spawn} does not stand on solid ground")
        for start, w in self.gaps():
            if w > MAX_GAP:
                raise ValueError(f"gap at x={start} is {w} tiles wide (max {MAX_GAP})")

    def to_json(self) -> dict:
        return {
            "seed": int(self.seed),
            "difficulty": int(self.difficulty),
            "width": self.width,
            "height": self.height,
            "tiles": self.tiles.reshape(-1).astype(int).tolist(),
            "spawn": list(self.spawn),
            "goal_x": int(self.goal_x),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Level":
        tiles = np.asarray(doc["tiles"], dtype=np.uint8).reshape(doc["height"], doc["width"])
        return cls(tiles, tuple(doc["spawn"]), int(doc["goal_x"]), int(doc["seed"]), int(doc["difficulty"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "Level":
        return cls.from_json(json.loads(Path(path).read_text()))


def flat_level(width: int = 300, height: int = 15, spawn_x: int = 2, goal_x: int | None = None,
               gaps: Sequence[tuple[int, int]] = (), seed: int = 0) -> Level:
    """Hand-built level: ground row, optional gaps given as (start, width)."""
    tiles = np.zeros((height, width), dtype=np.uint8)
    tiles[0, :] = Tile.GROUND
    for start, w in gaps:
        tiles[0, start : start + w] = Tile.SKY
    goal_x = width - 6 if goal_x is None else goal_x
    tiles[1 : min(height, 9), goal_x] = Tile.FLAG
    return Level(tiles, (spawn_x, 1), goal_x, seed, 0)


# ---------------------------------------------------------------- generation

def _build_level(rng: np.random.Generator, seed: int, difficulty: int, width: int, height: int) -> Level:
    level = flat_level(width, height, seed=seed)
    level.difficulty = difficulty
    tiles = level.tiles
    zone_start, zone_end = 12, level.goal_x - 10
    kinds = ["gap"] * (3 * difficulty) + ["obstacle"] * (2 * difficulty)
    rng.shuffle(kinds)
    max_features = max(0, (zone_end - zone_start) // MIN_SLOT)
    if len(kinds) > max_features:
        kinds = kinds[:max_features]
    if not kinds:
        return level
    slot = (zone_end - zone_start) // len(kinds)
    max_gap = min(MAX_GAP, difficulty + 1)
    for i, kind in enumerate(kinds):
        s = zone_start + i * slot
        if kind == "gap":
            w = int(rng.integers(1, max_gap + 1))
            x0 = s + int(rng.integers(0, slot - w - 10 + 1))
            tiles[0, x0 : x0 + w] = Tile.SKY
        else:
            if rng.random() < 0.5:
                w, h, code = 2, int(rng.integers(2, 4)), Tile.PIPE
            else:
                w, h, code = int(rng.integers(1, 3)), int(rng.integers(1, 3)), Tile.BLOCK
            x0 = s + int(rng.integers(0, slot - w - 10 + 1))
            tiles[1 : 1 + h, x0 : x0 + w] = code
    return level


def generate_level(seed: int, difficulty: int, width: int = 300, height: int = 15,
                   max_retries: int = 100) -> Level:
    """Deterministic level for ``(seed, difficulty)``, checked by the scripted runner."""
    if difficulty < 0:
        raise ValueError("difficulty must be >= 0")
    for attempt in range(max_retries + 1):
        rng = np.random.default_rng([int(seed), int(difficulty), attempt])
        level = _build_level(rng, int(seed), int(difficulty), width, height)
        level.validate()
        if scripted_oracle_completes(level):
            return level
    raise LevelGenerationError(
        f"no solvable level for seed={seed} difficulty={difficulty} after {max_retries} retries"
    )


# ---------------------------------------------------------------- simulation

@dataclass
class AgentState:
    x: int
    y: int
    vx: int = 0
    vy: int = 0
    on_ground: bool = True


@dataclass
class StepResult:
    obs: np.ndarray
    frame: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def physics_step(level: Level, s: AgentState, action: int) -> AgentState:
    """Advance one step: horizontal move, tile-by-tile vertical move, then gravity."""
    x, y, vy, on_ground = s.x, s.y, s.vy, s.on_ground
    vx = RUN_SPEED if action in (Action.RIGHT, Action.RIGHT_JUMP) else -RUN_SPEED if action == Action.LEFT else 0
    if action in (Action.JUMP, Action.RIGHT_JUMP) and on_ground:
        vy = JUMP_SPEED
    if vx and not level.solid(x + vx, y):
        x += vx
    direction = 1 if vy > 0 else -1
    for _ in range(abs(vy)):
        if level.solid(x, y + direction):
            vy = 0
            break
        y += direction
        if y < DEATH_Y:
            break
    on_ground = level.solid(x, y - 1)
    if on_ground:
        vy = 0
    else:
        vy -= 1
    return AgentState(x, y, vx, vy, on_ground)


class MicroMario:
    """Gym-style environment over one :class:`Level`."""

    n_actions = N_ACTIONS

    def __init__(self, level: Level, frame_stack: int = 4, pool_factor: int = 1,
                 max_steps: int | None = None):
        self.level = level
        self.frame_stack = frame_stack
        self.pool_factor = pool_factor
        self.max_steps = max_steps
        w = VIEW_TILES_W * TILE_PX // pool_factor
        h = VIEW_TILES_H * TILE_PX // pool_factor
        self.observation_shape = (w, h, frame_stack)
        self.state: AgentState | None = None
        self.done = True
        self.reset()

    # -- lifecycle
    def reset(self) -> np.ndarray:
        sx, sy = self.level.spawn
        self.state = AgentState(sx, sy, 0, 0, True)
        self.moves = 0
        self._score = Fraction(0)
        self.done = False
        frame = self.render_frame()
        self.history = deque([frame] * self.frame_stack, maxlen=self.frame_stack)
        return preprocess(self.history, self.pool_factor)

    @property
    def score(self) -> float:
        return float(self._score)

    @property
    def distance(self) -> int:
        return self.state.x * DISTANCE_PER_TILE

    def info(self, **extra) -> dict:
        return {"distance": self.distance, "score": self.score, "moves": self.moves,
                "x": self.state.x, "y": self.state.y, **extra}

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeOverError("step() after episode end; call reset()")
        action = Action(int(action))
        old_x = self.state.x
        self.state = physics_step(self.level, self.state, action)
        self.moves += 1
        reward = (self.state.x - old_x) * DISTANCE_PER_TILE - STEP_COST
        died = self.state.y < DEATH_Y
        flag = not died and self.state.x >= self.level.goal_x
        if flag:
            reward += FLAG_BONUS
        if died:
            reward -= DEATH_PENALTY
        truncated = self.max_steps is not None and self.moves >= self.max_steps and not (died or flag)
        self.done = died or flag or truncated
        self._score += Fraction(reward)
        frame = self.render_frame()
        self.history.append(frame)
        obs = preprocess(self.history, self.pool_factor)
        return StepResult(obs, frame, reward, self.done,
                          self.info(flag=flag, death=died, truncated=truncated))

    # -- rendering
    def render_frame(self) -> np.ndarray:
        return render_frame(self.level, self.state)


def render_frame(level: Level, state: AgentState) -> np.ndarray:
    """16x12-tile viewport around the agent, 2x2 pixels per tile, grayscale in [0, 1]."""
    left = min(max(state.x - VIEW_TILES_W // 2, 0), max(level.width - VIEW_TILES_W, 0))
    bottom = min(max(state.y - VIEW_TILES_H // 2, 0), max(level.height - VIEW_TILES_H, 0))
    view = np.zeros((VIEW_TILES_W, VIEW_TILES_H))  # [tile col, tile row from top]
    cols = np.arange(left, left + VIEW_TILES_W)
    rows = bottom + (VIEW_TILES_H - 1) - np.arange(VIEW_TILES_H)
    cin = (cols >= 0) & (cols < level.width)
    rin = (rows >= 0) & (rows < level.height)
    sub = level.tiles[np.ix_(rows[rin], cols[cin])]  # [row, col]
    view[np.ix_(cin, rin)] = TILE_INTENSITY[sub].T
    ax, ay = state.x - left, (VIEW_TILES_H - 1) - (state.y - bottom)
    if 0 <= ax < VIEW_TILES_W and 0 <= ay < VIEW_TILES_H:
        view[ax, ay] = AGENT_INTENSITY
    return np.repeat(np.repeat(view, TILE_PX, axis=0), TILE_PX, axis=1)


def preprocess(history: Sequence[np.ndarray], pool_factor: int = 1) -> np.ndarray:
    """Average-pool each frame by ``pool_factor`` and stack them newest-last on the channel axis."""
    frames = list(history)
    if not frames:
        raise ValueError("preprocess needs at least one frame")
    w, h = frames[0].shape
    if pool_factor < 1 or w % pool_factor or h % pool_factor:
        raise ValueError(f"frame {w}x{h} not divisible by pool factor {pool_factor}")
    stack = np.stack(frames, axis=-1).astype(np.float64)
    if pool_factor == 1:
        return stack
    p = pool_factor
    return stack.reshape(w // p, p, h // p, p, len(frames)).mean(axis=(1, 3))


# ---------------------------------------------------------------- scripted runner

def scripted_oracle_action(level: Level, s: AgentState) -> int:
    """Run right; jump whenever the next column has no footing or blocks the way."""
    if s.on_ground and (not level.solid(s.x + 1, s.y - 1) or level.solid(s.x + 1, s.y)):
        return Action.RIGHT_JUMP
    return Action.RIGHT


def scripted_oracle_completes(level: Level, max_steps: int | None = None) -> bool:
    max_steps = 4 * level.width if max_steps is None else max_steps
    s = AgentState(level.spawn[0], level.spawn[1])
    for _ in range(max_steps):
        s = physics_step(level, s, scripted_oracle_action(level, s))
        if s.y < DEATH_Y:
            return False
        if s.x >= level.goal_x:
            return True
    return False


# ---------------------------------------------------------------- tabular corridor

class CorridorMDP:
    """Six-cell corridor with a pit, rewards on a 1/100 scale of MicroMario's.

    Cells 0..5: cell 3 is a pit, cell 5 holds the flag. RIGHT moves one cell,
    RIGHT_JUMP two cells (at a small extra cost), LEFT one cell back. The
    observation is a ``(6, 3, 1)`` image with the agent's column lit.
    """

    n_actions = N_ACTIONS
    n_states = 6
    pit = 3
    goal = 5
    observation_shape = (6, 3, 1)
    step_cost = 0.001
    jump_cost = 0.005
    progress = 0.1
    flag_bonus = 5.0
    pit_penalty = 1.0

    def __init__(self, start: int = 0, max_steps: int = 50):
        self.start = start
        self.max_steps = max_steps
        self.reset()

    @classmethod
    def transition(cls, s: int, a: int) -> tuple[int, float, bool]:
        move = {Action.RIGHT: 1, Action.RIGHT_JUMP: 2, Action.LEFT: -1}.get(Action(a), 0)
        nxt = min(max(s + move, 0), cls.goal)
        r = cls.progress * (nxt - s) - cls.step_cost
        if a in (Action.JUMP, Action.RIGHT_JUMP):
            r -= cls.jump_cost
        if nxt == cls.pit:
            return nxt, r - cls.pit_penalty, True
        if nxt == cls.goal:
            return nxt, r + cls.flag_bonus, True
        return nxt, r, False

    @classmethod
    def observe(cls, s: int) -> np.ndarray:
        obs = np.zeros(cls.observation_shape)
        obs[s, :, 0] = 1.0
        return obs

    def reset(self) -> np.ndarray:
        self.cell = self.start
        self.moves = 0
        self.score = 0.0
        self.done = False
        return self.observe(self.cell)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeOverError("step() after episode end; call reset()")
        self.cell, reward, terminal = self.transition(self.cell, int(action))
        self.moves += 1
        self.score += reward
        truncated = not terminal and self.moves >= self.max_steps
        self.done = terminal or truncated
        obs = self.observe(self.cell)
        info = {"distance": self.cell * DISTANCE_PER_TILE, "score": self.score, "moves": self.moves,
                "death": self.cell == self.pit, "flag": self.cell == self.goal, "truncated": truncated}
        return StepResult(obs, obs[:, :, 0], reward, self.done, info)
