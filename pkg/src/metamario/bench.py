"""Seeded multi-run benchmark: train, evaluate greedily, record moves vs distance."""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dqn import DQNConfig, train_dqn
from .env import N_ACTIONS, Level, MicroMario, StepResult, generate_level
from .policy import PolicyNetwork, select_greedy
from .ppo import PPOConfig, train_ppo
from .reptile import ReptileConfig, train_reptile

log = logging.getLogger(__name__)

ALGORITHMS = ("reptile", "ppo", "dqn", "random")


@dataclass
class RunConfig:
    algorithm: str = "reptile"
    num_runs: int = 10
    max_moves: int = 5000
    max_distance: int = 5000
    stagnation_threshold: int = 100
    level_seed: int = 0
    difficulty: int = 2
    level_width: int = 300
    per_run_levels: bool = False
    train_level_seeds: list[int] | None = None  # Reptile task pool; defaults to the evaluation level
    episodes_per_level: int = 1
    budget: int = 200
    master_seed: int = 0
    reptile: dict = field(default_factory=dict)
    ppo: dict = field(default_factory=dict)
    dqn: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.num_runs < 1:
            raise ValueError("num_runs must be >= 1")
        for name in ("max_moves", "max_distance", "stagnation_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")

    @classmethod
    def from_json(cls, doc: dict, **overrides) -> "RunConfig":
        merged = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
        unknown = set(merged) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown RunConfig keys: {sorted(unknown)}")
        return cls(**merged)


@dataclass
class RunRecord:
    run: int
    algorithm: str
    seed: int
    trace: list[tuple[int, int]]  # (move, distance) of the first evaluation episode
    deaths: list[dict]
    episode_rewards: list[float]
    final_moves: int
    final_distance: int


# ---------------------------------------------------------------- termination rules

def detect_stagnation_death(distance_trace: Sequence[float], threshold: int = 100) -> int | None:
    """First move at which ``threshold`` consecutive moves left the best distance unchanged.

    ``distance_trace[0]`` is the distance before any move and
    ``distance_trace[i]`` the distance after move ``i``.
    """
    if len(distance_trace) == 0:
        return None
    best = distance_trace[0]
    flat = 0
    for move in range(1, len(distance_trace)):
        d = distance_trace[move]
        if d > best:
            best = d
            flat = 0
        else:
            flat += 1
            if flat >= threshold:
                return move
    return None


class LimitedEnv:
    """Applies the benchmark's move cap, distance cap and stagnation death to any env."""

    def __init__(self, env, max_moves: int = 5000, max_distance: int = 5000, stagnation_threshold: int = 100):
        self.env = env
        self.max_moves = max_moves
        self.max_distance = max_distance
        self.stagnation_threshold = stagnation_threshold
        self.observation_shape = env.observation_shape
        self.n_actions = env.n_actions

    def reset(self):
        obs = self.env.reset()
        self._best = self.env.distance
        self._flat = 0
        return obs

    @property
    def distance(self) -> int:
        return min(self.env.distance, self.max_distance)

    def step(self, action) -> StepResult:
        res = self.env.step(action)
        info = dict(res.info)
        info["distance"] = min(info["distance"], self.max_distance)
        if info["distance"] > self._best:
            self._best = info["distance"]
            self._flat = 0
        else:
            self._flat += 1
        cause = None
        if info.get("death"):
            cause = "pit"
        elif not res.done and self._flat >= self.stagnation_threshold:
            cause = "stagnation"
        capped = not res.done and (info["moves"] >= self.max_moves or info["distance"] >= self.max_distance)
        done = res.done or cause is not None or capped
        info["death_cause"] = cause
        if done and not res.done:
            self.env.done = True
            info["truncated"] = cause is None
        return StepResult(res.obs, res.frame, res.reward, done, info)


# ---------------------------------------------------------------- environments

@lru_cache(maxsize=64)
def cached_level(seed: int, difficulty: int, width: int) -> Level:
    return generate_level(seed, difficulty, width=width)


def make_env_factory(config: RunConfig) -> Callable[[int], LimitedEnv]:
    def factory(level_seed: int) -> LimitedEnv:
        level = cached_level(int(level_seed), config.difficulty, config.level_width)
        return LimitedEnv(MicroMario(level), config.max_moves, config.max_distance, config.stagnation_threshold)

    return factory


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalResult:
    avg_reward: float
    avg_distance: float
    avg_moves: float
    episodes: list[dict]


def evaluate_policy(net: PolicyNetwork | None, envs: Sequence, episodes_per_level: int = 1,
                    rng: np.random.Generator | None = None) -> EvalResult:
    """Greedy rollouts of ``net`` (uniform random actions when ``net`` is None) averaged over all episodes."""
    rng = np.random.default_rng(0) if rng is None else rng
    episodes = []
    for env in envs:
        for _ in range(episodes_per_level):
            obs = env.reset()
            trace = [(0, int(env.distance))]
            rewards = []
            done = False
            res = None
            while not done:
                a = int(rng.integers(N_ACTIONS)) if net is None else select_greedy(net, obs)
                res = env.step(a)
                rewards.append(res.reward)
                trace.append((int(res.info["moves"]), int(res.info["distance"])))
                obs, done = res.obs, res.done
            episodes.append({
                "total_reward": math.fsum(rewards),
                "trace": trace,
                "moves": trace[-1][0],
                "distance": trace[-1][1],
                "death_cause": res.info.get("death_cause"),
            })
    return EvalResult(
        avg_reward=statistics.fmean(e["total_reward"] for e in episodes),
        avg_distance=statistics.fmean(e["distance"] for e in episodes),
        avg_moves=statistics.fmean(e["moves"] for e in episodes),
        episodes=episodes,
    )


# ---------------------------------------------------------------- training dispatch

def train_algorithm(algorithm: str, config: RunConfig, seed: int, level_seed: int):
    """Train ``algorithm`` to ``config.budget`` episodes; returns (network or None, metrics)."""
    factory = make_env_factory(config)
    if algorithm == "random":
        return None, []
    if algorithm == "reptile":
        tasks = config.train_level_seeds or [level_seed]
        rc = ReptileConfig(**{**config.reptile, "budget": config.budget, "task_seeds": tuple(tasks)})
        return train_reptile(factory, rc, seed=seed)
    if algorithm == "ppo":
        pc = PPOConfig(**{**config.ppo, "budget": config.budget})
        return train_ppo(lambda: factory(level_seed), pc, seed=seed)
    if algorithm == "dqn":
        dc = DQNConfig(**{**config.dqn, "budget": config.budget})
        return train_dqn(lambda: factory(level_seed), dc, seed=seed)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_seed(master_seed: int, run: int) -> int:
    return int(np.random.default_rng([int(master_seed), int(run)]).integers(2**63 - 1))


def _single_run(args) -> RunRecord:
    config, algorithm, run = args
    seed = run_seed(config.master_seed, run)
    level_seed = config.level_seed + run if config.per_run_levels else config.level_seed
    try:
        net, _ = train_algorithm(algorithm, config, seed, level_seed)
        env = make_env_factory(config)(level_seed)
        res = evaluate_policy(net, [env], config.episodes_per_level, np.random.default_rng([seed, 30]))
    except Exception as exc:
        raise RuntimeError(f"benchmark run {run} ({algorithm}, seed {seed}) failed: {exc}") from exc
    first = res.episodes[0]
    deaths = [{"episode": i, "cause": e["death_cause"], "move": e["moves"]}
              for i, e in enumerate(res.episodes) if e["death_cause"]]
    return RunRecord(run, algorithm, seed, first["trace"], deaths,
                     [e["total_reward"] for e in res.episodes], first["moves"], first["distance"])


def summarize(records: Sequence[RunRecord]) -> dict:
    by_algo: dict[str, list[RunRecord]] = {}
    for r in records:
        by_algo.setdefault(r.algorithm, []).append(r)
    out = {}
    for algo, recs in by_algo.items():
        dist = [r.final_distance for r in recs]
        moves = [r.final_moves for r in recs]
        out[algo] = {
            "rows": [{"run": r.run, "seed": r.seed, "distance": r.final_distance, "moves": r.final_moves,
                      "deaths": len(r.deaths)} for r in recs],
            "distance_mean": statistics.fmean(dist),
            "distance_std": statistics.pstdev(dist),
            "moves_mean": statistics.fmean(moves),
            "moves_std": statistics.pstdev(moves),
            "deaths": sum(len(r.deaths) for r in recs),
        }
    ranking = sorted(out, key=lambda a: (-out[a]["distance_mean"], a))
    return {"algorithms": out, "ranking_by_distance": ranking}


def run_benchmark(config: RunConfig, algorithms: Sequence[str] | None = None,
                  workers: int = 1) -> tuple[list[RunRecord], dict]:
    algorithms = list(algorithms or [config.algorithm])
    jobs = [(config, algo, run) for algo in algorithms for run in range(config.num_runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_single_run, jobs))
    else:
        records = [_single_run(job) for job in jobs]
    summary = summarize(records)
    summary["config"] = asdict(config)
    return records, summary


# ---------------------------------------------------------------- export

def format_summary(summary: dict) -> str:
    lines = []
    for algo, s in summary["algorithms"].items():
        lines.append(f"{algo:8s} distance {s['distance_mean']:.1f} ± {s['distance_std']:.1f}   "
                     f"moves {s['moves_mean']:.1f} ± {s['moves_std']:.1f}   deaths {s['deaths']}")
    lines.append("ranking by distance: " + " > ".join(summary["ranking_by_distance"]))
    return "\n".join(lines)


def export_results(records: Sequence[RunRecord], summary: dict, out_dir: str | Path) -> dict[str, Path]:
    """Write steps.csv, summary.json and curves.json under ``out_dir``."""
    if not records:
        raise ValueError("refusing to export an empty record list")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / "steps.csv", "summary": out / "summary.json", "curves": out / "curves.json"}
        with open(paths["csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "algorithm", "move", "distance"])
            for r in records:
                for move, dist in r.trace:
                    w.writerow([r.run, r.algorithm, move, dist])
        paths["summary"].write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
        curves: dict[str, dict[str, list]] = {}
        for r in records:
            curves.setdefault(r.algorithm, {})[str(r.run)] = [list(p) for p in r.trace]
        paths["curves"].write_text(json.dumps(curves, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write benchmark results to {out}: {exc}") from exc
    return paths


def read_steps_csv(path: str | Path) -> dict[tuple[int, str], list[tuple[int, int]]]:
    traces: dict[tuple[int, str], list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            traces.setdefault((int(row["run"]), row["algorithm"]), []).append(
                (int(row["move"]), int(row["distance"])))
    return traces
