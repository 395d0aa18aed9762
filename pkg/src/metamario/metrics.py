"""Per-episode metrics records shared by the three trainers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable


@dataclass
class EpisodeMetrics:
    meta_iter: int
    task: int
    episode: int
    total_reward: float
    distance: int
    moves: int


def write_jsonl(path: str | Path, records: Iterable[EpisodeMetrics]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[EpisodeMetrics]:
    with open(path) as fh:
        return [EpisodeMetrics(**json.loads(line)) for line in fh if line.strip()]
