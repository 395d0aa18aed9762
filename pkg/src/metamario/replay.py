from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ExperienceTuple:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool
    # discounted return-to-go from this step; filled in once the episode ends
    return_to_go: float = 0.0


class ReplayBuffer:
    """FIFO ring of experience tuples; sampling draws from a caller-owned RNG."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("replay capacity must be >= 1")
        self.capacity = capacity
        self._items: list[ExperienceTuple | None] = [None] * capacity
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def push(self, item: ExperienceTuple) -> None:
        self._items[self.inserted % self.capacity] = item
        self.inserted += 1

    def contents(self) -> list[ExperienceTuple]:
        """Stored tuples, oldest first."""
        n = len(self)
        start = self.inserted - n
        return [self._items[i % self.capacity] for i in range(start, start + n)]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[ExperienceTuple]:
        n = len(self)
        if n == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        # without replacement, kept in insertion order
        idx = np.sort(rng.choice(n, size=min(batch_size, n), replace=False))
        start = self.inserted - n
        return [self._items[(start + int(i)) % self.capacity] for i in idx]

    def clear(self) -> None:
        self._items = [None] * self.capacity
        self.inserted = 0


def stack_batch(batch: list[ExperienceTuple]) -> dict[str, np.ndarray]:
    return {
        "obs": np.stack([e.obs for e in batch]),
        "actions": np.array([e.action for e in batch], dtype=np.int64),
        "rewards": np.array([e.reward for e in batch]),
        "next_obs": np.stack([e.next_obs for e in batch]),
        "dones": np.array([e.done for e in batch], dtype=bool),
        "returns": np.array([e.return_to_go for e in batch]),
    }
