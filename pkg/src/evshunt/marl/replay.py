"""Transition records and the bounded FIFO replay buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EpisodeHistory:
    """Observation and action sequences of one episode, shared by its transitions.

    ``obs[t]`` is the observation at step t (``obs`` has one more row than
    ``actions`` once the episode is complete).
    """

    obs: list[np.ndarray]
    actions: list[np.ndarray]


@dataclass
class Transition:
    obs: np.ndarray           # (n_agents, obs_dim) scaled joint state
    actions: np.ndarray       # (n_agents,) level indices
    reward: float
    next_obs: np.ndarray
    done: bool
    agent_mask: np.ndarray    # occupied piles at obs
    next_mask: np.ndarray     # occupied piles at next_obs
    history: EpisodeHistory | None = None
    t: int = 0


class ReplayBuffer:
    """Ring buffer; once full the oldest transition is overwritten."""

    def __init__(self, capacity: int = 2000) -> None:
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.choice(len(self._items), size=min(batch_size, len(self._items)), replace=False)
        return [self._items[i] for i in idx]

    def oldest(self) -> Transition:
        return self._items[self._next % len(self._items)] if len(self._items) == self.capacity else self._items[0]
