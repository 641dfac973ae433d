"""Tabular Q-learning and epsilon-greedy action selection."""

from __future__ import annotations

from typing import Callable, Hashable, Sequence

import numpy as np


def select_action(values: Sequence[float], legal: Sequence[int], epsilon: float, rng) -> int:
    """Epsilon-greedy over ``legal`` (``values[i]`` belongs to ``legal[i]``).

    Greedy ties are broken uniformly at random.
    """
    if not len(legal):
        raise ValueError("no legal actions to choose from")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(legal[rng.integers(len(legal))])
    values = np.asarray(values, dtype=np.float64)
    best = np.flatnonzero(values == values.max())
    if best.size == 1:
        return int(legal[best[0]])
    return int(legal[best[rng.integers(best.size)]])


class TabularQ:
    """State-keyed action values; unseen entries read as zero."""

    def __init__(self, n_actions: int, alpha: float = 0.1, gamma: float = 0.95):
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.table: dict[Hashable, np.ndarray] = {}

    def row(self, key: Hashable) -> np.ndarray:
        row = self.table.get(key)
        if row is None:
            return np.zeros(self.n_actions)
        return row

    def get(self, key: Hashable, action: int) -> float:
        row = self.table.get(key)
        return 0.0 if row is None else float(row[action])

    def _mutable_row(self, key: Hashable) -> np.ndarray:
        row = self.table.get(key)
        if row is None:
            row = self.table[key] = np.zeros(self.n_actions)
        return row


def q_update(q: TabularQ, s, a: int, r: float, s_next, legal_next: Sequence[int], terminal: bool) -> float:
    """One Q-learning backup; returns the new Q(s, a)."""
    if terminal:
        bootstrap = 0.0
    else:
        if not len(legal_next):
            raise ValueError("non-terminal transition with no legal next actions")
        nxt = q.row(s_next)
        bootstrap = float(max(nxt[b] for b in legal_next))
    row = q._mutable_row(s)
    row[a] += q.alpha * (r + q.gamma * bootstrap - row[a])
    return float(row[a])


class TabularAgent:
    """Q-learning primary agent keyed by the environment's canonical state text."""

    kind = "tabular"

    def __init__(self, n_actions: int, key_fn: Callable, alpha: float = 0.1, gamma: float = 0.95):
        self.q = TabularQ(n_actions, alpha, gamma)
        self.key_fn = key_fn

    def act(self, state, legal: Sequence[int], epsilon: float, rng) -> int:
        row = self.q.row(self.key_fn(state))
        return select_action(row[list(legal)], legal, epsilon, rng)

    def update(self, s, a, r, s_next, legal_next, terminal) -> None:
        q_update(self.q, self.key_fn(s), a, r, self.key_fn(s_next), legal_next, terminal)
