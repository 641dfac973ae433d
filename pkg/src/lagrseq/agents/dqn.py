"""DQN on the flat MLP: uniform replay, periodic target sync, Adam."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .mlp import AdamState, MlpParams, mlp_forward, regression_step
from .tabular import select_action


class ReplayBuffer:
    """Fixed-capacity ring of ``(state, action, reward, next_state, terminal)``."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity)
        self.inserted = np.zeros(capacity, dtype=np.int64)  # insertion serial, for auditing
        self.count = 0
        self._next = 0

    def __len__(self) -> int:
        return min(self.count, self.capacity)

    def push(self, s, a, r, s_next, terminal) -> None:
        i = self._next
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.terminals[i] = float(terminal)
        self.inserted[i] = self.count
        self.count += 1
        self._next = (i + 1) % self.capacity

    def sample_indices(self, batch: int, rng) -> np.ndarray:
        size = len(self)
        if batch > size:
            raise ValueError(f"cannot sample {batch} transitions from {size}")
        gen = rng.generator
        if batch * 4 > size:
            return gen.permutation(size)[:batch]
        while True:
            idx = gen.integers(0, size, batch)
            if np.unique(idx).size == batch:
                return idx

    def sample(self, batch: int, rng):
        idx = self.sample_indices(batch, rng)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terminals[idx],
        )


def dqn_train_step(
    net: MlpParams,
    adam: AdamState,
    buffer: ReplayBuffer,
    batch: int,
    gamma: float,
    target_net: MlpParams,
    rng,
) -> float:
    s, a, r, s2, term = buffer.sample(batch, rng)
    q_next = mlp_forward(target_net, s2)
    y = r + gamma * q_next.max(axis=1) * (1.0 - term)
    return regression_step(net, adam, s, a, y)


class DQNAgent:
    kind = "dqn"

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        encode_fn: Callable,
        rng,
        hidden: Sequence[int] = (128, 128),
        lr: float = 1e-3,
        gamma: float = 0.95,
        batch_size: int = 32,
        buffer_size: int = 10000,
        target_sync: int = 100,
    ):
        self.sizes = (state_dim, *hidden, n_actions)
        self.encode_fn = encode_fn
        self.rng = rng
        self.net = MlpParams.init(self.sizes, rng)
        self.target = self.net.copy()
        self.adam = AdamState.for_params(self.net, lr=lr)
        self.buffer = ReplayBuffer(buffer_size, state_dim)
        self.gamma = gamma
        self.batch_size = batch_size
        self.target_sync = max(1, int(target_sync))
        self.train_steps = 0
        self.last_loss = float("nan")

    def values(self, state) -> np.ndarray:
        return mlp_forward(self.net, self.encode_fn(state))

    def act(self, state, legal: Sequence[int], epsilon: float, rng) -> int:
        if epsilon > 0.0 and rng.random() < epsilon:
            return int(legal[rng.integers(len(legal))])
        q = self.values(state)
        return select_action(q[list(legal)], legal, 0.0, rng)

    def update(self, s, a, r, s_next, legal_next, terminal) -> None:
        self.buffer.push(self.encode_fn(s), a, r, self.encode_fn(s_next), terminal)
        if len(self.buffer) < self.batch_size:
            return
        self.last_loss = dqn_train_step(
            self.net, self.adam, self.buffer, self.batch_size, self.gamma, self.target, self.rng
        )
        self.train_steps += 1
        if self.train_steps % self.target_sync == 0:
            self.target.theta[:] = self.net.theta
