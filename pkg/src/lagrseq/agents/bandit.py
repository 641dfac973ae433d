"""Two-armed query gate: arm 0 = don't query, arm 1 = query.

Every pull ends the bandit episode, so updates regress straight onto the
observed reward with no bootstrap term.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .mlp import AdamState, MlpParams, mlp_forward, regression_step
from .tabular import TabularQ, select_action

NO_QUERY, QUERY = 0, 1
ARMS = (NO_QUERY, QUERY)


class BanditAgent:
    def __init__(
        self,
        key_fn: Callable | None = None,
        encode_fn: Callable | None = None,
        state_dim: int | None = None,
        rng=None,
        alpha: float = 0.1,
        gamma: float = 0.95,
        hidden: Sequence[int] = (64, 64),
    ):
        # gamma is kept for config fidelity only; terminal updates never use it
        self.gamma = gamma
        self.alpha = alpha
        if encode_fn is None:
            if key_fn is None:
                raise ValueError("a tabular bandit needs key_fn")
            self.kind = "tabular"
            self.key_fn = key_fn
            self.q = TabularQ(2, alpha, gamma)
        else:
            self.kind = "mlp"
            self.encode_fn = encode_fn
            self.net = MlpParams.init((state_dim, *hidden, 2), rng)
            self.adam = AdamState.for_params(self.net, lr=alpha)

    def values(self, state) -> np.ndarray:
        if self.kind == "tabular":
            return self.q.row(self.key_fn(state)).copy()
        return mlp_forward(self.net, self.encode_fn(state))

    def act(self, state, epsilon: float, rng) -> int:
        return select_action(self.values(state), ARMS, epsilon, rng)

    def update(self, state, arm: int, reward: float) -> None:
        if arm not in ARMS:
            raise ValueError(f"arm must be 0 or 1, got {arm}")
        if self.kind == "tabular":
            row = self.q._mutable_row(self.key_fn(state))
            row[arm] += self.alpha * (reward - row[arm])
        else:
            x = self.encode_fn(state)[None, :]
            regression_step(self.net, self.adam, x, [arm], [reward])


def bandit_update(agent: BanditAgent, state, arm: int, reward: float) -> BanditAgent:
    agent.update(state, arm, reward)
    return agent
