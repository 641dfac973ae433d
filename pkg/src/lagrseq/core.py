"""Shared contracts: environment protocol, seeded random streams, exploration schedules."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Hashable, Protocol, Sequence

import numpy as np


class Env(Protocol):
    """What every pattern-completion environment provides.

    Transitions are deterministic. ``step`` returns ``(next_state, reward,
    terminal)``; the episode horizon is enforced by the caller.
    """

    env_id: str
    n_actions: int

    def reset(self) -> Any: ...

    def step(self, state: Any, action: int) -> tuple[Any, float, bool]: ...

    def evaluate(self, state: Any) -> float: ...

    def legal_actions(self, state: Any) -> Sequence[int]: ...

    def is_solution(self, candidate: Any) -> bool: ...

    def render_state(self, state: Any) -> str: ...

    def parse_state(self, text: str) -> Any: ...

    def policy_action(self, solution: Any, state: Any) -> int | None: ...

    def state_key(self, state: Any) -> Hashable: ...


def _name_to_words(name: str) -> tuple[int, ...]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class RngStream:
    """Seeded random stream that can fork named, independent substreams.

    A fork depends only on the parent's seed path and the fork name, so the
    order in which components fork (or how many draws they make) never
    perturbs a sibling stream.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.path))
        )

    def fork(self, name: str) -> "RngStream":
        return RngStream(self.seed, self.path + _name_to_words(name))

    def random(self) -> float:
        return float(self.generator.random())

    def integers(self, low: int, high: int | None = None) -> int:
        return int(self.generator.integers(low, high))

    def choice(self, options: Sequence[Any]) -> Any:
        return options[int(self.generator.integers(len(options)))]

    def normal(self, size=None, scale: float = 1.0):
        return self.generator.normal(0.0, scale, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, depth={len(self.path) // 4})"


def make_rng(seed: int) -> RngStream:
    return RngStream(seed)


@dataclass(frozen=True)
class EpsilonSchedule:
    """Per-episode exploration rate.

    ``decay`` means episodes-to-minimum for ``linear`` and the per-episode
    multiplicative factor for ``exponential``.
    """

    kind: str = "linear"
    initial: float = 1.0
    minimum: float = 0.05
    decay: float = 100.0

    def __post_init__(self):
        if self.kind not in ("linear", "exponential"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 <= self.minimum <= self.initial <= 1.0:
            raise ValueError(
                f"need 0 <= minimum <= initial <= 1, got minimum={self.minimum}, initial={self.initial}"
            )
        if self.kind == "exponential" and not 0.0 < self.decay <= 1.0:
            raise ValueError(f"exponential decay factor must lie in (0, 1], got {self.decay}")
        if self.kind == "linear" and self.decay <= 0:
            raise ValueError(f"linear decay (episodes to minimum) must be positive, got {self.decay}")


def epsilon_at(schedule: EpsilonSchedule, episode: int) -> float:
    if episode < 0:
        raise ValueError("episode must be non-negative")
    if schedule.kind == "linear":
        frac = episode / schedule.decay
        if frac >= 1.0:
            return schedule.minimum
        value = schedule.initial - (schedule.initial - schedule.minimum) * frac
        return min(schedule.initial, max(schedule.minimum, value))
    return max(schedule.minimum, schedule.initial * schedule.decay**episode)


class StateParseError(ValueError):
    """Oracle or fixture text that does not decode to a valid state.

    ``code`` separates text with no recoverable structure (``malformed``) from
    structure that breaks the environment's constraints (``unknown-symbol``,
    ``duplicate``, ``dimension``, ``non-binary``, ``incomplete``).
    """

    MALFORMED = "malformed"

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code

    @property
    def is_malformed(self) -> bool:
        return self.code == self.MALFORMED


class IllegalActionError(ValueError):
    pass
