"""Deterministic stand-in for a pattern-extrapolating LLM.

It answers correctly once enough of the target is visible in the prompt
(completion fraction >= ``threshold``) and otherwise returns a plausible
but wrong completion that keeps the visible partial pattern. Temperature
adds a chance ``temperature * error_slope`` of a wrong answer.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..envs.cube import CubeEnv
from ..envs.grid import GridEnv
from .base import OracleQuery


@dataclass(frozen=True)
class ScriptedOracleConfig:
    threshold: float = 0.45
    error_slope: float = 0.0
    targets: tuple | None = None  # override the environment's own targets

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.error_slope < 0:
            raise ValueError("error_slope must be non-negative")

    def error_probability(self, temperature: float) -> float:
        return min(1.0, max(0.0, temperature * self.error_slope))


class _CubeRule:
    def __init__(self, env: CubeEnv, targets):
        self.env = env
        self.targets = tuple(tuple(t) for t in (targets or env.config.target_orders))

    def completion(self, state):
        """(stack length over target length, first target whose order the stack follows).

        A stack that is not an in-order subsequence of any target carries no usable
        pattern and scores 0.
        """
        for t in self.targets:
            it = iter(t)
            if all(c in it for c in state):
                return len(state) / len(t), t
        return 0.0, self.targets[0]

    def corrupt(self, state, target):
        state = tuple(state)
        rest = [c for c in target if c not in state]
        candidate = state + tuple(reversed(rest))
        if candidate not in self.targets:
            return candidate
        # reversal happened to land on a target; try transpositions, suffix first
        n = len(candidate)
        pairs = itertools.chain(
            itertools.combinations(range(len(state), n), 2),
            itertools.combinations(range(n), 2),
        )
        for i, j in pairs:
            c = list(candidate)
            c[i], c[j] = c[j], c[i]
            if tuple(c) not in self.targets:
                return tuple(c)
        return candidate

    def render(self, solution) -> str:
        return self.env.render_state(solution)


class _GridRule:
    def __init__(self, env: GridEnv, targets):
        self.env = env
        self.target = np.asarray(targets[0] if targets else env.target.cells, dtype=np.uint8)
        self.n_ones = int(self.target.sum())

    def completion(self, cells):
        cells = np.asarray(cells)
        hits = int(np.count_nonzero((cells == 1) & (self.target == 1)))
        return (hits / self.n_ones if self.n_ones else 1.0), self.target

    def corrupt(self, cells, target):
        cells = np.asarray(cells, dtype=np.uint8)
        h, w = target.shape
        shifts = [(0, dx) for dx in range(1, w)] + [(dy, 0) for dy in range(1, h)]
        for dy, dx in shifts:
            shifted = np.zeros_like(target)
            shifted[dy:, dx:] = target[: h - dy, : w - dx]
            candidate = shifted | cells
            if not self.env.is_solution(candidate):
                return candidate
        return (1 - target) | cells

    def render(self, solution) -> str:
        return self.env.render_state(solution)


class ScriptedOracle:
    """Backend whose answers are a pure function of the prompt's partial state
    (plus a seeded error coin when temperature and ``error_slope`` are positive)."""

    def __init__(self, env, config: ScriptedOracleConfig | None = None, rng=None):
        self.env = env
        self.config = config or ScriptedOracleConfig()
        self.rng = rng
        self.backend_id = f"scripted(theta={self.config.threshold:g},slope={self.config.error_slope:g})"
        if isinstance(env, CubeEnv):
            self.rule = _CubeRule(env, self.config.targets)
        else:
            self.rule = _GridRule(env, self.config.targets)
        self.calls = 0

    def answer(self, state, temperature: float = 0.0):
        """The candidate solution (as a state) this oracle gives for ``state``."""
        fraction, target = self.rule.completion(state)
        p_err = self.config.error_probability(temperature)
        wrong = False
        if p_err > 0.0:
            if self.rng is None:
                raise ValueError("a scripted oracle with a nonzero error rate needs an rng")
            wrong = self.rng.random() < p_err
        if fraction >= self.config.threshold and not wrong:
            return target
        return self.rule.corrupt(state, target)

    def complete(self, query: OracleQuery) -> str:
        self.calls += 1
        state = self.env.parse_state(query.rendered_state)
        return self.rule.render(self.answer(state, query.temperature))


def scripted_query(config: ScriptedOracleConfig, query: OracleQuery, current_state, env, rng=None):
    from .base import interpret

    oracle = ScriptedOracle(env, config, rng)
    text = oracle.rule.render(oracle.answer(current_state, query.temperature))
    return interpret(text, env, oracle.backend_id)
