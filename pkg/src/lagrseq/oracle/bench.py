"""Oracle accuracy versus how much of the target the prompt reveals."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..envs.cube import CubeEnv
from ..envs.grid import GridState
from .base import OracleError, OracleQuery, interpret
from .prompts import descriptor_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AccuracyRow:
    fraction: float  # requested
    realized: float  # revealed share of the target actually shown
    accuracy: float
    n: int


def partial_target(env, fraction: float):
    """The first ``round(fraction * size)`` elements of the target, and the realized fraction."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    if isinstance(env, CubeEnv):
        target = env.config.target_orders[0]
        k = int(round(fraction * len(target)))
        return tuple(target[:k]), k / len(target)
    ones = np.flatnonzero(env.target.cells.ravel())
    k = int(round(fraction * ones.size))
    cells = np.zeros(env.target.cells.size, dtype=np.uint8)
    cells[ones[:k]] = 1
    return GridState(cells.reshape(env.target.shape), 0), k / ones.size


def accuracy_sweep(backend, env, fractions, n_queries: int, temperature: float = 0.0, descriptor=None):
    """Share of ``n_queries`` responses accepted by ``env.is_solution`` at each prefix fraction.

    Backend failures count as wrong answers.
    """
    if n_queries < 1:
        raise ValueError("n_queries must be at least 1")
    descriptor = descriptor or descriptor_for(env)
    rows = []
    for fraction in fractions:
        state, realized = partial_target(env, fraction)
        query = OracleQuery(descriptor, env.render_state(state), temperature)
        correct = 0
        for _ in range(n_queries):
            try:
                text = backend.complete(query)
            except OracleError as exc:
                log.warning("oracle failure at fraction %.3f: %s", fraction, exc)
                continue
            resp = interpret(text, env, backend.backend_id)
            if resp.ok and env.is_solution(resp.parsed):
                correct += 1
        rows.append(AccuracyRow(float(fraction), realized, correct / n_queries, n_queries))
    return rows
