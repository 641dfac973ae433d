"""The guided-learning control loop.

Per step, while no oracle solution has been accepted, the query gate
(a two-armed bandit, or a fixed always/never rule) decides whether to ask
the oracle; asking is only allowed right after a strictly positive primary
reward. An accepted answer latches the solution flag for the rest of the
trial, after which the primary agent follows the policy implied by the
solution with probability ``follow_probability``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .agents.bandit import QUERY, BanditAgent
from .agents.dqn import DQNAgent
from .agents.tabular import TabularAgent
from .cache import OracleCache, cached_query
from .config import RunConfig, schedule
from .core import epsilon_at, make_rng
from .envs.cube import CubeEnv, CubeEnvConfig
from .envs.grid import GridEnv, GridEnvConfig, grid_matches, target_shape
from .oracle.base import OracleError, OracleQuery, interpret
from .oracle.http import EndpointConfig, HttpOracle
from .oracle.prompts import descriptor_for
from .oracle.scripted import ScriptedOracle, ScriptedOracleConfig

log = logging.getLogger(__name__)

LOGISTIC_SLOPE = 20.0
LOGISTIC_CENTER = 0.9


class TrialAborted(RuntimeError):
    pass


def secondary_reward(eval_score: float, accepted: bool, mode: str, n_cells: int | None = None) -> float:
    """Reward for the query arm.

    ``binary_pm``: +1/-1; ``binary_01``: 1/0; ``logistic``: a sigmoid of the
    matched-cell share ``eval_score / n_cells`` (grids only).
    """
    if mode == "binary_pm":
        return 1.0 if accepted else -1.0
    if mode == "binary_01":
        return 1.0 if accepted else 0.0
    if mode == "logistic":
        if not n_cells:
            raise ValueError("logistic SEQ reward needs the grid cell count")
        return 1.0 / (1.0 + math.exp(-LOGISTIC_SLOPE * (eval_score / n_cells - LOGISTIC_CENTER)))
    raise ValueError(f"unknown secondary reward mode {mode!r}")


def build_env(cfg: RunConfig):
    e = cfg.env
    if e.kind == "cube":
        return CubeEnv(CubeEnvConfig.standard(
            e.n_cubes, bonus=e.bonus, horizon=e.horizon, delta=e.delta, acceptance_mode=e.acceptance_mode
        ))
    target = target_shape(e.target)
    maker = GridEnvConfig.image if e.kind == "image" else GridEnvConfig.arrangement
    kw = dict(bonus=e.bonus, horizon=e.horizon, delta=e.delta)
    if e.kind == "arrangement":
        kw["penalize_rejected_drops"] = e.penalize_rejected_drops
    return GridEnv(maker(target, **kw))


def build_primary(cfg: RunConfig, env, rng):
    """Primary agent; uses only the ``primary-*`` forks of ``rng``."""
    p = cfg.primary
    if p.kind == "tabular":
        return TabularAgent(env.n_actions, env.state_key, p.alpha, p.gamma)
    return DQNAgent(
        env.state_dim, env.n_actions, env.encode_state, rng.fork("primary-net"),
        hidden=p.hidden, lr=p.alpha, gamma=p.gamma, batch_size=p.batch_size,
        buffer_size=p.buffer_size, target_sync=p.target_sync,
    )


def build_secondary(cfg: RunConfig, env, rng) -> BanditAgent:
    s = cfg.secondary
    if s.kind == "tabular":
        return BanditAgent(key_fn=env.state_key, alpha=s.alpha, gamma=s.gamma)
    return BanditAgent(encode_fn=env.encode_state, state_dim=env.state_dim, rng=rng.fork("secondary-net"),
                       alpha=s.alpha, gamma=s.gamma, hidden=s.hidden)


def build_backend(cfg: RunConfig, env, rng):
    o = cfg.oracle
    if o.backend == "scripted":
        return ScriptedOracle(env, ScriptedOracleConfig(o.threshold, o.error_slope), rng.fork("oracle"))
    return HttpOracle(EndpointConfig(url=o.url, model=o.model, timeout=o.timeout, max_retries=o.max_retries))


@dataclass
class SolutionFlag:
    F: int = 0
    solution: Any = None
    found_at: tuple[int, int] | None = None


@dataclass
class StepRecord:
    action: int
    reward: float
    next_state: Any
    terminal: bool
    gate_open: bool
    arm: int | None
    queried: bool
    seq_reward: float | None
    accepted: bool
    followed: bool


@dataclass
class TrialMetrics:
    seed: int
    gating: str
    returns: list[float] = field(default_factory=list)
    final_evals: list[float] = field(default_factory=list)
    best_evals: list[float] = field(default_factory=list)
    queries: list[int] = field(default_factory=list)  # gate-open query decisions per episode
    query_arms: list[int] = field(default_factory=list)  # arm-1 choices per episode (gate open or not)
    backend_calls: int = 0
    cache_hits: int = 0
    accepted_queries: int = 0
    found_at: tuple[int, int] | None = None
    primary_updates: int = 0
    wall_time: float = 0.0
    trace: list[tuple[int, float]] | None = None

    @property
    def total_queries(self) -> int:
        return int(sum(self.queries))

    def first_episode_reaching(self, level: float) -> int | None:
        for i, e in enumerate(self.best_evals):
            if e >= level:
                return i
        return None


class Trial:
    """Everything one seeded run of the loop owns."""

    def __init__(self, cfg: RunConfig, seed: int, cache: OracleCache | None = None,
                 backend=None, trace: bool = False):
        self.cfg = cfg
        self.rng = make_rng(seed)
        self.env = build_env(cfg)
        self.primary = build_primary(cfg, self.env, self.rng)
        self.act_rng = self.rng.fork("primary-act")
        self.gating = cfg.query_gating
        self.eps_primary = schedule(cfg.primary)
        self.eps_secondary = schedule(cfg.secondary)
        self.flag = SolutionFlag()
        self.metrics = TrialMetrics(seed, self.gating, trace=[] if trace else None)
        if self.gating != "never":
            self.secondary = build_secondary(cfg, self.env, self.rng) if self.gating == "seq" else None
            self.seq_rng = self.rng.fork("secondary-act")
            self.follow_rng = self.rng.fork("follow")
            self.cache_rng = self.rng.fork("cache")
            self.backend = backend or build_backend(cfg, self.env, self.rng)
            self.cache = cache if cache is not None else OracleCache(cfg.oracle.pool_size)
            self.descriptor = descriptor_for(self.env)
        self.n_cells = getattr(self.env, "n_cells", None)

    def ask_oracle(self, state):
        """(evaluation score, accepted, parsed solution) for one query from ``state``."""
        query = OracleQuery(self.descriptor, self.env.render_state(state), self.cfg.oracle.temperature)
        calls_before = self.cache.backend_calls
        try:
            resp = cached_query(self.cache, self.backend, query, self.cache_rng, self.env)
        except OracleError as exc:
            log.warning("oracle query failed, scoring it as a wrong answer: %s", exc)
            return 0.0, False, None
        finally:
            self.metrics.backend_calls += self.cache.backend_calls - calls_before
        if resp.served_from_cache:
            self.metrics.cache_hits += 1
        if not resp.ok:
            return 0.0, False, None
        parsed = resp.parsed
        if isinstance(self.env, GridEnv):
            score = float(grid_matches(np.asarray(parsed), self.env.target))
        else:
            score = self.env.evaluate(parsed)
        return score, self.env.is_solution(parsed), parsed

    def lagr_step(self, state, prev_reward: float, episode: int, step: int) -> StepRecord:
        env, flag = self.env, self.flag
        legal = env.legal_actions(state)
        eps = epsilon_at(self.eps_primary, episode)
        gate_open = prev_reward > 0
        arm = None
        queried = False
        seq_reward = None
        accepted = False
        action = None
        if not flag.F:
            if self.gating == "seq":
                arm = self.secondary.act(state, epsilon_at(self.eps_secondary, episode), self.seq_rng)
            elif self.gating == "always":
                arm = QUERY
            else:
                arm = 0
            if gate_open and arm == QUERY:
                queried = True
                score, accepted, parsed = self.ask_oracle(state)
                seq_reward = secondary_reward(score, accepted, self.cfg.secondary_reward_mode, self.n_cells)
                if accepted:
                    flag.F, flag.solution, flag.found_at = 1, parsed, (episode, step)
                    self.metrics.found_at = flag.found_at
                    self.metrics.accepted_queries += 1
            action = self.primary.act(state, legal, eps, self.act_rng)
            if gate_open and self.gating == "seq":
                self.secondary.update(state, arm, seq_reward if queried else 0.0)
        followed = False
        if flag.F:
            p = self.cfg.follow_probability
            if p >= 1.0 or self.follow_rng.random() < p:
                guided = env.policy_action(flag.solution, state)
                if guided is not None:
                    action, followed = guided, True
            if action is None:
                action = self.primary.act(state, legal, eps, self.act_rng)
        nxt, reward, terminal = env.step(state, action)
        if not math.isfinite(reward):
            raise TrialAborted(f"non-finite reward {reward} at episode {episode}, step {step}")
        self.primary.update(state, action, reward, nxt, env.legal_actions(nxt), terminal)
        self.metrics.primary_updates += 1
        return StepRecord(action, reward, nxt, terminal, gate_open, arm, queried, seq_reward, accepted, followed)

    def run_episode(self, episode: int) -> None:
        env, m = self.env, self.metrics
        state = env.reset()
        prev_reward = 0.0
        total = 0.0
        best = env.evaluate(state)
        queries = arms = 0
        for step in range(self.cfg.env.horizon):
            rec = self.lagr_step(state, prev_reward, episode, step)
            total += rec.reward
            queries += rec.queried
            arms += rec.arm == QUERY
            if m.trace is not None:
                m.trace.append((rec.action, rec.reward))
            state, prev_reward = rec.next_state, rec.reward
            best = max(best, env.evaluate(state))
            if rec.terminal:
                break
        m.returns.append(total)
        m.final_evals.append(env.evaluate(state))
        m.best_evals.append(best)
        m.queries.append(queries)
        m.query_arms.append(arms)

    def run(self) -> TrialMetrics:
        t0 = time.perf_counter()
        for episode in range(self.cfg.episodes):
            self.run_episode(episode)
        if self.flag.F and not self.env.is_solution(self.flag.solution):
            raise TrialAborted("accepted solution no longer passes the acceptance test")
        self.metrics.wall_time = time.perf_counter() - t0
        return self.metrics


def run_trial(cfg: RunConfig, seed: int, cache: OracleCache | None = None, backend=None,
              trace: bool = False) -> TrialMetrics:
    return Trial(cfg, seed, cache=cache, backend=backend, trace=trace).run()


def run_baseline(cfg: RunConfig, seed: int, trace: bool = False) -> TrialMetrics:
    """Plain RL agent with no oracle machinery at all (reference for gating='never')."""
    rng = make_rng(seed)
    env = build_env(cfg)
    agent = build_primary(cfg, env, rng)
    act_rng = rng.fork("primary-act")
    eps_sched = schedule(cfg.primary)
    m = TrialMetrics(seed, "baseline", trace=[] if trace else None)
    t0 = time.perf_counter()
    for episode in range(cfg.episodes):
        eps = epsilon_at(eps_sched, episode)
        state = env.reset()
        total = 0.0
        best = env.evaluate(state)
        for _ in range(cfg.env.horizon):
            legal = env.legal_actions(state)
            action = agent.act(state, legal, eps, act_rng)
            nxt, reward, terminal = env.step(state, action)
            agent.update(state, action, reward, nxt, env.legal_actions(nxt), terminal)
            m.primary_updates += 1
            total += reward
            if m.trace is not None:
                m.trace.append((action, reward))
            state = nxt
            best = max(best, env.evaluate(state))
            if terminal:
                break
        m.returns.append(total)
        m.final_evals.append(env.evaluate(state))
        m.best_evals.append(best)
        m.queries.append(0)
        m.query_arms.append(0)
    m.wall_time = time.perf_counter() - t0
    return m


def _mean_stderr(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape[0] < 2:
        return arr.mean(axis=0), np.zeros(arr.shape[1:]) if arr.ndim > 1 else 0.0
    return arr.mean(axis=0), arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])


@dataclass
class Aggregate:
    label: str
    seeds: list[int]
    mean_returns: np.ndarray
    stderr_returns: np.ndarray
    query_mean: float
    query_stderr: float
    backend_calls: int
    cache_hits: int
    trials: list[TrialMetrics]

    @property
    def total_return(self) -> float:
        return float(np.sum(self.mean_returns))

    def episodes_to_level(self, level: float) -> list[float]:
        """Per-seed first episode with best evaluation >= level (inf if never)."""
        out = []
        for t in self.trials:
            e = t.first_episode_reaching(level)
            out.append(math.inf if e is None else float(e))
        return out


def aggregate(label: str, trials: list[TrialMetrics]) -> Aggregate:
    if not trials:
        raise ValueError("need at least one trial to aggregate")
    lengths = {len(t.returns) for t in trials}
    if len(lengths) != 1:
        raise ValueError(f"trials have different episode counts: {sorted(lengths)}")
    mean, se = _mean_stderr([t.returns for t in trials])
    qm, qse = _mean_stderr([t.total_queries for t in trials])
    return Aggregate(
        label, [t.seed for t in trials], np.asarray(mean), np.asarray(se), float(qm), float(qse),
        sum(t.backend_calls for t in trials), sum(t.cache_hits for t in trials), list(trials),
    )


def run_experiment(cfg: RunConfig, seeds=None, cache: OracleCache | None = None,
                   label: str | None = None) -> Aggregate:
    """Trials over ``seeds`` (serially, so a shared cache fills deterministically)."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    if cfg.query_gating != "never" and cache is None:
        cache = OracleCache(cfg.oracle.pool_size)
    trials = [run_trial(cfg, s, cache=cache) for s in seeds]
    return aggregate(label or cfg.query_gating, trials)


def performance_ratio(lagr: Aggregate, baseline: Aggregate) -> float:
    """Total mean return of the guided agent over that of the baseline."""
    if len(lagr.mean_returns) != len(baseline.mean_returns):
        raise ValueError("aggregates cover different numbers of episodes")
    denom = baseline.total_return
    if denom <= 0:
        raise ValueError(f"baseline total return {denom} is not positive; ratio undefined")
    return lagr.total_return / denom
