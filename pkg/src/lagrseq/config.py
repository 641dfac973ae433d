"""Run configuration: dataclasses, table defaults per environment, strict dict loading."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .core import EpsilonSchedule

GATINGS = ("seq", "always", "never")
REWARD_MODES = ("binary_pm", "binary_01", "logistic")
VARIANT_GATING = {"lagr-seq": "seq", "lagr-always": "always", "baseline": "never"}


class ConfigError(ValueError):
    pass


@dataclass
class EnvSpec:
    kind: str = "cube"  # cube | image | arrangement
    n_cubes: int = 8
    target: str = ""
    bonus: float = 1.0
    horizon: int = 0  # 0 -> table default
    delta: float = -1.0  # < 0 -> table default
    acceptance_mode: str = "exact"
    penalize_rejected_drops: bool = False


@dataclass
class AgentSpec:
    kind: str = ""  # primary: tabular | dqn; secondary: tabular | mlp
    alpha: float = -1.0  # learning rate (Adam step size for networks); < 0 -> table default
    gamma: float = 0.95
    hidden: list[int] = field(default_factory=list)
    batch_size: int = 0
    buffer_size: int = 10000
    target_sync: int = 100
    epsilon: dict[str, Any] = field(default_factory=dict)


@dataclass
class OracleSpec:
    backend: str = "scripted"  # scripted | http
    threshold: float = 0.45
    error_slope: float = 0.0
    temperature: float = 0.0
    url: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4"
    timeout: float = 60.0
    max_retries: int = 4
    pool_size: int = 10


@dataclass
class RunConfig:
    name: str = "experiment"
    env: EnvSpec = field(default_factory=EnvSpec)
    primary: AgentSpec = field(default_factory=AgentSpec)
    secondary: AgentSpec = field(default_factory=AgentSpec)
    oracle: OracleSpec = field(default_factory=OracleSpec)
    follow_probability: float = 1.0
    episodes: int = 300
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    secondary_reward_mode: str = ""
    query_gating: str = "seq"
    variants: list[str] = field(default_factory=lambda: ["lagr-seq", "lagr-always", "baseline"])
    cache: str = ""
    out: str = ""

    def __post_init__(self):
        apply_defaults(self)

    @property
    def horizon(self) -> int:
        return self.env.horizon

    def with_gating(self, gating: str) -> "RunConfig":
        return dataclasses.replace(self, query_gating=gating)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _table_defaults(kind: str) -> dict:
    if kind == "cube":
        return dict(horizon=100, delta=1.0, primary="tabular", secondary="tabular", alpha=0.1,
                    hidden=[], batch=32, eps=("linear", 1.0, 0.05), reward="binary_pm")
    if kind == "image":
        return dict(horizon=500, delta=0.95, primary="dqn", secondary="mlp", alpha=1e-3,
                    hidden=[128, 128], batch=32, eps=("exponential", 1.0, 0.1, 0.998), reward="binary_01")
    if kind == "arrangement":
        return dict(horizon=50, delta=0.99, primary="dqn", secondary="mlp", alpha=1e-3,
                    hidden=[64, 64], batch=16, eps=("exponential", 1.0, 0.1, 0.998), reward="binary_01")
    raise ConfigError(f"env.kind must be cube, image or arrangement, got {kind!r}")


def _default_schedule(eps, episodes: int) -> dict:
    if eps[0] == "linear":
        return {"kind": "linear", "initial": eps[1], "minimum": eps[2], "decay": max(1.0, 0.5 * episodes)}
    return {"kind": "exponential", "initial": eps[1], "minimum": eps[2], "decay": eps[3]}


def apply_defaults(cfg: RunConfig) -> None:
    d = _table_defaults(cfg.env.kind)
    if not cfg.env.target:
        cfg.env.target = {"cube": "", "image": "oval10", "arrangement": "diamond5"}[cfg.env.kind]
    if cfg.env.horizon <= 0:
        cfg.env.horizon = d["horizon"]
    if cfg.env.delta < 0:
        cfg.env.delta = d["delta"]
    for spec, default_kind in ((cfg.primary, d["primary"]), (cfg.secondary, d["secondary"])):
        if not spec.kind:
            spec.kind = default_kind
        if spec.alpha < 0:
            spec.alpha = d["alpha"]
        if spec.batch_size <= 0:
            spec.batch_size = d["batch"]
        if not spec.hidden and spec.kind in ("dqn", "mlp"):
            spec.hidden = list(d["hidden"])
        if not spec.epsilon:
            spec.epsilon = _default_schedule(d["eps"], cfg.episodes)
    if not cfg.secondary_reward_mode:
        cfg.secondary_reward_mode = d["reward"]
    validate(cfg)


def schedule(spec: AgentSpec) -> EpsilonSchedule:
    try:
        return EpsilonSchedule(**spec.epsilon)
    except TypeError as exc:
        raise ConfigError(f"bad epsilon schedule {spec.epsilon}: {exc}") from None


def validate(cfg: RunConfig) -> None:
    if not 0.0 <= cfg.follow_probability <= 1.0:
        raise ConfigError(f"follow_probability must lie in [0, 1], got {cfg.follow_probability}")
    if cfg.episodes < 1 or cfg.env.horizon < 1:
        raise ConfigError("episodes and horizon must be at least 1")
    if cfg.query_gating not in GATINGS:
        raise ConfigError(f"query_gating must be one of {GATINGS}, got {cfg.query_gating!r}")
    if cfg.secondary_reward_mode not in REWARD_MODES:
        raise ConfigError(f"secondary_reward_mode must be one of {REWARD_MODES}")
    if cfg.secondary_reward_mode == "logistic" and cfg.env.kind == "cube":
        raise ConfigError("the logistic SEQ reward is normalized by grid size; use it with grid environments")
    if cfg.primary.kind not in ("tabular", "dqn"):
        raise ConfigError(f"primary.kind must be tabular or dqn, got {cfg.primary.kind!r}")
    if cfg.secondary.kind not in ("tabular", "mlp"):
        raise ConfigError(f"secondary.kind must be tabular or mlp, got {cfg.secondary.kind!r}")
    if cfg.env.kind != "cube" and cfg.primary.kind == "tabular":
        raise ConfigError("grid environments need a dqn primary agent")
    if cfg.oracle.backend not in ("scripted", "http"):
        raise ConfigError(f"oracle.backend must be scripted or http, got {cfg.oracle.backend!r}")
    if not 0.0 <= cfg.oracle.temperature <= 1.0:
        raise ConfigError("oracle.temperature must lie in [0, 1]")
    for v in cfg.variants:
        if v not in VARIANT_GATING:
            raise ConfigError(f"unknown variant {v!r}; choose from {sorted(VARIANT_GATING)}")
    if not cfg.seeds:
        raise ConfigError("need at least one seed")
    schedule(cfg.primary)
    schedule(cfg.secondary)


_NESTED = {"env": EnvSpec, "primary": AgentSpec, "secondary": AgentSpec, "oracle": OracleSpec}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            loc = f"{where}.{key}" if where else key
            raise ConfigError(f"unknown config key {loc!r}")
    kwargs = {}
    for key, value in data.items():
        if cls is RunConfig and key in _NESTED:
            value = _NESTED[key](**_build(_NESTED[key], value, key))
        kwargs[key] = value
    return kwargs


def config_from_dict(data: dict) -> RunConfig:
    kwargs = _build(RunConfig, data, "")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def read_config_dict(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def load_config(path) -> RunConfig:
    return config_from_dict(read_config_dict(path))


PRESETS = ("cube-8", "cube-sizes-5", "cube-sizes-8", "cube-sizes-11", "image-10", "arrange-5", "oracle-bench")


def preset_path(name: str):
    return resources.files("lagrseq.presets").joinpath(f"{name}.json")


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return json.loads(preset_path(name).read_text())


def load_preset(name: str) -> RunConfig:
    return config_from_dict(preset_dict(name))
