"""Persistent oracle-response cache.

A key is (environment, descriptor, rendered state, temperature rounded to
two decimals). At temperature 0 one response is stored per key; above 0
the first miss fills a pool of ``pool_size`` responses and every later hit
draws uniformly from it.

File format: a JSON header line ``{"format": "lagrseq-oracle-cache",
"version": 1}`` followed by one JSON object per line with keys ``env``,
``descriptor``, ``state``, ``temperature`` and ``responses``.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import warnings
from pathlib import Path
from typing import NamedTuple

from .oracle.base import OracleQuery, OracleResponse, interpret

FORMAT = "lagrseq-oracle-cache"
VERSION = 1
DEFAULT_POOL = 10


class CacheWarning(UserWarning):
    pass


def temperature_bucket(temperature: float) -> str:
    return f"{round(float(temperature), 2):.2f}"


class CacheKey(NamedTuple):
    env_id: str
    descriptor_id: str
    rendered_state: str
    temperature: str

    @classmethod
    def for_query(cls, query: OracleQuery, env_id: str) -> "CacheKey":
        return cls(env_id, query.descriptor.id, query.rendered_state, temperature_bucket(query.temperature))

    @property
    def stochastic(self) -> bool:
        return float(self.temperature) > 0.0

    def digest(self) -> str:
        """Process-independent identity (``hash()`` of str is salted per run)."""
        return hashlib.sha256("\x1f".join(self).encode("utf-8")).hexdigest()


class OracleCache:
    def __init__(self, pool_size: int = DEFAULT_POOL):
        if pool_size < 1:
            raise ValueError("pool_size must be positive")
        self.pool_size = pool_size
        self.entries: dict[CacheKey, list[str]] = {}
        self.backend_calls = 0
        self.hits = 0
        self.misses = 0
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: CacheKey) -> bool:
        return key in self.entries

    def __eq__(self, other):
        return isinstance(other, OracleCache) and self.entries == other.entries

    def fetch(self, backend, query: OracleQuery, env_id: str, rng) -> tuple[str, bool]:
        """Raw text for ``query`` and whether it came from the cache."""
        key = CacheKey.for_query(query, env_id)
        with self._lock:
            pool = self.entries.get(key)
            if pool is None:
                n = self.pool_size if key.stochastic else 1
                fresh = [backend.complete(query) for _ in range(n)]  # errors propagate, nothing stored
                self.backend_calls += n
                self.misses += 1
                self.entries[key] = fresh
                pool, from_cache = fresh, False
            else:
                self.hits += 1
                from_cache = True
        if len(pool) == 1:
            return pool[0], from_cache
        return pool[rng.integers(len(pool))], from_cache

    def put(self, key: CacheKey, responses: list[str]) -> None:
        if not responses:
            raise ValueError("cache entries need at least one response")
        with self._lock:
            self.entries[key] = list(responses)

    def stats(self) -> dict[str, int]:
        by_temp: dict[str, int] = {}
        for key in self.entries:
            by_temp[key.temperature] = by_temp.get(key.temperature, 0) + 1
        return dict(sorted(by_temp.items()))

    def records(self):
        for key in sorted(self.entries):
            yield {
                "env": key.env_id,
                "descriptor": key.descriptor_id,
                "state": key.rendered_state,
                "temperature": key.temperature,
                "responses": self.entries[key],
            }


def cached_query(cache: OracleCache, backend, query: OracleQuery, rng, env) -> OracleResponse:
    text, from_cache = cache.fetch(backend, query, env.env_id, rng)
    return interpret(text, env, backend.backend_id, from_cache)


def _record_key(rec) -> tuple[CacheKey, list[str]]:
    responses = rec["responses"]
    if not isinstance(responses, list) or not responses or not all(isinstance(r, str) for r in responses):
        raise ValueError("responses must be a non-empty list of strings")
    fields = (rec["env"], rec["descriptor"], rec["state"], rec["temperature"])
    if not all(isinstance(f, str) for f in fields):
        raise ValueError("key fields must be strings")
    return CacheKey(*fields), responses


def cache_load(path, pool_size: int = DEFAULT_POOL) -> OracleCache:
    """Best-effort load: a missing file is an empty cache, corrupt lines are skipped with a warning."""
    cache = OracleCache(pool_size)
    path = Path(path)
    if not path.exists():
        return cache
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                warnings.warn(f"{path}:{lineno}: skipping unreadable cache line ({exc})", CacheWarning, stacklevel=2)
                continue
            if lineno == 1 and isinstance(rec, dict) and rec.get("format") == FORMAT:
                if rec.get("version") != VERSION:
                    raise ValueError(f"{path}: unsupported cache version {rec.get('version')!r}")
                continue
            try:
                key, responses = _record_key(rec)
            except (ValueError, KeyError, TypeError) as exc:
                warnings.warn(f"{path}:{lineno}: skipping corrupt cache record ({exc!r})", CacheWarning, stacklevel=2)
                continue
            cache.entries[key] = responses
    return cache


def cache_save(cache: OracleCache, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    with cache._lock:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": FORMAT, "version": VERSION}) + "\n")
            for rec in cache.records():
                fh.write(json.dumps(rec) + "\n")
    os.replace(tmp, path)


def cache_merge(caches) -> OracleCache:
    """Union of caches; on a key conflict the later cache wins (with a warning)."""
    caches = list(caches)
    merged = OracleCache(max((c.pool_size for c in caches), default=DEFAULT_POOL))
    for c in caches:
        for key, responses in c.entries.items():
            old = merged.entries.get(key)
            if old is not None and old != responses:
                warnings.warn(
                    f"conflicting cache entry for {key.env_id}/{key.descriptor_id} at temperature "
                    f"{key.temperature}; keeping the later one",
                    CacheWarning,
                    stacklevel=2,
                )
            merged.entries[key] = list(responses)
    return merged
