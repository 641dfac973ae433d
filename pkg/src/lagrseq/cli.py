"""Command-line entry point: ``lagrseq run | bench-oracle | cache | report``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .agents.mlp import NonFiniteError
from .cache import OracleCache, cache_load, cache_merge, cache_save
from .config import PRESETS, VARIANT_GATING, ConfigError, RunConfig, config_from_dict, preset_dict, read_config_dict
from .oracle.base import OracleError
from .oracle.bench import accuracy_sweep
from .oracle.http import MissingCredentialError
from .core import make_rng
from .orchestrator import TrialAborted, build_backend, build_env, performance_ratio, run_experiment

log = logging.getLogger("lagrseq")

BUNDLE_FILES = ("returns.csv", "queries.csv", "ratio.csv", "manifest.json")


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _write_atomic(path: Path, writer) -> None:
    """Write through ``<path>.partial`` so an interrupted run never leaves a truncated file under the real name."""
    tmp = path.with_name(path.name + ".partial")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer(fh)
    os.replace(tmp, path)


def write_csv(path: Path, header, rows) -> None:
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    _write_atomic(path, emit)


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds expects comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ConfigError("--seeds is empty")
    return seeds


def resolve_config(args) -> RunConfig:
    """Experiment file or preset, with command-line overrides applied before defaults are filled in."""
    if getattr(args, "config", None) and getattr(args, "preset", None):
        raise ConfigError("give either --config or --preset, not both")
    if getattr(args, "config", None):
        data = read_config_dict(args.config)
    elif getattr(args, "preset", None):
        data = preset_dict(args.preset)
    else:
        raise ConfigError("a --config file or a --preset name is required")
    oracle = data.setdefault("oracle", {})
    if not isinstance(oracle, dict):
        raise ConfigError("oracle must be an object")
    if getattr(args, "seeds", None):
        data["seeds"] = _parse_seeds(args.seeds)
    if getattr(args, "episodes", None):
        data["episodes"] = args.episodes
    if getattr(args, "backend", None):
        oracle["backend"] = args.backend
    if getattr(args, "temperature", None) is not None:
        oracle["temperature"] = args.temperature
    if getattr(args, "cache", None):
        data["cache"] = args.cache
    if getattr(args, "out", None) and args.command == "run":
        data["out"] = args.out
    if getattr(args, "gating", None):
        data["variants"] = [v for v, g in VARIANT_GATING.items() if g == args.gating]
    return config_from_dict(data)


def _portable_config(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    d.pop("out")  # where the bundle lives is not part of what was run
    return d


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(_portable_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out or f"runs/{cfg.name}")
    out.mkdir(parents=True, exist_ok=True)
    shared = cache_load(cfg.cache, cfg.oracle.pool_size) if cfg.cache else None

    results = {}
    for variant in cfg.variants:
        gating = VARIANT_GATING[variant]
        vcfg = cfg.with_gating(gating)
        cache = shared if shared is not None else (OracleCache(cfg.oracle.pool_size) if gating != "never" else None)
        log.info("running %s over seeds %s", variant, cfg.seeds)
        results[variant] = run_experiment(vcfg, cfg.seeds, cache=cache, label=variant)

    write_csv(out / "returns.csv", ["variant", "episode", "mean", "stderr"], [
        [v, ep, _fmt(agg.mean_returns[ep]), _fmt(agg.stderr_returns[ep])]
        for v, agg in results.items() for ep in range(cfg.episodes)
    ])
    write_csv(out / "queries.csv", ["variant", "mean", "stderr", "backend_calls", "cache_hits"], [
        [v, _fmt(agg.query_mean), _fmt(agg.query_stderr), agg.backend_calls, agg.cache_hits]
        for v, agg in results.items()
    ])
    ratio_rows = []
    if "baseline" in results:
        for v, agg in results.items():
            if v == "baseline":
                continue
            try:
                ratio = _fmt(performance_ratio(agg, results["baseline"]))
            except ValueError as exc:
                log.warning("no performance ratio for %s: %s", v, exc)
                ratio = "nan"
            ratio_rows.append([cfg.name, v, ratio])
    write_csv(out / "ratio.csv", ["label", "variant", "ratio"], ratio_rows)

    manifest = {
        "name": cfg.name,
        "config_sha256": config_hash(cfg),
        "config": _portable_config(cfg),
        "seeds": cfg.seeds,
        "variants": cfg.variants,
        "versions": {"lagrseq": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "kernel_backend": kernels.BACKEND,
    }
    _write_atomic(out / "manifest.json", lambda fh: fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n"))
    if shared is not None:
        cache_save(shared, cfg.cache)
    for v, agg in results.items():
        print(f"{v}: total mean return {agg.total_return:.3f}, queries {agg.query_mean:.1f} +/- {agg.query_stderr:.1f}")
    for label, v, ratio in ratio_rows:
        print(f"performance ratio {v} / baseline: {ratio}")
    print(f"wrote {out}")
    return 0


def cmd_bench_oracle(args) -> int:
    cfg = resolve_config(args)
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    if args.fractions < 2:
        raise ConfigError("--fractions must be at least 2")
    env = build_env(cfg)
    rng = make_rng(cfg.seeds[0])
    backend = build_backend(cfg, env, rng)
    fractions = np.linspace(0.0, 1.0, args.fractions)
    rows = accuracy_sweep(backend, env, fractions, args.n, cfg.oracle.temperature)
    table = [[_fmt(r.fraction), _fmt(r.realized), _fmt(r.accuracy), r.n] for r in rows]
    header = ["fraction", "realized", "accuracy", "n"]
    if args.out:
        write_csv(Path(args.out), header, table)
        print(f"wrote {args.out}")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(table)
    return 0


def cmd_cache(args) -> int:
    if args.action == "stats":
        cache = cache_load(_existing(args.path))
        counts = cache.stats()
        print(f"{len(cache)} entries")
        for temp, n in counts.items():
            print(f"temperature {temp}: {n}")
    elif args.action == "dump":
        cache = cache_load(_existing(args.path))
        for rec in cache.records():
            print(json.dumps(rec))
    else:
        caches = [cache_load(_existing(p)) for p in args.inputs]
        merged = cache_merge(caches)
        cache_save(merged, args.output)
        print(f"merged {len(caches)} caches into {args.output}: {len(merged)} entries")
    return 0


def _existing(path) -> str:
    if not Path(path).exists():
        raise CliError(f"no such cache file: {path}")
    return path


def _read_rows(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args) -> int:
    bundle = Path(args.bundle)
    missing = [f for f in BUNDLE_FILES if not (bundle / f).exists()]
    if missing:
        raise CliError(f"{bundle} is not a complete bundle; missing {', '.join(missing)} "
                       f"(expected {', '.join(BUNDLE_FILES)})")
    out = Path(args.out) if args.out else bundle / "series"
    out.mkdir(parents=True, exist_ok=True)
    by_variant: dict[str, list] = {}
    for row in _read_rows(bundle / "returns.csv"):
        by_variant.setdefault(row["variant"], []).append(row)
    for variant, rows in by_variant.items():
        series = []
        for row in rows:
            mean, se = float(row["mean"]), float(row["stderr"])
            series.append([row["episode"], row["mean"], row["stderr"], _fmt(mean - se), _fmt(mean + se)])
        write_csv(out / f"curve-{variant}.csv", ["episode", "mean", "stderr", "lower", "upper"], series)
    q = _read_rows(bundle / "queries.csv")
    write_csv(out / "query-bars.csv", ["variant", "mean", "stderr", "lower", "upper"], [
        [r["variant"], r["mean"], r["stderr"], _fmt(float(r["mean"]) - float(r["stderr"])),
         _fmt(float(r["mean"]) + float(r["stderr"]))] for r in q
    ])
    print(f"wrote {len(by_variant)} curve files and query-bars.csv to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagrseq", description="Language-guided RL with learned oracle querying.")
    p.add_argument("--version", action="version", version=f"lagrseq {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def config_flags(sp):
        sp.add_argument("--config", help="experiment file (JSON)")
        sp.add_argument("--preset", choices=PRESETS, help="bundled experiment")
        sp.add_argument("--seeds", help="comma-separated seed list")
        sp.add_argument("--backend", choices=("scripted", "http"))
        sp.add_argument("--temperature", type=float)

    r = sub.add_parser("run", help="run every configured variant and write a report bundle")
    config_flags(r)
    r.add_argument("--cache", help="oracle cache file, loaded before and saved after the run")
    r.add_argument("--out", help="bundle directory")
    r.add_argument("--gating", choices=("seq", "always", "never"), help="run only the variant with this gating")
    r.add_argument("--episodes", type=int)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench-oracle", help="oracle accuracy versus revealed share of the target")
    config_flags(b)
    b.add_argument("--fractions", type=int, default=20, help="number of evenly spaced fractions in [0, 1]")
    b.add_argument("--n", type=int, default=100, help="queries per fraction")
    b.add_argument("--out", help="CSV path (stdout if omitted)")
    b.set_defaults(func=cmd_bench_oracle)

    c = sub.add_parser("cache", help="inspect or merge oracle caches")
    csub = c.add_subparsers(dest="action", required=True)
    for name in ("stats", "dump"):
        cp = csub.add_parser(name)
        cp.add_argument("path")
    m = csub.add_parser("merge", help="union of caches; later inputs win on conflicts")
    m.add_argument("output")
    m.add_argument("inputs", nargs="+")
    c.set_defaults(func=cmd_cache)

    rep = sub.add_parser("report", help="turn a bundle into plot-ready series files")
    rep.add_argument("bundle")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        try:
            return args.func(args)
        except (ConfigError, MissingCredentialError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except CliError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return exc.code
        except (TrialAborted, NonFiniteError, OracleError, OSError, ValueError) as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    sys.exit(main())
