import csv
import json
import subprocess
import sys

import pytest

from lagrseq.cache import CacheKey, CacheWarning, OracleCache, cache_load, cache_save
from lagrseq.cli import main


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def experiment(tmp_path):
    p = tmp_path / "cube.json"
    p.write_text(json.dumps({"name": "tiny", "env": {"kind": "cube"}, "episodes": 50, "seeds": [0, 1]}))
    return p


def run(experiment, out, *extra):
    return main(["run", "--config", str(experiment), "--out", str(out), *extra])


class TestRun:
    def test_bundle_row_counts(self, experiment, tmp_path):
        out = tmp_path / "b"
        assert run(experiment, out) == 0
        returns = rows(out / "returns.csv")
        assert len(returns) == 150
        for v in ("lagr-seq", "lagr-always", "baseline"):
            assert [r["episode"] for r in returns if r["variant"] == v] == [str(i) for i in range(50)]
        assert [r["variant"] for r in rows(out / "queries.csv")] == ["lagr-seq", "lagr-always", "baseline"]
        assert [r["variant"] for r in rows(out / "ratio.csv")] == ["lagr-seq", "lagr-always"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [0, 1] and len(manifest["config_sha256"]) == 64
        assert not list(out.glob("*.partial"))

    def test_deterministic_bytes(self, experiment, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(experiment, a) == 0 and run(experiment, b) == 0
        for name in ("returns.csv", "queries.csv", "ratio.csv", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_deterministic_with_prepopulated_cache(self, experiment, tmp_path):
        cache = tmp_path / "c.jsonl"
        assert run(experiment, tmp_path / "warm", "--cache", str(cache), "--gating", "seq") == 0
        snapshot = cache.read_bytes()
        outs = []
        for name in ("x", "y"):
            cache.write_bytes(snapshot)
            assert run(experiment, tmp_path / name, "--cache", str(cache), "--gating", "seq") == 0
            outs.append((tmp_path / name / "returns.csv").read_bytes())
        assert outs[0] == outs[1]
        q = rows(tmp_path / "x" / "queries.csv")[0]
        assert q["backend_calls"] == "0" and int(q["cache_hits"]) > 0

    def test_overrides(self, experiment, tmp_path):
        out = tmp_path / "o"
        assert run(experiment, out, "--gating", "never", "--seeds", "4", "--episodes", "5") == 0
        assert len(rows(out / "returns.csv")) == 5
        assert json.loads((out / "manifest.json").read_text())["seeds"] == [4]

    def test_misspelled_key(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"episdes": 50}))
        assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
        assert "episdes" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.json")]) == 2

    def test_bad_seeds(self, experiment, tmp_path):
        assert run(experiment, tmp_path / "o", "--seeds", "1,x") == 2

    def test_http_without_key(self, experiment, tmp_path, monkeypatch):
        monkeypatch.delenv("LAGRSEQ_API_KEY", raising=False)
        assert run(experiment, tmp_path / "o", "--backend", "http") == 2


class TestBenchOracle:
    def test_step_shape(self, tmp_path):
        out = tmp_path / "acc.csv"
        assert main(["bench-oracle", "--preset", "oracle-bench", "--n", "5", "--out", str(out)]) == 0
        table = rows(out)
        assert len(table) == 20 and all(r["n"] == "5" for r in table)
        for r in table:
            assert float(r["accuracy"]) == (1.0 if float(r["realized"]) >= 0.45 else 0.0)

    def test_stdout(self, capsys):
        assert main(["bench-oracle", "--preset", "oracle-bench", "--n", "1", "--fractions", "3"]) == 0
        assert capsys.readouterr().out.splitlines()[0] == "fraction,realized,accuracy,n"

    def test_no_credential(self, monkeypatch):
        monkeypatch.delenv("LAGRSEQ_API_KEY", raising=False)
        assert main(["bench-oracle", "--preset", "oracle-bench", "--backend", "http"]) == 2

    def test_zero_queries(self):
        assert main(["bench-oracle", "--preset", "oracle-bench", "--n", "0"]) == 2


def make_cache(path, entries):
    c = OracleCache()
    for state, text, tau in entries:
        c.put(CacheKey("cube8", "cube8", state, tau), [text])
    cache_save(c, path)


class TestCache:
    def test_stats_empty(self, tmp_path, capsys):
        make_cache(tmp_path / "e.jsonl", [])
        assert main(["cache", "stats", str(tmp_path / "e.jsonl")]) == 0
        assert capsys.readouterr().out.startswith("0 entries")

    def test_stats_and_dump(self, tmp_path, capsys):
        make_cache(tmp_path / "c.jsonl", [("a", "1", "0.00"), ("b", "2", "0.70")])
        assert main(["cache", "stats", str(tmp_path / "c.jsonl")]) == 0
        out = capsys.readouterr().out
        assert "2 entries" in out and "temperature 0.70: 1" in out
        assert main(["cache", "dump", str(tmp_path / "c.jsonl")]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 2

    def test_missing_file(self, tmp_path):
        assert main(["cache", "stats", str(tmp_path / "nope.jsonl")]) != 0

    def test_merge_disjoint(self, tmp_path):
        make_cache(tmp_path / "a.jsonl", [("a", "1", "0.00")])
        make_cache(tmp_path / "b.jsonl", [("b", "2", "0.00"), ("c", "3", "0.00")])
        assert main(["cache", "merge", str(tmp_path / "m.jsonl"), str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")]) == 0
        assert len(cache_load(tmp_path / "m.jsonl")) == 3

    def test_merge_conflict(self, tmp_path):
        make_cache(tmp_path / "a.jsonl", [("a", "old", "0.00")])
        make_cache(tmp_path / "b.jsonl", [("a", "new", "0.00")])
        with pytest.warns(CacheWarning) as rec:
            code = main(["cache", "merge", str(tmp_path / "m.jsonl"), str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")])
        assert code == 0 and len(rec) == 1
        merged = cache_load(tmp_path / "m.jsonl")
        assert list(merged.entries.values()) == [["new"]]


class TestReport:
    def test_series_per_variant(self, experiment, tmp_path):
        out = tmp_path / "b"
        run(experiment, out)
        assert main(["report", str(out)]) == 0
        series = out / "series"
        assert sorted(p.name for p in series.iterdir()) == [
            "curve-baseline.csv", "curve-lagr-always.csv", "curve-lagr-seq.csv", "query-bars.csv"]
        src = [r for r in rows(out / "returns.csv") if r["variant"] == "lagr-seq"]
        curve = rows(series / "curve-lagr-seq.csv")
        assert len(curve) == 50
        for s, c in zip(src, curve):
            assert (c["mean"], c["stderr"]) == (s["mean"], s["stderr"])
            m, se = float(s["mean"]), float(s["stderr"])
            assert float(c["lower"]) == pytest.approx(m - se) and float(c["upper"]) == pytest.approx(m + se)

    def test_empty_bundle(self, tmp_path, capsys):
        assert main(["report", str(tmp_path)]) == 1
        err = capsys.readouterr().err
        assert "returns.csv" in err and "queries.csv" in err and "manifest.json" in err


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "lagrseq.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "bench-oracle" in res.stdout
