import json

import httpx
import numpy as np
import pytest

from lagrseq.core import make_rng
from lagrseq.envs.cube import CubeEnv, CubeEnvConfig
from lagrseq.envs.grid import GridEnv, GridEnvConfig, grid_render
from lagrseq.oracle.base import (
    CONSTRAINT_VIOLATION,
    MALFORMED,
    OK,
    EmptyCompletionError,
    OracleQuery,
    OracleStatusError,
    OracleTransportError,
    interpret,
    parse_solution,
)
from lagrseq.oracle.bench import accuracy_sweep, partial_target
from lagrseq.oracle.http import EndpointConfig, HttpOracle, MissingCredentialError, http_query
from lagrseq.oracle.prompts import MARKER, TaskDescriptor, descriptor_for, render_prompt
from lagrseq.oracle.scripted import ScriptedOracle, ScriptedOracleConfig, scripted_query

T1 = (5, 6, 7, 1, 2, 3, 4, 8)


@pytest.fixture
def cube():
    return CubeEnv()


@pytest.fixture
def image():
    return GridEnv(GridEnvConfig.image("oval10"))


class TestPrompts:
    def test_cube_prompt_contains_state(self, cube):
        d = descriptor_for(cube)
        p = render_prompt(d, (5, 6, 7), cube)
        assert "['e','f','g']" in p and MARKER not in p
        assert "Blue cube of edge length 10cm" in p
        assert p == render_prompt(d, (5, 6, 7), cube)

    def test_zero_grid_literal(self, image):
        p = render_prompt(descriptor_for(image), image.reset(), image)
        assert grid_render(np.zeros((10, 10), np.uint8)) in p

    def test_generated_cube_prompt(self):
        env = CubeEnv(CubeEnvConfig.standard(5))
        d = descriptor_for(env)
        assert d.id == "cube5" and "have all 5 cubes" in d.template
        assert "(represented by 'e')" in d.template and "(represented by 'f')" not in d.template

    def test_arrangement_prompt(self):
        env = GridEnv(GridEnvConfig.arrangement("diamond5"))
        d = descriptor_for(env)
        assert d.id == "arrange5" and "textit" not in d.template

    @pytest.mark.parametrize("template", ["no marker", f"{MARKER} twice {MARKER}"])
    def test_marker_count(self, template):
        with pytest.raises(ValueError):
            TaskDescriptor("x", template)

    def test_temperature_range(self, cube):
        with pytest.raises(ValueError):
            OracleQuery(descriptor_for(cube), "[]", 1.5)


class TestParseSolution:
    def test_letters(self, cube):
        assert parse_solution("['e','f','g','a','b','c','d','h']", cube) == T1

    def test_statuses(self, cube):
        assert interpret("['e','e','f']", cube).parse_status == CONSTRAINT_VIOLATION
        assert interpret("['e','f']", cube).parse_status == CONSTRAINT_VIOLATION  # incomplete
        assert interpret("I cannot help", cube).parse_status == MALFORMED
        r = interpret("Answer: ['e','f','g','a','b','c','d','h']", cube, "b", True)
        assert r.ok and r.parsed == T1 and r.served_from_cache and r.backend_id == "b"

    def test_grid_prose(self, image):
        text = "Here you go:\n" + grid_render(image.target.cells)
        r = interpret(text, image)
        assert r.parse_status == OK and np.array_equal(r.parsed, image.target.cells)


class TestScriptedCube:
    def test_above_threshold_returns_target(self, cube):
        oracle = ScriptedOracle(cube)
        assert oracle.answer((5, 6, 7, 1)) == T1

    def test_below_threshold_corrupts_keeping_prefix(self, cube):
        ans = ScriptedOracle(cube).answer((5,))
        assert ans[:1] == (5,) and sorted(ans) == list(range(1, 9)) and not cube.is_solution(ans)

    def test_out_of_order_stack_is_not_extrapolated(self, cube):
        ans = ScriptedOracle(cube).answer((6, 5, 7, 1))
        assert not cube.is_solution(ans) and ans[:4] == (6, 5, 7, 1)

    def test_subsequence_of_target_counts(self, cube):
        # every cube sits in target order, just not at its final position
        assert ScriptedOracle(cube).answer((5, 7, 2, 4)) == T1

    def test_second_order_found_when_only_it_fits(self, cube):
        # 8 before 4 only agrees with the second target
        assert ScriptedOracle(cube).answer((5, 6, 7, 8, 4)) == (5, 6, 7, 1, 2, 3, 8, 4)

    def test_wrong_rate(self, cube):
        oracle = ScriptedOracle(cube, ScriptedOracleConfig(error_slope=0.3), make_rng(0))
        n = 10_000
        wrong = sum(not cube.is_solution(oracle.answer((5, 6, 7, 1), 1.0)) for _ in range(n))
        assert abs(wrong / n - 0.3) < 3 * np.sqrt(0.3 * 0.7 / n)

    def test_deterministic_at_zero_temperature(self, cube):
        q = OracleQuery(descriptor_for(cube), "['e','f']", 0.0)
        a, b = ScriptedOracle(cube), ScriptedOracle(cube)
        assert a.complete(q) == b.complete(q) == a.complete(q)

    def test_error_rate_needs_rng(self, cube):
        with pytest.raises(ValueError):
            ScriptedOracle(cube, ScriptedOracleConfig(error_slope=0.5)).answer((5,), 1.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScriptedOracleConfig(threshold=1.5)
        assert ScriptedOracleConfig(error_slope=3).error_probability(1.0) == 1.0

    def test_every_answer_parses(self, cube):
        oracle = ScriptedOracle(cube)
        rng = np.random.default_rng(0)
        d = descriptor_for(cube)
        for _ in range(300):
            perm = rng.permutation(np.arange(1, 9))[: rng.integers(0, 9)]
            q = OracleQuery(d, cube.render_state(tuple(int(c) for c in perm)))
            assert interpret(oracle.complete(q), cube).ok

    def test_scripted_query_helper(self, cube):
        q = OracleQuery(descriptor_for(cube), "['e','f','g','a']")
        r = scripted_query(ScriptedOracleConfig(), q, (5, 6, 7, 1), cube)
        assert r.ok and r.parsed == T1


class TestScriptedGrid:
    def test_completion_counts_target_ones(self, image):
        oracle = ScriptedOracle(image)
        t = image.target.cells
        ones = np.flatnonzero(t)
        partial = np.zeros(100, np.uint8)
        partial[ones[:7]] = 1  # 7 of 14 ones = 0.5
        assert np.array_equal(oracle.answer(partial.reshape(10, 10)), t)
        partial[ones[6]] = 0  # 6 of 14 < 0.45
        ans = oracle.answer(partial.reshape(10, 10))
        assert not image.is_solution(ans)
        assert np.all(ans >= partial.reshape(10, 10))  # keeps the visible pixels

    def test_empty_grid_scores_zero(self, image):
        ans = ScriptedOracle(image).answer(image.reset().cells)
        assert not image.is_solution(ans)

    def test_every_answer_parses(self, image):
        oracle = ScriptedOracle(image)
        rng = np.random.default_rng(1)
        d = descriptor_for(image)
        for _ in range(100):
            cells = (rng.random((10, 10)) < rng.random()).astype(np.uint8)
            q = OracleQuery(d, image.render_state(cells))
            r = interpret(oracle.complete(q), image)
            assert r.ok and r.parsed.shape == (10, 10)

    def test_arrangement_corruption_never_accepted(self):
        env = GridEnv(GridEnvConfig.arrangement("diamond5"))
        oracle = ScriptedOracle(env)
        for k in range(4):
            cells = np.zeros((5, 5), np.uint8)
            cells.flat[np.flatnonzero(env.target.cells)[:k]] = 1
            assert not env.is_solution(oracle.answer(cells))


class TestAccuracySweep:
    def test_three_points(self, cube):
        rows = accuracy_sweep(ScriptedOracle(cube), cube, [0.125, 0.5, 1.0], 10)
        assert [r.accuracy for r in rows] == [0.0, 1.0, 1.0]

    def test_partial_target(self, cube, image):
        assert partial_target(cube, 0.5) == ((5, 6, 7, 1), 0.5)
        state, realized = partial_target(image, 1.0)
        assert realized == 1.0 and np.array_equal(state.cells, image.target.cells)

    def test_rejects_zero_queries(self, cube):
        with pytest.raises(ValueError):
            accuracy_sweep(ScriptedOracle(cube), cube, [0.5], 0)

    def test_failures_count_as_wrong(self, cube, counting_backend):
        rows = accuracy_sweep(counting_backend(fail=True), cube, [1.0], 5)
        assert rows[0].accuracy == 0.0


def mock_client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def ok_body(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


class TestHttp:
    @pytest.fixture(autouse=True)
    def key(self, monkeypatch):
        monkeypatch.setenv("LAGRSEQ_API_KEY", "sk-test")

    def query(self, cube):
        return OracleQuery(descriptor_for(cube), "['e','f','g']", 0.7)

    def test_request_shape_and_parse(self, cube):
        seen = {}

        def handler(request):
            seen["auth"] = request.headers["authorization"]
            seen["body"] = request.read()
            return httpx.Response(200, json=ok_body("['e','f','g','a','b','c','d','h']"))

        r = http_query(EndpointConfig(model="m"), self.query(cube), cube, client=mock_client(handler))
        assert r.ok and r.parsed == T1
        body = json.loads(seen["body"])
        assert seen["auth"] == "Bearer sk-test"
        assert body["model"] == "m" and body["temperature"] == 0.7
        assert body["messages"] == [{"role": "user", "content": self.query(cube).prompt}]

    def test_retries_rate_limit(self, cube):
        replies = iter([httpx.Response(429), httpx.Response(429), httpx.Response(200, json=ok_body("['a']"))])
        sleeps = []
        oracle = HttpOracle(client=mock_client(lambda req: next(replies)), sleep=sleeps.append)
        assert oracle.complete(self.query(cube)) == "['a']"
        assert oracle.attempts == 3 and sleeps == [1.0, 2.0]

    def test_gives_up_when_down(self, cube):
        def handler(request):
            raise httpx.ConnectError("refused")

        oracle = HttpOracle(EndpointConfig(max_retries=2), client=mock_client(handler), sleep=lambda s: None)
        with pytest.raises(OracleTransportError):
            oracle.complete(self.query(cube))
        assert oracle.attempts == 3

    def test_client_error_not_retried(self, cube):
        oracle = HttpOracle(client=mock_client(lambda r: httpx.Response(401, text="nope")), sleep=lambda s: None)
        with pytest.raises(OracleStatusError) as exc:
            oracle.complete(self.query(cube))
        assert exc.value.status == 401 and oracle.attempts == 1

    @pytest.mark.parametrize("body", [ok_body(""), {"choices": []}, {"weird": 1}])
    def test_empty_completion(self, cube, body):
        oracle = HttpOracle(client=mock_client(lambda r: httpx.Response(200, json=body)))
        with pytest.raises(EmptyCompletionError):
            oracle.complete(self.query(cube))

    def test_missing_key(self, monkeypatch):
        monkeypatch.delenv("LAGRSEQ_API_KEY")
        with pytest.raises(MissingCredentialError):
            HttpOracle()
