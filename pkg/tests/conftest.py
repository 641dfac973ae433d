import pytest

from lagrseq import kernels


@pytest.fixture(params=[k.NAME for k in kernels.available()])
def backend(request):
    """Each importable kernel implementation in turn."""
    return {k.NAME: k for k in kernels.available()}[request.param]


class CountingBackend:
    """Oracle double: returns ``reply(query, n)`` and counts calls per rendered state."""

    backend_id = "counting"

    def __init__(self, reply=None, fail=False):
        self.calls = 0
        self.per_state = {}
        self.reply = reply or (lambda query, n: f"response {n} for {query.rendered_state}")
        self.fail = fail

    def complete(self, query):
        from lagrseq.oracle.base import OracleTransportError

        if self.fail:
            raise OracleTransportError("backend down")
        self.calls += 1
        n = self.per_state.get(query.rendered_state, 0)
        self.per_state[query.rendered_state] = n + 1
        return self.reply(query, n)


@pytest.fixture
def counting_backend():
    return CountingBackend
