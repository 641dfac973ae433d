"""Query/response types shared by every oracle backend."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol

from ..core import StateParseError
from .prompts import TaskDescriptor

OK = "ok"
MALFORMED = "malformed"
CONSTRAINT_VIOLATION = "constraint-violation"


class OracleError(RuntimeError):
    """A backend could not produce a completion."""


class OracleTransportError(OracleError):
    pass


class OracleStatusError(OracleError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(f"HTTP {status}: {message}".rstrip(": "))
        self.status = status


class EmptyCompletionError(OracleError):
    pass


@dataclass(frozen=True)
class OracleQuery:
    descriptor: TaskDescriptor
    rendered_state: str
    temperature: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must lie in [0, 1], got {self.temperature}")

    @property
    def prompt(self) -> str:
        return self.descriptor.fill(self.rendered_state)


@dataclass(frozen=True)
class OracleResponse:
    raw_text: str
    parsed: Any = None
    parse_status: str = OK
    backend_id: str = ""
    served_from_cache: bool = False

    @property
    def ok(self) -> bool:
        return self.parse_status == OK


class Backend(Protocol):
    backend_id: str

    def complete(self, query: OracleQuery) -> str: ...


def parse_solution(text: str, env):
    """Decode an oracle answer into a full candidate state for ``env``.

    Raises :class:`StateParseError`; ``exc.is_malformed`` separates missing
    structure from constraint violations.
    """
    state = env.parse_state(text)
    env.validate_solution(state)
    return state


def interpret(text: str, env, backend_id: str = "", served_from_cache: bool = False) -> OracleResponse:
    try:
        parsed = parse_solution(text, env)
    except StateParseError as exc:
        status = MALFORMED if exc.is_malformed else CONSTRAINT_VIOLATION
        return OracleResponse(text, None, status, backend_id, served_from_cache)
    return OracleResponse(text, parsed, OK, backend_id, served_from_cache)
