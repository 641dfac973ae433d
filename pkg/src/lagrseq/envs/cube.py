"""Cube stacking: place cubes onto a stack (or pop the top) until the stack
follows the decreasing-edge-length order.

States are tuples of cube ids, bottom to top. Action ids ``0..n-1`` place
cube ``id = action + 1``; action ``n`` pops the top cube.
"""

from __future__ import annotations

import itertools
import re
import string
from dataclasses import dataclass, field
from typing import Sequence

from ..core import IllegalActionError, StateParseError

CubeStackState = tuple[int, ...]


@dataclass(frozen=True)
class CubeSpec:
    id: int
    edge_length: float
    color: str


@dataclass(frozen=True)
class Place:
    cube: int


@dataclass(frozen=True)
class Pop:
    pass


CubeAction = Place | Pop
POP = Pop()

# Cube no., edge length (cm), color for the standard 8-cube task.
TABLE_CUBES: tuple[CubeSpec, ...] = (
    CubeSpec(1, 5.0, "Red"),
    CubeSpec(2, 4.0, "Red"),
    CubeSpec(3, 3.0, "Red"),
    CubeSpec(4, 2.0, "Red"),
    CubeSpec(5, 10.0, "Blue"),
    CubeSpec(6, 8.0, "Blue"),
    CubeSpec(7, 6.0, "Blue"),
    CubeSpec(8, 2.0, "Blue"),
)


def cube_set(n: int) -> tuple[CubeSpec, ...]:
    """Red cubes of lengths ``n_red+1 .. 2``, then blue cubes of even lengths
    ``2*(n_red+1)`` downward with the last blue cube tied at 2cm.

    ``cube_set(8)`` reproduces :data:`TABLE_CUBES`.
    """
    if n < 3 or n > 26:
        raise ValueError(f"stack size must be in 3..26, got {n}")
    n_blue = n // 2
    n_red = n - n_blue
    red = [CubeSpec(i + 1, float(n_red + 1 - i), "Red") for i in range(n_red)]
    blue_lengths = [2.0 * (n_red + 1 - j) for j in range(n_blue - 1)] + [2.0]
    blue = [CubeSpec(n_red + j + 1, blue_lengths[j], "Blue") for j in range(n_blue)]
    return tuple(red + blue)


def decreasing_orders(cubes: Sequence[CubeSpec]) -> tuple[CubeStackState, ...]:
    """Every full stack with non-increasing edge length bottom to top.

    Cubes of equal size may appear in either order.
    """
    by_length: dict[float, list[int]] = {}
    for c in cubes:
        by_length.setdefault(c.edge_length, []).append(c.id)
    groups = [sorted(by_length[k]) for k in sorted(by_length, reverse=True)]
    orders = []
    for combo in itertools.product(*(itertools.permutations(g) for g in groups)):
        orders.append(tuple(i for g in combo for i in g))
    return tuple(orders)


@dataclass(frozen=True)
class CubeEnvConfig:
    cubes: tuple[CubeSpec, ...] = TABLE_CUBES
    target_orders: tuple[CubeStackState, ...] = field(default=())
    bonus: float = 1.0
    horizon: int = 100
    delta: float = 1.0
    acceptance_mode: str = "exact"

    def __post_init__(self):
        if not self.target_orders:
            object.__setattr__(self, "target_orders", decreasing_orders(self.cubes))
        ids = [c.id for c in self.cubes]
        if len(set(ids)) != len(ids):
            raise ValueError("cube ids must be unique")
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ValueError("cube ids must be 1..n")
        for t in self.target_orders:
            if sorted(t) != sorted(ids):
                raise ValueError(f"target order {t} is not a permutation of the cube ids")
        if self.acceptance_mode not in ("exact", "literal"):
            raise ValueError(f"unknown acceptance_mode {self.acceptance_mode!r}")

    @classmethod
    def standard(cls, n: int = 8, **kwargs) -> "CubeEnvConfig":
        cubes = TABLE_CUBES if n == 8 else cube_set(n)
        return cls(cubes=cubes, **kwargs)

    @property
    def n(self) -> int:
        return len(self.cubes)


def matched_positions(state: Sequence[int], config: CubeEnvConfig) -> int:
    best = 0
    for target in config.target_orders:
        hits = sum(1 for a, b in zip(state, target) if a == b)
        if hits > best:
            best = hits
    return best


def cube_eval(state: Sequence[int], config: CubeEnvConfig) -> float:
    """Stack length times the number of cubes sitting at their target position."""
    return float(len(state) * matched_positions(state, config))


def is_legal(state: CubeStackState, action: CubeAction, config: CubeEnvConfig) -> bool:
    if isinstance(action, Pop):
        return len(state) > 0
    return 1 <= action.cube <= config.n and action.cube not in state


def cube_step(
    state: CubeStackState, action: CubeAction, config: CubeEnvConfig
) -> tuple[CubeStackState, float, bool]:
    if not is_legal(state, action, config):
        raise IllegalActionError(f"{action} is not legal in stack {list(state)}")
    nxt = state[:-1] if isinstance(action, Pop) else state + (action.cube,)
    complete = len(nxt) == config.n and nxt in config.target_orders
    bonus = config.bonus if complete else 0.0
    reward = cube_eval(nxt, config) - cube_eval(state, config) + bonus
    return nxt, reward, complete


def cube_is_solution(candidate: Sequence[int], config: CubeEnvConfig) -> bool:
    candidate = tuple(candidate)
    if config.acceptance_mode == "exact":
        return len(candidate) == config.n and candidate in config.target_orders
    return cube_eval(candidate, config) > config.delta


def cube_policy_action(solution: Sequence[int], current: Sequence[int]) -> CubeAction | None:
    """Next move toward ``solution``: extend a correct prefix, else pop.

    Returns None when ``current`` already equals ``solution``.
    """
    solution, current = tuple(solution), tuple(current)
    if current == solution:
        return None
    if solution[: len(current)] == current:
        return Place(solution[len(current)])
    return POP


def cube_letter(cube_id: int) -> str:
    return string.ascii_lowercase[cube_id - 1]


def cube_render(state: Sequence[int]) -> str:
    return "[" + ",".join(f"'{cube_letter(i)}'" for i in state) + "]"


_LIST_RE = re.compile(r"\[([^\[\]]*)\]")
_ITEM_RE = re.compile(r"""^\s*(['"]?)([A-Za-z]+)\1\s*$""")


def cube_parse(text: str, n: int = 8) -> CubeStackState:
    """Decode the first bracketed letter list in ``text`` into cube ids."""
    match = _LIST_RE.search(text)
    if match is None:
        raise StateParseError(StateParseError.MALFORMED, "no bracketed list found")
    body = match.group(1).strip()
    if not body:
        return ()
    ids = []
    for raw in body.split(","):
        item = _ITEM_RE.match(raw)
        if item is None:
            raise StateParseError(StateParseError.MALFORMED, f"cannot read list item {raw!r}")
        letter = item.group(2).lower()
        if len(letter) != 1 or not "a" <= letter < chr(ord("a") + n):
            raise StateParseError("unknown-symbol", f"unknown cube letter {letter!r}")
        cube = ord(letter) - ord("a") + 1
        if cube in ids:
            raise StateParseError("duplicate", f"cube {letter!r} appears twice")
        ids.append(cube)
    return tuple(ids)


class CubeEnv:
    """Integer-action wrapper around the cube-stacking functions."""

    def __init__(self, config: CubeEnvConfig | None = None):
        self.config = config or CubeEnvConfig()
        self.n = self.config.n
        self.n_actions = self.n + 1
        self.env_id = f"cube{self.n}"

    def decode(self, action: int) -> CubeAction:
        return POP if action == self.n else Place(action + 1)

    def encode(self, action: CubeAction) -> int:
        return self.n if isinstance(action, Pop) else action.cube - 1

    def reset(self) -> CubeStackState:
        return ()

    def legal_actions(self, state: CubeStackState) -> list[int]:
        used = set(state)
        acts = [i for i in range(self.n) if i + 1 not in used]
        if state:
            acts.append(self.n)
        return acts

    def step(self, state, action: int):
        return cube_step(state, self.decode(action), self.config)

    def evaluate(self, state) -> float:
        return cube_eval(state, self.config)

    def is_solution(self, candidate) -> bool:
        return cube_is_solution(candidate, self.config)

    def render_state(self, state) -> str:
        return cube_render(state)

    def parse_state(self, text: str) -> CubeStackState:
        return cube_parse(text, self.n)

    def validate_solution(self, candidate: CubeStackState) -> None:
        """Oracle answers must contain every cube exactly once."""
        if len(candidate) != self.n:
            raise StateParseError(
                "incomplete", f"stack has {len(candidate)} cubes, expected all {self.n}"
            )

    def policy_action(self, solution, state) -> int | None:
        action = cube_policy_action(solution, state)
        return None if action is None else self.encode(action)

    def state_key(self, state) -> str:
        return cube_render(state)

    def encode_state(self, state):
        raise TypeError("cube states are tabular; use state_key")
