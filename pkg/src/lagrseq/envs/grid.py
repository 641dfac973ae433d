"""Binary-grid pattern environments.

``image`` mode flips or keeps the pixel under a row-major sweep cursor;
``arrangement`` mode drops objects (add-only) and only commits drops that
improve the match with the target.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..core import StateParseError

BUILTIN_TARGETS = ("oval10", "triangle10", "diamond5", "square5", "oval5", "cross5")


@dataclass(frozen=True, eq=False)
class GridState:
    cells: np.ndarray  # (height, width) uint8, treated as read-only
    cursor: int = 0

    def __eq__(self, other):
        if not isinstance(other, GridState):
            return NotImplemented
        return self.cursor == other.cursor and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.cells.tobytes(), self.cells.shape, self.cursor))


@dataclass(frozen=True, eq=False)
class GridTarget:
    name: str
    cells: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape


def _as_cells(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.uint8)
    arr.setflags(write=False)
    return arr


def load_target(path: str | Path) -> GridTarget:
    """Read a fixture: one row per line of ``0``/``1`` characters."""
    path = Path(path)
    return _parse_fixture(path.read_text(), path.stem)


def _parse_fixture(text: str, name: str) -> GridTarget:
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows or any(set(r) - {"0", "1"} for r in rows):
        raise ValueError(f"target fixture {name!r} must contain only 0/1 rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"target fixture {name!r} has ragged rows")
    return GridTarget(name, _as_cells([[int(ch) for ch in r] for r in rows]))


def target_shape(name: str, width: int | None = None, height: int | None = None) -> GridTarget:
    if name in BUILTIN_TARGETS:
        text = resources.files("lagrseq.targets").joinpath(f"{name}.txt").read_text()
        target = _parse_fixture(text, name)
    elif Path(name).is_file():
        target = load_target(name)
    else:
        raise KeyError(f"unknown target shape {name!r}; built-ins are {', '.join(BUILTIN_TARGETS)}")
    h, w = target.shape
    if (width is not None and width != w) or (height is not None and height != h):
        raise ValueError(f"target {name!r} is {w}x{h}, requested {width}x{height}")
    return target


@dataclass(frozen=True, eq=False)
class GridEnvConfig:
    target: GridTarget
    mode: str = "image"
    bonus: float = 1.0
    delta: float = 0.95
    horizon: int = 500
    # Charge the would-be score change for drops the commit rule rejects.
    penalize_rejected_drops: bool = False
    width: int = field(init=False)
    height: int = field(init=False)

    def __post_init__(self):
        if self.mode not in ("image", "arrangement"):
            raise ValueError(f"unknown grid mode {self.mode!r}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        h, w = self.target.shape
        object.__setattr__(self, "height", h)
        object.__setattr__(self, "width", w)

    @classmethod
    def image(cls, target: str | GridTarget = "oval10", **kw) -> "GridEnvConfig":
        if isinstance(target, str):
            target = target_shape(target)
        kw.setdefault("delta", 0.95)
        kw.setdefault("horizon", 500)
        return cls(target=target, mode="image", **kw)

    @classmethod
    def arrangement(cls, target: str | GridTarget = "diamond5", **kw) -> "GridEnvConfig":
        if isinstance(target, str):
            target = target_shape(target)
        kw.setdefault("delta", 0.99)
        kw.setdefault("horizon", 50)
        return cls(target=target, mode="arrangement", **kw)

    @property
    def n_cells(self) -> int:
        return self.width * self.height


def grid_matches(cells: np.ndarray, target: GridTarget | np.ndarray) -> int:
    t = target.cells if isinstance(target, GridTarget) else target
    if cells.shape != t.shape:
        raise ValueError(f"dimension mismatch: {cells.shape} vs {t.shape}")
    return int(np.count_nonzero(cells == t))


def grid_eval(cells: np.ndarray, target: GridTarget | np.ndarray) -> float:
    """Fraction of cells equal to the target."""
    cells = np.asarray(cells)
    return grid_matches(cells, target) / cells.size


def _with_cell(cells: np.ndarray, index: int, value: int) -> np.ndarray:
    out = cells.copy()
    out.flat[index] = value
    out.setflags(write=False)
    return out


def grid_step(state: GridState, action: int, config: GridEnvConfig) -> tuple[GridState, float, bool]:
    if action not in (0, 1):
        raise ValueError(f"grid actions are 0/1, got {action}")
    n = config.n_cells
    cells = state.cells
    prev = grid_matches(cells, config.target)
    if config.mode == "image":
        nxt_cells = _with_cell(cells, state.cursor, 1 - cells.flat[state.cursor]) if action else cells
        proposed = nxt = grid_matches(nxt_cells, config.target)
        bonus = config.bonus if nxt / n > config.delta else 0.0
    else:
        proposed_cells = _with_cell(cells, state.cursor, 1) if action else cells
        proposed = grid_matches(proposed_cells, config.target)
        if proposed > prev:
            nxt_cells, nxt = proposed_cells, proposed
        else:
            nxt_cells, nxt = cells, prev
            if not config.penalize_rejected_drops:
                proposed = prev
        bonus = config.bonus if nxt == n else 0.0
    reward = (proposed - prev) / n + bonus
    return GridState(nxt_cells, (state.cursor + 1) % n), reward, bonus > 0


def grid_is_solution(candidate: np.ndarray, config: GridEnvConfig) -> bool:
    return grid_eval(candidate, config.target) > config.delta


def grid_policy_action(solution: np.ndarray, state: GridState, mode: str = "image") -> int:
    want = int(solution.flat[state.cursor])
    have = int(state.cells.flat[state.cursor])
    if mode == "image":
        return int(want != have)
    return int(want == 1 and have == 0)


def grid_render(cells: np.ndarray) -> str:
    return "[" + ",\n".join("[" + ",".join(str(int(v)) for v in row) + "]" for row in cells) + "]"


_MATRIX_RE = re.compile(r"\[\s*\[.*?\]\s*\]", re.DOTALL)
_ROW_RE = re.compile(r"\[([^\[\]]*)\]")


def _decode_matrix(chunk: str, width: int, height: int) -> np.ndarray:
    rows = []
    for body in _ROW_RE.findall(chunk[1:-1]):
        try:
            rows.append([int(v) for v in body.split(",") if v.strip()])
        except ValueError:
            raise StateParseError(StateParseError.MALFORMED, f"non-integer entry in row [{body}]") from None
    if len(rows) != height or any(len(r) != width for r in rows):
        got = f"{len(rows)} rows of widths {sorted({len(r) for r in rows})}"
        raise StateParseError("dimension", f"expected {height}x{width} matrix, got {got}")
    arr = np.asarray(rows, dtype=np.int64)
    if not np.isin(arr, (0, 1)).all():
        raise StateParseError("non-binary", "matrix entries must be 0 or 1")
    return _as_cells(arr)


def grid_parse(text: str, width: int, height: int) -> np.ndarray:
    """First ``height``x``width`` binary nested list found in ``text``."""
    first_error = None
    for match in _MATRIX_RE.finditer(text):
        try:
            return _decode_matrix(match.group(0), width, height)
        except StateParseError as exc:
            first_error = first_error or exc
    if first_error is not None:
        raise first_error
    raise StateParseError(StateParseError.MALFORMED, "no matrix found")


class GridEnv:
    def __init__(self, config: GridEnvConfig):
        self.config = config
        self.mode = config.mode
        self.n_actions = 2
        self.n_cells = config.n_cells
        self.env_id = f"{config.mode}-{config.target.name}"
        self._rows = np.arange(self.n_cells) // config.width
        self._cols = np.arange(self.n_cells) % config.width

    @property
    def target(self) -> GridTarget:
        return self.config.target

    def reset(self) -> GridState:
        return GridState(_as_cells(np.zeros((self.config.height, self.config.width))), 0)

    def legal_actions(self, state) -> list[int]:
        return [0, 1]

    def step(self, state, action: int):
        return grid_step(state, action, self.config)

    def evaluate(self, state) -> float:
        cells = state.cells if isinstance(state, GridState) else state
        return grid_eval(cells, self.config.target)

    def is_solution(self, candidate) -> bool:
        cells = candidate.cells if isinstance(candidate, GridState) else candidate
        return grid_is_solution(cells, self.config)

    def render_state(self, state) -> str:
        cells = state.cells if isinstance(state, GridState) else state
        return grid_render(cells)

    def parse_state(self, text: str) -> np.ndarray:
        return grid_parse(text, self.config.width, self.config.height)

    def validate_solution(self, candidate) -> None:
        pass

    def policy_action(self, solution, state: GridState) -> int:
        return grid_policy_action(solution, state, self.mode)

    def state_key(self, state) -> str:
        cells = state.cells if isinstance(state, GridState) else state
        return grid_render(cells)

    @property
    def state_dim(self) -> int:
        return self.n_cells + 2

    def encode_state(self, state: GridState) -> np.ndarray:
        """Cells flattened, then cursor row and column scaled to [0, 1]."""
        h, w = self.config.height, self.config.width
        vec = np.empty(self.n_cells + 2)
        vec[: self.n_cells] = state.cells.ravel()
        vec[-2] = self._rows[state.cursor] / max(h - 1, 1)
        vec[-1] = self._cols[state.cursor] / max(w - 1, 1)
        return vec
