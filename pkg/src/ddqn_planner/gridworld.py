"""Static grid environment: cells, king-move actions, dynamics and state encoding.

Coordinates: ``x`` is the column (increasing rightward), ``y`` is the row
(increasing upward). Map files print row ``y = height - 1`` first.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np


class Position(NamedTuple):
    x: int
    y: int


class CellKind(enum.IntEnum):
    FREE = 0
    OBSTACLE = 1
    START = 2
    END = 3


class Action(enum.IntEnum):
    E = 1
    NE = 2
    N = 3
    NW = 4
    W = 5
    SW = 6
    S = 7
    SE = 8

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]

    @property
    def length(self) -> float:
        dx, dy = _DELTAS[self]
        return math.sqrt(2.0) if dx and dy else 1.0


_DELTAS = {
    Action.E: (1, 0),
    Action.NE: (1, 1),
    Action.N: (0, 1),
    Action.NW: (-1, 1),
    Action.W: (-1, 0),
    Action.SW: (-1, -1),
    Action.S: (0, -1),
    Action.SE: (1, -1),
}

ACTIONS: tuple[Action, ...] = tuple(Action)
N_ACTIONS = len(ACTIONS)


class Termination(str, enum.Enum):
    NONE = "none"
    REACHED_END = "reached_end"
    HIT_OBSTACLE = "hit_obstacle"
    OFF_GRID = "off_grid"
    # the two below only arise in episode bookkeeping, never from apply_action
    STEP_CAP = "step_cap"
    LOOP = "loop"


class StepOutcome(NamedTuple):
    next: Position
    terminal: Termination


# state-encoding constants
FREE_VALUE = 0.0
OBSTACLE_VALUE = -1.0
END_VALUE = 1.0
ROBOT_VALUE = 0.5

_CHARS = {".": CellKind.FREE, "#": CellKind.OBSTACLE, "S": CellKind.START, "E": CellKind.END}
_SYMBOLS = {kind: ch for ch, kind in _CHARS.items()}


class MapFormatError(ValueError):
    pass


class GridMap:
    """Immutable occupancy grid with exactly one start and one end cell.

    ``cells`` is a read-only ``(height, width)`` array of :class:`CellKind`
    values indexed ``cells[y, x]``.
    """

    __slots__ = ("width", "height", "cells", "start", "end", "_base_encoding")

    def __init__(self, cells: np.ndarray):
        cells = np.array(cells, dtype=np.int8)
        if cells.ndim != 2 or cells.size == 0:
            raise MapFormatError("cells must be a non-empty 2-D array")
        starts = np.argwhere(cells == CellKind.START)
        ends = np.argwhere(cells == CellKind.END)
        if len(starts) != 1 or len(ends) != 1:
            raise MapFormatError(
                f"map needs exactly one start and one end (got {len(starts)} and {len(ends)})"
            )
        if not np.isin(cells, list(CellKind)).all():
            raise MapFormatError("unknown cell kind in map")
        cells.setflags(write=False)
        self.height, self.width = cells.shape
        self.cells = cells
        self.start = Position(int(starts[0][1]), int(starts[0][0]))
        self.end = Position(int(ends[0][1]), int(ends[0][0]))
        enc = np.zeros(cells.shape, dtype=np.float64)
        enc[cells == CellKind.OBSTACLE] = OBSTACLE_VALUE
        enc[cells == CellKind.END] = END_VALUE
        enc.setflags(write=False)
        self._base_encoding = enc

    @classmethod
    def from_obstacles(
        cls,
        width: int,
        height: int,
        start: tuple[int, int],
        end: tuple[int, int],
        obstacles: Iterable[tuple[int, int]] = (),
    ) -> "GridMap":
        cells = np.zeros((height, width), dtype=np.int8)
        for x, y in obstacles:
            cells[y, x] = CellKind.OBSTACLE
        cells[start[1], start[0]] = CellKind.START
        cells[end[1], end[0]] = CellKind.END
        return cls(cells)

    def with_obstacles(self, obstacles: Iterable[tuple[int, int]]) -> "GridMap":
        cells = self.cells.copy()
        for x, y in obstacles:
            if cells[y, x] in (CellKind.START, CellKind.END):
                raise ValueError(f"cannot place an obstacle on start/end cell {(x, y)}")
            cells[y, x] = CellKind.OBSTACLE
        return GridMap(cells)

    def in_bounds(self, pos: tuple[int, int]) -> bool:
        return 0 <= pos[0] < self.width and 0 <= pos[1] < self.height

    def kind(self, pos: tuple[int, int]) -> CellKind:
        return CellKind(int(self.cells[pos[1], pos[0]]))

    def is_obstacle(self, pos: tuple[int, int]) -> bool:
        return self.cells[pos[1], pos[0]] == CellKind.OBSTACLE

    def is_passable(self, pos: tuple[int, int]) -> bool:
        return self.in_bounds(pos) and not self.is_obstacle(pos)

    @property
    def obstacle_count(self) -> int:
        return int((self.cells == CellKind.OBSTACLE).sum())

    @property
    def base_encoding(self) -> np.ndarray:
        return self._base_encoding

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridMap):
            return NotImplemented
        return self.cells.shape == other.cells.shape and bool((self.cells == other.cells).all())

    def __hash__(self) -> int:
        return hash((self.cells.shape, self.cells.tobytes()))

    def __repr__(self) -> str:
        return f"GridMap({self.width}x{self.height}, start={tuple(self.start)}, end={tuple(self.end)})"


def apply_action(grid: GridMap, pos: Position, action: Action | int) -> StepOutcome:
    """Move one king-step; off-map and obstacle destinations end the episode.

    Only the destination cell is checked, so diagonal moves may cut corners.
    """
    if not grid.in_bounds(pos) or grid.is_obstacle(pos):
        raise ValueError(f"robot position {tuple(pos)} is off-map or inside an obstacle")
    dx, dy = Action(action).delta
    nxt = Position(pos[0] + dx, pos[1] + dy)
    if not grid.in_bounds(nxt):
        return StepOutcome(nxt, Termination.OFF_GRID)
    if grid.is_obstacle(nxt):
        return StepOutcome(nxt, Termination.HIT_OBSTACLE)
    if nxt == grid.end:
        return StepOutcome(nxt, Termination.REACHED_END)
    return StepOutcome(nxt, Termination.NONE)


def encode_state(grid: GridMap, robot: Position) -> np.ndarray:
    if not grid.in_bounds(robot) or grid.is_obstacle(robot):
        raise ValueError(f"robot position {tuple(robot)} is off-map or inside an obstacle")
    enc = grid.base_encoding.copy()
    enc[robot[1], robot[0]] = ROBOT_VALUE
    return enc


def encode_batch(grids: list[GridMap], robots: list[Position]) -> np.ndarray:
    """Stack encodings without per-state validation; used on the training hot path."""
    out = np.stack([g.base_encoding for g in grids])
    idx = np.arange(len(robots))
    xs = np.fromiter((p[0] for p in robots), dtype=np.intp, count=len(robots))
    ys = np.fromiter((p[1] for p in robots), dtype=np.intp, count=len(robots))
    out[idx, ys, xs] = ROBOT_VALUE
    return out


def free_positions(grid: GridMap) -> list[Position]:
    """Robot-placeable cells (free or start) in row-major order, ``y`` then ``x``."""
    ys, xs = np.nonzero((grid.cells == CellKind.FREE) | (grid.cells == CellKind.START))
    return [Position(int(x), int(y)) for y, x in zip(ys, xs)]


def neighbours(grid: GridMap, pos: tuple[int, int]) -> Iterable[tuple[Action, Position]]:
    for action in ACTIONS:
        dx, dy = action.delta
        nxt = Position(pos[0] + dx, pos[1] + dy)
        if grid.is_passable(nxt):
            yield action, nxt


def reachable_positions(grid: GridMap) -> list[Position]:
    """Free positions from which the end can be reached.

    Moves are symmetric, so a BFS outward from the end finds them all.
    """
    seen = {grid.end}
    queue = deque([grid.end])
    while queue:
        cur = queue.popleft()
        for _, nxt in neighbours(grid, cur):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return [p for p in free_positions(grid) if p in seen]


# ---------------------------------------------------------------------------
# map file format


def render_map(grid: GridMap) -> str:
    lines = [f"{grid.width} {grid.height}"]
    for y in range(grid.height - 1, -1, -1):
        lines.append("".join(_SYMBOLS[CellKind(int(k))] for k in grid.cells[y]))
    return "\n".join(lines) + "\n"


def parse_map(text: str) -> GridMap:
    lines = [ln.rstrip("\r") for ln in text.strip("\n").split("\n")]
    try:
        width, height = (int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise MapFormatError(f"bad header line {lines[0]!r}: expected '<width> <height>'") from exc
    rows = lines[1:]
    if len(rows) != height:
        raise MapFormatError(f"expected {height} rows, found {len(rows)}")
    cells = np.zeros((height, width), dtype=np.int8)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise MapFormatError(f"row {i + 1} has {len(row)} characters, expected {width}")
        y = height - 1 - i
        for x, ch in enumerate(row):
            try:
                cells[y, x] = _CHARS[ch]
            except KeyError:
                raise MapFormatError(f"unknown map symbol {ch!r} at row {i + 1}") from None
    return GridMap(cells)


def load_map(path: str | Path) -> GridMap:
    return parse_map(Path(path).read_text())


def save_map(grid: GridMap, path: str | Path) -> None:
    Path(path).write_text(render_map(grid))


def map_metadata(grid: GridMap) -> dict[str, int]:
    free = len(free_positions(grid))
    reachable = len(reachable_positions(grid))
    return {
        "width": grid.width,
        "height": grid.height,
        "obstacles": grid.obstacle_count,
        "free_cells": free,
        "reachable_cells": reachable,
        "trapped_cells": free - reachable,
    }


DATA_DIR = Path(__file__).resolve().parent / "data"
CANONICAL_MAP_PATH = DATA_DIR / "canonical.map"
CANONICAL_META_PATH = DATA_DIR / "canonical.meta.json"


def canonical_map() -> GridMap:
    return load_map(CANONICAL_MAP_PATH)

