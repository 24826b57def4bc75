"""Classical planners over the same 8-connected, corner-cutting grid dynamics."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gridworld import CellKind, GridMap, Position, neighbours


class NoPath(Exception):
    """The end cell cannot be reached from the query start."""


@dataclass(frozen=True)
class PlanResult:
    path: list[Position]
    length: float
    expanded: int


def path_length(path: list[Position]) -> float:
    return sum(math.dist(a, b) for a, b in zip(path, path[1:]))


def _check_start(grid: GridMap, start: Position) -> Position:
    start = Position(*start)
    if not grid.is_passable(start) or start == grid.end:
        raise ValueError(f"start {tuple(start)} must be a free cell")
    return start


def _best_first(grid: GridMap, start: Position, heuristic: Callable[[Position], float]) -> PlanResult:
    # heap key: f, then larger g first, then lowest (y, x)
    start = _check_start(grid, start)
    g_cost = {start: 0.0}
    parent: dict[Position, Position] = {}
    closed: set[Position] = set()
    heap = [(heuristic(start), -0.0, start.y, start.x)]
    expanded = 0
    while heap:
        _, neg_g, y, x = heapq.heappop(heap)
        cur = Position(x, y)
        if cur in closed:
            continue
        if cur == grid.end:
            path = [cur]
            while path[-1] != start:
                path.append(parent[path[-1]])
            path.reverse()
            return PlanResult(path, -neg_g, expanded)
        closed.add(cur)
        expanded += 1
        g = -neg_g
        for action, nxt in neighbours(grid, cur):
            if nxt in closed:
                continue
            ng = g + action.length
            if ng < g_cost.get(nxt, math.inf):
                g_cost[nxt] = ng
                parent[nxt] = cur
                heapq.heappush(heap, (ng + heuristic(nxt), -ng, nxt.y, nxt.x))
    raise NoPath(f"end {tuple(grid.end)} unreachable from {tuple(start)}")


def astar(grid: GridMap, start: Position) -> PlanResult:
    """Optimal path with step costs 1 / sqrt(2) and a Euclidean heuristic."""
    end = grid.end
    return _best_first(grid, start, lambda p: math.dist(p, end))


def dijkstra(grid: GridMap, start: Position) -> PlanResult:
    return _best_first(grid, start, lambda p: 0.0)


def rrt_plan(
    grid: GridMap, start: Position, max_samples: int, rng: np.random.Generator
) -> PlanResult | None:
    """Grid RRT: grow a tree one king-step at a time toward uniformly sampled cells.

    Returns ``None`` if the end is not reached within ``max_samples`` samples.
    The path is whatever the tree found and is generally not length-optimal.
    """
    start = _check_start(grid, start)
    ys, xs = np.nonzero(grid.cells != CellKind.OBSTACLE)  # end included
    candidates = np.stack([xs, ys], axis=1)
    nodes = np.empty((grid.width * grid.height, 2), dtype=np.int64)
    nodes[0] = start
    n_nodes = 1
    parent: dict[Position, Position | None] = {start: None}
    for _ in range(max_samples):
        sx, sy = candidates[rng.integers(len(candidates))]
        d2 = ((nodes[:n_nodes] - (sx, sy)) ** 2).sum(axis=1)
        nx, ny = nodes[int(np.argmin(d2))]
        near = Position(int(nx), int(ny))
        step = Position(near.x + int(np.sign(sx - nx)), near.y + int(np.sign(sy - ny)))
        if step == near or step in parent or not grid.is_passable(step):
            continue
        parent[step] = near
        nodes[n_nodes] = step
        n_nodes += 1
        if step == grid.end:
            path = [step]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            path.reverse()
            return PlanResult(path, path_length(path), n_nodes)
    return None


def cost_to_end(grid: GridMap) -> dict[Position, float]:
    """Optimal path length from every cell that can reach the end.

    Moves are symmetric, so a single Dijkstra sweep outward from the end
    gives the same lengths as one forward search per start.
    """
    dist = {grid.end: 0.0}
    heap = [(0.0, grid.end.y, grid.end.x)]
    while heap:
        d, y, x = heapq.heappop(heap)
        cur = Position(x, y)
        if d > dist[cur]:
            continue
        for action, nxt in neighbours(grid, cur):
            nd = d + action.length
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt.y, nxt.x))
    return dist
