"""Clearance-aware geodesic distances and shortest paths on the scene grid.

The navigation graph is the set of cells whose center admits the agent disc
(configuration-space inflation), 8-connected with straight edges costing one
cell and diagonal edges cell*sqrt(2); diagonal moves are forbidden whenever
either adjacent orthogonal cell is blocked, so paths never cut corners.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .constants import AGENT_RADIUS, STEP_SIZE, TURN_DEG
from .scene import (
    Cell,
    Point,
    Scene,
    _inflate,
    segment_min_clearance,
    wrap_angle,
)


class NavigationError(Exception):
    """Raised for unreachable targets, bad query points, or empty free space."""


@dataclass
class NavGrid:
    """Per-cell clearance grid: free(i, j) iff the agent disc fits at the
    cell center. Immutable after construction."""

    scene: Scene
    radius: float
    free: np.ndarray  # bool, same shape as scene.occupancy
    cell_size: float

    def __post_init__(self) -> None:
        self._graph: csr_matrix | None = None

    @property
    def scene_id(self) -> str:
        return self.scene.scene_id

    @property
    def shape(self) -> tuple[int, int]:
        return self.free.shape

    def cell_of(self, point: Point) -> Cell:
        return self.scene.cell_of(point)

    def cell_center(self, cell: Cell) -> Point:
        return self.scene.cell_center(cell)

    def snap_to_free(self, point: Point, tolerance: float | None = None) -> Cell:
        """Nearest free cell by center distance; errors if farther than
        `tolerance` (default: one cell size) from the point."""
        if tolerance is None:
            tolerance = self.cell_size
        i0, j0 = self.cell_of(point)
        if self.free[i0, j0]:
            return (i0, j0)
        reach = int(math.ceil(tolerance / self.cell_size)) + 1
        best: Cell | None = None
        best_dist = math.inf
        rows, cols = self.shape
        for i in range(max(0, i0 - reach), min(rows, i0 + reach + 1)):
            for j in range(max(0, j0 - reach), min(cols, j0 + reach + 1)):
                if not self.free[i, j]:
                    continue
                cx, cy = self.cell_center((i, j))
                d = math.hypot(point[0] - cx, point[1] - cy)
                if d < best_dist:
                    best, best_dist = (i, j), d
        if best is None or best_dist > tolerance:
            raise NavigationError(
                f"point {point} has no free cell within {tolerance} m"
            )
        return best

    def graph(self) -> csr_matrix:
        """Sparse 8-connected free-cell graph (symmetric, lazily built)."""
        if self._graph is None:
            self._graph = _build_graph(self.free, self.cell_size)
        return self._graph


def build_navgrid(scene: Scene, radius: float = AGENT_RADIUS) -> NavGrid:
    """Compute the clearance grid; errors when no cell admits the disc."""
    if radius <= 0:
        raise NavigationError("radius must be positive")
    free = _inflate(scene.occupancy, radius, scene.cell_size)
    if not free.any():
        raise NavigationError(
            f"no cell admits a disc of radius {radius} m in scene {scene.scene_id}"
        )
    return NavGrid(scene=scene, radius=radius, free=free, cell_size=scene.cell_size)


def _build_graph(free: np.ndarray, cell: float) -> csr_matrix:
    rows, cols = free.shape
    n = rows * cols
    idx = np.arange(n).reshape(rows, cols)
    diag = cell * math.sqrt(2.0)
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    ws: list[np.ndarray] = []

    def add(mask: np.ndarray, u_idx: np.ndarray, v_idx: np.ndarray, w: float) -> None:
        us.append(u_idx[mask])
        vs.append(v_idx[mask])
        ws.append(np.full(int(mask.sum()), w))

    # Straight neighbors (right, down).
    m = free[:, :-1] & free[:, 1:]
    add(m, idx[:, :-1], idx[:, 1:], cell)
    m = free[:-1, :] & free[1:, :]
    add(m, idx[:-1, :], idx[1:, :], cell)
    # Diagonals, no corner cutting: both orthogonal neighbors must be free.
    m = free[:-1, :-1] & free[1:, 1:] & free[:-1, 1:] & free[1:, :-1]
    add(m, idx[:-1, :-1], idx[1:, 1:], diag)
    m = free[:-1, 1:] & free[1:, :-1] & free[:-1, :-1] & free[1:, 1:]
    add(m, idx[:-1, 1:], idx[1:, :-1], diag)

    u = np.concatenate(us) if us else np.empty(0, dtype=int)
    v = np.concatenate(vs) if vs else np.empty(0, dtype=int)
    w = np.concatenate(ws) if ws else np.empty(0)
    data = np.concatenate([w, w])
    rows_ = np.concatenate([u, v])
    cols_ = np.concatenate([v, u])
    return csr_matrix((data, (rows_, cols_)), shape=(n, n))


@dataclass
class GeodesicField:
    """Multi-source shortest-path distances from a goal cell set."""

    navgrid: NavGrid
    goal_cells: tuple[Cell, ...]
    dist: np.ndarray  # float, +inf where unreachable
    cell_size: float
    _predecessors: np.ndarray = field(repr=False, default=None)

    def value_at_cell(self, cell: Cell) -> float:
        return float(self.dist[cell[0], cell[1]])

    def value_at(self, point: Point, tolerance: float | None = None) -> float:
        cell = self.navgrid.snap_to_free(point, tolerance)
        return self.value_at_cell(cell)

    def descend_chain(self, start: Cell) -> list[Cell]:
        """Predecessor chain from `start` down to the nearest goal cell."""
        cols = self.navgrid.shape[1]
        node = start[0] * cols + start[1]
        if not math.isfinite(self.dist[start[0], start[1]]):
            raise NavigationError(f"cell {start} cannot reach the goal set")
        chain = [start]
        while True:
            prev = self._predecessors[node]
            if prev < 0:
                return chain
            node = int(prev)
            chain.append((node // cols, node % cols))


def geodesic_field(navgrid: NavGrid, goal_cells: Iterable[Cell]) -> GeodesicField:
    """Multi-source Dijkstra over the free-cell graph."""
    goals = tuple(sorted(set(goal_cells)))
    if not goals:
        raise NavigationError("goal cell set is empty")
    for cell in goals:
        if not navgrid.free[cell[0], cell[1]]:
            raise NavigationError(f"goal cell {cell} is not free at clearance")
    rows, cols = navgrid.shape
    sources = [i * cols + j for i, j in goals]
    dist_flat, predecessors, _ = _csgraph_dijkstra(
        navgrid.graph(),
        directed=True,
        indices=sources,
        return_predecessors=True,
        min_only=True,
    )
    dist = dist_flat.reshape(rows, cols)
    dist[~navgrid.free] = math.inf
    return GeodesicField(
        navgrid=navgrid,
        goal_cells=goals,
        dist=dist,
        cell_size=navgrid.cell_size,
        _predecessors=predecessors,
    )


def geodesic_distance(
    navgrid: NavGrid, origin: Point, to_points: Sequence[Point]
) -> float:
    """Shortest-path distance from `origin` to the nearest of `to_points`.

    Query points snap to their nearest free cell (within one cell) before the
    graph query; returns +inf when every target is unreachable.
    """
    if not to_points:
        raise NavigationError("to_points must be non-empty")
    start = navgrid.snap_to_free(origin)
    goals = {navgrid.snap_to_free(p) for p in to_points}
    fld = geodesic_field(navgrid, goals)
    return fld.value_at_cell(start)


def shortest_path(
    navgrid: NavGrid, origin: Point, to_points: Sequence[Point]
) -> list[Point]:
    """Cell-center polyline to the nearest target, then greedily string-pulled.

    A vertex is dropped when the segment joining its neighbors keeps swept-disc
    clearance >= the grid radius; pulling repeats until no vertex can go.
    """
    if not to_points:
        raise NavigationError("to_points must be non-empty")
    start = navgrid.snap_to_free(origin)
    goals = {navgrid.snap_to_free(p) for p in to_points}
    fld = geodesic_field(navgrid, goals)
    if not math.isfinite(fld.value_at_cell(start)):
        raise NavigationError(f"no route from {origin} to any target")
    chain = fld.descend_chain(start)
    points = [navgrid.cell_center(c) for c in chain]
    return string_pull(navgrid, points)


def string_pull(navgrid: NavGrid, points: list[Point]) -> list[Point]:
    """Greedy vertex removal under the swept-disc clearance test."""
    if len(points) <= 2:
        return list(points)
    # Dropping interior vertices of exactly-collinear runs leaves the swept
    # curve unchanged, so no clearance test is needed for them.
    pts = [points[0]]
    for k in range(1, len(points) - 1):
        ax, ay = pts[-1]
        bx, by = points[k]
        cx, cy = points[k + 1]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if cross != 0.0 or (bx - ax) * (cx - bx) + (by - ay) * (cy - by) <= 0.0:
            pts.append(points[k])
    pts.append(points[-1])
    changed = True
    while changed:
        changed = False
        k = 1
        while k < len(pts) - 1:
            clearance = segment_min_clearance(
                navgrid.scene, pts[k - 1], pts[k + 1], navgrid.radius + navgrid.cell_size
            )
            if clearance >= navgrid.radius:
                del pts[k]
                changed = True
            else:
                k += 1
    return pts


def polyline_length(points: Sequence[Point]) -> float:
    return sum(
        math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(points, points[1:])
    )


def action_path_length(
    polyline: Sequence[Point],
    step: float = STEP_SIZE,
    turn_deg: float = TURN_DEG,
    initial_heading: float = 0.0,
) -> int:
    """Discrete actions needed to traverse a polyline, including the final stop.

    Forward actions are counted per maximal straight run (consecutive collinear
    segments merge before the ceil), turns per heading change wrapped to
    (-180, 180] degrees, plus the initial turn away from `initial_heading`.
    """
    if not polyline:
        raise NavigationError("polyline must have at least one vertex")
    if step <= 0 or turn_deg <= 0:
        raise NavigationError("step and turn must be positive")
    # Merge collinear runs so subdividing a straight segment changes nothing.
    runs: list[tuple[float, float]] = []  # (heading, length)
    for a, b in zip(polyline, polyline[1:]):
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        if length <= 1e-12:
            continue
        heading = math.atan2(b[1] - a[1], b[0] - a[0])
        if runs and abs(wrap_angle(heading - runs[-1][0])) <= 1e-12:
            runs[-1] = (runs[-1][0], runs[-1][1] + length)
        else:
            runs.append((heading, length))
    turn_rad = math.radians(turn_deg)
    actions = 1  # STOP
    heading = initial_heading
    for run_heading, run_length in runs:
        delta = abs(wrap_angle(run_heading - heading))
        actions += int(math.ceil(delta / turn_rad - 1e-9))
        actions += int(math.ceil(run_length / step - 1e-9))
        heading = run_heading
    return actions
