"""Plan-view scenes: occupancy grid + oriented-box objects, and the low-level
geometric queries everything else is built on (navigability, point-to-box
distance, raycasting, swept-disc clearance).

A scene is a closed 2D floor plan discretized on a regular grid. Cell (i, j)
covers [j*cell, (j+1)*cell) x [i*cell, (i+1)*cell) in meters, row-major with
row i along +y. Objects are oriented bounding boxes with a per-instance height
range above the floor; their footprints are rasterized into the occupancy grid
so they act as obstacles.
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import math
import random
from dataclasses import dataclass, field
from typing import IO, Any

import numpy as np
from scipy import ndimage

from .constants import AGENT_RADIUS

Point = tuple[float, float]
Cell = tuple[int, int]

SCHEMA_VERSION = "1"

# Goal category vocabulary (the standard 21-category indoor list).
MP3D_CATEGORIES: tuple[str, ...] = (
    "chair",
    "table",
    "picture",
    "cabinet",
    "cushion",
    "sofa",
    "bed",
    "chest_of_drawers",
    "plant",
    "sink",
    "toilet",
    "stool",
    "towel",
    "tv_monitor",
    "shower",
    "bathtub",
    "counter",
    "fireplace",
    "gym_equipment",
    "seating",
    "clothes",
)

# Default footprint half-extents (m) and mounted height range (m) per category.
# The source data gives no physical dimensions, so these are our own plausible
# desk-scale defaults; callers may override them per generate_scene call.
DEFAULT_OBJECT_DIMENSIONS: dict[str, tuple[float, float, float, float]] = {
    "chair": (0.28, 0.28, 0.0, 0.9),
    "table": (0.60, 0.40, 0.0, 0.75),
    "picture": (0.40, 0.05, 1.2, 1.8),
    "cabinet": (0.45, 0.30, 0.0, 1.0),
    "cushion": (0.22, 0.22, 0.3, 0.5),
    "sofa": (0.90, 0.45, 0.0, 0.85),
    "bed": (1.00, 0.80, 0.0, 0.6),
    "chest_of_drawers": (0.50, 0.30, 0.0, 1.1),
    "plant": (0.25, 0.25, 0.0, 1.3),
    "sink": (0.30, 0.25, 0.7, 1.0),
    "toilet": (0.28, 0.20, 0.0, 0.75),
    "stool": (0.20, 0.20, 0.0, 0.5),
    "towel": (0.30, 0.05, 0.8, 1.4),
    "tv_monitor": (0.45, 0.08, 0.8, 1.5),
    "shower": (0.45, 0.45, 0.0, 2.0),
    "bathtub": (0.80, 0.40, 0.0, 0.6),
    "counter": (0.80, 0.35, 0.0, 0.95),
    "fireplace": (0.60, 0.25, 0.0, 1.2),
    "gym_equipment": (0.60, 0.35, 0.0, 1.4),
    "seating": (0.70, 0.40, 0.0, 0.85),
    "clothes": (0.30, 0.15, 0.5, 1.5),
}

WALL_THICKNESS = 0.10
DOOR_WIDTH = 0.90
MIN_ROOM_SIDE = 1.6
PLACEMENT_RETRIES = 100


class SceneError(Exception):
    """Base class for scene construction and query failures."""


class SceneFormatError(SceneError):
    """Raised when a scene document cannot be parsed."""


class SceneValidationError(SceneError):
    """Raised when a scene violates a structural invariant."""


class SceneGenerationError(SceneError):
    """Raised when procedural generation cannot satisfy its constraints."""


def quantize(value: float) -> float:
    """Canonical 6-fractional-digit rounding used for every serialized float."""
    return round(float(value), 6) + 0.0


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class CategoryVocabulary:
    """Ordered, unique goal category names."""

    names: tuple[str, ...] = MP3D_CATEGORIES

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise SceneValidationError("category names must be unique")

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def __iter__(self):
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)


DEFAULT_VOCABULARY = CategoryVocabulary()


@dataclass(frozen=True)
class OrientedBox:
    """Oriented rectangle in the floor plane: center, half-extents, yaw."""

    center: Point
    half_extents: tuple[float, float]
    yaw: float

    def corners(self) -> list[Point]:
        cx, cy = self.center
        ex, ey = self.half_extents
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        pts = []
        for sx, sy in ((-ex, -ey), (ex, -ey), (ex, ey), (-ex, ey)):
            pts.append((cx + sx * c - sy * s, cy + sx * s + sy * c))
        return pts

    def to_local(self, point: Point) -> Point:
        dx = point[0] - self.center[0]
        dy = point[1] - self.center[1]
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (dx * c + dy * s, -dx * s + dy * c)

    def to_world(self, local: Point) -> Point:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (
            self.center[0] + local[0] * c - local[1] * s,
            self.center[1] + local[0] * s + local[1] * c,
        )


@dataclass(frozen=True)
class ObjectInstance:
    """A categorized obstacle with an oriented footprint and a height range."""

    instance_id: str
    category: str
    obb: OrientedBox
    height_range: tuple[float, float]

    def __post_init__(self) -> None:
        ex, ey = self.obb.half_extents
        if not (ex > 0.0 and ey > 0.0):
            raise SceneValidationError(
                f"object {self.instance_id!r}: half_extents must be positive"
            )
        z0, z1 = self.height_range
        if not (0.0 <= z0 < z1):
            raise SceneValidationError(
                f"object {self.instance_id!r}: height_range must satisfy 0 <= z_min < z_max"
            )


@dataclass
class Scene:
    """Immutable-after-construction world: occupancy grid plus objects."""

    scene_id: str
    width: float
    height: float
    cell_size: float
    seed: int
    occupancy: np.ndarray  # bool, shape (rows, cols), True = obstructed
    objects: list[ObjectInstance] = field(default_factory=list)
    vocabulary: CategoryVocabulary = DEFAULT_VOCABULARY

    def __post_init__(self) -> None:
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        self._instance_index: np.ndarray | None = None
        self._occ_rows: list[list[bool]] | None = None

    @property
    def rows(self) -> int:
        return self.occupancy.shape[0]

    @property
    def cols(self) -> int:
        return self.occupancy.shape[1]

    def in_bounds(self, point: Point) -> bool:
        return 0.0 <= point[0] < self.width and 0.0 <= point[1] < self.height

    def cell_of(self, point: Point) -> Cell:
        j = min(int(point[0] / self.cell_size), self.cols - 1)
        i = min(int(point[1] / self.cell_size), self.rows - 1)
        return (max(i, 0), max(j, 0))

    def cell_center(self, cell: Cell) -> Point:
        i, j = cell
        return ((j + 0.5) * self.cell_size, (i + 0.5) * self.cell_size)

    def instance_index(self) -> np.ndarray:
        """Per-cell object index (-1 where no object footprint covers the cell)."""
        if self._instance_index is None:
            index = np.full((self.rows, self.cols), -1, dtype=np.int32)
            for k, obj in enumerate(self.objects):
                ii, jj = footprint_cells(self, obj.obb)
                index[ii, jj] = k
            self._instance_index = index
        return self._instance_index

    def occupancy_rows(self) -> list[list[bool]]:
        """Plain-list view of the occupancy grid for tight traversal loops."""
        if self._occ_rows is None:
            self._occ_rows = self.occupancy.tolist()
        return self._occ_rows

    def instances_of(self, category: str) -> list[ObjectInstance]:
        return [obj for obj in self.objects if obj.category == category]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.width == other.width
            and self.height == other.height
            and self.cell_size == other.cell_size
            and self.seed == other.seed
            and np.array_equal(self.occupancy, other.occupancy)
            and self.objects == other.objects
        )


# ---------------------------------------------------------------------------
# Geometric queries


def distance_to_obb(point: Point, obb: OrientedBox) -> float:
    """Euclidean distance from a point to the closed rectangle (0 if inside)."""
    lx, ly = obb.to_local(point)
    ex, ey = obb.half_extents
    dx = max(0.0, abs(lx) - ex)
    dy = max(0.0, abs(ly) - ey)
    return math.hypot(dx, dy)


def point_to_cell_distance(point: Point, cell: Cell, cell_size: float) -> float:
    """Distance from a point to a grid cell's closed square (0 if inside)."""
    i, j = cell
    cx = (j + 0.5) * cell_size
    cy = (i + 0.5) * cell_size
    h = 0.5 * cell_size
    dx = max(0.0, abs(point[0] - cx) - h)
    dy = max(0.0, abs(point[1] - cy) - h)
    return math.hypot(dx, dy)


def is_navigable(scene: Scene, point: Point, radius: float) -> bool:
    """True iff a disc of the given radius at `point` overlaps no obstructed cell.

    The test is conservative at cell granularity: an obstructed cell blocks the
    point iff the distance from the point to the cell's square is strictly less
    than `radius` (a disc exactly tangent to an obstacle still counts as free).
    """
    if not scene.in_bounds(point):
        raise SceneError(f"point {point} outside scene bounds")
    c = scene.cell_size
    margin = int(math.ceil((radius + c) / c)) + 1
    i0, j0 = scene.cell_of(point)
    ilo, ihi = max(0, i0 - margin), min(scene.rows, i0 + margin + 1)
    jlo, jhi = max(0, j0 - margin), min(scene.cols, j0 + margin + 1)
    window = scene.occupancy[ilo:ihi, jlo:jhi]
    ii, jj = np.nonzero(window)
    if ii.size == 0:
        return True
    cx = (jj + jlo + 0.5) * c
    cy = (ii + ilo + 0.5) * c
    dx = np.maximum(0.0, np.abs(point[0] - cx) - 0.5 * c)
    dy = np.maximum(0.0, np.abs(point[1] - cy) - 0.5 * c)
    return bool(np.all(np.hypot(dx, dy) >= radius))


@dataclass(frozen=True)
class RaycastHit:
    hit: bool
    range: float
    hit_instance: str | None = None


def raycast(
    scene: Scene, origin: Point, direction: Point, max_range: float
) -> RaycastHit:
    """Walk grid cells along a ray (exact DDA) until an obstructed cell.

    Returns the entry distance of the first obstructed cell and, when that
    cell lies inside an object footprint, the object's instance id. If nothing
    is struck within `max_range`, returns hit=False with range=max_range.
    """
    norm = math.hypot(direction[0], direction[1])
    if abs(norm - 1.0) > 1e-9:
        raise SceneError("raycast direction must be a unit vector")
    if not scene.in_bounds(origin):
        raise SceneError(f"raycast origin {origin} outside scene bounds")

    c = scene.cell_size
    i, j = scene.cell_of(origin)
    occ = scene.occupancy_rows()
    rows, cols = scene.rows, scene.cols

    def hit_at(ii: int, jj: int, dist: float) -> RaycastHit:
        k = scene.instance_index()[ii, jj]
        name = scene.objects[k].instance_id if k >= 0 else None
        return RaycastHit(True, dist, name)

    if occ[i][j]:
        return hit_at(i, j, 0.0)

    dx, dy = direction
    step_j = 1 if dx > 0 else -1
    step_i = 1 if dy > 0 else -1
    if dx > 0:
        tmax_x = ((j + 1) * c - origin[0]) / dx
    elif dx < 0:
        tmax_x = (j * c - origin[0]) / dx
    else:
        tmax_x = math.inf
    if dy > 0:
        tmax_y = ((i + 1) * c - origin[1]) / dy
    elif dy < 0:
        tmax_y = (i * c - origin[1]) / dy
    else:
        tmax_y = math.inf
    tdelta_x = abs(c / dx) if dx != 0.0 else math.inf
    tdelta_y = abs(c / dy) if dy != 0.0 else math.inf

    while True:
        if tmax_x < tmax_y:
            t_enter = tmax_x
            tmax_x += tdelta_x
            j += step_j
        elif tmax_y < tmax_x:
            t_enter = tmax_y
            tmax_y += tdelta_y
            i += step_i
        else:
            # Exact corner crossing: advance diagonally.
            t_enter = tmax_x
            tmax_x += tdelta_x
            tmax_y += tdelta_y
            i += step_i
            j += step_j
        if t_enter > max_range:
            return RaycastHit(False, max_range, None)
        if not (0 <= i < rows and 0 <= j < cols):
            return RaycastHit(False, max_range, None)
        if occ[i][j]:
            return hit_at(i, j, t_enter)


def segment_min_clearance(
    scene: Scene, a: Point, b: Point, cap: float
) -> float:
    """Minimum distance from segment ab to any obstructed cell square.

    Only obstacles within `cap` of the segment's bounding box are considered;
    the return value saturates at `cap`. Used for swept-disc collision tests:
    a disc of radius r sweeping a->b stays clear iff the result is >= r.
    """
    c = scene.cell_size
    xlo = min(a[0], b[0]) - cap - c
    xhi = max(a[0], b[0]) + cap + c
    ylo = min(a[1], b[1]) - cap - c
    yhi = max(a[1], b[1]) + cap + c
    jlo = max(0, int(xlo / c))
    jhi = min(scene.cols, int(xhi / c) + 1)
    ilo = max(0, int(ylo / c))
    ihi = min(scene.rows, int(yhi / c) + 1)
    window = scene.occupancy[ilo:ihi, jlo:jhi]
    ii, jj = np.nonzero(window)
    if ii.size == 0:
        return cap
    cx = (jj + jlo + 0.5) * c
    cy = (ii + ilo + 0.5) * c
    h = 0.5 * c

    ax, ay = a
    ux, uy = b[0] - a[0], b[1] - a[1]
    seg_sq = ux * ux + uy * uy

    # The per-cell distance g(t) is piecewise: linear inside one slab,
    # distance-to-corner outside both. Its minimum over t in [0, 1] therefore
    # occurs at a segment endpoint, a slab crossing, or the projection of a
    # square corner onto the segment; evaluating that candidate set is exact.
    n = ii.size
    candidates = [np.zeros(n), np.ones(n)]
    if seg_sq > 0.0:
        if ux != 0.0:
            candidates.append((cx - h - ax) / ux)
            candidates.append((cx + h - ax) / ux)
        if uy != 0.0:
            candidates.append((cy - h - ay) / uy)
            candidates.append((cy + h - ay) / uy)
        for sx in (-h, h):
            for sy in (-h, h):
                candidates.append(
                    ((cx + sx - ax) * ux + (cy + sy - ay) * uy) / seg_sq
                )
    ts = np.clip(np.stack(candidates, axis=0), 0.0, 1.0)
    px = ax + ts * ux
    py = ay + ts * uy
    dx = np.maximum(0.0, np.abs(px - cx) - h)
    dy = np.maximum(0.0, np.abs(py - cy) - h)
    best = np.hypot(dx, dy).min(axis=0)
    return float(min(cap, best.min()))


def segment_clear(scene: Scene, a: Point, b: Point, radius: float) -> bool:
    """True iff a disc of `radius` swept along segment ab stays off obstacles."""
    return segment_min_clearance(scene, a, b, radius + scene.cell_size) >= radius


def segment_visible(
    scene: Scene, a: Point, b: Point, ignore_instance: str | None = None
) -> bool:
    """True iff the segment ab crosses no obstructed cell, except cells covered
    by `ignore_instance`'s footprint (line-of-sight toward a target object)."""
    if not scene.in_bounds(a):
        raise SceneError(f"segment start {a} outside scene bounds")
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    ignore_k = -2
    if ignore_instance is not None:
        for k, obj in enumerate(scene.objects):
            if obj.instance_id == ignore_instance:
                ignore_k = k
                break
    index = scene.instance_index()
    occ = scene.occupancy
    c = scene.cell_size
    i, j = scene.cell_of(a)

    def blocked(ii: int, jj: int) -> bool:
        return bool(occ[ii, jj]) and index[ii, jj] != ignore_k

    if blocked(i, j):
        return False
    if length == 0.0:
        return True
    dx = (b[0] - a[0]) / length
    dy = (b[1] - a[1]) / length
    step_j = 1 if dx > 0 else -1
    step_i = 1 if dy > 0 else -1
    tmax_x = (
        (((j + 1) * c - a[0]) / dx)
        if dx > 0
        else ((j * c - a[0]) / dx)
        if dx < 0
        else math.inf
    )
    tmax_y = (
        (((i + 1) * c - a[1]) / dy)
        if dy > 0
        else ((i * c - a[1]) / dy)
        if dy < 0
        else math.inf
    )
    tdelta_x = abs(c / dx) if dx != 0.0 else math.inf
    tdelta_y = abs(c / dy) if dy != 0.0 else math.inf
    while True:
        if tmax_x < tmax_y:
            t_enter = tmax_x
            tmax_x += tdelta_x
            j += step_j
        elif tmax_y < tmax_x:
            t_enter = tmax_y
            tmax_y += tdelta_y
            i += step_i
        else:
            t_enter = tmax_x
            tmax_x += tdelta_x
            tmax_y += tdelta_y
            i += step_i
            j += step_j
        if t_enter >= length:
            return True
        if not (0 <= i < scene.rows and 0 <= j < scene.cols):
            return True
        if blocked(i, j):
            return False


def footprint_cells(scene: Scene, obb: OrientedBox) -> tuple[np.ndarray, np.ndarray]:
    """Indices (rows, cols) of all cells whose square intersects the box."""
    c = scene.cell_size
    xs = [p[0] for p in obb.corners()]
    ys = [p[1] for p in obb.corners()]
    jlo = max(0, int(min(xs) / c) - 1)
    jhi = min(scene.cols, int(max(xs) / c) + 2)
    ilo = max(0, int(min(ys) / c) - 1)
    ihi = min(scene.rows, int(max(ys) / c) + 2)
    if jlo >= jhi or ilo >= ihi:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    jj, ii = np.meshgrid(np.arange(jlo, jhi), np.arange(ilo, ihi))
    cx = (jj + 0.5) * c
    cy = (ii + 0.5) * c
    h = 0.5 * c
    # Separating-axis test between the cell square and the oriented box.
    dx = cx - obb.center[0]
    dy = cy - obb.center[1]
    cos_y, sin_y = math.cos(obb.yaw), math.sin(obb.yaw)
    ex, ey = obb.half_extents
    # Box axes in world coordinates.
    ax = (cos_y, sin_y)
    ay = (-sin_y, cos_y)
    # Axis 1/2: world x, y (square axes).
    sep = np.abs(dx) > h + ex * abs(ax[0]) + ey * abs(ay[0])
    sep |= np.abs(dy) > h + ex * abs(ax[1]) + ey * abs(ay[1])
    # Axis 3/4: box axes.
    proj_x = np.abs(dx * ax[0] + dy * ax[1])
    sep |= proj_x > ex + h * (abs(ax[0]) + abs(ax[1]))
    proj_y = np.abs(dx * ay[0] + dy * ay[1])
    sep |= proj_y > ey + h * (abs(ay[0]) + abs(ay[1]))
    inside = ~sep
    return ii[inside], jj[inside]


# ---------------------------------------------------------------------------
# Procedural generation


@dataclass
class SceneGenParams:
    width: float = 20.0
    height: float = 20.0
    room_count: int = 4
    objects_per_category_range: tuple[int, int] = (1, 2)
    vocabulary: CategoryVocabulary = DEFAULT_VOCABULARY
    cell_size: float = 0.05
    seed: int = 0
    agent_radius: float = AGENT_RADIUS
    dimensions: dict[str, tuple[float, float, float, float]] | None = None


def _clearance_structure(radius: float, cell: float) -> np.ndarray:
    """Dilation structuring element: offsets whose cell square sits closer than
    `radius` to a cell center (matches the is_navigable disc test exactly)."""
    reach = int(math.ceil(radius / cell)) + 1
    offsets = np.arange(-reach, reach + 1)
    dj, di = np.meshgrid(offsets, offsets)
    dist = cell * np.hypot(
        np.maximum(0.0, np.abs(dj) - 0.5), np.maximum(0.0, np.abs(di) - 0.5)
    )
    return dist < radius


def _center_has_clearance(
    occ: np.ndarray, i: int, j: int, radius: float, cell: float
) -> bool:
    reach = int(math.ceil(radius / cell)) + 1
    ilo, ihi = max(0, i - reach), min(occ.shape[0], i + reach + 1)
    jlo, jhi = max(0, j - reach), min(occ.shape[1], j + reach + 1)
    ii, jj = np.nonzero(occ[ilo:ihi, jlo:jhi])
    if ii.size == 0:
        return True
    di = np.abs(ii + ilo - i)
    dj = np.abs(jj + jlo - j)
    dist = cell * np.hypot(np.maximum(0.0, dj - 0.5), np.maximum(0.0, di - 0.5))
    return bool((dist >= radius).all())


def _inflate(occ: np.ndarray, radius: float, cell: float) -> np.ndarray:
    """Free-space mask after clearance inflation (True = disc fits at center)."""
    reach = int(math.ceil(radius / cell)) + 1
    if reach <= 64:
        blocked = ndimage.binary_dilation(
            occ, structure=_clearance_structure(radius, cell)
        )
        return ~blocked
    # Large radii: exact center-to-center distances bound the center-to-square
    # distance within half a cell diagonal; only the band between the bounds
    # needs the exact per-cell test.
    center_dist = ndimage.distance_transform_edt(~occ, sampling=cell)
    blocked = center_dist < radius - 1e-9
    band = ~blocked & (center_dist < radius + cell * math.sqrt(0.5) + 1e-9)
    for i, j in np.argwhere(band):
        if not _center_has_clearance(occ, i, j, radius, cell):
            blocked[i, j] = True
    return ~blocked


def _free_connected(occ: np.ndarray, radius: float, cell: float) -> bool:
    free = _inflate(occ, radius, cell)
    if not free.any():
        return False
    _, count = ndimage.label(free)
    return count == 1


def _split_rooms(
    rng: random.Random, rows: int, cols: int, room_count: int, cell: float
) -> tuple[list[tuple[int, int, int, int]], list[tuple[str, int, int, int, int]]]:
    """Recursively split the interior into rooms; returns room rects and walls.

    Rooms are (i0, i1, j0, j1) half-open cell rects; walls are
    (axis, position, span_lo, span_hi, thickness) descriptors used for carving.
    """
    wall_cells = max(1, round(WALL_THICKNESS / cell))
    min_side = int(math.ceil(MIN_ROOM_SIDE / cell))
    rooms = [(1, rows - 1, 1, cols - 1)]
    walls: list[tuple[str, int, int, int, int]] = []
    while len(rooms) < room_count:
        candidates = [
            (idx, r)
            for idx, r in enumerate(rooms)
            if max(r[1] - r[0], r[3] - r[2]) >= 2 * min_side + wall_cells
        ]
        if not candidates:
            raise SceneGenerationError(
                f"cannot fit {room_count} rooms of side >= {MIN_ROOM_SIDE} m"
            )
        idx, rect = max(candidates, key=lambda t: (t[1][1] - t[1][0]) * (t[1][3] - t[1][2]))
        i0, i1, j0, j1 = rect
        if (i1 - i0) >= (j1 - j0):
            pos = rng.randint(i0 + min_side, i1 - min_side - wall_cells)
            walls.append(("h", pos, j0, j1, wall_cells))
            rooms[idx] = (i0, pos, j0, j1)
            rooms.append((pos + wall_cells, i1, j0, j1))
        else:
            pos = rng.randint(j0 + min_side, j1 - min_side - wall_cells)
            walls.append(("v", pos, i0, i1, wall_cells))
            rooms[idx] = (i0, i1, j0, pos)
            rooms.append((i0, i1, pos + wall_cells, j1))
    return rooms, walls


def generate_scene(params: SceneGenParams) -> Scene:
    """Generate a closed multi-room scene with non-overlapping objects.

    Deterministic in the seed. Rooms are axis-aligned and connected by
    doorways wide enough for the agent; object placements are rejected when
    they would overlap anything or disconnect the clearance-inflated free
    space. Raises SceneGenerationError naming the category when an object
    cannot be placed within the retry budget.
    """
    if params.width < 4.0 or params.height < 4.0:
        raise SceneGenerationError("width and height must be at least 4 m")
    if not (0.0 < params.cell_size <= 0.25):
        raise SceneGenerationError("cell_size must be in (0, 0.25]")
    if params.room_count < 1:
        raise SceneGenerationError("room_count must be >= 1")
    lo, hi = params.objects_per_category_range
    if lo < 0 or hi < lo:
        raise SceneGenerationError("objects_per_category_range must be 0 <= lo <= hi")

    cell = params.cell_size
    cols = round(params.width / cell)
    rows = round(params.height / cell)
    width = quantize(cols * cell)
    height = quantize(rows * cell)
    rng = random.Random(params.seed)

    occ = np.zeros((rows, cols), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True

    _, walls = _split_rooms(rng, rows, cols, params.room_count, cell)
    door_cells = max(
        int(math.ceil(DOOR_WIDTH / cell)),
        int(math.ceil(2.0 * (params.agent_radius + cell) / cell)) + 2,
    )
    for axis, pos, span_lo, span_hi, thickness in walls:
        if axis == "h":
            occ[pos : pos + thickness, span_lo:span_hi] = True
        else:
            occ[span_lo:span_hi, pos : pos + thickness] = True
        gap_lo = rng.randint(span_lo + 2, span_hi - door_cells - 2)
        if axis == "h":
            occ[pos : pos + thickness, gap_lo : gap_lo + door_cells] = False
        else:
            occ[gap_lo : gap_lo + door_cells, pos : pos + thickness] = False

    if not _free_connected(occ, params.agent_radius, cell):
        raise SceneGenerationError("room layout is not fully connected at agent clearance")

    dims = dict(DEFAULT_OBJECT_DIMENSIONS)
    if params.dimensions:
        dims.update(params.dimensions)

    scene = Scene(
        scene_id=f"scene-{params.seed:08d}",
        width=width,
        height=height,
        cell_size=quantize(cell),
        seed=params.seed,
        occupancy=occ,
        objects=[],
        vocabulary=params.vocabulary,
    )

    for category in params.vocabulary:
        if category not in dims:
            raise SceneGenerationError(f"no default dimensions for category {category!r}")
        count = rng.randint(lo, hi)
        base_ex, base_ey, z0, z1 = dims[category]
        for n in range(count):
            placed = False
            for _ in range(PLACEMENT_RETRIES):
                ex = quantize(base_ex * rng.uniform(0.85, 1.15))
                ey = quantize(base_ey * rng.uniform(0.85, 1.15))
                yaw = quantize(rng.uniform(0.0, 2.0 * math.pi))
                cx = quantize(rng.uniform(ex + cell, width - ex - cell))
                cy = quantize(rng.uniform(ey + cell, height - ey - cell))
                obb = OrientedBox((cx, cy), (ex, ey), yaw)
                ii, jj = footprint_cells(scene, obb)
                if ii.size == 0 or occ[ii, jj].any():
                    continue
                occ[ii, jj] = True
                if not _free_connected(occ, params.agent_radius, cell):
                    occ[ii, jj] = False
                    continue
                scene.objects.append(
                    ObjectInstance(
                        instance_id=f"{category}_{n}",
                        category=category,
                        obb=obb,
                        height_range=(quantize(z0), quantize(z1)),
                    )
                )
                placed = True
                break
            if not placed:
                raise SceneGenerationError(
                    f"could not place instance {n} of category {category!r} "
                    f"after {PLACEMENT_RETRIES} retries"
                )
    scene._instance_index = None
    scene._occ_rows = None
    return scene


# ---------------------------------------------------------------------------
# Validation and serialization


def validate_scene(scene: Scene) -> None:
    """Check every structural invariant; raise SceneValidationError on failure."""
    if scene.rows < 2 or scene.cols < 2:
        raise SceneValidationError("grid must be at least 2x2")
    if abs(scene.width - quantize(scene.cols * scene.cell_size)) > 1e-9:
        raise SceneValidationError("width must equal cols * cell_size")
    if abs(scene.height - quantize(scene.rows * scene.cell_size)) > 1e-9:
        raise SceneValidationError("height must equal rows * cell_size")
    border = np.concatenate(
        [
            scene.occupancy[0, :],
            scene.occupancy[-1, :],
            scene.occupancy[:, 0],
            scene.occupancy[:, -1],
        ]
    )
    if not border.all():
        raise SceneValidationError("boundary cells must all be obstructed")
    seen_ids: set[str] = set()
    for obj in scene.objects:
        if obj.instance_id in seen_ids:
            raise SceneValidationError(f"duplicate instance_id {obj.instance_id!r}")
        seen_ids.add(obj.instance_id)
        if obj.category not in scene.vocabulary:
            raise SceneValidationError(
                f"object {obj.instance_id!r} has unknown category {obj.category!r}"
            )
        ii, jj = footprint_cells(scene, obj.obb)
        if not scene.occupancy[ii, jj].all():
            raise SceneValidationError(
                f"object {obj.instance_id!r} footprint cells must be obstructed"
            )


def scene_to_dict(scene: Scene) -> dict[str, Any]:
    packed = np.packbits(scene.occupancy.reshape(-1), bitorder="little")
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": scene.scene_id,
        "width": quantize(scene.width),
        "height": quantize(scene.height),
        "cell_size": quantize(scene.cell_size),
        "seed": scene.seed,
        "occupancy": base64.b64encode(packed.tobytes()).decode("ascii"),
        "objects": [
            {
                "instance_id": obj.instance_id,
                "category": obj.category,
                "center": [quantize(obj.obb.center[0]), quantize(obj.obb.center[1])],
                "half_extents": [
                    quantize(obj.obb.half_extents[0]),
                    quantize(obj.obb.half_extents[1]),
                ],
                "yaw": quantize(obj.obb.yaw),
                "height_range": [
                    quantize(obj.height_range[0]),
                    quantize(obj.height_range[1]),
                ],
            }
            for obj in scene.objects
        ],
    }


def scene_from_dict(doc: dict[str, Any], vocabulary: CategoryVocabulary | None = None) -> Scene:
    try:
        if doc["schema_version"] != SCHEMA_VERSION:
            raise SceneFormatError(
                f"unsupported schema_version {doc['schema_version']!r}"
            )
        width = float(doc["width"])
        height = float(doc["height"])
        cell = float(doc["cell_size"])
        if cell <= 0:
            raise SceneValidationError("cell_size must be positive")
        cols = round(width / cell)
        rows = round(height / cell)
        raw = base64.b64decode(doc["occupancy"])
        expected = (rows * cols + 7) // 8
        if len(raw) != expected:
            raise SceneValidationError(
                f"occupancy payload holds {len(raw)} bytes, expected {expected}"
            )
        bits = np.unpackbits(
            np.frombuffer(raw, dtype=np.uint8), count=rows * cols, bitorder="little"
        )
        occupancy = bits.astype(bool).reshape(rows, cols)
        objects = []
        for entry in doc["objects"]:
            objects.append(
                ObjectInstance(
                    instance_id=str(entry["instance_id"]),
                    category=str(entry["category"]),
                    obb=OrientedBox(
                        center=(float(entry["center"][0]), float(entry["center"][1])),
                        half_extents=(
                            float(entry["half_extents"][0]),
                            float(entry["half_extents"][1]),
                        ),
                        yaw=float(entry["yaw"]),
                    ),
                    height_range=(
                        float(entry["height_range"][0]),
                        float(entry["height_range"][1]),
                    ),
                )
            )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SceneFormatError(f"malformed scene document: {exc}") from exc
    scene = Scene(
        scene_id=str(doc["scene_id"]),
        width=quantize(width),
        height=quantize(height),
        cell_size=quantize(cell),
        seed=int(doc["seed"]),
        occupancy=occupancy,
        objects=objects,
        vocabulary=vocabulary or DEFAULT_VOCABULARY,
    )
    validate_scene(scene)
    return scene


def save_scene(scene: Scene, sink: str | IO[str]) -> None:
    """Write the scene as canonical UTF-8 JSON (one document, 6-digit floats)."""
    text = json.dumps(scene_to_dict(scene), separators=(",", ":"), sort_keys=False)
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sink.write(text + "\n")


def load_scene(
    source: str | IO[str], vocabulary: CategoryVocabulary | None = None
) -> Scene:
    """Parse and validate a scene document; raises SceneFormatError with the
    parse position on malformed JSON, SceneValidationError on invariant breaks."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise SceneFormatError("scene document must be a JSON object")
    return scene_from_dict(doc, vocabulary)


def scene_digest(scene: Scene) -> str:
    buf = io.StringIO()
    save_scene(scene, buf)
    return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()
