"""Success-zone geometry: where can an agent stand and see a goal object?

Two visibility notions are implemented. `oracle_visible` asks whether an
ideal in-place camera reorientation (any heading, any pitch within limits)
could frame at least part of the object; `in_view` asks the same with the
agent's actual heading and pitch. Both approximate "at least one pixel" by
sampling the object's footprint perimeter and testing line-of-sight plus a
vertical field-of-view overlap at each sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import (
    AGENT_HEIGHT,
    HFOV_DEG,
    IMAGE_HEIGHT,
    IMAGE_WIDTH,
    PITCH_LIMIT_DEG,
)
from .nav import NavGrid
from .scene import (
    ObjectInstance,
    OrientedBox,
    Point,
    Scene,
    SceneError,
    distance_to_obb,
    is_navigable,
    quantize,
    segment_visible,
    wrap_angle,
)


@dataclass(frozen=True)
class VisibilityConfig:
    """Camera model used by the visibility predicates."""

    hfov_deg: float = HFOV_DEG
    image_width: int = IMAGE_WIDTH
    image_height: int = IMAGE_HEIGHT
    eye_height: float = AGENT_HEIGHT
    pitch_limit_deg: float = PITCH_LIMIT_DEG
    boundary_samples: int = 64
    # Fraction of perimeter samples that must be visible; 0 keeps the lenient
    # one-sample existence criterion.
    min_visible_fraction: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.hfov_deg < 180.0):
            raise ValueError("hfov must be in (0, 180) degrees")
        if self.boundary_samples < 8:
            raise ValueError("boundary_samples must be >= 8")
        if not (0.0 <= self.min_visible_fraction <= 1.0):
            raise ValueError("min_visible_fraction must be in [0, 1]")

    @property
    def vfov_rad(self) -> float:
        half_h = math.tan(math.radians(self.hfov_deg) / 2.0)
        return 2.0 * math.atan(half_h * self.image_height / self.image_width)

    @property
    def required_samples(self) -> int:
        return max(1, math.ceil(self.min_visible_fraction * self.boundary_samples))


DEFAULT_VISIBILITY = VisibilityConfig()


@dataclass(frozen=True)
class Viewpoint:
    """A success-zone lattice sample for one object instance."""

    position: Point
    instance_id: str
    distance_to_surface: float


def viewpoint_cells(navgrid: NavGrid, viewpoints) -> set[tuple[int, int]]:
    """Free cells representing a viewpoint set on the navigation grid.

    A viewpoint is navigable at its own position, but the center of its cell
    may sit just inside the clearance margin; such viewpoints have no on-grid
    representative and are skipped (geodesic queries target the rest).
    """
    cells: set[tuple[int, int]] = set()
    for vp in viewpoints:
        try:
            cells.add(navgrid.snap_to_free(vp.position))
        except Exception:
            continue
    return cells


def boundary_points(obb: OrientedBox, count: int) -> list[Point]:
    """`count` points uniform by arc length along the box perimeter."""
    ex, ey = obb.half_extents
    sides = [2.0 * ex, 2.0 * ey, 2.0 * ex, 2.0 * ey]
    perimeter = sum(sides)
    points = []
    for k in range(count):
        s = perimeter * k / count
        if s < sides[0]:
            local = (-ex + s, -ey)
        elif s < sides[0] + sides[1]:
            local = (ex, -ey + (s - sides[0]))
        elif s < sides[0] + sides[1] + sides[2]:
            local = (ex - (s - sides[0] - sides[1]), ey)
        else:
            local = (-ex, ey - (s - sides[0] - sides[1] - sides[2]))
        points.append(obb.to_world(local))
    return points


def _vertical_interval_overlaps(
    height_range: tuple[float, float],
    distance: float,
    pitch_lo: float,
    pitch_hi: float,
    cfg: VisibilityConfig,
) -> bool:
    """Does the object's height span intersect the band of heights the camera
    can image at `distance` for some pitch in [pitch_lo, pitch_hi]?"""
    half_v = cfg.vfov_rad / 2.0
    lo_angle = pitch_lo - half_v
    hi_angle = pitch_hi + half_v
    # Guard against degenerate tangents at +-90 degrees.
    lo_angle = max(lo_angle, -math.pi / 2 + 1e-6)
    hi_angle = min(hi_angle, math.pi / 2 - 1e-6)
    z_lo = cfg.eye_height + distance * math.tan(lo_angle)
    z_hi = cfg.eye_height + distance * math.tan(hi_angle)
    z0, z1 = height_range
    return z1 >= z_lo and z0 <= z_hi


def _sample_visible(
    scene: Scene,
    point: Point,
    sample: Point,
    instance: ObjectInstance,
    pitch_lo: float,
    pitch_hi: float,
    cfg: VisibilityConfig,
) -> bool:
    if not segment_visible(scene, point, sample, ignore_instance=instance.instance_id):
        return False
    d = math.hypot(sample[0] - point[0], sample[1] - point[1])
    return _vertical_interval_overlaps(
        instance.height_range, d, pitch_lo, pitch_hi, cfg
    )


def oracle_visible(
    scene: Scene,
    point: Point,
    instance: ObjectInstance,
    cfg: VisibilityConfig = DEFAULT_VISIBILITY,
) -> bool:
    """Could an in-place camera reorientation frame the object from `point`?

    True iff some perimeter sample has an unobstructed sightline (the target's
    own footprint never occludes) and some pitch within limits brings the
    object's height span into the vertical field of view.
    """
    limit = math.radians(cfg.pitch_limit_deg)
    samples = boundary_points(instance.obb, cfg.boundary_samples)
    needed = cfg.required_samples
    seen = 0
    for sample in samples:
        if _sample_visible(scene, point, sample, instance, -limit, limit, cfg):
            seen += 1
            if seen >= needed:
                return True
    return False


def in_view(
    scene: Scene,
    position: Point,
    heading: float,
    pitch: float,
    instance: ObjectInstance,
    cfg: VisibilityConfig = DEFAULT_VISIBILITY,
) -> bool:
    """Is the object inside the agent's current view frustum?

    Like `oracle_visible` but the sightline must fall within the horizontal
    field of view around `heading`, and only the current `pitch` is used for
    the vertical test.
    """
    half_h = math.radians(cfg.hfov_deg) / 2.0
    samples = boundary_points(instance.obb, cfg.boundary_samples)
    needed = cfg.required_samples
    seen = 0
    for sample in samples:
        bearing = math.atan2(sample[1] - position[1], sample[0] - position[0])
        if abs(wrap_angle(bearing - heading)) > half_h:
            continue
        if _sample_visible(scene, position, sample, instance, pitch, pitch, cfg):
            seen += 1
            if seen >= needed:
                return True
    return False


def compute_viewpoints(
    scene: Scene,
    navgrid: NavGrid,
    instance: ObjectInstance,
    r_success: float = 1.0,
    cfg: VisibilityConfig = DEFAULT_VISIBILITY,
) -> list[Viewpoint]:
    """All success-zone lattice samples for one instance.

    The lattice has pitch radius/2, anchored at the scene origin. A point
    qualifies when it lies within `r_success` of the box surface, the agent
    disc fits there, and the object is oracle-visible. An empty result means
    the instance has no reachable success zone and should be excluded from
    episode datasets.
    """
    if r_success <= 0:
        raise SceneError("r_success must be positive")
    pitch = navgrid.radius / 2.0
    xs = [p[0] for p in instance.obb.corners()]
    ys = [p[1] for p in instance.obb.corners()]
    k_lo = max(1, int(math.ceil((min(xs) - r_success) / pitch)))
    k_hi = int(math.floor((max(xs) + r_success) / pitch))
    m_lo = max(1, int(math.ceil((min(ys) - r_success) / pitch)))
    m_hi = int(math.floor((max(ys) + r_success) / pitch))
    out: list[Viewpoint] = []
    for k in range(k_lo, k_hi + 1):
        x = k * pitch
        if x >= scene.width:
            continue
        for m in range(m_lo, m_hi + 1):
            y = m * pitch
            if y >= scene.height:
                continue
            point = (x, y)
            d = distance_to_obb(point, instance.obb)
            if d > r_success:
                continue
            if not is_navigable(scene, point, navgrid.radius):
                continue
            if not oracle_visible(scene, point, instance, cfg):
                continue
            out.append(
                Viewpoint(
                    position=(quantize(x), quantize(y)),
                    instance_id=instance.instance_id,
                    distance_to_surface=quantize(d),
                )
            )
    return out
