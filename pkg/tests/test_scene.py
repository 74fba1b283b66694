"""Scene generation, geometric queries, and serialization."""
from __future__ import annotations

import io
import json
import math
import random
from collections import deque

import numpy as np
import pytest

from objnav.nav import build_navgrid
from objnav.scene import (
    MP3D_CATEGORIES,
    ObjectInstance,
    OrientedBox,
    Scene,
    SceneFormatError,
    SceneGenParams,
    SceneGenerationError,
    SceneValidationError,
    distance_to_obb,
    footprint_cells,
    generate_scene,
    is_navigable,
    load_scene,
    point_to_cell_distance,
    raycast,
    save_scene,
    scene_digest,
    validate_scene,
)

from conftest import box_instance, make_room_scene


# ---------------------------------------------------------------------------
# Generation


def test_vocabulary_is_the_canonical_21():
    assert len(MP3D_CATEGORIES) == 21
    assert MP3D_CATEGORIES[0] == "chair"
    assert MP3D_CATEGORIES[-1] == "clothes"
    assert len(set(MP3D_CATEGORIES)) == 21


def test_empty_single_room_has_only_boundary_obstructed():
    scene = generate_scene(
        SceneGenParams(
            width=10.0, height=10.0, room_count=1,
            objects_per_category_range=(0, 0), cell_size=0.05, seed=7,
        )
    )
    boundary = 2 * scene.rows + 2 * scene.cols - 4
    assert int(scene.occupancy.sum()) == boundary
    assert not scene.objects


def test_generation_is_deterministic_byte_identical():
    params = SceneGenParams(
        width=10.0, height=10.0, room_count=2,
        objects_per_category_range=(0, 1), cell_size=0.05, seed=7,
    )
    assert scene_digest(generate_scene(params)) == scene_digest(generate_scene(params))


def test_generated_scene_free_space_is_one_component(cluttered_scene):
    # Flood-fill oracle over the clearance-inflated grid (pure-python BFS).
    grid = build_navgrid(cluttered_scene, 0.18)
    free = grid.free
    start = tuple(np.argwhere(free)[0])
    seen = {start}
    queue = deque([start])
    while queue:
        i, j = queue.popleft()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = i + di, j + dj
            if free[ni, nj] and (ni, nj) not in seen:
                seen.add((ni, nj))
                queue.append((ni, nj))
    assert len(seen) == int(free.sum())


def test_generated_objects_do_not_overlap(cluttered_scene):
    covered = np.zeros_like(cluttered_scene.occupancy, dtype=int)
    for obj in cluttered_scene.objects:
        ii, jj = footprint_cells(cluttered_scene, obj.obb)
        covered[ii, jj] += 1
    assert covered.max() == 1
    validate_scene(cluttered_scene)


def test_generation_error_names_unplaceable_category():
    params = SceneGenParams(
        width=6.0, height=6.0, room_count=1,
        objects_per_category_range=(1, 1), cell_size=0.05, seed=0,
        dimensions={"picture": (2.8, 2.8, 1.2, 1.8)},
    )
    with pytest.raises(SceneGenerationError, match="picture"):
        generate_scene(params)


def test_generation_rejects_bad_params():
    with pytest.raises(SceneGenerationError):
        generate_scene(SceneGenParams(width=2.0, height=10.0))
    with pytest.raises(SceneGenerationError):
        generate_scene(SceneGenParams(cell_size=0.3))
    with pytest.raises(SceneGenerationError):
        generate_scene(SceneGenParams(room_count=0))


# ---------------------------------------------------------------------------
# Navigability


def test_is_navigable_center_of_empty_room():
    scene = make_room_scene()
    assert is_navigable(scene, (5.0, 5.0), 0.18)


def test_is_navigable_near_wall_false():
    scene = make_room_scene()
    # 0.10 m from the left wall face (wall face at x = 0.05).
    assert not is_navigable(scene, (0.15, 5.0), 0.18)


def test_is_navigable_out_of_bounds_errors():
    scene = make_room_scene()
    with pytest.raises(Exception):
        is_navigable(scene, (-1.0, 5.0), 0.18)


def _navigable_oracle(scene: Scene, point, radius: float) -> bool:
    # Exhaustive scan of every cell with the same point-to-square distance.
    for i in range(scene.rows):
        for j in range(scene.cols):
            if not scene.occupancy[i, j]:
                continue
            if point_to_cell_distance(point, (i, j), scene.cell_size) < radius:
                return False
    return True


def test_is_navigable_matches_exhaustive_cell_oracle(small_scene):
    rng = random.Random(42)
    coarse = Scene(
        scene_id="coarse",
        width=small_scene.width,
        height=small_scene.height,
        cell_size=small_scene.cell_size,
        seed=0,
        occupancy=small_scene.occupancy,
        objects=small_scene.objects,
    )
    for _ in range(1000):
        point = (
            rng.uniform(0.0, small_scene.width - 1e-9),
            rng.uniform(0.0, small_scene.height - 1e-9),
        )
        radius = rng.uniform(0.05, 0.5)
        assert is_navigable(small_scene, point, radius) == _navigable_oracle(
            coarse, point, radius
        )


# ---------------------------------------------------------------------------
# Distance to oriented boxes


def test_distance_inside_box_is_zero():
    obb = OrientedBox((2.0, 3.0), (1.0, 0.5), 0.7)
    assert distance_to_obb((2.0, 3.0), obb) == 0.0


def test_distance_axis_aligned_face():
    obb = OrientedBox((0.0, 0.0), (1.0, 0.5), 0.0)
    assert distance_to_obb((3.0, 0.0), obb) == pytest.approx(2.0, abs=1e-12)


def test_distance_matches_dense_boundary_sampling():
    obb = OrientedBox((1.0, 2.0), (0.8, 0.4), math.radians(30.0))
    point = (3.1, 3.4)
    # Oracle: minimum distance to 1e5 perimeter samples.
    n = 100_000
    ex, ey = obb.half_extents
    perimeter = 4 * (ex + ey)
    best = math.inf
    for k in range(n):
        s = perimeter * k / n
        if s < 2 * ex:
            local = (-ex + s, -ey)
        elif s < 2 * ex + 2 * ey:
            local = (ex, -ey + (s - 2 * ex))
        elif s < 4 * ex + 2 * ey:
            local = (ex - (s - 2 * ex - 2 * ey), ey)
        else:
            local = (-ex, ey - (s - 4 * ex - 2 * ey))
        wx, wy = obb.to_world(local)
        best = min(best, math.hypot(point[0] - wx, point[1] - wy))
    assert distance_to_obb(point, obb) == pytest.approx(best, abs=1e-3)


def test_distance_invariant_under_rigid_transform():
    rng = random.Random(3)
    for _ in range(200):
        center = (rng.uniform(-5, 5), rng.uniform(-5, 5))
        half = (rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0))
        yaw = rng.uniform(0, 2 * math.pi)
        point = (rng.uniform(-8, 8), rng.uniform(-8, 8))
        base = distance_to_obb(point, OrientedBox(center, half, yaw))
        # Apply a random rigid transform to both the point and the box.
        phi = rng.uniform(0, 2 * math.pi)
        tx, ty = rng.uniform(-3, 3), rng.uniform(-3, 3)
        c, s = math.cos(phi), math.sin(phi)

        def xform(p):
            return (c * p[0] - s * p[1] + tx, s * p[0] + c * p[1] + ty)

        moved = distance_to_obb(
            xform(point), OrientedBox(xform(center), half, yaw + phi)
        )
        assert abs(moved - base) < 1e-9


# ---------------------------------------------------------------------------
# Raycasting


def test_raycast_hits_wall_at_expected_range():
    scene = make_room_scene()
    hit = raycast(scene, (5.0, 5.0), (1.0, 0.0), 10.0)
    assert hit.hit
    # Wall face at x = 9.95 (inner edge of the boundary cell).
    assert hit.range == pytest.approx(4.95, abs=scene.cell_size)
    assert hit.hit_instance is None


def test_raycast_clips_at_max_range():
    scene = make_room_scene()
    hit = raycast(scene, (5.0, 5.0), (1.0, 0.0), 1.0)
    assert not hit.hit
    assert hit.range == 1.0


def test_raycast_reports_instance():
    obj = box_instance(7.0, 5.0, 0.5, 0.5)
    scene = make_room_scene(objects=(obj,))
    hit = raycast(scene, (5.0, 5.0), (1.0, 0.0), 10.0)
    assert hit.hit and hit.hit_instance == "sofa_0"
    assert hit.range == pytest.approx(1.5, abs=scene.cell_size)


def test_raycast_origin_in_obstructed_cell_hits_at_zero():
    obj = box_instance(7.0, 5.0, 0.5, 0.5)
    scene = make_room_scene(objects=(obj,))
    hit = raycast(scene, (7.0, 5.0), (1.0, 0.0), 10.0)
    assert hit.hit and hit.range == 0.0 and hit.hit_instance == "sofa_0"


def test_raycast_requires_unit_direction():
    scene = make_room_scene()
    with pytest.raises(Exception):
        raycast(scene, (5.0, 5.0), (2.0, 0.0), 10.0)


def _raycast_stepping_oracle(scene: Scene, origin, direction, max_range: float) -> float:
    # Fine line stepping at cell/10 granularity.
    step = scene.cell_size / 10.0
    t = 0.0
    while t <= max_range:
        x = origin[0] + t * direction[0]
        y = origin[1] + t * direction[1]
        if not scene.in_bounds((x, y)):
            return max_range
        i, j = scene.cell_of((x, y))
        if scene.occupancy[i, j]:
            return t
        t += step
    return max_range


def _raycast_slab_oracle(scene: Scene, origin, direction, max_range: float) -> float:
    # Exact alternative traversal: clip the ray against every obstructed cell's
    # square (slab intervals) and take the earliest non-empty entry.
    c = scene.cell_size
    best = max_range
    ii, jj = np.nonzero(scene.occupancy)
    for i, j in zip(ii, jj):
        t_lo, t_hi = 0.0, max_range
        ok = True
        for axis, (o, d) in enumerate(zip(origin, direction)):
            lo = (j * c, (j + 1) * c) if axis == 0 else (i * c, (i + 1) * c)
            if d == 0.0:
                if not (lo[0] <= o <= lo[1]):
                    ok = False
                    break
                continue
            t0 = (lo[0] - o) / d
            t1 = (lo[1] - o) / d
            if t0 > t1:
                t0, t1 = t1, t0
            t_lo, t_hi = max(t_lo, t0), min(t_hi, t1)
        if ok and t_lo < t_hi:
            best = min(best, max(t_lo, 0.0))
    return best


def test_raycast_matches_exact_slab_oracle(small_scene):
    origin = (6.07, 6.13)
    assert is_navigable(small_scene, origin, 0.05)
    for k in range(360):
        angle = math.radians(k)
        direction = (math.cos(angle), math.sin(angle))
        hit = raycast(small_scene, origin, direction, 6.0)
        expected = _raycast_slab_oracle(small_scene, origin, direction, 6.0)
        assert abs(hit.range - expected) <= 1e-9, f"ray {k} deg"
        # A sampling walk can only report the hit at or after the true entry.
        stepped = _raycast_stepping_oracle(small_scene, origin, direction, 6.0)
        assert stepped >= hit.range - 1e-9, f"ray {k} deg"


def test_raycast_matches_line_stepping_oracle_on_flat_walls():
    # Against solid flat walls a cell/10 stepping walk cannot miss the wall,
    # so the two traversals must agree to within a cell.
    scene = make_room_scene()
    origin = (5.02, 4.97)
    for k in range(360):
        angle = math.radians(k)
        direction = (math.cos(angle), math.sin(angle))
        hit = raycast(scene, origin, direction, 8.0)
        expected = _raycast_stepping_oracle(scene, origin, direction, 8.0)
        assert abs(hit.range - expected) <= scene.cell_size, f"ray {k} deg"


def test_raycast_monotone_as_obstacles_added():
    base = make_room_scene()
    blocked = make_room_scene(objects=(box_instance(7.0, 5.0, 0.3, 0.3),))
    origin = (5.0, 5.0)
    for k in range(0, 360, 5):
        angle = math.radians(k)
        direction = (math.cos(angle), math.sin(angle))
        r_base = raycast(base, origin, direction, 8.0).range
        r_blocked = raycast(blocked, origin, direction, 8.0).range
        assert r_blocked <= r_base + 1e-12


# ---------------------------------------------------------------------------
# Serialization


def test_save_load_round_trip(cluttered_scene):
    buf = io.StringIO()
    save_scene(cluttered_scene, buf)
    loaded = load_scene(io.StringIO(buf.getvalue()))
    assert loaded == cluttered_scene


def test_round_trip_preserves_bytes(small_scene, tmp_path):
    path1 = tmp_path / "a.json"
    path2 = tmp_path / "b.json"
    save_scene(small_scene, path1)
    save_scene(load_scene(path1), path2)
    assert path1.read_bytes() == path2.read_bytes()


def test_zero_half_extent_rejected():
    with pytest.raises(SceneValidationError, match="half_extents"):
        ObjectInstance(
            instance_id="sofa_0",
            category="sofa",
            obb=OrientedBox((1.0, 1.0), (0.0, 0.5), 0.0),
            height_range=(0.0, 0.8),
        )


def test_loading_document_with_zero_extent_fails(small_scene):
    buf = io.StringIO()
    save_scene(small_scene, buf)
    doc = json.loads(buf.getvalue())
    doc["objects"].append(
        {
            "instance_id": "bad",
            "category": "sofa",
            "center": [5.0, 5.0],
            "half_extents": [0.0, 0.5],
            "yaw": 0.0,
            "height_range": [0.0, 0.8],
        }
    )
    with pytest.raises((SceneValidationError, SceneFormatError)):
        load_scene(io.StringIO(json.dumps(doc)))


def test_malformed_json_reports_position():
    with pytest.raises(SceneFormatError, match="line"):
        load_scene(io.StringIO('{"schema_version": "1", nope}'))


def test_handwritten_minimal_scene_loads():
    # 4x4 m at 0.1 m cells: 40x40 grid, boundary ring plus one chair at center.
    rows = cols = 40
    cell = 0.1
    occ = np.zeros((rows, cols), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    chair = {
        "instance_id": "chair_0",
        "category": "chair",
        "center": [2.0, 2.0],
        "half_extents": [0.25, 0.25],
        "yaw": 0.0,
        "height_range": [0.0, 0.9],
    }
    # Obstruct every cell the chair's box touches (conservative rasterization).
    for i in range(rows):
        for j in range(cols):
            cx, cy = (j + 0.5) * cell, (i + 0.5) * cell
            if max(abs(cx - 2.0) - 0.25, 0.0) < cell / 2 + 1e-12 and max(
                abs(cy - 2.0) - 0.25, 0.0
            ) < cell / 2 + 1e-12:
                occ[i, j] = True
    import base64

    doc = {
        "schema_version": "1",
        "scene_id": "hand",
        "width": 4.0,
        "height": 4.0,
        "cell_size": 0.1,
        "seed": 0,
        "occupancy": base64.b64encode(
            np.packbits(occ.reshape(-1), bitorder="little").tobytes()
        ).decode("ascii"),
        "objects": [chair],
    }
    scene = load_scene(io.StringIO(json.dumps(doc)))
    assert scene.scene_id == "hand"
    assert scene.objects[0].category == "chair"
    assert is_navigable(scene, (0.8, 0.8), 0.18)
    assert not is_navigable(scene, (2.0, 2.0), 0.18)


def test_boundary_invariant_enforced(small_scene):
    occ = small_scene.occupancy.copy()
    occ[0, 5] = False
    broken = Scene(
        scene_id="broken",
        width=small_scene.width,
        height=small_scene.height,
        cell_size=small_scene.cell_size,
        seed=0,
        occupancy=occ,
        objects=[],
    )
    with pytest.raises(SceneValidationError, match="boundary"):
        validate_scene(broken)
