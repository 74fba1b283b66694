"""Clearance grids, geodesic fields, string-pulled paths, action counting."""
from __future__ import annotations

import heapq
import math
import random

import numpy as np
import pytest

from objnav.nav import (
    NavigationError,
    action_path_length,
    build_navgrid,
    geodesic_distance,
    geodesic_field,
    polyline_length,
    shortest_path,
)
from objnav.scene import Scene, is_navigable, segment_min_clearance

from conftest import box_instance, make_room_scene

SQRT2 = math.sqrt(2.0)


def _grid_scene(free: np.ndarray, cell: float = 0.05) -> Scene:
    """Wrap a free-space mask (True = walkable) in a Scene for graph tests."""
    occ = ~np.asarray(free, dtype=bool)
    rows, cols = occ.shape
    return Scene(
        scene_id="grid",
        width=cols * cell,
        height=rows * cell,
        cell_size=cell,
        seed=0,
        occupancy=occ,
        objects=[],
    )


def _bellman_ford(
    free: np.ndarray, sources: list[tuple[int, int]], cell: float
) -> np.ndarray:
    """Brute-force relaxation over the same 8-connected no-corner-cut graph."""
    rows, cols = free.shape
    dist = np.full((rows, cols), math.inf)
    for i, j in sources:
        dist[i, j] = 0.0
    diag = cell * SQRT2
    moves = [
        (0, 1, cell), (0, -1, cell), (1, 0, cell), (-1, 0, cell),
        (1, 1, diag), (1, -1, diag), (-1, 1, diag), (-1, -1, diag),
    ]
    changed = True
    while changed:
        changed = False
        for i in range(rows):
            for j in range(cols):
                if not free[i, j] or not math.isfinite(dist[i, j]):
                    continue
                for di, dj, w in moves:
                    ni, nj = i + di, j + dj
                    if not (0 <= ni < rows and 0 <= nj < cols) or not free[ni, nj]:
                        continue
                    if di != 0 and dj != 0:
                        if not (free[i, nj] and free[ni, j]):
                            continue
                    cand = dist[i, j] + w
                    if cand < dist[ni, nj]:
                        dist[ni, nj] = cand
                        changed = True
    return dist


def _astar(free: np.ndarray, start, goal, cell: float) -> float:
    rows, cols = free.shape
    diag = cell * SQRT2

    def h(a):
        dx, dy = abs(a[0] - goal[0]), abs(a[1] - goal[1])
        return cell * (dx + dy) + (diag - 2 * cell) * min(dx, dy)

    heap = [(h(start), 0.0, start)]
    best = {start: 0.0}
    while heap:
        _, g, node = heapq.heappop(heap)
        if node == goal:
            return g
        if g > best.get(node, math.inf):
            continue
        i, j = node
        for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)):
            ni, nj = i + di, j + dj
            if not (0 <= ni < rows and 0 <= nj < cols) or not free[ni, nj]:
                continue
            if di != 0 and dj != 0 and not (free[i, nj] and free[ni, j]):
                continue
            w = diag if di != 0 and dj != 0 else cell
            cand = g + w
            if cand < best.get((ni, nj), math.inf):
                best[(ni, nj)] = cand
                heapq.heappush(heap, (cand + h((ni, nj)), cand, (ni, nj)))
    return math.inf


# ---------------------------------------------------------------------------
# NavGrid


def test_navgrid_margin_in_empty_room():
    scene = make_room_scene()
    grid = build_navgrid(scene, 0.18)
    # Free region should start roughly 0.18 m from the walls (+- one cell).
    free_cols = np.nonzero(grid.free[grid.shape[0] // 2])[0]
    first_free_x = (free_cols[0] + 0.5) * scene.cell_size
    wall_face = scene.cell_size  # inner face of the 1-cell boundary ring
    assert abs((first_free_x - wall_face) - 0.18) <= scene.cell_size


def test_navgrid_radius_too_large_errors():
    scene = make_room_scene()
    with pytest.raises(NavigationError):
        build_navgrid(scene, 6.0)


def test_navgrid_matches_point_navigability(small_scene):
    grid = build_navgrid(small_scene, 0.18)
    for i in range(0, small_scene.rows, 3):
        for j in range(0, small_scene.cols, 3):
            center = small_scene.cell_center((i, j))
            if not small_scene.in_bounds(center):
                continue
            assert grid.free[i, j] == is_navigable(small_scene, center, 0.18), (i, j)


# ---------------------------------------------------------------------------
# Geodesic fields


def test_field_straight_corridor():
    free = np.zeros((5, 15), dtype=bool)
    free[2, 2:13] = True
    scene = _grid_scene(free)
    grid = build_navgrid(scene, 0.01)
    fld = geodesic_field(grid, {(2, 2)})
    assert fld.value_at_cell((2, 12)) == pytest.approx(10 * 0.05, abs=1e-12)


def test_field_diagonal_metric():
    free = np.zeros((10, 10), dtype=bool)
    free[1:9, 1:9] = True
    scene = _grid_scene(free)
    grid = build_navgrid(scene, 0.01)
    fld = geodesic_field(grid, {(2, 2)})
    assert fld.value_at_cell((5, 5)) == pytest.approx(3 * SQRT2 * 0.05, rel=1e-12)


def test_field_zero_on_sources_nonnegative_everywhere(small_scene):
    grid = build_navgrid(small_scene, 0.18)
    cells = [tuple(c) for c in np.argwhere(grid.free)[::500]]
    fld = geodesic_field(grid, set(cells[:3]))
    for cell in cells[:3]:
        assert fld.value_at_cell(cell) == 0.0
    finite = fld.dist[np.isfinite(fld.dist)]
    assert (finite >= 0.0).all()


def test_field_neighbors_differ_by_at_most_edge_cost(small_scene):
    grid = build_navgrid(small_scene, 0.18)
    source = tuple(np.argwhere(grid.free)[0])
    fld = geodesic_field(grid, {source})
    d = fld.dist
    free = grid.free
    inner = free[1:-1, 1:-1] & np.isfinite(d[1:-1, 1:-1])
    for di, dj, w in ((0, 1, 0.05), (1, 0, 0.05)):
        nb = free[1 + di : d.shape[0] - 1 + di, 1 + dj : d.shape[1] - 1 + dj]
        mask = inner & nb
        gap = np.abs(
            d[1:-1, 1:-1][mask]
            - d[1 + di : d.shape[0] - 1 + di, 1 + dj : d.shape[1] - 1 + dj][mask]
        )
        assert (gap <= w + 1e-9).all()


def test_dijkstra_equals_bellman_ford_exactly():
    rng = random.Random(1234)
    for trial in range(30):
        rows = rng.randint(5, 25)
        cols = rng.randint(5, 25)
        free = np.array(
            [[rng.random() > 0.35 for _ in range(cols)] for _ in range(rows)]
        )
        free[0, :] = free[-1, :] = free[:, 0] = free[:, -1] = False
        if not free.any():
            continue
        cells = np.argwhere(free)
        sources = [tuple(cells[rng.randrange(len(cells))]) for _ in range(rng.randint(1, 3))]
        scene = _grid_scene(free)
        grid = build_navgrid(scene, 0.01)
        # Tiny clearance keeps the walkable mask identical to `free`.
        assert np.array_equal(grid.free, free)
        fld = geodesic_field(grid, set(sources))
        oracle = _bellman_ford(free, sources, scene.cell_size)
        assert np.array_equal(fld.dist[free], oracle[free]), f"trial {trial}"


def test_unreachable_cells_are_infinite():
    free = np.zeros((7, 7), dtype=bool)
    free[1:3, 1:3] = True
    free[4:6, 4:6] = True
    scene = _grid_scene(free)
    grid = build_navgrid(scene, 0.01)
    fld = geodesic_field(grid, {(1, 1)})
    assert math.isinf(fld.value_at_cell((5, 5)))


def test_geodesic_field_rejects_blocked_or_empty_goals(small_scene):
    grid = build_navgrid(small_scene, 0.18)
    with pytest.raises(NavigationError):
        geodesic_field(grid, set())
    with pytest.raises(NavigationError):
        geodesic_field(grid, {(0, 0)})


# ---------------------------------------------------------------------------
# geodesic_distance


def test_geodesic_distance_to_self_is_zero():
    scene = make_room_scene()
    grid = build_navgrid(scene, 0.18)
    assert geodesic_distance(grid, (5.0, 5.0), [(5.0, 5.0)]) == 0.0


def test_geodesic_distance_close_to_astar():
    scene = make_room_scene()
    grid = build_navgrid(scene, 0.18)
    start, goal = (1.0, 1.0), (4.0, 5.0)
    d = geodesic_distance(grid, start, [goal])
    oracle = _astar(
        grid.free, grid.cell_of(start), grid.cell_of(goal), scene.cell_size
    )
    assert abs(d - oracle) <= scene.cell_size * SQRT2


def test_geodesic_exceeds_euclidean_behind_wall():
    scene = make_room_scene(extra_walls=((4.0, 0.0, 4.1, 7.0),))
    grid = build_navgrid(scene, 0.18)
    start, goal = (2.0, 2.0), (6.0, 2.0)
    d = geodesic_distance(grid, start, [goal])
    euclid = math.hypot(goal[0] - start[0], goal[1] - start[1])
    assert d > euclid + 1.0


def test_geodesic_distance_requires_navigable_origin():
    scene = make_room_scene()
    grid = build_navgrid(scene, 0.18)
    with pytest.raises(NavigationError):
        geodesic_distance(grid, (0.07, 0.07), [(5.0, 5.0)])
    with pytest.raises(NavigationError):
        geodesic_distance(grid, (5.0, 5.0), [])


def test_geodesic_at_least_euclidean_random_pairs(small_scene):
    grid = build_navgrid(small_scene, 0.18)
    cells = np.argwhere(grid.free)
    rng = random.Random(7)
    picks = [tuple(cells[rng.randrange(len(cells))]) for _ in range(40)]
    fld = geodesic_field(grid, {picks[0]})
    src = grid.cell_center(picks[0])
    for cell in picks[1:]:
        d = fld.value_at_cell(cell)
        if not math.isfinite(d):
            continue
        p = grid.cell_center(cell)
        assert d >= math.hypot(p[0] - src[0], p[1] - src[1]) - 1e-9


def test_triangle_inequality_with_discretization_slack(small_scene):
    grid = build_navgrid(small_scene, 0.18)
    cells = np.argwhere(grid.free)
    rng = random.Random(13)
    goals = {tuple(cells[rng.randrange(len(cells))]) for _ in range(3)}
    fld = geodesic_field(grid, goals)
    slack = 2 * grid.cell_size * SQRT2
    checked = 0
    for _ in range(12):
        b = tuple(cells[rng.randrange(len(cells))])
        via_b = geodesic_field(grid, {b})
        db = fld.value_at_cell(b)
        for _ in range(50):
            a = tuple(cells[rng.randrange(len(cells))])
            da = fld.value_at_cell(a)
            dab = via_b.value_at_cell(a)
            if all(map(math.isfinite, (da, db, dab))):
                assert da <= dab + db + slack
                checked += 1
    assert checked >= 100


# ---------------------------------------------------------------------------
# shortest_path


def test_path_from_point_to_itself_is_single_vertex():
    scene = make_room_scene()
    grid = build_navgrid(scene, 0.18)
    path = shortest_path(grid, (5.0, 5.0), [(5.0, 5.0)])
    assert len(path) == 1
    assert polyline_length(path) == 0.0


def test_open_room_pulls_to_straight_segment():
    scene = make_room_scene()
    grid = build_navgrid(scene, 0.18)
    path = shortest_path(grid, (2.0, 2.0), [(8.0, 7.0)])
    assert len(path) == 2


def test_l_corridor_hugs_corner_with_clearance():
    # Vertical slab splits the room; passage at the top.
    scene = make_room_scene(extra_walls=((4.5, 0.0, 4.7, 7.5),))
    grid = build_navgrid(scene, 0.18)
    path = shortest_path(grid, (2.0, 2.0), [(7.5, 2.0)])
    assert 3 <= len(path) <= 5
    for a, b in zip(path, path[1:]):
        clearance = segment_min_clearance(scene, a, b, grid.radius + scene.cell_size)
        assert clearance >= grid.radius - scene.cell_size / 2
    assert polyline_length(path) >= math.hypot(5.5, 0.0)


def test_pulled_path_between_euclidean_and_chain_length(small_scene):
    grid = build_navgrid(small_scene, 0.18)
    cells = np.argwhere(grid.free)
    rng = random.Random(5)
    for _ in range(10):
        a = grid.cell_center(tuple(cells[rng.randrange(len(cells))]))
        b = grid.cell_center(tuple(cells[rng.randrange(len(cells))]))
        try:
            path = shortest_path(grid, a, b and [b])
        except NavigationError:
            continue
        pulled = polyline_length(path)
        euclid = math.hypot(b[0] - a[0], b[1] - a[1])
        field_len = geodesic_distance(grid, a, [b])
        assert pulled <= field_len + 1e-9
        assert pulled >= euclid - 1e-9
        for p, q in zip(path, path[1:]):
            clearance = segment_min_clearance(
                small_scene, p, q, grid.radius + small_scene.cell_size
            )
            assert clearance >= grid.radius - small_scene.cell_size / 2


def test_unreachable_target_errors():
    scene = make_room_scene(extra_walls=((4.5, 0.0, 4.7, 10.0),))
    grid = build_navgrid(scene, 0.18)
    with pytest.raises(NavigationError):
        shortest_path(grid, (2.0, 2.0), [(7.5, 2.0)])


# ---------------------------------------------------------------------------
# action_path_length


def test_single_point_counts_only_stop():
    assert action_path_length([(1.0, 1.0)]) == 1


def test_straight_aligned_segment():
    # 2.5 m at 0.25 m steps, already aligned: 10 forwards + STOP.
    assert action_path_length([(0.0, 0.0), (2.5, 0.0)], initial_heading=0.0) == 11


def test_right_angle_turn_counts():
    # 1 m forward, 90 deg left, 1 m forward: 4 + 3 + 4 + STOP = 12.
    path = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]
    assert action_path_length(path, initial_heading=0.0) == 12


def test_initial_turn_counted():
    # Facing 180 deg away: 6 turns + 4 forwards + STOP.
    path = [(0.0, 0.0), (1.0, 0.0)]
    assert action_path_length(path, initial_heading=math.pi) == 11


def test_heading_wrap_uses_shorter_direction():
    # -150 deg from +x heading wraps to 150 deg the other way: 5 turns.
    path = [(0.0, 0.0), (math.cos(math.radians(-150)), math.sin(math.radians(-150)))]
    assert action_path_length(path, initial_heading=0.0) == 1 + 5 + 4


def test_collinear_subdivision_invariance():
    rng = random.Random(99)
    for _ in range(50):
        a = (rng.uniform(-5, 5), rng.uniform(-5, 5))
        b = (rng.uniform(-5, 5), rng.uniform(-5, 5))
        whole = action_path_length([a, b], initial_heading=0.3)
        t = rng.uniform(0.2, 0.8)
        mid = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
        split = action_path_length([a, mid, b], initial_heading=0.3)
        assert whole == split
