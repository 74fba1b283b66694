"""Shared fixtures: hand-built fixture scenes and cached generated worlds."""
from __future__ import annotations

import math

import numpy as np
import pytest

from objnav.episodes import HABITAT_PROFILE, generate_episodes
from objnav.scene import (
    ObjectInstance,
    OrientedBox,
    Scene,
    SceneGenParams,
    footprint_cells,
    generate_scene,
)


def make_room_scene(
    width: float = 10.0,
    height: float = 10.0,
    cell: float = 0.05,
    objects: tuple[ObjectInstance, ...] = (),
    scene_id: str = "fixture",
    extra_walls: tuple[tuple[float, float, float, float], ...] = (),
) -> Scene:
    """Empty closed room with optional objects and axis-aligned wall slabs.

    `extra_walls` entries are (x0, y0, x1, y1) rectangles in meters.
    """
    rows, cols = round(height / cell), round(width / cell)
    occ = np.zeros((rows, cols), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    scene = Scene(
        scene_id=scene_id,
        width=cols * cell,
        height=rows * cell,
        cell_size=cell,
        seed=0,
        occupancy=occ,
        objects=list(objects),
    )
    for x0, y0, x1, y1 in extra_walls:
        j0, j1 = max(0, round(x0 / cell)), min(cols, round(x1 / cell))
        i0, i1 = max(0, round(y0 / cell)), min(rows, round(y1 / cell))
        occ[i0:i1, j0:j1] = True
    for obj in objects:
        ii, jj = footprint_cells(scene, obj.obb)
        occ[ii, jj] = True
    scene._instance_index = None
    scene._occ_rows = None
    return scene


def box_instance(
    cx: float,
    cy: float,
    ex: float = 0.5,
    ey: float = 0.5,
    yaw: float = 0.0,
    z0: float = 0.0,
    z1: float = 0.8,
    instance_id: str = "sofa_0",
    category: str = "sofa",
) -> ObjectInstance:
    return ObjectInstance(
        instance_id=instance_id,
        category=category,
        obb=OrientedBox((cx, cy), (ex, ey), yaw),
        height_range=(z0, z1),
    )


@pytest.fixture(scope="session")
def cluttered_scene() -> Scene:
    return generate_scene(
        SceneGenParams(
            width=20.0,
            height=20.0,
            room_count=4,
            objects_per_category_range=(1, 2),
            cell_size=0.05,
            seed=1,
        )
    )


@pytest.fixture(scope="session")
def small_scene() -> Scene:
    return generate_scene(
        SceneGenParams(
            width=12.0,
            height=12.0,
            room_count=2,
            objects_per_category_range=(0, 1),
            cell_size=0.05,
            seed=5,
        )
    )


@pytest.fixture(scope="session")
def small_episodes(small_scene):
    return generate_episodes([small_scene], 8, HABITAT_PROFILE, seed=11)
