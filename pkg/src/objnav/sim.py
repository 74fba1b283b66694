"""Deterministic embodied simulator: six discrete actions, no-sliding
collision response, GPS+Compass and depth-scan sensing.

Every action is exact (no actuation noise), so identical inputs replay to
bit-identical observation sequences. Headings are tracked as an integer
number of turn increments relative to the spawn heading, which makes turn
sequences exactly reversible and twelve 30-degree turns close the circle.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import IO

import numpy as np

from .constants import (
    AGENT_HEIGHT,
    AGENT_RADIUS,
    DEFAULT_MAX_STEPS,
    DEPTH_MAX,
    DEPTH_MIN,
    PITCH_LIMIT_DEG,
    STEP_SIZE,
    TILT_DEG,
    TURN_DEG,
)
from .goalzone import VisibilityConfig, DEFAULT_VISIBILITY
from .scene import Point, Scene, is_navigable, raycast, segment_clear, wrap_angle


class SimulationError(Exception):
    """Raised on invalid episode setup or stepping a finished simulation."""


class Action(enum.Enum):
    MOVE_FORWARD = "move-forward"
    TURN_LEFT = "turn-left"
    TURN_RIGHT = "turn-right"
    LOOK_UP = "look-up"
    LOOK_DOWN = "look-down"
    STOP = "stop"

    @classmethod
    def from_name(cls, name: str) -> "Action":
        for action in cls:
            if action.value == name:
                return action
        raise SimulationError(f"unknown action name {name!r}")


@dataclass(frozen=True)
class AgentConfig:
    """Embodiment parameters for the simulated differential-drive base."""

    radius: float = AGENT_RADIUS
    height: float = AGENT_HEIGHT
    step_size: float = STEP_SIZE
    turn_deg: float = TURN_DEG
    tilt_deg: float = TILT_DEG
    pitch_limit_deg: float = PITCH_LIMIT_DEG
    sliding: bool = False
    # Advance to the contact point instead of refusing blocked forwards.
    partial_advance: bool = False

    def __post_init__(self) -> None:
        if self.step_size <= 0:
            raise SimulationError("step_size must be positive")
        if self.turn_deg <= 0 or abs(360.0 / self.turn_deg - round(360.0 / self.turn_deg)) > 1e-9:
            raise SimulationError("turn_deg must divide 360")
        if self.tilt_deg > 2.0 * self.pitch_limit_deg:
            raise SimulationError("tilt_deg must not exceed the pitch range")

    @property
    def turn_count(self) -> int:
        return round(360.0 / self.turn_deg)


@dataclass(frozen=True)
class AgentState:
    position: Point
    heading: float
    pitch: float
    step_count: int
    last_collided: bool
    stopped: bool


@dataclass(frozen=True)
class Observation:
    """Egocentric sensor packet in the episode (spawn-anchored) frame."""

    gps: Point
    compass: float
    depth: tuple[float, ...]
    collided: bool
    step: int


class Simulator:
    """Single-owner stepper for one episode. Use `reset` to construct."""

    def __init__(
        self,
        scene: Scene,
        start_position: Point,
        start_heading: float,
        agent_cfg: AgentConfig = AgentConfig(),
        sensor_cfg: VisibilityConfig = DEFAULT_VISIBILITY,
        max_steps: int = DEFAULT_MAX_STEPS,
    ) -> None:
        if max_steps < 1:
            raise SimulationError("max_steps must be >= 1")
        if not is_navigable(scene, start_position, agent_cfg.radius):
            raise SimulationError(
                f"start position {start_position} is not navigable at radius "
                f"{agent_cfg.radius} (corrupt episode?)"
            )
        self.scene = scene
        self.agent_cfg = agent_cfg
        self.sensor_cfg = sensor_cfg
        self.max_steps = max_steps
        self._spawn_position = (float(start_position[0]), float(start_position[1]))
        self._spawn_heading = float(start_heading)
        self._turn_rad = math.radians(agent_cfg.turn_deg)
        self._tilt_rad = math.radians(agent_cfg.tilt_deg)
        self._pitch_limit = math.radians(agent_cfg.pitch_limit_deg)
        self.position: Point = self._spawn_position
        self._heading_steps = 0
        self.pitch = 0.0
        self.step_count = 0
        self.last_collided = False
        self.stopped = False
        self.path_length = 0.0
        self.trajectory: list[dict] = []

    # -- pose ---------------------------------------------------------------

    @property
    def heading(self) -> float:
        return wrap_angle(
            self._spawn_heading
            + (self._heading_steps % self.agent_cfg.turn_count) * self._turn_rad
        )

    def state(self) -> AgentState:
        return AgentState(
            position=self.position,
            heading=self.heading,
            pitch=self.pitch,
            step_count=self.step_count,
            last_collided=self.last_collided,
            stopped=self.stopped,
        )

    # -- sensing ------------------------------------------------------------

    def _gps_compass(self) -> tuple[Point, float]:
        dx = self.position[0] - self._spawn_position[0]
        dy = self.position[1] - self._spawn_position[1]
        c = math.cos(self._spawn_heading)
        s = math.sin(self._spawn_heading)
        gps = (c * dx + s * dy, -s * dx + c * dy)
        compass = wrap_angle(self.heading - self._spawn_heading)
        return gps, compass

    def depth_scan(self) -> tuple[float, ...]:
        """Horizontal depth fan: rays across the field of view, clipped to
        [DEPTH_MIN, DEPTH_MAX]; sub-minimum returns read 0."""
        cfg = self.sensor_cfg
        n = max(1, cfg.image_width // 8)
        half = math.radians(cfg.hfov_deg) / 2.0
        heading = self.heading
        angles = np.linspace(heading - half, heading + half, n)
        out = []
        for angle in angles:
            hit = raycast(
                self.scene,
                self.position,
                (math.cos(angle), math.sin(angle)),
                DEPTH_MAX,
            )
            rng = min(hit.range, DEPTH_MAX)
            out.append(0.0 if rng < DEPTH_MIN else rng)
        return tuple(out)

    def observation(self) -> Observation:
        gps, compass = self._gps_compass()
        return Observation(
            gps=gps,
            compass=compass,
            depth=self.depth_scan(),
            collided=self.last_collided,
            step=self.step_count,
        )

    # -- stepping -----------------------------------------------------------

    def step(self, action: Action) -> Observation:
        if self.stopped:
            raise SimulationError("step after STOP")
        if self.step_count >= self.max_steps:
            raise SimulationError("step after budget exhaustion")
        collided = False
        if action is Action.TURN_LEFT:
            self._heading_steps += 1
        elif action is Action.TURN_RIGHT:
            self._heading_steps -= 1
        elif action is Action.LOOK_UP:
            self.pitch = min(self._pitch_limit, self.pitch + self._tilt_rad)
        elif action is Action.LOOK_DOWN:
            self.pitch = max(-self._pitch_limit, self.pitch - self._tilt_rad)
        elif action is Action.MOVE_FORWARD:
            collided = self._move_forward()
        elif action is Action.STOP:
            self.stopped = True
        else:  # pragma: no cover - enum is closed
            raise SimulationError(f"unhandled action {action}")
        self.step_count += 1
        self.last_collided = collided
        self.trajectory.append(
            {
                "step": self.step_count,
                "action": action.value,
                "x": self.position[0],
                "y": self.position[1],
                "heading": self.heading,
                "pitch": self.pitch,
                "collided": collided,
            }
        )
        return self.observation()

    def _move_forward(self) -> bool:
        cfg = self.agent_cfg
        heading = self.heading
        direction = (math.cos(heading), math.sin(heading))
        target = (
            self.position[0] + cfg.step_size * direction[0],
            self.position[1] + cfg.step_size * direction[1],
        )
        if segment_clear(self.scene, self.position, target, cfg.radius):
            self._commit_move(target)
            return False
        if cfg.sliding:
            return self._slide(direction)
        if cfg.partial_advance:
            contact = self._advance_to_contact(self.position, target)
            if contact is not None:
                self._commit_move(contact)
        return True

    def _advance_to_contact(self, start: Point, target: Point) -> Point | None:
        """Largest clear prefix of the move, found by bisection on the sweep."""
        radius = self.agent_cfg.radius
        lo, hi = 0.0, 1.0
        if not segment_clear(self.scene, start, start, radius):
            return None
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            probe = (
                start[0] + mid * (target[0] - start[0]),
                start[1] + mid * (target[1] - start[1]),
            )
            if segment_clear(self.scene, start, probe, radius):
                lo = mid
            else:
                hi = mid
        if lo <= 1e-9:
            return None
        return (
            start[0] + lo * (target[0] - start[0]),
            start[1] + lo * (target[1] - start[1]),
        )

    def _slide(self, direction: Point) -> bool:
        """Project the blocked displacement onto the obstacle tangent and
        re-check (opt-in regression behavior; lets paths hug walls)."""
        cfg = self.agent_cfg
        step = cfg.step_size
        target = (
            self.position[0] + step * direction[0],
            self.position[1] + step * direction[1],
        )
        contact = self._advance_to_contact(self.position, target)
        anchor = contact if contact is not None else self.position
        normal = self._contact_normal(anchor, direction)
        if normal is None:
            if contact is not None:
                self._commit_move(contact)
            return True
        tx, ty = -normal[1], normal[0]
        traveled = math.hypot(anchor[0] - self.position[0], anchor[1] - self.position[1])
        remaining = step - traveled
        slide_len = remaining * (direction[0] * tx + direction[1] * ty)
        slid = (anchor[0] + slide_len * tx, anchor[1] + slide_len * ty)
        if abs(slide_len) > 1e-9 and segment_clear(self.scene, anchor, slid, cfg.radius):
            self._commit_move(slid)
        elif contact is not None:
            self._commit_move(contact)
        return True

    def _contact_normal(self, point: Point, direction: Point) -> Point | None:
        """Outward normal of the nearest obstructed cell square ahead."""
        c = self.scene.cell_size
        probe = (
            point[0] + (self.agent_cfg.radius + c) * direction[0],
            point[1] + (self.agent_cfg.radius + c) * direction[1],
        )
        occ = self.scene.occupancy
        reach = int(math.ceil((self.agent_cfg.radius + 2 * c) / c)) + 1
        i0 = int(probe[1] / c)
        j0 = int(probe[0] / c)
        best = None
        best_dist = math.inf
        for i in range(max(0, i0 - reach), min(self.scene.rows, i0 + reach + 1)):
            for j in range(max(0, j0 - reach), min(self.scene.cols, j0 + reach + 1)):
                if not occ[i, j]:
                    continue
                cx, cy = (j + 0.5) * c, (i + 0.5) * c
                nx = point[0] - min(max(point[0], cx - 0.5 * c), cx + 0.5 * c)
                ny = point[1] - min(max(point[1], cy - 0.5 * c), cy + 0.5 * c)
                d = math.hypot(nx, ny)
                if d < best_dist and d > 1e-12:
                    best_dist = d
                    best = (nx / d, ny / d)
        return best

    def _commit_move(self, target: Point) -> None:
        self.path_length += math.hypot(
            target[0] - self.position[0], target[1] - self.position[1]
        )
        self.position = target

    def path_length_traveled(self) -> float:
        """Sum of Euclidean displacements; turns and tilts contribute nothing."""
        return self.path_length

    def write_trajectory(self, sink: str | IO[str]) -> None:
        """Debug log: one JSON record per executed step."""
        lines = [json.dumps(rec, separators=(",", ":")) for rec in self.trajectory]
        text = "\n".join(lines) + ("\n" if lines else "")
        if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
            with open(sink, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sink.write(text)


def reset(
    scene: Scene,
    episode,
    agent_cfg: AgentConfig = AgentConfig(),
    sensor_cfg: VisibilityConfig = DEFAULT_VISIBILITY,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> tuple[Simulator, Observation]:
    """Place the agent at the episode start pose and emit the first observation.

    The spawn pose anchors the episode frame: the first observation always
    reads gps=(0, 0), compass=0, step=0.
    """
    if episode.scene_id != scene.scene_id:
        raise SimulationError(
            f"episode references scene {episode.scene_id!r}, got {scene.scene_id!r}"
        )
    sim = Simulator(
        scene,
        start_position=episode.start_position,
        start_heading=episode.start_heading,
        agent_cfg=agent_cfg,
        sensor_cfg=sensor_cfg,
        max_steps=max_steps,
    )
    return sim, sim.observation()
