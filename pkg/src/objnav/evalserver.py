"""Evaluation drivers: an in-process episode runner plus baseline agents.

Agents implement `reset(goal_category)` and `act(observation) -> Action`. A
per-episode policy factory `(scene, episode) -> agent` is also accepted, which
is how the privileged shortest-path follower gets its geodesic field.
"""
from __future__ import annotations

import math
import random
from typing import Callable, Mapping, Protocol, Sequence

from .episodes import Episode
from .goalzone import DEFAULT_VISIBILITY, VisibilityConfig, viewpoint_cells
from .metrics import (
    EvalConfig,
    EpisodeResult,
    MetricsReport,
    aggregate,
    evaluate_success,
    final_geodesic_to_zone,
    make_result,
)
from .nav import GeodesicField, NavGrid, build_navgrid, geodesic_field
from .scene import Point, Scene, segment_clear, wrap_angle
from .sim import Action, AgentConfig, Observation, Simulator, reset


class Agent(Protocol):
    def reset(self, goal_category: str) -> None: ...

    def act(self, observation: Observation) -> Action: ...


AgentFactory = Callable[[Scene, Episode], "Agent"]


class StopAgent:
    """Emits STOP immediately; the floor baseline."""

    def reset(self, goal_category: str) -> None:
        pass

    def act(self, observation: Observation) -> Action:
        return Action.STOP


class RandomAgent:
    """Uniform random over the six actions, deterministic in its seed."""

    def __init__(self, seed: int = 0):
        self._seed = seed
        self._rng = random.Random(seed)

    def reset(self, goal_category: str) -> None:
        pass

    def act(self, observation: Observation) -> Action:
        return self._rng.choice(list(Action))


class OracleAgent:
    """Privileged shortest-path follower used to validate the whole pipeline.

    It reads the geodesic field toward the episode's success zone (never
    exposed to real agents), reconstructs its true pose from the noiseless
    GPS+Compass, and walks downhill on the field with collision-checked,
    turn-quantized headings. It never collides and stops once inside the
    geodesic success tolerance.
    """

    def __init__(
        self,
        scene: Scene,
        episode: Episode,
        navgrid: NavGrid,
        zone_field: GeodesicField,
        agent_cfg: AgentConfig = AgentConfig(),
        stop_tolerance: float = 0.1,
    ) -> None:
        self._scene = scene
        self._episode = episode
        self._navgrid = navgrid
        self._field = zone_field
        self._cfg = agent_cfg
        self._tolerance = stop_tolerance
        self._spawn = episode.start_position
        self._spawn_heading = episode.start_heading
        self._turn_rad = math.radians(agent_cfg.turn_deg)
        self._turn_count = agent_cfg.turn_count

    def reset(self, goal_category: str) -> None:
        pass

    def _world_pose(self, obs: Observation) -> tuple[Point, float]:
        c = math.cos(self._spawn_heading)
        s = math.sin(self._spawn_heading)
        gx, gy = obs.gps
        position = (
            self._spawn[0] + c * gx - s * gy,
            self._spawn[1] + s * gx + c * gy,
        )
        heading = wrap_angle(self._spawn_heading + obs.compass)
        return position, heading

    def _field_value(self, point: Point) -> float:
        try:
            return self._field.value_at(point)
        except Exception:
            return math.inf

    def act(self, obs: Observation) -> Action:
        position, heading = self._world_pose(obs)
        here = self._field_value(position)
        if here <= self._tolerance:
            return Action.STOP
        step = self._cfg.step_size
        radius = self._cfg.radius
        best: tuple[float, int] | None = None
        half = self._turn_count // 2
        for m in range(-half, self._turn_count - half):
            candidate_heading = heading + m * self._turn_rad
            target = (
                position[0] + step * math.cos(candidate_heading),
                position[1] + step * math.sin(candidate_heading),
            )
            if not self._scene.in_bounds(target):
                continue
            if not segment_clear(self._scene, position, target, radius):
                continue
            value = self._field_value(target)
            if not math.isfinite(value):
                continue
            key = (value, abs(m))
            if best is None or key < (best[0], abs(best[1])):
                best = (value, m)
        if best is None or best[0] >= here - 1e-9:
            # No forward move makes progress: give up intentionally.
            return Action.STOP
        m = best[1]
        if m == 0:
            return Action.MOVE_FORWARD
        # One turn toward the chosen heading; re-plan next step.
        return Action.TURN_LEFT if m > 0 else Action.TURN_RIGHT


def oracle_agent(
    scene: Scene,
    episode: Episode,
    navgrid: NavGrid | None = None,
    agent_cfg: AgentConfig = AgentConfig(),
    stop_tolerance: float = 0.1,
) -> OracleAgent:
    """Build the privileged follower for one episode."""
    if navgrid is None:
        navgrid = build_navgrid(scene, agent_cfg.radius)
    cells = viewpoint_cells(navgrid, episode.all_viewpoints())
    field = geodesic_field(navgrid, cells)
    return OracleAgent(scene, episode, navgrid, field, agent_cfg, stop_tolerance)


class LocalRunner:
    """Drives episodes through the simulator and scores them.

    Shares navgrids per scene and zone fields per (scene, goal category)
    across episodes; both are deterministic recomputations, not privileged
    state leaked to agents.
    """

    def __init__(
        self,
        scenes: Mapping[str, Scene] | Sequence[Scene],
        eval_config: EvalConfig = EvalConfig(),
        agent_cfg: AgentConfig = AgentConfig(),
        sensor_cfg: VisibilityConfig = DEFAULT_VISIBILITY,
    ) -> None:
        if not isinstance(scenes, Mapping):
            scenes = {scene.scene_id: scene for scene in scenes}
        self.scenes = dict(scenes)
        self.eval_config = eval_config
        self.agent_cfg = agent_cfg
        self.sensor_cfg = sensor_cfg
        self._navgrids: dict[str, NavGrid] = {}
        self._zone_fields: dict[tuple[str, str], GeodesicField] = {}

    def scene_for(self, episode: Episode) -> Scene:
        try:
            return self.scenes[episode.scene_id]
        except KeyError:
            raise KeyError(
                f"episode {episode.episode_id} references unknown scene "
                f"{episode.scene_id!r}"
            ) from None

    def navgrid_for(self, scene: Scene) -> NavGrid:
        grid = self._navgrids.get(scene.scene_id)
        if grid is None:
            grid = build_navgrid(scene, self.eval_config.agent_radius)
            self._navgrids[scene.scene_id] = grid
        return grid

    def zone_field_for(self, scene: Scene, episode: Episode) -> GeodesicField:
        key = (scene.scene_id, episode.goal_category)
        fld = self._zone_fields.get(key)
        if fld is None:
            grid = self.navgrid_for(scene)
            cells = viewpoint_cells(grid, episode.all_viewpoints())
            fld = geodesic_field(grid, cells)
            self._zone_fields[key] = fld
        return fld

    def start_sim(self, episode: Episode) -> tuple[Simulator, Observation]:
        scene = self.scene_for(episode)
        return reset(
            scene,
            episode,
            agent_cfg=self.agent_cfg,
            sensor_cfg=self.sensor_cfg,
            max_steps=self.eval_config.max_steps,
        )

    def score(
        self, episode: Episode, sim: Simulator, termination: str
    ) -> EpisodeResult:
        scene = self.scene_for(episode)
        grid = self.navgrid_for(scene)
        zone_field = self.zone_field_for(scene, episode)
        if termination == "error":
            success = 0
        else:
            success = evaluate_success(
                scene,
                episode,
                sim.state(),
                self.eval_config,
                navgrid=grid,
                zone_field=zone_field,
            ).success
        final_distance = final_geodesic_to_zone(
            scene, episode, sim.position, self.eval_config, grid, zone_field
        )
        return make_result(
            episode_id=episode.episode_id,
            success=success,
            shortest_dist=episode.geodesic,
            path_length=sim.path_length_traveled(),
            steps=sim.step_count,
            final_geodesic=final_distance,
            termination=termination,
        )

    def run_episode(self, episode: Episode, agent: Agent) -> EpisodeResult:
        sim, obs = self.start_sim(episode)
        termination = "budget"
        try:
            if hasattr(agent, "reset"):
                agent.reset(episode.goal_category)
            while not sim.stopped and sim.step_count < sim.max_steps:
                action = agent.act(obs)
                obs = sim.step(action)
            termination = "stop" if sim.stopped else "budget"
        except Exception:
            termination = "error"
        return self.score(episode, sim, termination)


def run_local(
    dataset: Sequence[Episode],
    scenes: Mapping[str, Scene] | Sequence[Scene],
    agent: Agent | AgentFactory,
    eval_config: EvalConfig = EvalConfig(),
    agent_cfg: AgentConfig = AgentConfig(),
    sensor_cfg: VisibilityConfig = DEFAULT_VISIBILITY,
) -> MetricsReport:
    """Evaluate an in-process agent over a dataset and aggregate the results.

    `agent` is either a policy object reused across episodes or a factory
    `(scene, episode) -> policy` invoked per episode. Agent exceptions void the
    episode (termination="error", success 0) and the run continues.
    """
    runner = LocalRunner(scenes, eval_config, agent_cfg, sensor_cfg)
    results: list[EpisodeResult] = []
    for episode in dataset:
        if callable(agent) and not hasattr(agent, "act"):
            scene = runner.scene_for(episode)
            policy = agent(scene, episode)
        else:
            policy = agent
        results.append(runner.run_episode(episode, policy))
    return aggregate(results)


def make_oracle_factory(
    eval_config: EvalConfig = EvalConfig(), agent_cfg: AgentConfig = AgentConfig()
) -> AgentFactory:
    """Factory wiring the privileged follower's stop rule to the evaluator's
    geodesic tolerance (with caches shared across a run)."""
    navgrids: dict[str, NavGrid] = {}
    fields: dict[tuple[str, str], GeodesicField] = {}

    def factory(scene: Scene, episode: Episode) -> OracleAgent:
        grid = navgrids.get(scene.scene_id)
        if grid is None:
            grid = build_navgrid(scene, agent_cfg.radius)
            navgrids[scene.scene_id] = grid
        key = (scene.scene_id, episode.goal_category)
        fld = fields.get(key)
        if fld is None:
            cells = viewpoint_cells(grid, episode.all_viewpoints())
            fld = geodesic_field(grid, cells)
            fields[key] = fld
        return OracleAgent(
            scene,
            episode,
            grid,
            fld,
            agent_cfg,
            stop_tolerance=eval_config.viewpoint_geodesic_tolerance,
        )

    return factory
