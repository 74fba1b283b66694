"""Success evaluation, SPL scoring, aggregation, and metric diagnostics.

SPL for one episode is S * l / max(p, l): success gated, then the ratio of
the shortest-path length to the length actually traveled. The diagnostics
quantify two well-known hazards of the metric: the variance induced by the
binary success gate near the zone boundary, and its blindness to in-place
turning.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .constants import (
    DEFAULT_MAX_STEPS,
    SUCCESS_RADIUS,
    VIEWPOINT_GEODESIC_TOLERANCE,
)
from .episodes import Episode
from .goalzone import (
    DEFAULT_VISIBILITY,
    VisibilityConfig,
    in_view,
    oracle_visible,
    viewpoint_cells,
)
from .nav import GeodesicField, NavGrid, build_navgrid, geodesic_field
from .scene import Scene, distance_to_obb, is_navigable, quantize
from .sim import Action, AgentState, Simulator

REPORT_SCHEMA_VERSION = "1"


class MetricsError(Exception):
    """Raised for degenerate metric inputs."""


class SuccessMode(str, enum.Enum):
    HABITAT2020 = "habitat2020"
    GENERAL = "general"


class VisibilityMode(str, enum.Enum):
    ORACLE = "oracle"
    IN_VIEW = "in_view"


@dataclass(frozen=True)
class EvalConfig:
    success_mode: SuccessMode = SuccessMode.HABITAT2020
    r_success: float = SUCCESS_RADIUS
    viewpoint_geodesic_tolerance: float = VIEWPOINT_GEODESIC_TOLERANCE
    visibility_mode: VisibilityMode = VisibilityMode.ORACLE
    max_steps: int = DEFAULT_MAX_STEPS
    agent_radius: float = 0.18
    visibility: VisibilityConfig = DEFAULT_VISIBILITY

    def __post_init__(self) -> None:
        if self.r_success <= 0 or self.viewpoint_geodesic_tolerance <= 0:
            raise MetricsError("tolerances must be positive")


def spl(success: int, shortest: float, traveled: float) -> float:
    """Success weighted by path length for one episode (exact formula)."""
    if shortest <= 0:
        raise MetricsError("shortest-path length must be positive")
    if traveled < 0:
        raise MetricsError("traveled path length cannot be negative")
    return success * shortest / max(traveled, shortest)


@dataclass(frozen=True)
class SuccessResult:
    success: int
    reasons: dict[str, bool]


def evaluate_success(
    scene: Scene,
    episode: Episode,
    final_state: AgentState,
    cfg: EvalConfig = EvalConfig(),
    navgrid: NavGrid | None = None,
    zone_field: GeodesicField | None = None,
) -> SuccessResult:
    """Apply the success criterion to a finished trajectory.

    Always requires intentionality (the agent stopped on purpose) and validity
    (the stop pose is navigable). habitat2020 mode then requires the stop to
    lie within the geodesic tolerance of the episode's viewpoint set; general
    mode requires proximity to some goal instance's surface shell plus
    visibility of one such instance (oracle or in-view per the config).
    `navgrid`/`zone_field` may be supplied to reuse cached computations.
    """
    reasons: dict[str, bool] = {}
    reasons["intentionality"] = bool(final_state.stopped)
    position = final_state.position
    reasons["validity"] = scene.in_bounds(position) and is_navigable(
        scene, position, cfg.agent_radius
    )
    if cfg.success_mode is SuccessMode.HABITAT2020:
        distance = final_geodesic_to_zone(scene, episode, position, cfg, navgrid, zone_field)
        reasons["viewpoint_geodesic"] = distance <= cfg.viewpoint_geodesic_tolerance
    else:
        instances = [
            obj for obj in scene.objects if obj.category == episode.goal_category
        ]
        in_shell = [
            obj
            for obj in instances
            if distance_to_obb(position, obj.obb) <= cfg.r_success
        ]
        reasons["proximity"] = bool(in_shell)
        visible = False
        for obj in in_shell:
            if cfg.visibility_mode is VisibilityMode.ORACLE:
                visible = oracle_visible(scene, position, obj, cfg.visibility)
            else:
                visible = in_view(
                    scene,
                    position,
                    final_state.heading,
                    final_state.pitch,
                    obj,
                    cfg.visibility,
                )
            if visible:
                break
        reasons["visibility"] = visible
    return SuccessResult(success=int(all(reasons.values())), reasons=reasons)


def final_geodesic_to_zone(
    scene: Scene,
    episode: Episode,
    position: tuple[float, float],
    cfg: EvalConfig = EvalConfig(),
    navgrid: NavGrid | None = None,
    zone_field: GeodesicField | None = None,
) -> float:
    """Geodesic distance from a pose to the episode's viewpoint set (+inf when
    unreachable or off the free grid)."""
    if navgrid is None and zone_field is None:
        navgrid = build_navgrid(scene, cfg.agent_radius)
    if zone_field is None:
        cells = viewpoint_cells(navgrid, episode.all_viewpoints())
        if not cells:
            return math.inf
        zone_field = geodesic_field(navgrid, cells)
    try:
        return zone_field.value_at(position)
    except Exception:
        return math.inf


@dataclass(frozen=True)
class EpisodeResult:
    """Per-episode outcome: success bit, path lengths, score, termination."""

    episode_id: str
    success: int
    shortest_dist: float
    path_length: float
    spl: float
    steps: int
    final_geodesic_to_zone: float
    termination: str  # stop | budget | error

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode_id": self.episode_id,
            "success": self.success,
            "shortest_dist": quantize(self.shortest_dist),
            "path_length": quantize(self.path_length),
            "spl": quantize(self.spl),
            "steps": self.steps,
            "final_geodesic_to_zone": (
                None
                if not math.isfinite(self.final_geodesic_to_zone)
                else quantize(self.final_geodesic_to_zone)
            ),
            "termination": self.termination,
        }


def make_result(
    episode_id: str,
    success: int,
    shortest_dist: float,
    path_length: float,
    steps: int,
    final_geodesic: float,
    termination: str,
) -> EpisodeResult:
    value = 0.0 if success == 0 else spl(success, shortest_dist, path_length)
    return EpisodeResult(
        episode_id=episode_id,
        success=success,
        shortest_dist=shortest_dist,
        path_length=path_length,
        spl=value,
        steps=steps,
        final_geodesic_to_zone=final_geodesic,
        termination=termination,
    )


@dataclass(frozen=True)
class MetricsReport:
    episode_count: int
    spl_mean: float
    success_rate: float
    mean_final_geodesic: float
    results: tuple[EpisodeResult, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "N": self.episode_count,
            "spl": quantize(self.spl_mean),
            "success_rate": quantize(self.success_rate),
            "mean_final_geodesic": (
                None
                if not math.isfinite(self.mean_final_geodesic)
                else quantize(self.mean_final_geodesic)
            ),
            "episodes": [r.to_dict() for r in self.results],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            [
                "episode_id",
                "success",
                "shortest_dist",
                "path_length",
                "spl",
                "steps",
                "final_geodesic_to_zone",
                "termination",
            ]
        )
        for r in self.results:
            writer.writerow(
                [
                    r.episode_id,
                    r.success,
                    quantize(r.shortest_dist),
                    quantize(r.path_length),
                    quantize(r.spl),
                    r.steps,
                    "" if not math.isfinite(r.final_geodesic_to_zone) else quantize(r.final_geodesic_to_zone),
                    r.termination,
                ]
            )
        return buf.getvalue()


def aggregate(results: Sequence[EpisodeResult]) -> MetricsReport:
    """Fold per-episode results into the dataset-level report.

    The per-episode list is ordered by episode id so reports are canonical
    regardless of evaluation order. The mean distance-to-zone of the final
    poses is reported alongside SPL as the partial-progress signal the score
    itself does not carry.
    """
    if not results:
        raise MetricsError("cannot aggregate an empty result list")
    ordered = tuple(sorted(results, key=lambda r: r.episode_id))
    n = len(ordered)
    spl_mean = sum(r.spl for r in ordered) / n
    success_rate = sum(r.success for r in ordered) / n
    finite = [r.final_geodesic_to_zone for r in ordered if math.isfinite(r.final_geodesic_to_zone)]
    mean_final = sum(finite) / len(finite) if finite else math.inf
    return MetricsReport(
        episode_count=n,
        spl_mean=spl_mean,
        success_rate=success_rate,
        mean_final_geodesic=mean_final,
        results=ordered,
    )


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass(frozen=True)
class VarianceDiagnostic:
    empirical_var_spl: float
    empirical_mean_spl: float
    bernoulli_var: float
    printed_expression: float
    trials: int
    episodes_per_trial: int


def variance_diagnostic(
    c: float,
    prob: float,
    episodes_per_trial: int = 100,
    trials: int = 100_000,
    seed: int = 0,
) -> VarianceDiagnostic:
    """Monte Carlo the near-boundary stopping thought experiment.

    Every episode shares the same efficiency ratio `c`; success is an
    independent coin with probability `prob`. Reports the empirical
    per-episode score variance, the exact coin variance c^2 * p * (1-p), and
    the commonly printed expression p * (1-p) * mean(score)^2 evaluated on the
    empirical mean. The two disagree whenever that mean (c * p_hat) is not c
    itself; both are surfaced so the difference is visible.
    """
    if not (0.0 < c <= 1.0):
        raise MetricsError("c must be in (0, 1]")
    if not (0.0 < prob <= 1.0):
        raise MetricsError("prob must be in (0, 1]")
    if trials < 1 or episodes_per_trial < 1:
        raise MetricsError("trials and episodes_per_trial must be >= 1")
    rng = np.random.default_rng(seed)
    total = trials * episodes_per_trial
    count = 0
    sum_s = 0.0
    sum_sq = 0.0
    chunk = 1_000_000
    remaining = total
    while remaining > 0:
        size = min(chunk, remaining)
        draws = rng.random(size) < prob
        k = int(draws.sum())
        count += size
        sum_s += k * c
        sum_sq += k * c * c
        remaining -= size
    mean = sum_s / count
    var = sum_sq / count - mean * mean
    if count > 1:
        var *= count / (count - 1)
    return VarianceDiagnostic(
        empirical_var_spl=float(var),
        empirical_mean_spl=float(mean),
        bernoulli_var=c * c * prob * (1.0 - prob),
        printed_expression=prob * (1.0 - prob) * float(mean) ** 2,
        trials=trials,
        episodes_per_trial=episodes_per_trial,
    )


@dataclass(frozen=True)
class TurningInvariance:
    p_base: float
    p_turned: float
    spl_base: float
    spl_turned: float

    @property
    def invariant(self) -> bool:
        return self.p_base == self.p_turned and self.spl_base == self.spl_turned


def _run_actions(
    sim: Simulator, episode: Episode, actions: Sequence[Action], cfg: EvalConfig
) -> tuple[float, float]:
    for action in actions:
        sim.step(action)
        if sim.stopped:
            break
    outcome = evaluate_success(sim.scene, episode, sim.state(), cfg)
    traveled = sim.path_length_traveled()
    return traveled, spl(outcome.success, episode.geodesic, traveled)


def turning_invariance_check(
    sim_factory: Callable[[], Simulator],
    episode: Episode,
    base_actions: Sequence[Action],
    turn_insertions: int = 0,
    cfg: EvalConfig = EvalConfig(),
) -> TurningInvariance:
    """Replay a trajectory with extra in-place turning and compare scores.

    `turn_insertions` left/right pairs are inserted before the final stop, so
    the swept path is unchanged; the traveled length and the score must match
    the base run exactly.
    """
    if not base_actions or base_actions[-1] is not Action.STOP:
        raise MetricsError("base_actions must end in STOP")
    p_base, spl_base = _run_actions(sim_factory(), episode, base_actions, cfg)
    turned = list(base_actions[:-1])
    turned.extend([Action.TURN_LEFT, Action.TURN_RIGHT] * turn_insertions)
    turned.append(Action.STOP)
    p_turned, spl_turned = _run_actions(sim_factory(), episode, turned, cfg)
    return TurningInvariance(
        p_base=p_base, p_turned=p_turned, spl_base=spl_base, spl_turned=spl_turned
    )
