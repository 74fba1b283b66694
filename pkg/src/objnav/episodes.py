"""Episode dataset construction: rejection sampling under the task filters,
difficulty binning, distribution statistics, and JSON-lines persistence.

An episode fixes a scene, a start pose, and a goal category, and carries the
precomputed shortest-path metadata (Euclidean and geodesic distance to the
goal's success zone, their ratio, the discrete-action length of the shortest
path) plus the success-zone viewpoints of every qualifying goal instance.
"""
from __future__ import annotations

import hashlib
import json
import math
import random
import statistics
from dataclasses import dataclass, field
from typing import IO, Any, Iterator, Sequence

import numpy as np

from .constants import (
    AGENT_RADIUS,
    MAX_SHORTEST_ACTIONS,
    MIN_GEODESIC_RATIO,
    SUCCESS_RADIUS,
    TURN_DEG,
)
from .goalzone import (
    DEFAULT_VISIBILITY,
    Viewpoint,
    VisibilityConfig,
    compute_viewpoints,
    viewpoint_cells,
)
from .nav import (
    GeodesicField,
    NavGrid,
    action_path_length,
    build_navgrid,
    geodesic_field,
    string_pull,
)
from .scene import Point, Scene, is_navigable, quantize

DATASET_SCHEMA_VERSION = "1"
GENERATION_BUDGET = 1_000_000
MIN_ACCEPTANCE_RATE = 0.001


class EpisodeError(Exception):
    """Raised for invalid episodes, documents, or generation failures."""


class GenerationBudgetError(EpisodeError):
    """Raised when rejection sampling exhausts its draw budget."""

    def __init__(self, message: str, rejections: dict[str, int]):
        super().__init__(message)
        self.rejections = rejections


@dataclass(frozen=True)
class GenerationProfile:
    """Episode filter thresholds for one benchmark flavor."""

    name: str
    geodesic_range: tuple[float, float]
    max_action_count: int = MAX_SHORTEST_ACTIONS
    min_ratio: float = MIN_GEODESIC_RATIO
    difficulty_edges: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        lo, hi = self.geodesic_range
        if not lo < hi:
            raise EpisodeError("geodesic_range must satisfy min < max")
        edges = self.edges
        if not (lo <= edges[0] < edges[1] <= hi):
            raise EpisodeError("difficulty edges must lie inside the geodesic range")

    @property
    def edges(self) -> tuple[float, float]:
        if self.difficulty_edges is not None:
            return self.difficulty_edges
        lo, hi = self.geodesic_range
        third = (hi - lo) / 3.0
        return (lo + third, lo + 2.0 * third)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "geodesic_range": [quantize(self.geodesic_range[0]), quantize(self.geodesic_range[1])],
            "max_action_count": self.max_action_count,
            "min_ratio": self.min_ratio,
            "difficulty_edges": [quantize(self.edges[0]), quantize(self.edges[1])],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "GenerationProfile":
        return cls(
            name=str(doc["name"]),
            geodesic_range=(float(doc["geodesic_range"][0]), float(doc["geodesic_range"][1])),
            max_action_count=int(doc["max_action_count"]),
            min_ratio=float(doc["min_ratio"]),
            difficulty_edges=(
                (float(doc["difficulty_edges"][0]), float(doc["difficulty_edges"][1]))
                if doc.get("difficulty_edges")
                else None
            ),
        )


HABITAT_PROFILE = GenerationProfile(name="habitat", geodesic_range=(1.0, 30.0))
ROBOTHOR_PROFILE = GenerationProfile(name="robothor", geodesic_range=(0.71, 16.8))
PROFILES = {p.name: p for p in (HABITAT_PROFILE, ROBOTHOR_PROFILE)}

DIFFICULTIES = ("easy", "medium", "hard")


def difficulty_bin(geodesic: float, profile: GenerationProfile) -> str:
    """Bucket a geodesic distance into easy/medium/hard per the profile edges."""
    lo, hi = profile.geodesic_range
    if not (lo <= geodesic <= hi):
        raise EpisodeError(
            f"geodesic {geodesic} outside profile range [{lo}, {hi}]"
        )
    e1, e2 = profile.edges
    if geodesic < e1:
        return "easy"
    if geodesic < e2:
        return "medium"
    return "hard"


@dataclass(frozen=True)
class Episode:
    """One evaluation task: scene + start pose + goal category + metadata."""

    episode_id: str
    scene_id: str
    start_position: Point
    start_heading: float
    goal_category: str
    euclidean: float
    geodesic: float
    ratio: float
    shortest_action_count: int
    difficulty: str
    geodesic_per_instance: dict[str, float]
    viewpoints: dict[str, tuple[Viewpoint, ...]]

    def all_viewpoints(self) -> list[Viewpoint]:
        out: list[Viewpoint] = []
        for vps in self.viewpoints.values():
            out.extend(vps)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode_id": self.episode_id,
            "scene_id": self.scene_id,
            "start": {
                "position": [quantize(self.start_position[0]), quantize(self.start_position[1])],
                "heading": quantize(self.start_heading),
            },
            "goal_category": self.goal_category,
            "info": {
                "euclidean": quantize(self.euclidean),
                "geodesic": quantize(self.geodesic),
                "ratio": quantize(self.ratio),
                "shortest_action_count": self.shortest_action_count,
                "difficulty": self.difficulty,
                "geodesic_per_instance": {
                    k: quantize(v) for k, v in sorted(self.geodesic_per_instance.items())
                },
            },
            "viewpoints": {
                instance_id: [
                    [quantize(vp.position[0]), quantize(vp.position[1]), quantize(vp.distance_to_surface)]
                    for vp in vps
                ]
                for instance_id, vps in sorted(self.viewpoints.items())
            },
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Episode":
        try:
            info = doc["info"]
            viewpoints = {
                str(instance_id): tuple(
                    Viewpoint(
                        position=(float(v[0]), float(v[1])),
                        instance_id=str(instance_id),
                        distance_to_surface=float(v[2]),
                    )
                    for v in vps
                )
                for instance_id, vps in doc["viewpoints"].items()
            }
            return cls(
                episode_id=str(doc["episode_id"]),
                scene_id=str(doc["scene_id"]),
                start_position=(
                    float(doc["start"]["position"][0]),
                    float(doc["start"]["position"][1]),
                ),
                start_heading=float(doc["start"]["heading"]),
                goal_category=str(doc["goal_category"]),
                euclidean=float(info["euclidean"]),
                geodesic=float(info["geodesic"]),
                ratio=float(info["ratio"]),
                shortest_action_count=int(info["shortest_action_count"]),
                difficulty=str(info["difficulty"]),
                geodesic_per_instance={
                    str(k): float(v) for k, v in info.get("geodesic_per_instance", {}).items()
                },
                viewpoints=viewpoints,
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise EpisodeError(f"malformed episode document: {exc}") from exc


def validate_episode(episode: Episode, profile: GenerationProfile) -> None:
    """Re-check every episode invariant; raise naming the violated filter."""
    eid = episode.episode_id
    if episode.ratio < profile.min_ratio:
        raise EpisodeError(
            f"episode {eid}: ratio {episode.ratio} violates min_ratio {profile.min_ratio}"
        )
    if episode.shortest_action_count > profile.max_action_count:
        raise EpisodeError(
            f"episode {eid}: shortest_action_count {episode.shortest_action_count} "
            f"violates max_action_count {profile.max_action_count}"
        )
    lo, hi = profile.geodesic_range
    if not (lo <= episode.geodesic <= hi):
        raise EpisodeError(
            f"episode {eid}: geodesic {episode.geodesic} violates geodesic_range [{lo}, {hi}]"
        )
    if episode.difficulty not in DIFFICULTIES:
        raise EpisodeError(f"episode {eid}: unknown difficulty {episode.difficulty!r}")
    if not any(len(v) > 0 for v in episode.viewpoints.values()):
        raise EpisodeError(f"episode {eid}: viewpoints must be non-empty for >= 1 instance")


def _scene_rng(seed: int, scene_index: int) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{scene_index}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class _SceneIndex:
    """Per-scene caches used during generation."""

    scene: Scene
    navgrid: NavGrid
    free_cells: np.ndarray
    viewpoints: dict[str, dict[str, tuple[Viewpoint, ...]]]  # category -> instance -> vps
    fields: dict[str, GeodesicField] = field(default_factory=dict)  # instance -> field
    union_positions: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def categories(self) -> list[str]:
        return sorted(self.viewpoints.keys())


def _index_scene(
    scene: Scene,
    r_success: float,
    agent_radius: float,
    sensor_cfg: VisibilityConfig,
) -> _SceneIndex:
    navgrid = build_navgrid(scene, agent_radius)
    free_cells = np.argwhere(navgrid.free)
    per_category: dict[str, dict[str, tuple[Viewpoint, ...]]] = {}
    fields: dict[str, GeodesicField] = {}
    unions: dict[str, np.ndarray] = {}
    for obj in scene.objects:
        vps = compute_viewpoints(scene, navgrid, obj, r_success, sensor_cfg)
        cells = viewpoint_cells(navgrid, vps)
        if not vps or not cells:
            continue
        per_category.setdefault(obj.category, {})[obj.instance_id] = tuple(vps)
        fields[obj.instance_id] = geodesic_field(navgrid, cells)
    for category, by_instance in per_category.items():
        positions = [vp.position for vps in by_instance.values() for vp in vps]
        unions[category] = np.asarray(positions, dtype=float)
    return _SceneIndex(
        scene=scene,
        navgrid=navgrid,
        free_cells=free_cells,
        viewpoints=per_category,
        fields=fields,
        union_positions=unions,
    )


def generate_episodes(
    scenes: Sequence[Scene],
    count_per_scene: int,
    profile: GenerationProfile,
    r_success: float = SUCCESS_RADIUS,
    seed: int = 0,
    agent_radius: float = AGENT_RADIUS,
    sensor_cfg: VisibilityConfig = DEFAULT_VISIBILITY,
    turn_deg: float = TURN_DEG,
) -> list[Episode]:
    """Rejection-sample episodes satisfying every profile filter.

    Starts are uniform over free cells then uniform within the cell; headings
    uniform over the turn-quantum multiples; goal categories uniform over the
    ones with a non-empty success zone. Deterministic in the seed. Raises
    GenerationBudgetError with a rejection histogram when the draw budget runs
    out before enough episodes are accepted.
    """
    if count_per_scene < 1:
        raise EpisodeError("count_per_scene must be >= 1")
    attempts = 0
    rejections: dict[str, int] = {
        "start_not_navigable": 0,
        "unreachable": 0,
        "geodesic_range": 0,
        "ratio": 0,
        "action_count": 0,
    }
    episodes: list[Episode] = []
    heading_count = round(360.0 / turn_deg)
    turn_rad = math.radians(turn_deg)

    for scene_index, scene in enumerate(scenes):
        index = _index_scene(scene, r_success, agent_radius, sensor_cfg)
        if not index.categories:
            raise EpisodeError(
                f"scene {scene.scene_id} has no category with a non-empty success zone"
            )
        rng = _scene_rng(seed, scene_index)
        accepted = 0
        while accepted < count_per_scene:
            attempts += 1
            if attempts >= GENERATION_BUDGET:
                dominant = max(rejections, key=rejections.get)
                raise GenerationBudgetError(
                    f"draw budget exhausted after {attempts} attempts "
                    f"({len(episodes)} accepted); dominant rejection: {dominant} "
                    f"({rejections[dominant]} draws); histogram: {rejections}",
                    rejections,
                )
            ci = rng.randrange(len(index.free_cells))
            draw_cell = index.free_cells[ci]
            # Quantize before any derived computation so persisted episodes
            # recompute to identical values.
            start = (
                quantize((draw_cell[1] + rng.random()) * scene.cell_size),
                quantize((draw_cell[0] + rng.random()) * scene.cell_size),
            )
            heading = quantize(turn_rad * rng.randrange(heading_count))
            category = index.categories[rng.randrange(len(index.categories))]
            cell = scene.cell_of(start)
            if not index.navgrid.free[cell[0], cell[1]] or not is_navigable(
                scene, start, agent_radius
            ):
                rejections["start_not_navigable"] += 1
                continue
            per_instance = {
                instance_id: index.fields[instance_id].value_at_cell(cell)
                for instance_id in index.viewpoints[category]
            }
            geodesic = min(per_instance.values())
            if not math.isfinite(geodesic):
                rejections["unreachable"] += 1
                continue
            lo, hi = profile.geodesic_range
            if not (lo <= geodesic <= hi):
                rejections["geodesic_range"] += 1
                continue
            positions = index.union_positions[category]
            euclid = float(
                np.min(np.hypot(positions[:, 0] - start[0], positions[:, 1] - start[1]))
            )
            if euclid <= 1e-9:
                rejections["geodesic_range"] += 1
                continue
            ratio = geodesic / euclid
            if ratio < profile.min_ratio:
                rejections["ratio"] += 1
                continue
            winner = min(per_instance, key=per_instance.get)
            chain = index.fields[winner].descend_chain((int(cell[0]), int(cell[1])))
            polyline = string_pull(
                index.navgrid, [index.navgrid.cell_center(c) for c in chain]
            )
            actions = action_path_length(
                polyline, turn_deg=turn_deg, initial_heading=heading
            )
            if actions > profile.max_action_count:
                rejections["action_count"] += 1
                continue
            episode = Episode(
                episode_id=f"{scene.scene_id}:{accepted:06d}",
                scene_id=scene.scene_id,
                start_position=start,
                start_heading=heading,
                goal_category=category,
                euclidean=quantize(euclid),
                geodesic=quantize(geodesic),
                ratio=quantize(ratio),
                shortest_action_count=actions,
                difficulty=difficulty_bin(geodesic, profile),
                geodesic_per_instance={
                    k: quantize(v) for k, v in per_instance.items() if math.isfinite(v)
                },
                viewpoints=dict(index.viewpoints[category]),
            )
            validate_episode(episode, profile)
            episodes.append(episode)
            accepted += 1
    return episodes


# ---------------------------------------------------------------------------
# Persistence


def write_dataset(
    episodes: Sequence[Episode],
    sink: str | IO[str],
    profile: GenerationProfile,
    r_success: float = SUCCESS_RADIUS,
    seed: int = 0,
) -> None:
    """JSON lines: a header record, then one episode per line."""
    header = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "profile": profile.to_dict(),
        "r_success": quantize(r_success),
        "seed": seed,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines.extend(
        json.dumps(ep.to_dict(), separators=(",", ":")) for ep in episodes
    )
    text = "\n".join(lines) + "\n"
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


@dataclass(frozen=True)
class DatasetHeader:
    schema_version: str
    profile: GenerationProfile
    r_success: float
    seed: int


def _parse_header(line: str) -> DatasetHeader:
    try:
        doc = json.loads(line)
        return DatasetHeader(
            schema_version=str(doc["schema_version"]),
            profile=GenerationProfile.from_dict(doc["profile"]),
            r_success=float(doc["r_success"]),
            seed=int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise EpisodeError(f"malformed dataset header: {exc}") from exc


def iter_dataset(source: str | IO[str]) -> Iterator[tuple[DatasetHeader, Episode]]:
    """Stream (header, episode) pairs without materializing the whole file.

    Each episode is re-validated against the header profile as it is read.
    """

    def _lines(fh: IO[str]) -> Iterator[tuple[DatasetHeader, Episode]]:
        header_line = fh.readline()
        if not header_line.strip():
            raise EpisodeError("dataset is empty")
        header = _parse_header(header_line)
        if header.schema_version != DATASET_SCHEMA_VERSION:
            raise EpisodeError(f"unsupported schema_version {header.schema_version!r}")
        for line in fh:
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EpisodeError(f"malformed episode line: {exc}") from exc
            episode = Episode.from_dict(doc)
            validate_episode(episode, header.profile)
            yield header, episode

    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            yield from _lines(fh)
    else:
        yield from _lines(source)


def read_dataset(source: str | IO[str]) -> tuple[DatasetHeader, list[Episode]]:
    """Load a full dataset (header + validated episodes)."""
    header: DatasetHeader | None = None
    episodes: list[Episode] = []
    for header, episode in iter_dataset(source):
        episodes.append(episode)
    if header is None:
        # Header-only files are valid but carry no episodes.
        if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
            with open(source, "r", encoding="utf-8") as fh:
                header = _parse_header(fh.readline())
        else:
            raise EpisodeError("dataset contains no episodes")
    return header, episodes


# ---------------------------------------------------------------------------
# Statistics

STATS_BINS = 30
_STAT_METRICS = ("euclidean", "geodesic", "ratio")


@dataclass
class StatsReport:
    histograms: dict[str, list[tuple[float, float, int]]]
    summary: dict[str, dict[str, float]]
    category_counts: dict[str, int]
    difficulty_counts: dict[str, int]
    episode_count: int

    def to_csv(self) -> str:
        lines = ["metric,bin_lo,bin_hi,count"]
        for metric in _STAT_METRICS:
            for lo, hi, count in self.histograms[metric]:
                lines.append(f"{metric},{quantize(lo)},{quantize(hi)},{count}")
        lines.append("")
        lines.append("metric,stat,value")
        for metric in _STAT_METRICS:
            for stat in ("min", "max", "mean", "median"):
                lines.append(f"{metric},{stat},{quantize(self.summary[metric][stat])}")
        lines.append(f"episodes,count,{self.episode_count}")
        for category, count in sorted(self.category_counts.items()):
            lines.append(f"category:{category},count,{count}")
        for difficulty in DIFFICULTIES:
            lines.append(
                f"difficulty:{difficulty},count,{self.difficulty_counts.get(difficulty, 0)}"
            )
        return "\n".join(lines) + "\n"


def dataset_stats(episodes: Sequence[Episode]) -> StatsReport:
    """Histograms (fixed 30 bins over the observed range) and summary stats."""
    if not episodes:
        raise EpisodeError("cannot compute statistics of an empty dataset")
    values = {
        "euclidean": [ep.euclidean for ep in episodes],
        "geodesic": [ep.geodesic for ep in episodes],
        "ratio": [ep.ratio for ep in episodes],
    }
    histograms = {}
    summary = {}
    for metric, xs in values.items():
        lo, hi = min(xs), max(xs)
        width = hi - lo
        counts = [0] * STATS_BINS
        for x in xs:
            if width == 0.0:
                counts[0] += 1
            else:
                counts[min(STATS_BINS - 1, int((x - lo) / width * STATS_BINS))] += 1
        edges = [
            (lo + width * k / STATS_BINS, lo + width * (k + 1) / STATS_BINS, counts[k])
            for k in range(STATS_BINS)
        ]
        histograms[metric] = edges
        summary[metric] = {
            "min": lo,
            "max": hi,
            "mean": statistics.fmean(xs),
            "median": statistics.median(xs),
        }
    category_counts: dict[str, int] = {}
    difficulty_counts: dict[str, int] = {}
    for ep in episodes:
        category_counts[ep.goal_category] = category_counts.get(ep.goal_category, 0) + 1
        difficulty_counts[ep.difficulty] = difficulty_counts.get(ep.difficulty, 0) + 1
    return StatsReport(
        histograms=histograms,
        summary=summary,
        category_counts=category_counts,
        difficulty_counts=difficulty_counts,
        episode_count=len(episodes),
    )
