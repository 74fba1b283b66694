"""Command-line entry point binding the modules into reproducible workflows.

Every command writes a run manifest (resolved config, seeds, file digests)
next to its outputs so any artifact can be regenerated from its manifest.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .constants import SUCCESS_RADIUS
from .episodes import (
    PROFILES,
    EpisodeError,
    GenerationBudgetError,
    dataset_stats,
    generate_episodes,
    read_dataset,
    write_dataset,
)
from .evalserver import RandomAgent, StopAgent, make_oracle_factory, run_local
from .metrics import EvalConfig, MetricsError, SuccessMode, VisibilityMode
from .scene import (
    SceneError,
    SceneGenParams,
    generate_scene,
    load_scene,
    save_scene,
    validate_scene,
)
from .server import ALL_SENSORS, SessionConfig

SEED_ENV = "OBJNAV_SEED"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        return 0


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    config: dict[str, Any],
    inputs: Sequence[Path],
    outputs: Sequence[Path],
) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": config,
        "inputs": {str(p): _sha256_file(p) for p in sorted(inputs)},
        "outputs": {str(p): _sha256_file(p) for p in sorted(outputs)},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_scenes_dir(path: Path) -> dict[str, Any]:
    files = sorted(path.glob("*.json"))
    files = [f for f in files if f.name != "manifest.json"]
    if not files:
        raise SceneError(f"no scene files found in {path}")
    scenes = {}
    for f in files:
        scene = load_scene(f)
        scenes[scene.scene_id] = scene
    return scenes


def _positive_float(name: str):
    def parse(text: str) -> float:
        value = float(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"{name} must be positive, got {text}")
        return value

    return parse


def _positive_int(name: str):
    def parse(text: str) -> int:
        value = int(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"{name} must be positive, got {text}")
        return value

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="objnav",
        description="Object-goal navigation scenes, datasets, simulation, and scoring.",
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"objnav {__version__}")
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="JSON file of flag defaults (flags given on the command line win)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="scene generation and validation")
    scene_sub = scene.add_subparsers(dest="scene_command", required=True)

    gen = scene_sub.add_parser("gen", help="generate procedural scenes")
    gen.add_argument("--out", type=Path, required=True, help="output directory")
    gen.add_argument("--count", type=_positive_int("--count"), default=1)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--width", type=_positive_float("--width"), default=20.0)
    gen.add_argument("--height", type=_positive_float("--height"), default=20.0)
    gen.add_argument("--rooms", type=_positive_int("--rooms"), default=4)
    gen.add_argument("--cell-size", type=_positive_float("--cell-size"), default=0.05)
    gen.add_argument("--objects-min", type=int, default=1)
    gen.add_argument("--objects-max", type=int, default=2)
    gen.add_argument("--jobs", type=_positive_int("--jobs"), default=1)

    val = scene_sub.add_parser("validate", help="run the invariant sweep on scene files")
    val.add_argument("paths", type=Path, nargs="+")

    episodes = sub.add_parser("episodes", help="dataset generation and statistics")
    episodes_sub = episodes.add_subparsers(dest="episodes_command", required=True)

    egen = episodes_sub.add_parser("gen", help="generate an episode dataset")
    egen.add_argument("--scenes", type=Path, required=True, help="scene directory")
    egen.add_argument("--profile", choices=sorted(PROFILES), default="habitat")
    egen.add_argument(
        "--count-per-scene", type=_positive_int("--count-per-scene"), default=25
    )
    egen.add_argument(
        "--r-success", type=_positive_float("--r-success"), default=SUCCESS_RADIUS
    )
    egen.add_argument("--seed", type=int, default=None)
    egen.add_argument("--out", type=Path, required=True)
    egen.add_argument("--jobs", type=_positive_int("--jobs"), default=1)

    estats = episodes_sub.add_parser("stats", help="distribution report for a dataset")
    estats.add_argument("--dataset", type=Path, required=True)
    estats.add_argument("--out", type=Path, required=True, help="output CSV path")

    ev = sub.add_parser("eval", help="evaluate an agent locally or serve remote agents")
    ev.add_argument("--dataset", type=Path, action="append", required=True)
    ev.add_argument("--scenes", type=Path, required=True)
    ev.add_argument(
        "--mode",
        choices=[m.value for m in SuccessMode],
        default=SuccessMode.HABITAT2020.value,
    )
    ev.add_argument(
        "--visibility",
        choices=[m.value for m in VisibilityMode],
        default=VisibilityMode.ORACLE.value,
    )
    ev.add_argument("--agent", choices=["oracle", "random", "stop"], default="stop")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--max-steps", type=_positive_int("--max-steps"), default=500)
    ev.add_argument("--out", type=Path, required=True, help="output directory")
    ev.add_argument("--verify-l", action="store_true", help="recompute stored shortest-path lengths")
    ev.add_argument("--force", action="store_true", help="allow aggregating across profiles")
    ev.add_argument("--serve", action="store_true", help="run the wire service instead")
    ev.add_argument("--port", type=int, default=0)
    ev.add_argument("--host", default="127.0.0.1")
    ev.add_argument("--label", default="test-standard")
    ev.add_argument("--sensors", nargs="+", choices=list(ALL_SENSORS), default=list(ALL_SENSORS))
    ev.add_argument("--shuffle-seed", type=int, default=None)
    ev.add_argument("--timeout", type=_positive_float("--timeout"), default=60.0)

    diag = sub.add_parser("diagnostics", help="metric hazard diagnostics")
    diag.add_argument("--prob", type=float, default=0.5)
    diag.add_argument("--c", dest="efficiency", type=float, default=1.0)
    diag.add_argument("--trials", type=_positive_int("--trials"), default=100_000)
    diag.add_argument("--episodes", type=_positive_int("--episodes"), default=100)
    diag.add_argument("--seed", type=int, default=None)
    diag.add_argument("--turn-pairs", type=_positive_int("--turn-pairs"), default=50)

    return parser


def _set_defaults_recursive(parser: argparse.ArgumentParser, defaults: dict) -> None:
    parser.set_defaults(**defaults)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                _set_defaults_recursive(sub, defaults)


def _resolve_config_defaults(argv: Sequence[str], parser: argparse.ArgumentParser) -> argparse.Namespace:
    # Two-phase parse: config file fills defaults, explicit flags override.
    probe = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    probe.add_argument("--config", type=Path, default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config is not None:
        with open(known.config, "r", encoding="utf-8") as fh:
            defaults = json.load(fh)
        if not isinstance(defaults, dict):
            parser.error("--config file must hold a JSON object")
        _set_defaults_recursive(
            parser, {k.replace("-", "_"): v for k, v in defaults.items()}
        )
    return parser.parse_args(argv)


def _cmd_scene_gen(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.objects_min < 0 or args.objects_max < args.objects_min:
        raise SceneError("--objects-min/--objects-max must satisfy 0 <= min <= max")
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    def one(k: int) -> Path:
        params = SceneGenParams(
            width=args.width,
            height=args.height,
            room_count=args.rooms,
            objects_per_category_range=(args.objects_min, args.objects_max),
            cell_size=args.cell_size,
            seed=seed + k,
        )
        scene = generate_scene(params)
        path = out / f"{scene.scene_id}.json"
        save_scene(scene, path)
        return path

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            paths = list(pool.map(one, range(args.count)))
    else:
        paths = [one(k) for k in range(args.count)]
    paths.sort()
    _write_manifest(
        out,
        "scene gen",
        {
            "seed": seed,
            "count": args.count,
            "width": args.width,
            "height": args.height,
            "rooms": args.rooms,
            "cell_size": args.cell_size,
            "objects_per_category_range": [args.objects_min, args.objects_max],
        },
        inputs=[],
        outputs=paths,
    )
    print(f"wrote {len(paths)} scene(s) to {out}")
    return 0


def _cmd_scene_validate(args: argparse.Namespace) -> int:
    failures = 0
    for path in args.paths:
        if path.name == "manifest.json":
            continue
        try:
            scene = load_scene(path)
            validate_scene(scene)
            print(f"{path}: ok ({scene.scene_id}, {len(scene.objects)} objects)")
        except SceneError as exc:
            failures += 1
            print(f"{path}: FAIL ({exc})", file=sys.stderr)
    return 1 if failures else 0


def _cmd_episodes_gen(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    scenes = _load_scenes_dir(args.scenes)
    profile = PROFILES[args.profile]
    scene_list = [scenes[k] for k in sorted(scenes)]

    if args.jobs > 1:
        def one(indexed):
            k, scene = indexed
            return _generate_for_scene(scene, k, args, profile, seed)

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            chunks = list(pool.map(one, enumerate(scene_list)))
        episodes = [ep for chunk in chunks for ep in chunk]
    else:
        episodes = []
        for k, scene in enumerate(scene_list):
            episodes.extend(_generate_for_scene(scene, k, args, profile, seed))
    episodes.sort(key=lambda ep: ep.episode_id)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(episodes, args.out, profile, args.r_success, seed)
    _write_manifest(
        args.out.parent,
        "episodes gen",
        {
            "seed": seed,
            "profile": profile.name,
            "count_per_scene": args.count_per_scene,
            "r_success": args.r_success,
            "scenes": str(args.scenes),
        },
        inputs=sorted(p for p in args.scenes.glob("*.json") if p.name != "manifest.json"),
        outputs=[args.out],
    )
    print(f"wrote {len(episodes)} episodes to {args.out}")
    return 0


def _generate_for_scene(scene, index, args, profile, seed):
    # Seed derivation by scene index keeps parallel generation deterministic.
    return generate_episodes(
        [scene],
        args.count_per_scene,
        profile,
        r_success=args.r_success,
        seed=seed + index,
    )


def _cmd_episodes_stats(args: argparse.Namespace) -> int:
    _, episodes = read_dataset(args.dataset)
    if not episodes:
        raise EpisodeError("dataset contains no episodes")
    report = dataset_stats(episodes)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    _write_manifest(
        args.out.parent,
        "episodes stats",
        {"dataset": str(args.dataset)},
        inputs=[args.dataset],
        outputs=[args.out],
    )
    print(f"wrote statistics for {report.episode_count} episodes to {args.out}")
    return 0


def _verify_shortest_lengths(episodes, scenes, cfg: EvalConfig) -> None:
    from .goalzone import viewpoint_cells
    from .nav import build_navgrid, geodesic_field

    grids = {}
    for episode in episodes:
        scene = scenes[episode.scene_id]
        grid = grids.get(scene.scene_id)
        if grid is None:
            grid = build_navgrid(scene, cfg.agent_radius)
            grids[scene.scene_id] = grid
        cells = viewpoint_cells(grid, episode.all_viewpoints())
        fld = geodesic_field(grid, cells)
        recomputed = fld.value_at(episode.start_position)
        if abs(recomputed - episode.geodesic) > 1e-6:
            raise MetricsError(
                f"episode {episode.episode_id}: stored shortest length "
                f"{episode.geodesic} != recomputed {recomputed}"
            )


def _cmd_eval(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    scenes = _load_scenes_dir(args.scenes)
    headers = []
    episodes = []
    for dataset_path in args.dataset:
        header, eps = read_dataset(dataset_path)
        headers.append(header)
        episodes.extend(eps)
    profiles = {h.profile.name for h in headers}
    if len(profiles) > 1:
        message = (
            f"refusing to aggregate across profiles {sorted(profiles)}; scores are "
            "not comparable across datasets with different optimal path lengths"
        )
        if not args.force:
            raise MetricsError(message + " (pass --force to override)")
        print(f"warning: {message}", file=sys.stderr)
    for episode in episodes:
        if episode.scene_id not in scenes:
            raise MetricsError(
                f"episode {episode.episode_id} references scene {episode.scene_id!r} "
                f"not present in {args.scenes}"
            )
    cfg = EvalConfig(
        success_mode=SuccessMode(args.mode),
        visibility_mode=VisibilityMode(args.visibility),
        max_steps=args.max_steps,
        r_success=headers[0].r_success if headers else SUCCESS_RADIUS,
    )
    if args.verify_l:
        _verify_shortest_lengths(episodes, scenes, cfg)

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.serve:
        config = SessionConfig(
            episodes=episodes,
            scenes=scenes,
            eval_config=cfg,
            host=args.host,
            port=args.port,
            label=args.label,
            sensors=tuple(args.sensors),
            shuffle_seed=args.shuffle_seed,
            action_timeout=args.timeout,
        )
        from .server import EvalServer

        with EvalServer(config) as server:
            host, port = server.address
            print(f"listening on {host}:{port}", flush=True)
            record = server.serve()
        record_path = out / "session.json"
        record.write(record_path)
        outputs = [record_path]
        report = record.report
    else:
        if args.agent == "stop":
            agent = StopAgent()
        elif args.agent == "random":
            agent = RandomAgent(seed)
        else:
            agent = make_oracle_factory(cfg)
        report = run_local(episodes, scenes, agent, cfg)
        outputs = []
    if report is not None:
        json_path = out / "metrics.json"
        csv_path = out / "metrics.csv"
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        outputs.extend([json_path, csv_path])
        print(
            f"N={report.episode_count} spl={report.spl_mean:.6f} "
            f"success_rate={report.success_rate:.6f} "
            f"mean_final_geodesic={report.mean_final_geodesic:.6f}"
        )
    _write_manifest(
        out,
        "eval",
        {
            "seed": seed,
            "mode": args.mode,
            "agent": args.agent,
            "serve": bool(args.serve),
            "datasets": [str(p) for p in args.dataset],
            "scenes": str(args.scenes),
            "max_steps": args.max_steps,
            "label": args.label,
            "shuffle_seed": args.shuffle_seed,
        },
        inputs=list(args.dataset),
        outputs=outputs,
    )
    return 0


def _cmd_diagnostics(args: argparse.Namespace) -> int:
    from .metrics import variance_diagnostic
    from .scene import SceneGenParams, generate_scene
    from .episodes import HABITAT_PROFILE, generate_episodes
    from .sim import Action, Simulator
    from .metrics import turning_invariance_check

    seed = args.seed if args.seed is not None else _default_seed()
    if not (0.0 < args.prob <= 1.0):
        raise MetricsError("--prob must be in (0, 1]")
    if not (0.0 < args.efficiency <= 1.0):
        raise MetricsError("--c must be in (0, 1]")
    diag = variance_diagnostic(
        c=args.efficiency,
        prob=args.prob,
        episodes_per_trial=args.episodes,
        trials=args.trials,
        seed=seed,
    )
    print("variance diagnostic (near-boundary stopping as a Bernoulli coin):")
    print(f"  trials x episodes      {diag.trials} x {diag.episodes_per_trial}")
    print(f"  empirical mean score   {diag.empirical_mean_spl:.6f}")
    print(f"  empirical variance     {diag.empirical_var_spl:.6f}")
    print(f"  coin variance c^2 p(1-p) {diag.bernoulli_var:.6f}")
    print(f"  printed expression p(1-p) mean^2 {diag.printed_expression:.6f}")

    # Turning invariance on a tiny synthetic episode: straight walk plus stop.
    scene = generate_scene(
        SceneGenParams(width=10.0, height=10.0, room_count=1,
                       objects_per_category_range=(1, 1), cell_size=0.05, seed=seed)
    )
    episodes = generate_episodes([scene], 1, HABITAT_PROFILE, seed=seed)
    episode = episodes[0]

    def factory() -> Simulator:
        from .sim import reset as sim_reset

        sim, _ = sim_reset(scene, episode, max_steps=1000)
        return sim

    base = [Action.MOVE_FORWARD] * 4 + [Action.STOP]
    check = turning_invariance_check(factory, episode, base, args.turn_pairs)
    print("turning invariance (inserted left/right pairs must not change scores):")
    print(f"  p_base={check.p_base:.6f} p_turned={check.p_turned:.6f}")
    print(f"  spl_base={check.spl_base:.6f} spl_turned={check.spl_turned:.6f}")
    print(f"  invariant: {'yes' if check.invariant else 'NO'}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = _resolve_config_defaults(
        list(argv) if argv is not None else sys.argv[1:], parser
    )
    try:
        if args.command == "scene" and args.scene_command == "gen":
            return _cmd_scene_gen(args)
        if args.command == "scene" and args.scene_command == "validate":
            return _cmd_scene_validate(args)
        if args.command == "episodes" and args.episodes_command == "gen":
            return _cmd_episodes_gen(args)
        if args.command == "episodes" and args.episodes_command == "stats":
            return _cmd_episodes_stats(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "diagnostics":
            return _cmd_diagnostics(args)
        parser.error(f"unknown command {args.command!r}")
    except GenerationBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SceneError, EpisodeError, MetricsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
