"""Command-line entry point: ``owl run | genworld | score | export-map``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .artifacts import read_reports
from .fileio import FileFormatError, write_ply
from .mapping import load_map_dump
from .mission import (
    ConfigError,
    ExitCode,
    MissionInvariantError,
    load_config,
    run_mission,
    score_artifacts,
)
from .world import TunnelSpec, WorldError, generate_tunnel_world, load_world, save_world

log = logging.getLogger("owl")


def _cmd_run(args) -> int:
    overrides = {"seed": args.seed} if args.seed is not None else None
    cfg = load_config(args.config, overrides)
    out = Path(args.out) if args.out else Path(cfg.output_dir)
    try:
        result = run_mission(cfg, out)
    except MissionInvariantError as exc:
        log.error("invariant violation: %s (state dump in %s)", exc, out / "state_dump.json")
        return ExitCode.INVARIANT_VIOLATION
    m = result.metrics
    print(f"outcome={m.outcome} distance={m.travelled_distance:.1f}m flight_time={m.flight_time:.1f}s "
          f"explored={m.explored_fraction:.3f} collisions={m.collision_count} "
          f"home_distance={m.final_distance_to_home:.2f}m wall={result.wall_clock:.1f}s")
    print(f"outputs written to {result.output_dir}")
    return m.exit_code


def _cmd_genworld(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read spec {args.spec}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.spec}: invalid JSON ({exc})") from None
    try:
        world = generate_tunnel_world(TunnelSpec.from_dict(data), args.seed)
    except (TypeError, WorldError) as exc:
        raise ConfigError(f"world spec: {exc}") from None
    save_world(world, args.out)
    print(f"wrote {args.out}: dims={world.dims} air_voxels={world.air_count()} artifacts={len(world.artifacts)}")
    return ExitCode.SUCCESS


def _cmd_score(args) -> int:
    try:
        reports = read_reports(args.reports)
        world = load_world(args.world)
        score = score_artifacts(reports, world.artifacts, args.tol)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps({k: v for k, v in score.to_json().items() if k != "matches"}, sort_keys=True))
    return ExitCode.SUCCESS


def _cmd_export_map(args) -> int:
    run = Path(args.run)
    try:
        dump = load_map_dump(run / "map.owlmap")
    except (OSError, FileFormatError) as exc:
        raise ConfigError(f"cannot read map from {run}: {exc}") from None
    pts = dump.occupied_centers()
    out = Path(args.out) if args.out else run / f"map.{args.format}"
    if args.format == "ply":
        write_ply(out, pts)
    else:
        with open(out, "w") as fh:
            fh.write("x,y,z\n")
            for x, y, z in pts:
                fh.write(f"{x:.6f},{y:.6f},{z:.6f}\n")
    print(f"wrote {len(pts)} occupied voxels to {out}")
    return ExitCode.SUCCESS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="owl", description="Subterranean aerial exploration simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one mission")
    p.add_argument("--config", required=True, help="mission config JSON (or a bundled scenario name)")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("genworld", help="generate a tunnel world file")
    p.add_argument("--spec", required=True, help="generator spec JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output .owlworld path")
    p.set_defaults(func=_cmd_genworld)

    p = sub.add_parser("score", help="score artifact reports against a world's ground truth")
    p.add_argument("--reports", required=True, help="artifacts.jsonl")
    p.add_argument("--world", required=True, help=".owlworld with ground truth")
    p.add_argument("--tol", type=float, default=2.0, help="match tolerance (m)")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("export-map", help="export the occupied voxels of a run's map")
    p.add_argument("--run", required=True, help="run output directory")
    p.add_argument("--format", choices=("ply", "csv"), default="ply")
    p.add_argument("--out", default=None, help="output file (default: <run>/map.<format>)")
    p.set_defaults(func=_cmd_export_map)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return int(args.func(args))
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return int(ExitCode.CONFIG_ERROR)


if __name__ == "__main__":
    sys.exit(main())
