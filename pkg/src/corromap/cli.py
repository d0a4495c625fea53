"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 stage/algorithm failure,
3 file or parse error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .calibration import calibrate_extrinsics, calibrate_intrinsics
from .config import (ConfigError, PipelineConfig, read_pipeline_config,
                     write_pipeline_config)
from .evaluation import ape, mask_metrics, rpe
from .fileio import ParseError
from .fusion import fuse_sequence
from .localization import LocalizationLost, localize_sequence
from .pipeline import (RunDirectory, StageError, _load_labeled_images,
                       _stage_simulate, run_pipeline)
from .slam import build_map

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE = 2
EXIT_IO = 3

FMT = fileio.FLOAT_FMT


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; the contract here is 1
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _config_from(path: str | None) -> PipelineConfig:
    return read_pipeline_config(path) if path else PipelineConfig()


def _cmd_simulate(args) -> int:
    config = _config_from(args.config)
    config.seed = args.seed
    if args.scene:
        config.simulator.scene_file = args.scene
    if args.rig:
        config.simulator.rig_file = args.rig
    if args.waypoints:
        config.simulator.waypoints_file = args.waypoints
    _stage_simulate(RunDirectory(args.out), config)
    print(f"wrote simulated sequence under {args.out}")
    return EXIT_OK


def _cmd_calibrate_intrinsics(args) -> int:
    views = fileio.read_correspondences(args.corr)
    initial = fileio.read_camera(args.init)
    result = calibrate_intrinsics(views, initial)
    fileio.write_camera(args.out, result.camera)
    print(f"views = {len(views)}")
    print(f"rms_px = {FMT % result.rms_error}")
    print(f"converged = {result.converged} after {result.n_iter} iterations")
    return EXIT_OK if result.converged else EXIT_STAGE


def _read_camera_points(path):
    """Rows `pose_id x y z`; exactly four points per pose."""
    rows: dict[int, list[list[float]]] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            parts = s.split()
            if len(parts) != 4:
                raise ParseError("expected `pose_id x y z`", path, lineno)
            try:
                rows.setdefault(int(parts[0]), []).append(
                    [float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    quads = []
    for pid in sorted(rows):
        if len(rows[pid]) != 4:
            raise ParseError(f"pose {pid} has {len(rows[pid])} points, need 4",
                             path)
        quads.append(rows[pid])
    if not quads:
        raise ParseError("no camera points", path)
    return np.array(quads)


def _read_lidar_poses(root) -> list[list]:
    """Scans grouped per target pose: one subdirectory each, or one flat dir."""
    root = Path(root)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if subdirs:
        return [fileio.read_scan_dir(d) for d in subdirs]
    return [fileio.read_scan_dir(root)]


def _cmd_calibrate_extrinsics(args) -> int:
    frames = _read_lidar_poses(args.lidar)
    cam_points = _read_camera_points(args.cam_points)
    target = fileio.read_target_spec(args.target) if args.target else None
    config = _config_from(args.config).calibration
    transform, diag = calibrate_extrinsics(frames, cam_points, target, config)
    fileio.write_transform(args.out, transform)
    print(f"poses_used = {diag.poses_used} / {diag.poses_total}")
    print(f"frames_accepted = {diag.frames_accepted}")
    print(f"frames_rejected = {diag.frames_rejected}")
    print(f"registration_rms_m = {FMT % diag.registration_rms}")
    return EXIT_OK


def _cmd_slam(args) -> int:
    scans = fileio.read_scan_sequence(args.scans)
    result = build_map(scans, _config_from(args.config).slam)
    fileio.write_ply(args.map_out, result.map_cloud, binary=True)
    fileio.write_tum(args.traj_out, result.trajectory)
    print(f"scans = {len(scans)}")
    print(f"map_points = {len(result.map_cloud)}")
    print(f"loop_edges = {len(result.loop_edges)}")
    print(f"chi2 = {FMT % result.chi2}")
    return EXIT_OK


def _write_diag(stream, diags) -> None:
    stream.write("timestamp,fitness,cov_trace\n")
    for d in diags:
        stream.write(f"{FMT % d.timestamp},{FMT % d.fitness},"
                     f"{FMT % d.cov_trace}\n")


def _cmd_localize(args) -> int:
    map_cloud = fileio.read_ply(args.map)
    scans = fileio.read_scan_sequence(args.scans)
    initial = fileio.read_transform(args.init)
    config = _config_from(args.config).localization

    def emit(diags):
        if args.diag:
            with open(args.diag, "w") as f:
                _write_diag(f, diags)
        else:
            _write_diag(sys.stdout, diags)

    try:
        traj, diags = localize_sequence(scans, map_cloud, initial, config)
    except LocalizationLost as exc:
        fileio.write_tum(args.traj_out, exc.trajectory)
        emit(exc.diagnostics)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    fileio.write_tum(args.traj_out, traj)
    emit(diags)
    return EXIT_OK


def _cmd_fuse(args) -> int:
    map_cloud = fileio.read_ply(args.map)
    traj = fileio.read_tum(args.traj)
    camera = fileio.read_camera(args.camera)
    extrinsic = fileio.read_transform(args.extrinsic)
    images = _load_labeled_images(Path(args.images), Path(args.masks))
    if not images:
        raise ParseError("no image/mask pairs by shared stem", args.images)
    semantic, summary = fuse_sequence(map_cloud, images, traj, camera,
                                      extrinsic, _config_from(args.config).fusion)
    fileio.write_ply(args.out, semantic.to_cloud(), binary=True)
    print(f"images_fused = {summary.images_fused}")
    print(f"labeled_fraction = {FMT % summary.labeled_fraction}")
    print(f"corrosion_points = {summary.corrosion_points}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    if args.metric in ("ape", "rpe"):
        est = fileio.read_tum(args.est)
        ref = fileio.read_tum(args.ref)
        if args.metric == "ape":
            series = ape(est, ref, args.max_dt, align=args.align)
        else:
            series = rpe(est, ref, args.delta, args.max_dt)
        with open(args.out, "w") as f:
            f.write("index,error_m\n")
            for i, v in enumerate(series.values):
                f.write(f"{i},{FMT % v}\n")
            f.write(f"mean,{FMT % series.mean}\n")
        print(f"{args.metric}_mean_m = {FMT % series.mean}")
        print(f"{args.metric}_rms_m = {FMT % series.rms}")
        print(f"{args.metric}_max_m = {FMT % series.max}")
        return EXIT_OK

    pred_dir, truth_dir = Path(args.pred), Path(args.truth)
    stems = sorted(p.stem for p in pred_dir.glob("*.png")
                   if (truth_dir / p.name).exists())
    if not stems:
        raise ParseError("no matching mask pairs", args.pred)
    rows = []
    for stem in stems:
        m = mask_metrics(fileio.read_mask(pred_dir / f"{stem}.png"),
                         fileio.read_mask(truth_dir / f"{stem}.png"))
        rows.append((stem, m))
    with open(args.out, "w") as f:
        f.write("name,precision,recall,iou,f1\n")
        for stem, m in rows:
            f.write(f"{stem},{FMT % m.precision},{FMT % m.recall},"
                    f"{FMT % m.iou},{FMT % m.f1}\n")
        for key in ("precision", "recall", "iou", "f1"):
            mean = float(np.mean([getattr(m, key) for _, m in rows]))
            f.write(f"mean_{key},{FMT % mean}\n")
            print(f"mean_{key} = {FMT % mean}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _config_from(args.config)
    manifest = run_pipeline(config, args.out)
    print(f"config = {manifest['config']}")
    for name, secs in manifest["stages"].items():
        print(f"stage {name} seconds = {secs:.3f}")
    print(f"artifacts = {len(manifest['outputs'])}")
    return EXIT_OK


def _cmd_dump_config(args) -> int:
    write_pipeline_config(args.out, _config_from(args.config))
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="corromap",
                  description="Semantic-geometric corrosion mapping pipeline.")
    sub = top.add_subparsers(dest="command", required=True,
                             parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic sequence")
    p.add_argument("--scene", help="scene file (default: built-in room)")
    p.add_argument("--rig", help="rig file (default: built-in rig)")
    p.add_argument("--waypoints", help="waypoint file (default: room loop)")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate-intrinsics",
                       help="camera intrinsics from planar-target views")
    p.add_argument("--corr", required=True,
                   help="correspondence file: view_id board_x board_y board_z u v")
    p.add_argument("--init", required=True, help="initial camera file")
    p.add_argument("--out", required=True, help="refined camera file")
    p.set_defaults(func=_cmd_calibrate_intrinsics)

    p = sub.add_parser("calibrate-extrinsics",
                       help="lidar-to-camera transform from target scans")
    p.add_argument("--lidar", required=True,
                   help="scan dir (.npz), one subdirectory per target pose")
    p.add_argument("--cam-points", required=True, dest="cam_points",
                   help="camera-frame hole centres: pose_id x y z")
    p.add_argument("--target", help="target spec file (default plate)")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--out", required=True, help="output transform file")
    p.set_defaults(func=_cmd_calibrate_extrinsics)

    p = sub.add_parser("slam", help="build a map from a scan sequence")
    p.add_argument("--scans", required=True, help="scan directory")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--map-out", required=True, dest="map_out")
    p.add_argument("--traj-out", required=True, dest="traj_out")
    p.set_defaults(func=_cmd_slam)

    p = sub.add_parser("localize", help="track scans against an existing map")
    p.add_argument("--map", required=True, help="map PLY")
    p.add_argument("--scans", required=True, help="scan directory")
    p.add_argument("--init", required=True, help="initial pose transform file")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--traj-out", required=True, dest="traj_out")
    p.add_argument("--diag", help="diagnostics CSV (default: stdout)")
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("fuse", help="project labels and color onto the map")
    p.add_argument("--map", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--extrinsic", required=True)
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--out", required=True, help="semantic map PLY")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("evaluate", help="trajectory and mask metrics")
    p.add_argument("metric", choices=("ape", "rpe", "masks"))
    p.add_argument("--est", help="estimated trajectory (ape/rpe)")
    p.add_argument("--ref", help="reference trajectory (ape/rpe)")
    p.add_argument("--align", action="store_true",
                   help="rigidly align before ape")
    p.add_argument("--delta", type=int, default=1, help="rpe pair offset")
    p.add_argument("--max-dt", type=float, default=0.02, dest="max_dt")
    p.add_argument("--pred", help="predicted mask directory (masks)")
    p.add_argument("--truth", help="reference mask directory (masks)")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="run the configured pipeline stages")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("dump-config",
                       help="write the fully-defaulted config file")
    p.add_argument("--config", help="base config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dump_config)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:        # --help
        return int(exc.code or 0)

    try:
        if args.command == "evaluate":
            needed = (("est", "ref") if args.metric in ("ape", "rpe")
                      else ("pred", "truth"))
            missing = [f"--{n}" for n in needed if getattr(args, n) is None]
            if missing:
                raise UsageError(
                    f"corromap evaluate {args.metric}: error: "
                    f"{', '.join(missing)} required")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ParseError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RuntimeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
