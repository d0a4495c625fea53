"""Stage orchestration over a run directory.

Each stage reads its inputs from and writes its artifacts into a fixed
layout (maps/, trajectories/, images/, reports/, scans/), so later stages
and external tools find everything by convention.  A manifest records the
config hash, per-stage wall time, and the SHA-256 of every artifact.
"""

from __future__ import annotations

import hashlib
import time
from pathlib import Path

import numpy as np

from . import fileio
from .config import PipelineConfig, config_hash
from .evaluation import ape, rpe
from .fusion import LabeledImage, fuse_sequence
from .localization import LocalizationLost, localize_sequence
from .simulator import (default_loop_waypoints, default_rig, default_room,
                        generate_trajectory, render_labels,
                        simulate_scan_sequence)
from .slam import build_map

SUBDIRS = ("maps", "trajectories", "images", "reports", "scans")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunDirectory:
    def __init__(self, root):
        self.root = Path(root)
        for sub in SUBDIRS:
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def path(self, relative: str) -> Path:
        return self.root / relative


def _stage_simulate(run: RunDirectory, config: PipelineConfig) -> None:
    sim = config.simulator
    scene = (fileio.read_scene(sim.scene_file) if sim.scene_file
             else default_room(patch=sim.corrosion_patch))
    rig = fileio.read_rig(sim.rig_file) if sim.rig_file else default_rig()
    if sim.waypoints_file:
        waypoints, speed = fileio.read_waypoints(sim.waypoints_file)
    else:
        waypoints, speed = default_loop_waypoints(), sim.speed
    traj = generate_trajectory(waypoints, speed, rig.lidar.rate)
    scans = simulate_scan_sequence(scene, rig, traj,
                                   seed=config.seed if sim.noise else None)
    fileio.write_scan_sequence(run.path("scans"),
                               [(s.timestamp, s.to_cloud()) for s in scans])
    fileio.write_tum(run.path("trajectories/groundtruth.tum"), traj)
    fileio.write_transform(run.path("extrinsic.txt"), rig.extrinsic)
    fileio.write_camera(run.path("camera.txt"), rig.camera)

    rgb_dir = run.path("images/rgb")
    mask_dir = run.path("images/mask")
    rgb_dir.mkdir(exist_ok=True)
    mask_dir.mkdir(exist_ok=True)
    stride = max(sim.image_stride, 1)
    for ts, pose in list(zip(traj.timestamps, traj.poses))[::stride]:
        labeled = render_labels(scene, rig, pose, ts)
        stem = fileio.FLOAT_FMT % ts
        fileio.write_image(rgb_dir / f"{stem}.png", labeled.rgb)
        fileio.write_mask(mask_dir / f"{stem}.png", labeled.labels > 0)


def _stage_slam(run: RunDirectory, config: PipelineConfig) -> None:
    scans = fileio.read_scan_sequence(run.path("scans"))
    result = build_map(scans, config.slam)
    fileio.write_ply(run.path("maps/map.ply"), result.map_cloud, binary=True)
    fileio.write_tum(run.path("trajectories/slam.tum"), result.trajectory)
    with open(run.path("reports/slam.txt"), "w") as f:
        f.write(f"scans = {len(scans)}\n")
        f.write(f"map_points = {len(result.map_cloud)}\n")
        f.write(f"loop_edges = {result.loop_edges}\n")
        f.write(f"chi2 = {fileio.FLOAT_FMT % result.chi2}\n")


def _stage_localize(run: RunDirectory, config: PipelineConfig) -> None:
    map_path = run.path("maps/map.ply")
    if not map_path.exists():
        raise StageError("localize", f"missing map {map_path}")
    # the initial pose must live in the map's frame: the slam trajectory when
    # the map came from the slam stage, ground truth for an external map
    init_path = run.path("trajectories/slam.tum")
    if not init_path.exists():
        init_path = run.path("trajectories/groundtruth.tum")
    if not init_path.exists():
        raise StageError("localize", f"missing initial pose source {init_path}")
    map_cloud = fileio.read_ply(map_path)
    scans = fileio.read_scan_sequence(run.path("scans"))
    initial = fileio.read_tum(init_path).poses[0]
    def write_outputs(traj, diags):
        fileio.write_tum(run.path("trajectories/localized.tum"), traj)
        with open(run.path("reports/localization_diag.csv"), "w") as f:
            f.write("timestamp,fitness,cov_trace\n")
            for d in diags:
                f.write(f"{fileio.FLOAT_FMT % d.timestamp},"
                        f"{fileio.FLOAT_FMT % d.fitness},"
                        f"{fileio.FLOAT_FMT % d.cov_trace}\n")

    try:
        traj, diags = localize_sequence(scans, map_cloud, initial,
                                        config.localization)
    except LocalizationLost as exc:
        write_outputs(exc.trajectory, exc.diagnostics)
        raise StageError("localize", str(exc)) from exc
    write_outputs(traj, diags)


def _load_labeled_images(rgb_dir: Path, mask_dir: Path) -> list[LabeledImage]:
    images = []
    for rgb_path in sorted(rgb_dir.glob("*.png")):
        mask_path = mask_dir / rgb_path.name
        if not mask_path.exists():
            continue
        rgb = fileio.read_image(rgb_path)
        mask = fileio.read_mask(mask_path)
        images.append(LabeledImage(float(rgb_path.stem), rgb,
                                   mask.astype(np.int32)))
    images.sort(key=lambda im: im.timestamp)
    return images


def _stage_fuse(run: RunDirectory, config: PipelineConfig) -> None:
    map_path = run.path("maps/map.ply")
    if not map_path.exists():
        raise StageError("fuse", f"missing map {map_path}")
    traj_path = run.path("trajectories/localized.tum")
    if not traj_path.exists():
        traj_path = run.path("trajectories/slam.tum")
    if not traj_path.exists():
        raise StageError("fuse", "no trajectory to project with")
    for name in ("camera.txt", "extrinsic.txt"):
        if not run.path(name).exists():
            raise StageError("fuse", f"missing {name}")
    images = _load_labeled_images(run.path("images/rgb"), run.path("images/mask"))
    if not images:
        raise StageError("fuse", "no image/mask pairs")
    map_cloud = fileio.read_ply(map_path)
    traj = fileio.read_tum(traj_path)
    camera = fileio.read_camera(run.path("camera.txt"))
    extrinsic = fileio.read_transform(run.path("extrinsic.txt"))
    semantic, summary = fuse_sequence(map_cloud, images, traj, camera,
                                      extrinsic, config.fusion)
    fileio.write_ply(run.path("maps/semantic.ply"), semantic.to_cloud(),
                     binary=True)
    with open(run.path("reports/fusion.txt"), "w") as f:
        f.write(f"images_fused = {summary.images_fused}\n")
        f.write(f"labeled_fraction = "
                f"{fileio.FLOAT_FMT % summary.labeled_fraction}\n")
        f.write(f"corrosion_points = {summary.corrosion_points}\n")


def _stage_evaluate(run: RunDirectory, config: PipelineConfig) -> None:
    gt_path = run.path("trajectories/groundtruth.tum")
    if not gt_path.exists():
        raise StageError("evaluate", f"missing reference {gt_path}")
    ref = fileio.read_tum(gt_path)
    ev = config.evaluation
    rows = []
    for name in ("slam", "localized"):
        est_path = run.path(f"trajectories/{name}.tum")
        if not est_path.exists():
            continue
        est = fileio.read_tum(est_path)
        a = ape(est, ref, ev.max_dt, align=ev.align)
        r = rpe(est, ref, ev.delta, ev.max_dt)
        rows.append((name, a, r))
    if not rows:
        raise StageError("evaluate", "no estimated trajectories found")
    with open(run.path("reports/evaluation.txt"), "w") as f:
        for name, a, r in rows:
            f.write(f"{name} ape_mean = {fileio.FLOAT_FMT % a.mean}\n")
            f.write(f"{name} ape_rms = {fileio.FLOAT_FMT % a.rms}\n")
            f.write(f"{name} ape_max = {fileio.FLOAT_FMT % a.max}\n")
            f.write(f"{name} rpe_mean = {fileio.FLOAT_FMT % r.mean}\n")
            f.write(f"{name} rpe_rms = {fileio.FLOAT_FMT % r.rms}\n")


_STAGE_FUNCS = {
    "simulate": _stage_simulate,
    "slam": _stage_slam,
    "localize": _stage_localize,
    "fuse": _stage_fuse,
    "evaluate": _stage_evaluate,
}


def run_pipeline(config: PipelineConfig, run_dir) -> dict:
    """Execute the configured stages in order under run_dir.

    Returns:
        Manifest dict: config hash, per-stage seconds, artifact hashes.

    Raises:
        StageError: first failing stage; earlier artifacts are kept and
            the manifest written so far is flushed.
    """
    run = RunDirectory(run_dir)
    manifest: dict = {"config": config_hash(config), "inputs": {},
                      "stages": {}, "outputs": {}}
    sim = config.simulator
    for name in (sim.scene_file, sim.rig_file, sim.waypoints_file):
        if name and Path(name).exists():
            manifest["inputs"][name] = _sha256(Path(name))

    def flush():
        manifest["outputs"] = {
            str(p.relative_to(run.root)): _sha256(p)
            for p in sorted(run.root.rglob("*"))
            if p.is_file() and p.name != "manifest.txt"}
        lines = [f"config = {manifest['config']}"]
        for name in sorted(manifest["inputs"]):
            lines.append(f"input {name} = {manifest['inputs'][name]}")
        for name, secs in manifest["stages"].items():
            lines.append(f"stage {name} seconds = {secs:.3f}")
        for rel in sorted(manifest["outputs"]):
            lines.append(f"output {rel} = {manifest['outputs'][rel]}")
        run.path("manifest.txt").write_text("\n".join(lines) + "\n")

    for stage in config.stages:
        fn = _STAGE_FUNCS[stage]
        if config.verbosity:
            print(f"[{stage}] running", flush=True)
        t0 = time.perf_counter()
        try:
            fn(run, config)
        except StageError:
            flush()
            raise
        except Exception as exc:
            flush()
            raise StageError(stage, str(exc)) from exc
        manifest["stages"][stage] = time.perf_counter() - t0
    flush()
    return manifest
