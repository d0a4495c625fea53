"""NDT scan-to-scan odometry with pose-graph back-end.

Every scan becomes a graph node.  Consecutive scans are registered by NDT
to form odometry edges (information scaled by match fitness); proximity
revisits with a large index gap are verified by NDT and added as loop
closures; optional ground-plane constraints regularize height, roll, and
pitch.  The final map is the union of all scans under optimized poses,
voxel-downsampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import fit_plane_ransac, DegenerateInput
from .geometry import PointCloud, RigidTransform
from .ndt import EmptyOverlap, MatchResult, NdtGrid, build_ndt, ndt_match
from .posegraph import (GroundConstraint, PoseEdge, PoseGraph, optimize_graph)
from .trajectory import Trajectory


class MonotonicityViolation(ValueError):
    """Scan timestamps must be strictly increasing."""


@dataclass
class SlamConfig:
    cell_size: float = 1.0
    min_points_per_cell: int = 5
    match_max_iter: int = 30
    match_tol: float = 1e-6
    scan_voxel: float = 0.15          # downsampling before matching
    map_voxel: float = 0.1            # final map resolution
    odom_sigma_t: float = 0.005       # base odometry noise, metres
    odom_sigma_r: float = 0.002       # base odometry noise, radians
    loop_enabled: bool = True
    loop_min_gap: int = 40            # minimum index separation
    loop_distance: float = 0.6        # candidate search radius, metres
    loop_min_fitness: float = 0.3
    ground_enabled: bool = True
    ground_stride: int = 5
    ground_band: tuple = (-2.5, -0.8)  # sensor-frame z band of floor points
    ground_iterations: int = 120
    ground_inlier_dist: float = 0.03
    ground_min_inliers: int = 150
    ground_max_tilt: float = 0.35      # max angle between plane normal and +z
    ground_sigma_n: float = 0.02
    ground_sigma_d: float = 0.02
    optimize_max_iter: int = 30
    optimize_tol: float = 1e-8
    seed: int = 0


@dataclass
class SlamResult:
    map_cloud: PointCloud
    trajectory: Trajectory
    graph: PoseGraph
    chi2: float
    odometry: list[MatchResult] = field(default_factory=list)
    loop_edges: int = 0
    ground_constraints: int = 0


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Centroid per voxel; colors weight-averaged, labels by weighted majority.

    Output weights are the summed input weights (counts when absent), so
    repeated downsampling keeps averages correct.
    """
    if voxel <= 0.0:
        raise ValueError("voxel size must be positive")
    pts = cloud.points
    if pts.shape[0] == 0:
        return PointCloud(pts.copy())
    idx = np.floor(pts / voxel).astype(np.int64)
    # pack to one key per voxel for grouping
    off = idx.min(axis=0)
    idx = idx - off
    dims = idx.max(axis=0).astype(np.int64) + 1
    keys = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]
    uniq, inverse = np.unique(keys, return_inverse=True)
    c = uniq.size
    w = cloud.weights if cloud.weights is not None else \
        np.ones(pts.shape[0], dtype=np.int64)
    wsum = np.zeros(c)
    np.add.at(wsum, inverse, w.astype(float))
    centroid = np.zeros((c, 3))
    np.add.at(centroid, inverse, pts)
    counts = np.zeros(c)
    np.add.at(counts, inverse, 1.0)
    centroid /= counts[:, None]

    colors = None
    if cloud.colors is not None:
        colors = np.zeros((c, 3))
        np.add.at(colors, inverse, cloud.colors * w[:, None].astype(float))
        colors /= wsum[:, None]
    labels = None
    if cloud.labels is not None:
        values = np.unique(cloud.labels)
        votes = np.zeros((c, values.size))
        for k, val in enumerate(values):
            sel = cloud.labels == val
            np.add.at(votes[:, k], inverse[sel], w[sel].astype(float))
        labels = values[np.argmax(votes, axis=1)].astype(np.int32)
    return PointCloud(centroid, colors=colors, labels=labels,
                      weights=wsum.astype(np.int64))


def _odometry_information(config: SlamConfig, fitness: float) -> np.ndarray:
    scale = max(fitness, 0.1)
    info = np.zeros((6, 6))
    info[:3, :3] = np.eye(3) * (scale / config.odom_sigma_t ** 2)
    info[3:, 3:] = np.eye(3) * (scale / config.odom_sigma_r ** 2)
    return info


def _ground_observation(cloud: PointCloud, config: SlamConfig,
                        seed: int) -> tuple[np.ndarray, float] | None:
    z = cloud.points[:, 2]
    band = (z >= config.ground_band[0]) & (z <= config.ground_band[1])
    pts = cloud.points[band]
    if pts.shape[0] < config.ground_min_inliers:
        return None
    try:
        plane, inliers = fit_plane_ransac(pts, config.ground_iterations,
                                          config.ground_inlier_dist, seed)
    except DegenerateInput:
        return None
    if inliers.size < config.ground_min_inliers:
        return None
    n = plane.normal if plane.normal[2] >= 0.0 else -plane.normal
    d = plane.offset if plane.normal[2] >= 0.0 else -plane.offset
    if np.arccos(np.clip(n[2], -1.0, 1.0)) > config.ground_max_tilt:
        return None
    return n, d


def build_map(scans: list[tuple[float, PointCloud]],
              config: SlamConfig | None = None) -> SlamResult:
    """Run the full SLAM chain over timestamped scans.

    Args:
        scans: (timestamp, sensor-frame cloud) pairs, strictly increasing
            timestamps.
        config: tuning; defaults are sized for room-scale scenes.

    Returns:
        SlamResult with the voxel map, optimized trajectory (first scan
        anchored at identity), and the pose graph.

    Raises:
        MonotonicityViolation: timestamps not strictly increasing.
    """
    config = config or SlamConfig()
    if not scans:
        raise ValueError("no scans")
    times = np.array([t for t, _ in scans], dtype=float)
    if np.any(np.diff(times) <= 0.0):
        raise MonotonicityViolation("scan timestamps must strictly increase")
    clouds = [c for _, c in scans]
    ds = [voxel_downsample(c, config.scan_voxel) for c in clouds]

    grids: dict[int, NdtGrid] = {}

    def grid_of(k: int) -> NdtGrid:
        if k not in grids:
            grids[k] = build_ndt(clouds[k], config.cell_size,
                                 config.min_points_per_cell)
        return grids[k]

    n = len(scans)
    poses = [RigidTransform.identity()]
    edges = []
    odometry: list[MatchResult] = []
    rel_prev = RigidTransform.identity()
    for k in range(1, n):
        res = ndt_match(ds[k], grid_of(k - 1), rel_prev,
                        config.match_max_iter, config.match_tol)
        odometry.append(res)
        rel = res.transform
        poses.append(poses[k - 1] @ rel)
        edges.append(PoseEdge(k - 1, k, rel,
                              _odometry_information(config, res.fitness)))
        rel_prev = rel
        if k - 2 in grids:
            del grids[k - 2]  # odometry only ever needs the previous grid

    loop_edges = 0
    if config.loop_enabled and n > config.loop_min_gap:
        positions = np.array([p.t for p in poses])
        for j in range(n):
            cand = np.arange(0, j - config.loop_min_gap)
            if cand.size == 0:
                continue
            dist = np.linalg.norm(positions[cand] - positions[j], axis=1)
            best = int(np.argmin(dist))
            if dist[best] > config.loop_distance:
                continue
            i = int(cand[best])
            initial = poses[i].inverse() @ poses[j]
            try:
                res = ndt_match(ds[j], grid_of(i), initial,
                                config.match_max_iter, config.match_tol)
            except EmptyOverlap:
                continue
            if res.converged and res.fitness >= config.loop_min_fitness:
                edges.append(PoseEdge(i, j, res.transform,
                                      _odometry_information(config, res.fitness)))
                loop_edges += 1

    constraints = []
    if config.ground_enabled:
        reference = None
        for k in range(0, n, max(config.ground_stride, 1)):
            obs = _ground_observation(clouds[k], config, config.seed + k)
            if obs is None:
                continue
            n_obs, d_obs = obs
            if reference is None:
                # first detection defines the global plane in the map frame
                Rk = poses[k].rotation
                gn = Rk @ n_obs
                gd = d_obs + gn @ poses[k].t
                reference = (gn, gd)
            info = np.diag([1.0 / config.ground_sigma_n ** 2,
                            1.0 / config.ground_sigma_n ** 2,
                            1.0 / config.ground_sigma_d ** 2])
            constraints.append(GroundConstraint(k, n_obs, d_obs, info,
                                                reference[0], reference[1]))

    graph = PoseGraph(poses, edges, constraints)
    result = optimize_graph(graph, config.optimize_max_iter,
                            config.optimize_tol)
    final_poses = result.graph.nodes
    world = [c.transformed(p) for c, p in zip(clouds, final_poses)]
    map_cloud = voxel_downsample(PointCloud.concat(world), config.map_voxel)
    return SlamResult(map_cloud, Trajectory(times, final_poses), result.graph,
                      result.chi2, odometry, loop_edges, len(constraints))
