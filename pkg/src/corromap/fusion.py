"""Projection of labeled camera images onto a 3D map.

Map points are projected into each image through the localization pose and
the lidar-camera extrinsic; occluded points are rejected with a point-splat
z-buffer; surviving points accumulate running-average color and per-class
vote counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (CameraModel, PixelCoord, PointCloud, RigidTransform,
                       project, project_points)
from .trajectory import Trajectory


class DimensionMismatch(ValueError):
    """Image buffers disagree with each other or with the camera model."""


@dataclass
class LabeledImage:
    """RGB frame with a per-pixel class label map.

    pose_map_to_lidar is the map-to-lidar transform at capture time; it may
    be filled in later from a trajectory.
    """

    timestamp: float
    rgb: np.ndarray
    labels: np.ndarray
    pose_map_to_lidar: RigidTransform | None = None

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        self.labels = np.asarray(self.labels)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise DimensionMismatch("rgb must be (H, W, 3)")
        if self.labels.shape != self.rgb.shape[:2]:
            raise DimensionMismatch("label map must match rgb size")


@dataclass
class FusionConfig:
    depth_margin: float = 0.05       # metres a point may sit behind the buffer
    zbuffer_cell: int = 4            # z-buffer cell size in pixels
    point_spacing: float = 0.1       # assumed map point spacing for splatting
    max_splat_cells: int = 8
    max_pose_gap: float = 0.5        # seconds, image-to-trajectory interpolation
    n_classes: int = 2
    background_label: int = 0


@dataclass
class SemanticMap:
    """Point map with running-average colors and per-class observation counts."""

    points: np.ndarray
    colors: np.ndarray
    weights: np.ndarray
    class_counts: np.ndarray
    background_label: int = 0

    @staticmethod
    def from_cloud(cloud: PointCloud, n_classes: int = 2,
                   background_label: int = 0) -> "SemanticMap":
        n = len(cloud)
        return SemanticMap(cloud.points.copy(),
                           np.zeros((n, 3)),
                           np.zeros(n, dtype=np.int64),
                           np.zeros((n, n_classes), dtype=np.int64),
                           background_label)

    def labels(self) -> np.ndarray:
        """Majority class per point; ties and unobserved points go background."""
        best = np.argmax(self.class_counts, axis=1)
        top = np.take_along_axis(self.class_counts, best[:, None], axis=1)[:, 0]
        tied = np.sum(self.class_counts == top[:, None], axis=1) > 1
        out = best.astype(np.int32)
        out[tied | (self.weights == 0)] = self.background_label
        return out

    def to_cloud(self) -> PointCloud:
        return PointCloud(self.points, colors=self.colors,
                          labels=self.labels(), weights=self.weights)


@dataclass
class FusionSummary:
    images_fused: int = 0
    labeled_fraction: float = 0.0
    corrosion_points: int = 0
    visible_per_image: list[int] = field(default_factory=list)


def project_map_point(point: np.ndarray, pose_map_to_lidar: RigidTransform,
                      extrinsic: RigidTransform,
                      camera: CameraModel) -> PixelCoord | None:
    """Pixel for one map point, or None when behind or off the image."""
    pix = project(point, extrinsic @ pose_map_to_lidar, camera)
    if pix is None:
        return None
    u = int(round(pix.u))
    v = int(round(pix.v))
    if u < 0 or u >= camera.width or v < 0 or v >= camera.height:
        return None
    return pix


def _splat_zbuffer(u: np.ndarray, v: np.ndarray, depth: np.ndarray,
                   camera: CameraModel, config: FusionConfig) -> np.ndarray:
    """Min-depth buffer over coarse cells, each point splatted to its
    projected footprint so sparse near surfaces still occlude."""
    cell = max(1, int(config.zbuffer_cell))
    bw = (camera.width + cell - 1) // cell
    bh = (camera.height + cell - 1) // cell
    buf = np.full((bh, bw), np.inf)
    cu = u // cell
    cv = v // cell
    focal = 0.5 * (camera.alpha_x + camera.alpha_y)
    hw = np.ceil(focal * config.point_spacing / (2.0 * np.maximum(depth, 1e-6) * cell))
    hw = np.minimum(hw, config.max_splat_cells).astype(np.int64)
    for h in np.unique(hw):
        sel = hw == h
        scu, scv, sd = cu[sel], cv[sel], depth[sel]
        for dy in range(-h, h + 1):
            yy = np.clip(scv + dy, 0, bh - 1)
            for dx in range(-h, h + 1):
                xx = np.clip(scu + dx, 0, bw - 1)
                np.minimum.at(buf, (yy, xx), sd)
    return buf


def fuse_image(smap: SemanticMap, image: LabeledImage, camera: CameraModel,
               extrinsic: RigidTransform, config: FusionConfig) -> int:
    """Fuse one image into the map in place.

    Args:
        smap: map to update.
        image: labeled frame; pose_map_to_lidar must be set.
        camera: intrinsics matching the image size.
        extrinsic: lidar-to-camera transform.
        config: occlusion and class parameters.

    Returns:
        Number of map points updated by this image.

    Raises:
        DimensionMismatch: image size differs from the camera model, or an
            image label is outside the configured class range.
    """
    if image.pose_map_to_lidar is None:
        raise ValueError("image has no pose")
    if image.rgb.shape[0] != camera.height or image.rgb.shape[1] != camera.width:
        raise DimensionMismatch(
            f"image {image.rgb.shape[1]}x{image.rgb.shape[0]} vs camera "
            f"{camera.width}x{camera.height}")
    uv, depth, valid = project_points(smap.points,
                                      extrinsic @ image.pose_map_to_lidar, camera)
    u = np.full(valid.shape, -1, dtype=np.int64)
    v = np.full(valid.shape, -1, dtype=np.int64)
    uvr = np.round(uv)
    # grazing-depth points project to huge or non-finite pixels; drop before cast
    ok = valid & np.isfinite(uvr).all(axis=1) & (np.abs(uvr) < 2 ** 31).all(axis=1)
    u[ok] = uvr[ok, 0].astype(np.int64)
    v[ok] = uvr[ok, 1].astype(np.int64)
    inb = (u >= 0) & (u < camera.width) & (v >= 0) & (v < camera.height)
    if not np.any(inb):
        return 0

    buf = _splat_zbuffer(u[inb], v[inb], depth[inb], camera, config)
    cell = max(1, int(config.zbuffer_cell))
    visible = np.zeros_like(inb)
    visible[inb] = depth[inb] <= buf[v[inb] // cell, u[inb] // cell] + config.depth_margin

    idx = np.nonzero(visible)[0]
    if idx.size == 0:
        return 0
    pix_rgb = image.rgb[v[idx], u[idx]].astype(float)
    pix_lab = np.asarray(image.labels[v[idx], u[idx]], dtype=np.int64)
    if pix_lab.min() < 0 or pix_lab.max() >= smap.class_counts.shape[1]:
        raise DimensionMismatch("image label outside configured class range")
    w = smap.weights[idx].astype(float)[:, None]
    smap.colors[idx] = (smap.colors[idx] * w + pix_rgb) / (w + 1.0)
    smap.weights[idx] += 1
    smap.class_counts[idx, pix_lab] += 1
    return int(idx.size)


def fuse_sequence(map_cloud: PointCloud, images: list[LabeledImage],
                  traj: Trajectory, camera: CameraModel,
                  extrinsic: RigidTransform,
                  config: FusionConfig | None = None
                  ) -> tuple[SemanticMap, FusionSummary]:
    """Fuse an image sequence, interpolating poses from the trajectory.

    Raises:
        PoseGapTooLarge: an image timestamp falls outside the trajectory or
            in a sampling gap wider than config.max_pose_gap.
    """
    config = config or FusionConfig()
    smap = SemanticMap.from_cloud(map_cloud, config.n_classes,
                                  config.background_label)
    summary = FusionSummary()
    for image in images:
        pose = traj.interpolate(image.timestamp, max_gap=config.max_pose_gap)
        image.pose_map_to_lidar = pose.inverse()
        n = fuse_image(smap, image, camera, extrinsic, config)
        summary.visible_per_image.append(n)
        summary.images_fused += 1
    labels = smap.labels()
    summary.labeled_fraction = float(np.mean(smap.weights > 0)) if len(smap.weights) else 0.0
    summary.corrosion_points = int(np.sum(labels != smap.background_label))
    return smap, summary
