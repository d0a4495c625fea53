"""Corrosion mapping toolkit: lidar-camera calibration, NDT SLAM,
UKF map-based localization, and semantic label fusion, plus the
simulator and file plumbing that tie them together."""

from .geometry import (CameraModel, OrganizedScan, PixelCoord, PointCloud,
                       RigidTransform, distort, pixel_rays, project,
                       project_points, undistort)
from .trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "OrganizedScan", "PixelCoord", "PointCloud",
    "RigidTransform", "Trajectory", "distort", "pixel_rays", "project",
    "project_points", "undistort", "__version__",
]
