"""Shared fixtures.

The expensive artifacts (the room walk and its map) are session-scoped so
the slam, localization, and acceptance tests reuse one simulation run.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from corromap.geometry import PointCloud
from corromap.simulator import (default_loop_waypoints, default_rig,
                                default_room, generate_trajectory,
                                simulate_scan_sequence)
from corromap.slam import voxel_downsample

settings.register_profile(
    "suite", max_examples=50, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture(scope="session")
def room():
    return default_room()


@pytest.fixture(scope="session")
def rig():
    return default_rig()


@pytest.fixture(scope="session")
def walk_traj(rig):
    """Closed square loop around the room, one sample per lidar sweep."""
    return generate_trajectory(default_loop_waypoints(), 1.0, rig.lidar.rate)


@pytest.fixture(scope="session")
def walk_scans(room, rig, walk_traj):
    """Noisy sensor-frame clouds along the walk (the slam workload)."""
    scans = simulate_scan_sequence(room, rig, walk_traj, seed=0)
    return [(s.timestamp, s.to_cloud()) for s in scans]


@pytest.fixture(scope="session")
def room_map(room, rig, walk_traj):
    """Prior map for localization: an independent noisy pass placed at the
    true poses, so its voxel statistics match what live scans produce."""
    scans = simulate_scan_sequence(room, rig, walk_traj, seed=7)
    clouds = [s.to_cloud().transformed(p)
              for s, p in zip(scans, walk_traj.poses)]
    return voxel_downsample(PointCloud.concat(clouds), 0.1)
