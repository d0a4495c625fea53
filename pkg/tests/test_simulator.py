"""Simulator checks against closed-form ray geometry."""

import numpy as np
import pytest

from corromap.geometry import CameraModel, RigidTransform, project_points
from corromap.simulator import (LidarSpec, Rectangle, Scene, SensorRig,
                                SurfacePatch, default_rig, default_room,
                                generate_trajectory, raycast_scan,
                                render_labels, render_view,
                                simulate_scan_sequence)


def _small_rig(**lidar_kwargs):
    base = default_rig()
    return SensorRig(LidarSpec(**lidar_kwargs), base.camera, base.extrinsic)


def test_flat_wall_ranges_match_closed_form():
    scene = Scene()
    scene.add_rectangle(Rectangle([2, 0, 0], [0, 1, 0], [0, 0, 1], 20, 20))
    rig = _small_rig(beams=8, azimuth_steps=64)
    scan = raycast_scan(scene, rig, RigidTransform.identity())

    d = scan.directions().reshape(-1, 3)
    with np.errstate(divide="ignore"):
        t = 2.0 / d[:, 0]
    u = t * d[:, 1]
    v = t * d[:, 2]
    hit = (d[:, 0] > 1e-12) & (np.abs(u) <= 20) & (np.abs(v) <= 20) \
        & (t <= rig.lidar.max_range)
    expected = np.where(hit, t, np.inf).reshape(scan.ranges.shape)

    assert np.array_equal(np.isfinite(scan.ranges), np.isfinite(expected))
    m = np.isfinite(expected)
    assert np.allclose(scan.ranges[m], expected[m], rtol=1e-12, atol=0)


def test_wall_beyond_max_range_gives_no_returns():
    scene = Scene()
    scene.add_rectangle(Rectangle([60, 0, 0], [0, 1, 0], [0, 0, 1], 5, 5))
    rig = _small_rig(beams=4, azimuth_steps=32)
    scan = raycast_scan(scene, rig, RigidTransform.identity())
    assert not np.any(np.isfinite(scan.ranges))


def test_hole_passes_rays_to_backdrop():
    scene = Scene()
    wall = Rectangle([2, 0, 0], [0, 1, 0], [0, 0, 1], 5, 5, name="wall")
    wall.holes.append((0.0, 0.0, 0.3))
    scene.add_rectangle(wall)
    scene.add_rectangle(Rectangle([6, 0, 0], [0, 1, 0], [0, 0, 1], 30, 30))
    rig = _small_rig(beams=1, azimuth_steps=2048,
                     elevation_min=0.0, elevation_max=0.0)
    scan = raycast_scan(scene, rig, RigidTransform.identity())
    r = scan.ranges[0]
    azim = rig.lidar.azimuth_angles()

    assert r[0] == pytest.approx(6.0, abs=1e-12)
    # clearly outside the hole: wall return at 2 / cos(a)
    side = np.abs(2.0 * np.tan(azim)) > 0.31
    side &= np.cos(azim) > 0.5
    assert np.allclose(r[side], 2.0 / np.cos(azim[side]), rtol=1e-12)
    # the rim produces a sharp range discontinuity
    finite = np.isfinite(r)
    jumps = np.abs(np.diff(r[finite]))
    assert jumps.max() > 3.0


def test_seeded_sequences_are_byte_identical():
    scene = default_room(patch=False)
    rig = _small_rig(beams=4, azimuth_steps=128)
    traj = generate_trajectory([[3, 4, 1.4], [4, 4, 1.4]], 1.0, 5.0)
    a = simulate_scan_sequence(scene, rig, traj, seed=3)
    b = simulate_scan_sequence(scene, rig, traj, seed=3)
    c = simulate_scan_sequence(scene, rig, traj, seed=4)
    assert len(a) == len(traj.poses)
    for sa, sb in zip(a, b):
        assert sa.timestamp == sb.timestamp
        assert np.array_equal(sa.ranges, sb.ranges)
    assert any(not np.array_equal(sa.ranges, sc.ranges)
               for sa, sc in zip(a, c))


def test_range_noise_is_truncated():
    scene = default_room(patch=False)
    rig = _small_rig(beams=8, azimuth_steps=256)
    pose = RigidTransform(np.array([0, 0, 0, 1.0]), np.array([5.0, 4.0, 1.5]))
    clean = raycast_scan(scene, rig, pose)
    noisy = raycast_scan(scene, rig, pose, rng=12)

    assert np.array_equal(np.isfinite(clean.ranges), np.isfinite(noisy.ranges))
    m = np.isfinite(clean.ranges)
    diff = noisy.ranges[m] - clean.ranges[m]
    lim = 3.9 * rig.lidar.range_sigma
    assert np.abs(diff).max() <= lim + 1e-12
    assert np.std(diff) > 0.5 * rig.lidar.range_sigma


def test_lidar_points_agree_with_rendered_depth(room, rig):
    # lidar x axis towards the south wall; the camera shares that heading
    pose = RigidTransform.from_rotvec(np.array([0, 0, -np.pi / 2]),
                                      np.array([5.0, 2.0, 1.5]))
    scan = raycast_scan(room, rig, pose)
    rr = render_view(room, rig, pose)

    dirs = scan.directions().reshape(-1, 3)
    finite = np.isfinite(scan.ranges).ravel()
    _, hit_idx = room.first_hit(pose.t, dirs @ pose.rotation.T)
    cloud = scan.to_cloud()
    hit_idx = hit_idx[finite]

    uv, depth, valid = project_points(cloud.points, rig.extrinsic, rig.camera)
    checked = 0
    for k in range(0, cloud.points.shape[0], 37):
        if not valid[k]:
            continue
        ui = int(round(uv[k, 0]))
        vi = int(round(uv[k, 1]))
        if not (1 <= ui < rig.camera.width - 1
                and 1 <= vi < rig.camera.height - 1):
            continue
        win_d = rr.depth[vi - 1:vi + 2, ui - 1:ui + 2]
        win_s = rr.surface_index[vi - 1:vi + 2, ui - 1:ui + 2]
        # skip depth edges and surface boundaries
        if not np.all(np.isfinite(win_d)) or np.ptp(win_d) > 0.05 \
                or np.unique(win_s).size != 1:
            continue
        assert win_s[1, 1] == hit_idx[k]
        assert abs(depth[k] - rr.depth[vi, ui]) < 0.05
        checked += 1
    assert checked > 50


def test_camera_pose_undoes_extrinsic(rig):
    pose = RigidTransform.from_rotvec(np.array([0.1, -0.2, 0.7]),
                                      np.array([1.0, 2.0, 3.0]))
    back = rig.camera_pose(pose) @ rig.extrinsic
    assert np.allclose(back.matrix(), pose.matrix(), atol=1e-12)


def test_straight_trajectory_sampling():
    traj = generate_trajectory([[0, 0, 0], [10, 0, 0]], 1.0, 10.0)
    assert len(traj.poses) == 101
    assert np.allclose(traj.timestamps, np.arange(101) / 10.0)
    pos = traj.positions()
    assert np.allclose(pos[:, 0], np.arange(101) * 0.1, atol=1e-9)
    assert np.allclose(pos[:, 1:], 0.0)
    for p in traj.poses:
        assert np.allclose(p.q, [0, 0, 0, 1], atol=1e-12)


def test_zero_length_path_is_stationary():
    traj = generate_trajectory([[1, 2, 3], [1, 2, 3]], 2.0, 10.0)
    assert len(traj.poses) == 2
    assert np.allclose(traj.timestamps, [0.0, 0.1])
    for p in traj.poses:
        assert np.allclose(p.t, [1, 2, 3])
        assert np.allclose(p.q, [0, 0, 0, 1])


def test_loop_trajectory_shape(walk_traj):
    assert len(walk_traj.poses) == 201
    pos = walk_traj.positions()
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    assert steps.max() <= 0.1 + 1e-9
    assert 19.9 <= steps.sum() <= 20.0 + 1e-9
    assert np.allclose(pos[:, 2], 1.4)
    for p in walk_traj.poses:
        assert abs(np.linalg.norm(p.q) - 1.0) < 1e-12


def test_rendered_patch_area_matches_pinhole_prediction():
    scene = Scene()
    wall = Rectangle([2, 0, 0], [0, 1, 0], [0, 0, 1], 3, 3)
    side = 0.96
    h = side / 2.0
    wall.patches.append(SurfacePatch([[-h, -h], [h, -h], [h, h], [-h, h]]))
    scene.add_rectangle(wall)

    cam = CameraModel(alpha_x=500.0, alpha_y=500.0, gamma=0.0,
                      u0=320.0, v0=240.0)
    rig = SensorRig(LidarSpec(), cam, RigidTransform.identity())
    # pose columns are the camera axes: optical axis along map +x
    R = np.array([[0.0, 0.0, 1.0],
                  [-1.0, 0.0, 0.0],
                  [0.0, -1.0, 0.0]])
    pose = RigidTransform.from_matrix(R, np.zeros(3))
    img = render_labels(scene, rig, pose)

    count = int((img.labels == 1).sum())
    expected = (side * cam.alpha_x / 2.0) ** 2
    assert abs(count - expected) <= 0.01 * expected


def test_room_without_patch_renders_background_only():
    scene = default_room(patch=False)
    rig = default_rig()
    pose = RigidTransform.from_rotvec(np.array([0, 0, -np.pi / 2]),
                                      np.array([5.0, 2.5, 1.5]))
    img = render_labels(scene, rig, pose)
    assert np.all(img.labels == 0)

    withp = render_labels(default_room(patch=True), rig, pose)
    assert np.any(withp.labels == 1)


def test_label_points_pentagon_membership(room):
    wall_c = np.array([5.0, 0.0, 1.5])
    eu = np.array([1.0, 0.0, 0.0])
    ev = np.array([0.0, 0.0, 1.0])

    def on_wall(u, v):
        return wall_c + u * eu + v * ev

    pts = np.array([
        on_wall(0.0, 0.0),           # well inside the patch
        on_wall(-0.5, -0.1),         # inside
        on_wall(1.05, 0.45),         # on the wall, outside the polygon
        on_wall(4.0, 0.0),           # far along the wall
        on_wall(0.0, 0.0) + np.array([0.0, 0.01, 0.0]),  # slightly off-plane
        np.array([5.0, 1.0, 1.5]),   # free space
        np.array([5.0, 4.0, 0.0]),   # floor
    ])
    labels = room.label_points(pts)
    assert labels.tolist() == [1, 1, 0, 0, 1, 0, 0]
