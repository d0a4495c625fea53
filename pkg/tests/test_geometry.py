"""Transforms, camera model, distortion, and point containers."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corromap.geometry import (DEPTH_EPSILON, CameraModel, NoConvergence,
                               OrganizedScan, PointCloud, RigidTransform,
                               compose, distort, invert, pixel_rays, project,
                               project_points, quat_from_rotvec,
                               quat_normalize, rotation_angle_between, slerp,
                               undistort)

angles = st.floats(-np.pi, np.pi, allow_nan=False)
coords = st.floats(-10.0, 10.0, allow_nan=False)


@st.composite
def transforms(draw):
    rv = np.array([draw(angles), draw(angles), draw(angles)])
    t = np.array([draw(coords), draw(coords), draw(coords)])
    return RigidTransform.from_rotvec(rv, t)


def rz(deg, t=(0.0, 0.0, 0.0)):
    return RigidTransform.from_rotvec(np.array([0.0, 0.0, np.deg2rad(deg)]),
                                      np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# rigid transforms


def test_compose_identity_cases():
    I = RigidTransform.identity()
    T = rz(37.0, (1.0, -2.0, 0.5))
    for M in (compose(I, I), compose(T, invert(T)), compose(invert(T), T)):
        assert np.abs(M.rotation - np.eye(3)).max() < 1e-9
        assert np.linalg.norm(M.t) < 1e-9


def test_compose_applies_second_argument_first():
    # hand 4x4 product: [Rz90|(1,0,0)] . [Rz90|0] = [Rz180|(1,0,0)],
    # which maps (1,0,0) to (0,0,0)
    a = rz(90.0, (1.0, 0.0, 0.0))
    b = rz(90.0)
    out = compose(a, b).apply(np.array([1.0, 0.0, 0.0]))
    assert np.linalg.norm(out - np.array([0.0, 0.0, 0.0])) < 1e-12
    x = np.array([0.3, -0.7, 1.1])
    assert np.allclose(compose(a, b).apply(x), a.apply(b.apply(x)), atol=1e-12)


@given(transforms())
def test_rotation_is_orthonormal(T):
    R = T.rotation
    assert np.abs(R @ R.T - np.eye(3)).max() < 1e-9
    assert abs(np.linalg.det(R) - 1.0) < 1e-9


@given(transforms())
def test_inverse_roundtrip(T):
    M = T @ T.inverse()
    assert np.abs(M.rotation - np.eye(3)).max() < 1e-9
    assert np.linalg.norm(M.t) < 1e-8


@given(transforms(), transforms(), transforms())
def test_composition_is_associative(a, b, c):
    lhs = (a @ b) @ c
    rhs = a @ (b @ c)
    assert np.abs(lhs.matrix() - rhs.matrix()).max() < 1e-8


@given(transforms())
def test_matrix_roundtrip(T):
    M = T.matrix()
    back = RigidTransform.from_matrix(M[:3, :3], M[:3, 3])
    assert rotation_angle_between(T, back) < 1e-9
    assert np.linalg.norm(T.t - back.t) < 1e-12


def test_from_matrix_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform.from_matrix(np.eye(3) * 2.0, np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform.from_matrix(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_apply_batched_matches_single():
    T = rz(25.0, (0.1, 0.2, 0.3))
    pts = np.random.default_rng(3).normal(size=(17, 3))
    batched = T.apply(pts)
    for i in range(len(pts)):
        assert np.allclose(batched[i], T.apply(pts[i]), atol=1e-12)


def test_slerp_endpoints_and_midpoint():
    q0 = quat_normalize(np.array([0.0, 0.0, 0.0, 1.0]))
    q1 = quat_from_rotvec(np.array([0.0, 0.0, np.pi / 2.0]))
    assert np.allclose(slerp(q0, q1, 0.0), q0, atol=1e-12)
    assert np.allclose(slerp(q0, q1, 1.0), q1, atol=1e-12)
    mid = slerp(q0, q1, 0.5)
    expect = quat_from_rotvec(np.array([0.0, 0.0, np.pi / 4.0]))
    assert np.allclose(mid, expect, atol=1e-12)


def test_rotation_angle_between():
    assert rotation_angle_between(rz(0.0), rz(30.0)) == pytest.approx(
        np.deg2rad(30.0), abs=1e-12)


# ---------------------------------------------------------------------------
# projection


def simple_camera(**kw):
    base = dict(alpha_x=500.0, alpha_y=500.0, gamma=0.0, u0=320.0, v0=240.0)
    base.update(kw)
    return CameraModel(**base)


def test_project_principal_point():
    uv = project(np.array([0.0, 0.0, 1.0]), RigidTransform.identity(),
                 simple_camera())
    assert uv == pytest.approx((320.0, 240.0), abs=1e-12)


def test_project_offset_point():
    # u = alpha_x * (x / z) + u0 = 500 * 0.1 + 320
    uv = project(np.array([0.1, 0.0, 1.0]), RigidTransform.identity(),
                 simple_camera())
    assert uv == pytest.approx((370.0, 240.0), abs=1e-12)


def test_project_behind_camera():
    cam = simple_camera()
    I = RigidTransform.identity()
    assert project(np.array([0.0, 0.0, -1.0]), I, cam) is None
    # at or below the depth epsilon counts as behind
    assert project(np.array([0.0, 0.0, DEPTH_EPSILON * 0.1]), I, cam) is None


def test_projection_scale_invariant():
    # scaling the homogeneous point keeps the same ray through the pinhole
    cam = simple_camera(k1=-0.05, p1=0.001)
    I = RigidTransform.identity()
    p = np.array([0.2, -0.1, 1.5])
    a = project(p, I, cam)
    b = project(3.7 * p, I, cam)
    assert a == pytest.approx(b, abs=1e-9)


def test_project_points_matches_scalar_path():
    cam = simple_camera(k1=-0.08, k2=0.01, p1=0.0005, p2=-0.0005)
    T = rz(10.0, (0.05, -0.02, 0.1))
    pts = np.array([[0.3, 0.1, 2.0], [-0.5, 0.2, 4.0], [0.0, 0.0, -1.0]])
    uv, depth, valid = project_points(pts, T, cam)
    assert valid.tolist() == [True, True, False]
    assert np.isnan(uv[2]).all()
    for i in (0, 1):
        one = project(pts[i], T, cam)
        assert np.allclose(uv[i], one, atol=1e-10)
        assert depth[i] == pytest.approx(T.apply(pts[i])[2], abs=1e-12)


def test_pixel_ray_project_roundtrip():
    cam = simple_camera()
    uv = np.array([[100.5, 77.25], [320.0, 240.0], [601.0, 455.5]])
    rays = pixel_rays(uv, cam)
    assert np.allclose(np.linalg.norm(rays, axis=1), 1.0, atol=1e-12)
    pts = rays * 2.3
    back, _, valid = project_points(pts, RigidTransform.identity(), cam)
    assert valid.all()
    assert np.abs(back - uv).max() < 1e-8


# ---------------------------------------------------------------------------
# distortion


def test_distort_zero_coefficients_identity():
    out = distort(np.array([0.3, -0.2]), simple_camera())
    assert np.allclose(out, [0.3, -0.2], atol=0.0)


def test_distort_principal_point_fixed():
    cam = simple_camera(k1=0.2, k2=-0.05, k3=0.01, p1=0.01, p2=-0.01)
    assert np.allclose(distort(np.zeros(2), cam), np.zeros(2), atol=0.0)


def test_distort_pure_radial_hand_value():
    # 0.5 * (1 + 0.1 * 0.25) = 0.5125
    cam = simple_camera(k1=0.1)
    out = distort(np.array([0.5, 0.0]), cam)
    assert out[0] == pytest.approx(0.5125, abs=1e-15)
    assert out[1] == 0.0


def test_undistort_zero_coefficients_identity():
    cam = simple_camera()
    xy = np.array([0.41, -0.6])
    assert np.allclose(undistort(xy, cam), xy, atol=1e-12)


def test_undistort_inverts_hand_value():
    cam = simple_camera(k1=0.1)
    out = undistort(np.array([0.5125, 0.0]), cam)
    assert np.abs(out - [0.5, 0.0]).max() < 1e-8


def test_undistort_raises_on_iteration_cap():
    cam = simple_camera(k1=0.1)
    with pytest.raises(NoConvergence):
        undistort(np.array([0.5125, 0.0]), cam, max_iter=1, tol=1e-15)


@given(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7),
       st.floats(-0.2, 0.2), st.floats(-0.05, 0.05),
       st.floats(-0.01, 0.01), st.floats(-0.01, 0.01))
def test_distort_undistort_roundtrip(x, y, k1, k2, p1, p2):
    cam = simple_camera(k1=k1, k2=k2, p1=p1, p2=p2)
    xy = np.array([x, y])
    back = undistort(distort(xy, cam), cam)
    assert np.abs(back - xy).max() < 1e-8


# ---------------------------------------------------------------------------
# point containers


def test_pointcloud_validates_lengths_and_values():
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, 0.0, np.nan]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), colors=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), labels=np.zeros(1, dtype=int))


def test_pointcloud_concat_and_subset():
    a = PointCloud(np.zeros((2, 3)), colors=np.full((2, 3), 10.0),
                   labels=np.array([0, 1]))
    b = PointCloud(np.ones((3, 3)), colors=np.full((3, 3), 20.0),
                   labels=np.array([1, 1, 0]))
    c = PointCloud.concat([a, b])
    assert len(c) == 5
    assert c.labels.tolist() == [0, 1, 1, 1, 0]
    sub = c.subset(np.array([1, 3]))
    assert sub.labels.tolist() == [1, 1]
    assert np.allclose(sub.points, [[0, 0, 0], [1, 1, 1]])


def test_pointcloud_concat_drops_partial_attributes():
    a = PointCloud(np.zeros((2, 3)), labels=np.array([1, 1]))
    b = PointCloud(np.ones((1, 3)))
    assert PointCloud.concat([a, b]).labels is None


def test_organized_scan_directions_and_cloud():
    scan = OrganizedScan(0.0, [[1.0, np.inf], [2.0, 3.0]],
                         [0.0, 0.1], [0.0, np.pi / 2.0])
    d = scan.directions()
    assert np.allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-12)
    cloud = scan.to_cloud()
    # the inf entry is dropped; ranges scale the unit directions
    assert len(cloud) == 3
    assert np.allclose(cloud.points[0], [1.0, 0.0, 0.0], atol=1e-12)
