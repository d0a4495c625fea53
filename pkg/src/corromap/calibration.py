"""Intrinsic and lidar-camera extrinsic calibration.

Intrinsics: Levenberg-Marquardt bundle over the camera parameters and one
pose per planar-target view, initialized from homography decompositions.

Extrinsics: two-stage pipeline against a plate with four circular holes.
Stage one extracts the hole centres per lidar frame (pass-through filter,
ring-wise depth-discontinuity edges, RANSAC plane, known-radius circle
RANSAC in the plane, rectangle consistency check) and accumulates them
across frames by Euclidean clustering.  Stage two pairs lidar and camera
reference points by polar-anchored ordering and solves the rigid
registration in closed form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .geometry import (CameraModel, DegenerateConfiguration, OrganizedScan,
                       PointCloud, RigidTransform, distort, rotvec_from_quat,
                       undistort)


class SingularNormalEquations(RuntimeError):
    """Too few views or rank-deficient normal equations."""


class DegenerateInput(ValueError):
    """Not enough points, or all samples degenerate."""


class FrameRejected(RuntimeError):
    """Frame discarded by a geometric consistency test (not fatal)."""


class UnreliableData(RuntimeError):
    """Accumulated detections do not form the expected cluster structure."""


class AmbiguousOrdering(RuntimeError):
    """Polar anchoring cannot order a point quadruple uniquely."""


class InsufficientPoses(RuntimeError):
    """No target pose survived the per-frame pipeline."""


@dataclass
class TargetSpec:
    """Four-hole calibration plate; width/height are hole-centre spacings."""

    hole_radius: float = 0.12
    width: float = 0.5
    height: float = 0.4


# ---------------------------------------------------------------------------
# intrinsic calibration


@dataclass
class ViewCorrespondences:
    """Planar target points (z = 0) and their observed pixels for one view."""

    board: np.ndarray
    image: np.ndarray

    def __post_init__(self):
        self.board = np.asarray(self.board, dtype=float).reshape(-1, 2)
        self.image = np.asarray(self.image, dtype=float).reshape(-1, 2)
        if self.board.shape != self.image.shape:
            raise ValueError("board/image point count mismatch")
        if self.board.shape[0] < 4:
            raise ValueError("need at least 4 correspondences per view")


@dataclass
class IntrinsicsResult:
    camera: CameraModel
    view_poses: list[RigidTransform]
    rms_error: float
    converged: bool
    n_iter: int
    cost_history: list[float]


def _homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform with isotropic normalization."""

    def normalizer(p):
        c = p.mean(axis=0)
        s = np.sqrt(2.0) / max(np.mean(np.linalg.norm(p - c, axis=1)), 1e-12)
        T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
        return T

    Ts, Td = normalizer(src), normalizer(dst)
    sh = (np.column_stack([src, np.ones(len(src))]) @ Ts.T)
    dh = (np.column_stack([dst, np.ones(len(dst))]) @ Td.T)
    A = []
    for (x, y, _), (u, v, _) in zip(sh, dh):
        A.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        A.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    _, _, Vt = np.linalg.svd(np.asarray(A))
    H = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ H @ Ts
    return H / H[2, 2]


def _pose_from_homography(H: np.ndarray) -> RigidTransform:
    """Board-to-camera pose from a board-to-normalized-image homography."""
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    scale = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    r1, r2, t = scale * h1, scale * h2, scale * h3
    if t[2] < 0.0:  # board must be in front of the camera
        r1, r2, t = -r1, -r2, -t
    R = np.column_stack([r1, r2, np.cross(r1, r2)])
    U, _, Vt = np.linalg.svd(R)
    R = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt
    return RigidTransform.from_matrix(R, t)


def _initial_view_poses(data: list[ViewCorrespondences],
                        camera: CameraModel) -> list[RigidTransform]:
    K_inv = np.linalg.inv(camera.intrinsic_matrix())
    poses = []
    for view in data:
        ph = np.column_stack([view.image, np.ones(len(view.image))]) @ K_inv.T
        norm = undistort(ph[:, :2], camera, tol=1e-10)
        H = _homography_dlt(view.board, norm)
        poses.append(_pose_from_homography(H))
    return poses


def _intrinsics_residuals(theta: np.ndarray, data: list[ViewCorrespondences],
                          width: int, height: int) -> np.ndarray:
    ax, ay, gamma, u0, v0, k1, k2, k3, p1, p2 = theta[:10]
    cam = CameraModel(max(ax, 1e-6), max(ay, 1e-6), gamma, u0, v0,
                      k1, k2, k3, p1, p2, width, height)
    chunks = []
    for i, view in enumerate(data):
        rv = theta[10 + 6 * i: 13 + 6 * i]
        t = theta[13 + 6 * i: 16 + 6 * i]
        R = RigidTransform.from_rotvec(rv, t).rotation
        board3 = np.column_stack([view.board, np.zeros(len(view.board))])
        pc = board3 @ R.T + t
        z = np.maximum(pc[:, 2], 1e-9)
        d = distort(pc[:, :2] / z[:, None], cam)
        u = ax * d[:, 0] + gamma * d[:, 1] + u0
        v = ay * d[:, 1] + v0
        chunks.append(np.column_stack([u, v]) - view.image)
    return np.concatenate(chunks).ravel()


def _numeric_jacobian(fun, theta: np.ndarray, n_residuals: int) -> np.ndarray:
    J = np.empty((n_residuals, theta.size))
    for j in range(theta.size):
        step = 1e-6 * max(1.0, abs(theta[j]))
        tp = theta.copy()
        tp[j] += step
        tm = theta.copy()
        tm[j] -= step
        J[:, j] = (fun(tp) - fun(tm)) / (2.0 * step)
    return J


def calibrate_intrinsics(data: list[ViewCorrespondences],
                         initial: CameraModel,
                         max_iter: int = 100,
                         gradient_tol: float = 1e-10) -> IntrinsicsResult:
    """Joint LM refinement of intrinsics, distortion, and per-view poses.

    Args:
        data: at least 3 views of a planar target.
        initial: starting camera model (poses are re-initialized internally
            from per-view homographies under this model).
        max_iter: LM iteration cap.
        gradient_tol: stop when the gradient infinity norm drops below this.

    Returns:
        IntrinsicsResult with the refined camera, one board-to-camera pose
        per view, and the reprojection rms in pixels.  converged is False
        when max_iter was exhausted (best iterate is still returned).

    Raises:
        SingularNormalEquations: fewer than 3 views, or the damped normal
            equations become unsolvable.
    """
    if len(data) < 3:
        raise SingularNormalEquations("intrinsic calibration needs >= 3 views")
    poses = _initial_view_poses(data, initial)
    theta = np.concatenate(
        [np.array([initial.alpha_x, initial.alpha_y, initial.gamma,
                   initial.u0, initial.v0, initial.k1, initial.k2,
                   initial.k3, initial.p1, initial.p2])]
        + [np.concatenate([rotvec_from_quat(p.q), p.t]) for p in poses])
    n_points = sum(len(v.board) for v in data)
    fun = lambda th: _intrinsics_residuals(th, data, initial.width, initial.height)

    r = fun(theta)
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    converged = False
    n_iter = 0
    # already at (numerical) optimum: report the fixed point without stepping
    if cost <= n_points * (1e-9 ** 2):
        converged = True
    else:
        for n_iter in range(1, max_iter + 1):
            J = _numeric_jacobian(fun, theta, r.size)
            g = J.T @ r
            if np.max(np.abs(g)) < gradient_tol:
                converged = True
                break
            H = J.T @ J
            diag = np.maximum(np.diag(H), 1e-12)
            accepted = False
            while lam < 1e14:
                try:
                    delta = np.linalg.solve(H + lam * np.diag(diag), -g)
                except np.linalg.LinAlgError as exc:
                    raise SingularNormalEquations(str(exc)) from exc
                r_new = fun(theta + delta)
                cost_new = float(r_new @ r_new)
                if cost_new < cost:
                    theta = theta + delta
                    r, cost = r_new, cost_new
                    lam = max(lam / 10.0, 1e-12)
                    history.append(cost)
                    accepted = True
                    break
                lam *= 10.0
            if not accepted:
                # no damping yields descent: stationary to machine precision
                converged = True
                break
            if len(history) >= 2 and history[-2] - history[-1] < 1e-16 * max(history[-2], 1.0):
                converged = True
                break

    ax, ay, gamma, u0, v0, k1, k2, k3, p1, p2 = theta[:10]
    camera = CameraModel(ax, ay, gamma, u0, v0, k1, k2, k3, p1, p2,
                         initial.width, initial.height)
    out_poses = [RigidTransform.from_rotvec(theta[10 + 6 * i: 13 + 6 * i],
                                            theta[13 + 6 * i: 16 + 6 * i])
                 for i in range(len(data))]
    rms = float(np.sqrt(cost / n_points))
    return IntrinsicsResult(camera, out_poses, rms, converged, n_iter, history)


# ---------------------------------------------------------------------------
# plane and circle extraction


@dataclass
class PlaneModel:
    """Plane n . x = d with unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("zero plane normal")
        self.normal = n / norm
        self.offset = float(self.offset) / norm

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(np.asarray(points).reshape(-1, 3) @ self.normal - self.offset)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def fit_plane_ransac(points: np.ndarray | PointCloud, iterations: int = 300,
                     inlier_dist: float = 0.02,
                     seed=0) -> tuple[PlaneModel, np.ndarray]:
    """RANSAC plane fit with a least-squares refit on the winning inliers.

    Returns:
        (model, inlier_indices); the indices are evaluated against the
        refit model, so they are consistent with what is returned.

    Raises:
        DegenerateInput: fewer than 3 points or every sample collinear.
    """
    pts = points.points if isinstance(points, PointCloud) else \
        np.asarray(points, dtype=float).reshape(-1, 3)
    n = pts.shape[0]
    if n < 3:
        raise DegenerateInput("plane fit needs at least 3 points")
    rng = _as_rng(seed)
    best_count = 0
    best_inl = None
    for _ in range(iterations):
        i, j, k = rng.choice(n, 3, replace=False)
        v1 = pts[j] - pts[i]
        v2 = pts[k] - pts[i]
        nrm = np.cross(v1, v2)
        norm = np.linalg.norm(nrm)
        if norm < 1e-12:
            continue
        nrm = nrm / norm
        d = nrm @ pts[i]
        inl = np.abs(pts @ nrm - d) <= inlier_dist
        count = int(inl.sum())
        if count > best_count:
            best_count = count
            best_inl = inl
    if best_inl is None:
        raise DegenerateInput("all plane samples were collinear")
    sel = pts[best_inl]
    centroid = sel.mean(axis=0)
    _, _, Vt = np.linalg.svd(sel - centroid, full_matrices=False)
    normal = Vt[-1]
    model = PlaneModel(normal, normal @ centroid)
    inliers = np.nonzero(model.distances(pts) <= inlier_dist)[0]
    return model, inliers


def detect_edge_points(scan: OrganizedScan,
                       depth_jump_threshold: float = 0.3) -> PointCloud:
    """Points adjacent to an azimuthal range discontinuity on their ring.

    A valid return is an edge when either azimuth neighbour has no return
    or differs in range by more than the threshold (strictly).
    """
    r = scan.ranges
    valid = np.isfinite(r)
    edge = np.zeros_like(valid)
    for shift in (1, -1):
        nb = np.roll(r, shift, axis=1)
        nb_valid = np.roll(valid, shift, axis=1)
        with np.errstate(invalid="ignore"):
            jump = ~nb_valid | (np.abs(r - nb) > depth_jump_threshold)
        edge |= valid & jump
    dirs = scan.directions()
    return PointCloud(dirs[edge] * r[edge][:, None])


def plane_basis(plane: PlaneModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic (origin, u, v) in-plane frame for a plane model."""
    n = plane.normal
    e = np.zeros(3)
    e[int(np.argmin(np.abs(n)))] = 1.0
    u = np.cross(n, e)
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return plane.offset * n, u, v


def project_to_plane(points: np.ndarray, plane: PlaneModel) -> np.ndarray:
    origin, u, v = plane_basis(plane)
    rel = np.asarray(points, dtype=float).reshape(-1, 3) - origin
    return np.stack([rel @ u, rel @ v], axis=1)


def lift_from_plane(coords: np.ndarray, plane: PlaneModel) -> np.ndarray:
    origin, u, v = plane_basis(plane)
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    return origin[None, :] + coords[:, :1] * u[None, :] + coords[:, 1:] * v[None, :]


def _refine_circle_center(points: np.ndarray, center: np.ndarray,
                          radius: float, iters: int = 5) -> np.ndarray:
    c = center.copy()
    for _ in range(iters):
        rel = points - c
        dist = np.linalg.norm(rel, axis=1)
        dist = np.maximum(dist, 1e-12)
        f = dist - radius
        J = -rel / dist[:, None]
        H = J.T @ J
        try:
            c = c - np.linalg.solve(H, J.T @ f)
        except np.linalg.LinAlgError:
            break
    return c


def _max_angular_gap(points: np.ndarray, center: np.ndarray) -> float:
    ang = np.sort(np.arctan2(points[:, 1] - center[1], points[:, 0] - center[0]))
    if ang.size < 2:
        return 2.0 * np.pi
    gaps = np.diff(ang)
    wrap = 2.0 * np.pi - (ang[-1] - ang[0])
    return float(max(gaps.max(), wrap))


def segment_circles_2d(points: np.ndarray, radius: float,
                       radius_tol: float = 0.1, min_inliers: int = 6,
                       iterations: int = 400, seed=0,
                       max_arc_gap: float = np.pi) -> list[np.ndarray]:
    """Iterative known-radius circle RANSAC; inliers removed per accepted fit.

    A candidate circle is kept only when its inlier directions leave no
    angular gap larger than max_arc_gap around the centre, which rejects
    near-collinear support (straight edges fitting a circle band).  Support
    failing the gap test is still removed from the working set so the same
    spurious structure is not refit forever.

    Args:
        points: (N, 2) in-plane coordinates.
        radius: known circle radius.
        radius_tol: relative band half-width for inliers.
        min_inliers: minimum support; also the stop condition.
        iterations: RANSAC draws per circle.
        seed: int seed or Generator.
        max_arc_gap: maximum allowed angular gap in radians.

    Returns:
        List of 2D circle centres, in detection order.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    rng = _as_rng(seed)
    tol = radius_tol * radius
    centers = []
    remaining = pts
    while remaining.shape[0] >= min_inliers:
        best_count = 0
        best_center = None
        n = remaining.shape[0]
        for _ in range(iterations):
            i, j = rng.choice(n, 2, replace=False)
            p1, p2 = remaining[i], remaining[j]
            mid = 0.5 * (p1 + p2)
            chord = p2 - p1
            d2 = chord @ chord
            if d2 < (0.2 * radius) ** 2 or d2 > (1.999 * radius) ** 2:
                continue
            h = np.sqrt(radius * radius - 0.25 * d2)
            perp = np.array([-chord[1], chord[0]]) / np.sqrt(d2)
            for sign in (1.0, -1.0):
                c = mid + sign * h * perp
                count = int(np.sum(np.abs(
                    np.linalg.norm(remaining - c, axis=1) - radius) <= tol))
                if count > best_count:
                    best_count = count
                    best_center = c
        if best_center is None or best_count < min_inliers:
            break
        inl = np.abs(np.linalg.norm(remaining - best_center, axis=1) - radius) <= tol
        center = _refine_circle_center(remaining[inl], best_center, radius)
        inl = np.abs(np.linalg.norm(remaining - center, axis=1) - radius) <= tol
        if int(inl.sum()) >= min_inliers and \
                _max_angular_gap(remaining[inl], center) <= max_arc_gap:
            centers.append(center)
        remaining = remaining[~inl]
    return centers


# ---------------------------------------------------------------------------
# reference point geometry


def consistency_check(centers: np.ndarray, expected_width: float,
                      expected_height: float, tol: float = 0.03) -> np.ndarray:
    """Select the unique 4-subset matching the target rectangle.

    Args:
        centers: (K, 3) candidate hole centres, K >= 4.
        expected_width/expected_height: hole-centre spacings.
        tol: absolute distance tolerance.

    Returns:
        (4, 3) array in perimeter order (corner, width-neighbour, diagonal,
        height-neighbour).

    Raises:
        FrameRejected: zero or multiple subsets match.
    """
    pts = np.asarray(centers, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 4:
        raise FrameRejected(f"only {pts.shape[0]} candidate centres")
    diag = float(np.hypot(expected_width, expected_height))
    expected = np.sort([expected_width, expected_width,
                        expected_height, expected_height, diag, diag])
    matches = []
    for combo in itertools.combinations(range(pts.shape[0]), 4):
        sub = pts[list(combo)]
        dists = np.sort([np.linalg.norm(sub[a] - sub[b])
                         for a, b in itertools.combinations(range(4), 2)])
        if np.max(np.abs(dists - expected)) <= tol:
            matches.append(sub)
    if len(matches) != 1:
        raise FrameRejected(f"{len(matches)} subsets match the target rectangle")
    sub = matches[0]
    d0 = np.linalg.norm(sub[1:] - sub[0], axis=1)
    order = [0,
             1 + int(np.argmin(np.abs(d0 - expected_width))),
             1 + int(np.argmin(np.abs(d0 - diag))),
             1 + int(np.argmin(np.abs(d0 - expected_height)))]
    if len(set(order)) != 4:
        raise FrameRejected("rectangle ordering ambiguous")
    return sub[order]


def accumulate_reference_points(frames: list[np.ndarray],
                                cluster_tol: float = 0.05,
                                expected_clusters: int = 4) -> np.ndarray:
    """Cluster per-frame hole centres and return per-cluster centroids.

    Single-linkage Euclidean clustering at cluster_tol; exactly
    expected_clusters clusters must emerge.

    Raises:
        UnreliableData: cluster count differs from expected_clusters.
    """
    if not frames:
        raise UnreliableData("no frames to accumulate")
    pts = np.vstack([np.asarray(f, dtype=float).reshape(-1, 3) for f in frames])
    n = pts.shape[0]
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    close = d2 <= cluster_tol * cluster_tol
    for i in range(n):
        for j in np.nonzero(close[i, i + 1:])[0] + i + 1:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[rj] = ri
    roots = np.array([find(i) for i in range(n)])
    labels = np.unique(roots)
    if labels.size != expected_clusters:
        raise UnreliableData(
            f"{labels.size} clusters found, expected {expected_clusters}")
    centroids = np.array([pts[roots == l].mean(axis=0) for l in labels])
    order = np.lexsort((centroids[:, 2], centroids[:, 1], centroids[:, 0]))
    return centroids[order]


def _order_quad(points: np.ndarray, up: np.ndarray) -> list[int]:
    """Anchor at the top-most point (lowest inclination from `up`), then
    order the rest by distance to the anchor."""
    p = np.asarray(points, dtype=float).reshape(4, 3)
    up = np.asarray(up, dtype=float)
    up = up / np.linalg.norm(up)
    norms = np.linalg.norm(p, axis=1)
    if np.any(norms < 1e-12):
        raise AmbiguousOrdering("reference point at the sensor origin")
    inclination = np.arccos(np.clip(p @ up / norms, -1.0, 1.0))
    inc_sorted = np.sort(inclination)
    if inc_sorted[1] - inc_sorted[0] < 1e-9:
        raise AmbiguousOrdering("two points tie for top-most")
    anchor = int(np.argmin(inclination))
    rest = [i for i in range(4) if i != anchor]
    dists = [np.linalg.norm(p[i] - p[anchor]) for i in rest]
    ds = np.sort(dists)
    if np.any(np.diff(ds) < 1e-9):
        raise AmbiguousOrdering("anchor distances tie; ordering undefined")
    rest = [rest[i] for i in np.argsort(dists)]
    return [anchor] + rest


def associate_points(set_a: np.ndarray, set_b: np.ndarray,
                     up_a=(0.0, 0.0, 1.0),
                     up_b=(0.0, 0.0, 1.0)) -> list[tuple[int, int]]:
    """Pair two 4-per-pose reference point sets.

    Points are grouped in consecutive quadruples per target pose; pose
    correspondence between the sets is positional.  Within each quadruple
    the top-most point (lowest inclination from the sensor's up axis)
    anchors the ordering and the rest follow by distance to the anchor.

    Returns:
        List of (index_a, index_b) pairs covering every point bijectively.

    Raises:
        AmbiguousOrdering: inclination or distance ties within 1e-9.
        ValueError: sizes differ or are not multiples of four.
    """
    a = np.asarray(set_a, dtype=float).reshape(-1, 3)
    b = np.asarray(set_b, dtype=float).reshape(-1, 3)
    if a.shape != b.shape or a.shape[0] % 4 != 0:
        raise ValueError("sets must be equal-size multiples of four")
    pairs = []
    for m in range(a.shape[0] // 4):
        qa = _order_quad(a[4 * m: 4 * m + 4], np.asarray(up_a))
        qb = _order_quad(b[4 * m: 4 * m + 4], np.asarray(up_b))
        pairs.extend((4 * m + ia, 4 * m + ib) for ia, ib in zip(qa, qb))
    return pairs


def register_rigid(points_a: np.ndarray,
                   points_b: np.ndarray) -> tuple[RigidTransform, float]:
    """Least-squares rigid transform T with T(a) ~= b (SVD/Kabsch).

    Returns:
        (T, rms) where rms is the post-fit residual.

    Raises:
        DegenerateConfiguration: fewer than 3 pairs or collinear support.
    """
    a = np.asarray(points_a, dtype=float).reshape(-1, 3)
    b = np.asarray(points_b, dtype=float).reshape(-1, 3)
    if a.shape != b.shape:
        raise ValueError("point sets must match in size")
    if a.shape[0] < 3:
        raise DegenerateConfiguration("rigid registration needs >= 3 pairs")
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    H = (a - ca).T @ (b - cb)
    U, s, Vt = np.linalg.svd(H)
    if s[1] < 1e-9 * max(s[0], 1e-300):
        raise DegenerateConfiguration("support is collinear")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = cb - R @ ca
    T = RigidTransform.from_matrix(R, t)
    rms = float(np.sqrt(np.mean(np.sum((a @ R.T + t - b) ** 2, axis=1))))
    return T, rms


# ---------------------------------------------------------------------------
# end-to-end extrinsic calibration


@dataclass
class ExtrinsicConfig:
    passthrough: tuple = ((0.5, 5.0), (-3.0, 3.0), (-1.0, 1.5))
    plane_iterations: int = 300
    plane_inlier_dist: float = 0.015
    edge_jump: float = 0.5
    edge_to_plane_dist: float = 0.03
    circle_iterations: int = 400
    circle_min_inliers: int = 6
    circle_radius_tol: float = 0.1
    max_arc_gap: float = np.pi
    consistency_tol: float = 0.03
    cluster_tol: float = 0.05
    up_lidar: tuple = (0.0, 0.0, 1.0)
    up_camera: tuple = (0.0, -1.0, 0.0)
    seed: int = 0


@dataclass
class ExtrinsicDiagnostics:
    poses_total: int = 0
    poses_used: int = 0
    frames_accepted: list[int] = field(default_factory=list)
    frames_rejected: list[int] = field(default_factory=list)
    registration_rms: float = float("nan")


def passthrough(points: np.ndarray, bounds) -> np.ndarray:
    """Boolean mask of points inside the per-axis (min, max) box."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    mask = np.ones(p.shape[0], dtype=bool)
    for axis, (lo, hi) in enumerate(bounds):
        mask &= (p[:, axis] >= lo) & (p[:, axis] <= hi)
    return mask


def extract_frame_centers(scan: OrganizedScan, target: TargetSpec,
                          config: ExtrinsicConfig, rng=None) -> np.ndarray:
    """Hole centres (4, 3) in the sensor frame for one scan.

    Raises:
        FrameRejected: fewer than 4 circles found, or the consistency check
            fails.
        DegenerateInput: plane fit impossible inside the pass-through box.
    """
    rng = _as_rng(config.seed if rng is None else rng)
    cloud = scan.to_cloud()
    keep = passthrough(cloud.points, config.passthrough)
    if int(keep.sum()) < 3:
        raise FrameRejected("pass-through box is empty")
    plane, _ = fit_plane_ransac(cloud.points[keep], config.plane_iterations,
                                config.plane_inlier_dist, rng)
    edges = detect_edge_points(scan, config.edge_jump)
    sel = passthrough(edges.points, config.passthrough)
    pts = edges.points[sel]
    pts = pts[plane.distances(pts) <= config.edge_to_plane_dist]
    if pts.shape[0] < 4 * config.circle_min_inliers:
        raise FrameRejected("too few on-plane edge points")
    coords = project_to_plane(pts, plane)
    centers2 = segment_circles_2d(coords, target.hole_radius,
                                  config.circle_radius_tol,
                                  config.circle_min_inliers,
                                  config.circle_iterations, rng,
                                  config.max_arc_gap)
    if len(centers2) < 4:
        raise FrameRejected(f"only {len(centers2)} circles segmented")
    centers3 = lift_from_plane(np.array(centers2), plane)
    return consistency_check(centers3, target.width, target.height,
                             config.consistency_tol)


def calibrate_extrinsics(lidar_frames: list[list[OrganizedScan]],
                         camera_points: np.ndarray,
                         target: TargetSpec | None = None,
                         config: ExtrinsicConfig | None = None
                         ) -> tuple[RigidTransform, ExtrinsicDiagnostics]:
    """Lidar-to-camera transform from hole detections across target poses.

    Args:
        lidar_frames: one list of scans per target pose.
        camera_points: (M, 4, 3) hole centres in the camera frame, one
            quadruple per pose (any order within the quadruple).
        target: plate geometry.
        config: pipeline parameters.

    Returns:
        (T_lidar_to_camera, diagnostics).

    Raises:
        InsufficientPoses: no pose produced a reliable reference quadruple.
    """
    target = target or TargetSpec()
    config = config or ExtrinsicConfig()
    cam = np.asarray(camera_points, dtype=float).reshape(-1, 4, 3)
    if len(lidar_frames) != cam.shape[0]:
        raise ValueError("camera point poses must match lidar frame poses")
    rng = _as_rng(config.seed)
    diag = ExtrinsicDiagnostics(poses_total=len(lidar_frames))
    lidar_quads = []
    cam_quads = []
    for m, frames in enumerate(lidar_frames):
        accepted = []
        rejected = 0
        for scan in frames:
            try:
                accepted.append(extract_frame_centers(scan, target, config, rng))
            except (FrameRejected, DegenerateInput):
                rejected += 1
        diag.frames_accepted.append(len(accepted))
        diag.frames_rejected.append(rejected)
        if not accepted:
            continue
        try:
            centroids = accumulate_reference_points(accepted, config.cluster_tol)
        except UnreliableData:
            continue
        lidar_quads.append(centroids)
        cam_quads.append(cam[m])
    if not lidar_quads:
        raise InsufficientPoses("no target pose survived the pipeline")
    diag.poses_used = len(lidar_quads)
    a = np.vstack(lidar_quads)
    b = np.vstack(cam_quads)
    pairs = associate_points(a, b, config.up_lidar, config.up_camera)
    ia = [p[0] for p in pairs]
    ib = [p[1] for p in pairs]
    T, rms = register_rigid(a[ia], b[ib])
    diag.registration_rms = rms
    return T, diag
