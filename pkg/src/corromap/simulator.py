"""Analytic LiDAR/camera simulator.

Scenes are unions of finite rectangles (boxes expand to six faces).
Rectangles may carry circular holes (rays pass through) and polygonal
surface patches that recolor/relabel the area they cover, which is how
corrosion regions are modelled.  Ray casting is exact; range noise is
Gaussian, truncated at 3.9 sigma so every return stays within 4 sigma of a
true surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import TargetSpec
from .fusion import LabeledImage
from .geometry import (CameraModel, OrganizedScan, PointCloud, RigidTransform,
                       pixel_rays, quat_from_rotvec, slerp)
from .trajectory import Trajectory

LABEL_CLEAN = 0
LABEL_CORROSION = 1


@dataclass
class SurfacePatch:
    """Polygonal overlay in the parent rectangle's plane coordinates."""

    polygon: np.ndarray
    label: int = LABEL_CORROSION
    color: tuple[int, int, int] = (150, 80, 40)

    def __post_init__(self):
        self.polygon = np.asarray(self.polygon, dtype=float).reshape(-1, 2)
        if self.polygon.shape[0] < 3:
            raise ValueError("patch polygon needs at least 3 vertices")


@dataclass
class Rectangle:
    """Finite two-sided plane patch; the unit for all scene geometry."""

    center: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    half_u: float
    half_v: float
    color: tuple[int, int, int] = (180, 180, 180)
    label: int = LABEL_CLEAN
    name: str = ""
    holes: list[tuple[float, float, float]] = field(default_factory=list)
    patches: list[SurfacePatch] = field(default_factory=list)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        u = np.asarray(self.axis_u, dtype=float).reshape(3)
        v = np.asarray(self.axis_v, dtype=float).reshape(3)
        u = u / np.linalg.norm(u)
        v = v - u * (u @ v)
        n = np.linalg.norm(v)
        if n < 1e-9:
            raise ValueError("degenerate rectangle axes")
        self.axis_u = u
        self.axis_v = v / n
        if self.half_u <= 0.0 or self.half_v <= 0.0:
            raise ValueError("half extents must be positive")

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.axis_u, self.axis_v)

    def plane_coords(self, points: np.ndarray) -> np.ndarray:
        rel = np.asarray(points, dtype=float).reshape(-1, 3) - self.center
        return np.stack([rel @ self.axis_u, rel @ self.axis_v], axis=1)


def _point_in_polygon(a: np.ndarray, b: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorized over query points."""
    inside = np.zeros(a.shape, dtype=bool)
    x1, y1 = poly[-1]
    for x2, y2 in poly:
        crosses = (y1 > b) != (y2 > b)
        if np.any(crosses):
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (b - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (a < xint)
        x1, y1 = x2, y2
    return inside


@dataclass
class Scene:
    rectangles: list[Rectangle] = field(default_factory=list)

    def add_rectangle(self, rect: Rectangle) -> Rectangle:
        self.rectangles.append(rect)
        return rect

    def add_box(self, center, half_extents, yaw: float = 0.0,
                color=(120, 130, 140), name: str = "box") -> list[Rectangle]:
        """Append the six faces of an upright box rotated by yaw."""
        c = np.asarray(center, dtype=float)
        hx, hy, hz = [float(h) for h in half_extents]
        cy, sy = np.cos(yaw), np.sin(yaw)
        ex = np.array([cy, sy, 0.0])
        ey = np.array([-sy, cy, 0.0])
        ez = np.array([0.0, 0.0, 1.0])
        faces = [
            (c + hx * ex, ey, ez, hy, hz),
            (c - hx * ex, ey, ez, hy, hz),
            (c + hy * ey, ex, ez, hx, hz),
            (c - hy * ey, ex, ez, hx, hz),
            (c + hz * ez, ex, ey, hx, hy),
            (c - hz * ez, ex, ey, hx, hy),
        ]
        out = []
        for i, (fc, au, av, hu, hv) in enumerate(faces):
            out.append(self.add_rectangle(Rectangle(
                fc, au, av, hu, hv, color=color, name=f"{name}_f{i}")))
        return out

    def first_hit(self, origins: np.ndarray,
                  dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """First intersection along each ray.

        Args:
            origins: (3,) shared origin or (N, 3) per-ray origins.
            dirs: (N, 3) ray directions (need not be unit length).

        Returns:
            (t, index): ray parameters (inf for miss) and rectangle indices
            (-1 for miss).  Holes are true gaps: rays continue through them.
        """
        dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
        n_rays = dirs.shape[0]
        origins = np.broadcast_to(
            np.asarray(origins, dtype=float).reshape(-1, 3), (n_rays, 3))
        best_t = np.full(n_rays, np.inf)
        best_idx = np.full(n_rays, -1, dtype=np.int64)
        for idx, rect in enumerate(self.rectangles):
            n = rect.normal
            denom = dirs @ n
            with np.errstate(divide="ignore", invalid="ignore"):
                t = ((rect.center - origins) @ n) / denom
            cand = (np.abs(denom) > 1e-12) & (t > 1e-9) & (t < best_t)
            if not np.any(cand):
                continue
            sel = np.nonzero(cand)[0]
            hp = origins[sel] + t[sel, None] * dirs[sel]
            rel = hp - rect.center
            a = rel @ rect.axis_u
            b = rel @ rect.axis_v
            inside = (np.abs(a) <= rect.half_u) & (np.abs(b) <= rect.half_v)
            for (ha, hb, r) in rect.holes:
                inside &= (a - ha) ** 2 + (b - hb) ** 2 > r * r
            sel = sel[inside]
            best_t[sel] = t[sel]
            best_idx[sel] = idx
        return best_t, best_idx

    def shade(self, indices: np.ndarray,
              points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Colors and labels for hit points on the given rectangles."""
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        colors = np.zeros((indices.size, 3), dtype=float)
        labels = np.zeros(indices.size, dtype=np.int32)
        for idx in np.unique(indices):
            if idx < 0:
                continue
            rect = self.rectangles[idx]
            sel = indices == idx
            colors[sel] = rect.color
            labels[sel] = rect.label
            if rect.patches:
                ab = rect.plane_coords(points[sel])
                for patch in rect.patches:
                    hit = _point_in_polygon(ab[:, 0], ab[:, 1], patch.polygon)
                    if np.any(hit):
                        rows = np.nonzero(sel)[0][hit]
                        colors[rows] = patch.color
                        labels[rows] = patch.label
        return colors, labels

    def label_points(self, points: np.ndarray, tol: float = 0.02) -> np.ndarray:
        """Ground-truth labels for points lying on (or near) scene surfaces.

        Each point is attributed to the nearest rectangle whose plane is
        within tol and whose extent contains the point; points matching no
        surface get the clean label.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        best_dist = np.full(points.shape[0], np.inf)
        best_idx = np.full(points.shape[0], -1, dtype=np.int64)
        for idx, rect in enumerate(self.rectangles):
            rel = points - rect.center
            dist = np.abs(rel @ rect.normal)
            a = rel @ rect.axis_u
            b = rel @ rect.axis_v
            ok = (dist <= tol) & (np.abs(a) <= rect.half_u + tol) \
                & (np.abs(b) <= rect.half_v + tol) & (dist < best_dist)
            for (ha, hb, r) in rect.holes:
                ok &= (a - ha) ** 2 + (b - hb) ** 2 > r * r
            best_dist[ok] = dist[ok]
            best_idx[ok] = idx
        labels = np.zeros(points.shape[0], dtype=np.int32)
        hit = best_idx >= 0
        if np.any(hit):
            _, lab = self.shade(best_idx[hit], points[hit])
            labels[hit] = lab
        return labels

    def sample_surface(self, spacing: float) -> PointCloud:
        """Deterministic grid sampling of all rectangle surfaces."""
        pts, cols, labs = [], [], []
        for idx, rect in enumerate(self.rectangles):
            a = np.arange(-rect.half_u + 0.5 * spacing, rect.half_u, spacing)
            b = np.arange(-rect.half_v + 0.5 * spacing, rect.half_v, spacing)
            aa, bb = np.meshgrid(a, b, indexing="ij")
            aa = aa.ravel()
            bb = bb.ravel()
            keep = np.ones(aa.size, dtype=bool)
            for (ha, hb, r) in rect.holes:
                keep &= (aa - ha) ** 2 + (bb - hb) ** 2 > r * r
            p = (rect.center[None, :] + aa[keep, None] * rect.axis_u[None, :]
                 + bb[keep, None] * rect.axis_v[None, :])
            idx = self.rectangles.index(rect)
            c, l = self.shade(np.full(p.shape[0], idx), p)
            pts.append(p)
            cols.append(c)
            labs.append(l)
        return PointCloud(np.vstack(pts), colors=np.vstack(cols),
                          labels=np.concatenate(labs))


# ---------------------------------------------------------------------------
# sensor rig


@dataclass
class LidarSpec:
    beams: int = 32
    azimuth_steps: int = 1024
    rate: float = 10.0
    range_sigma: float = 0.01
    max_range: float = 50.0
    elevation_min: float = -0.29
    elevation_max: float = 0.29

    def beam_elevations(self) -> np.ndarray:
        return np.linspace(self.elevation_min, self.elevation_max, self.beams)

    def azimuth_angles(self) -> np.ndarray:
        return np.arange(self.azimuth_steps) * (2.0 * np.pi / self.azimuth_steps)


@dataclass
class SensorRig:
    lidar: LidarSpec
    camera: CameraModel
    extrinsic: RigidTransform  # lidar-to-camera

    def camera_pose(self, lidar_pose: RigidTransform) -> RigidTransform:
        """Camera-to-map pose for a given lidar-to-map pose."""
        return lidar_pose @ self.extrinsic.inverse()


NOISE_TRUNCATION_SIGMAS = 3.9


def raycast_scan(scene: Scene, rig: SensorRig, pose: RigidTransform,
                 timestamp: float = 0.0,
                 rng: np.random.Generator | int | None = None) -> OrganizedScan:
    """Simulate one organized LiDAR sweep from the given sensor pose.

    Args:
        scene: geometry to intersect.
        rig: sensor parameters (only the lidar block is used).
        pose: lidar-to-map transform at capture time.
        timestamp: stamped onto the scan.
        rng: Generator, seed, or None for noise-free ranges.
    """
    spec = rig.lidar
    elev = spec.beam_elevations()
    azim = spec.azimuth_angles()
    scan = OrganizedScan(timestamp, np.full((spec.beams, spec.azimuth_steps), np.inf),
                         elev, azim)
    dirs = scan.directions().reshape(-1, 3) @ pose.rotation.T
    t, _ = scene.first_hit(pose.t, dirs)
    ranges = t.reshape(spec.beams, spec.azimuth_steps)
    if rng is not None:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        noise = gen.normal(0.0, spec.range_sigma, ranges.shape)
        lim = NOISE_TRUNCATION_SIGMAS * spec.range_sigma
        valid = np.isfinite(ranges)
        ranges = ranges + np.clip(noise, -lim, lim) * valid
    ranges[~np.isfinite(ranges) | (ranges > spec.max_range)] = np.inf
    scan.ranges = ranges
    return scan


def simulate_scan_sequence(scene: Scene, rig: SensorRig, traj: Trajectory,
                           seed: int | None = 0) -> list[OrganizedScan]:
    """One scan per trajectory sample; a single seeded stream drives all noise."""
    gen = None if seed is None else np.random.default_rng(seed)
    return [raycast_scan(scene, rig, pose, ts, gen)
            for ts, pose in zip(traj.timestamps, traj.poses)]


@dataclass
class RenderResult:
    image: LabeledImage
    depth: np.ndarray
    surface_index: np.ndarray


def render_view(scene: Scene, rig: SensorRig,
                lidar_pose: RigidTransform,
                timestamp: float = 0.0) -> RenderResult:
    """Ray-cast the camera view; returns image plus depth/surface buffers."""
    cam = rig.camera
    cam_pose = rig.camera_pose(lidar_pose)
    uu, vv = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    rays_cam = pixel_rays(np.stack([uu.ravel(), vv.ravel()], axis=1), cam)
    dirs = rays_cam @ cam_pose.rotation.T
    t, idx = scene.first_hit(cam_pose.t, dirs)
    hit = idx >= 0
    colors = np.zeros((t.size, 3))
    labels = np.zeros(t.size, dtype=np.int32)
    if np.any(hit):
        hp = cam_pose.t[None, :] + t[hit, None] * dirs[hit]
        colors[hit], labels[hit] = scene.shade(idx[hit], hp)
    depth = np.where(hit, t * rays_cam[:, 2], np.inf)
    rgb = colors.reshape(cam.height, cam.width, 3).astype(np.uint8)
    image = LabeledImage(timestamp=timestamp, rgb=rgb,
                         labels=labels.reshape(cam.height, cam.width),
                         pose_map_to_lidar=lidar_pose.inverse())
    return RenderResult(image, depth.reshape(cam.height, cam.width),
                        idx.reshape(cam.height, cam.width))


def render_labels(scene: Scene, rig: SensorRig, lidar_pose: RigidTransform,
                  timestamp: float = 0.0) -> LabeledImage:
    return render_view(scene, rig, lidar_pose, timestamp).image


# ---------------------------------------------------------------------------
# trajectories


def generate_trajectory(waypoints: np.ndarray, speed: float, rate: float,
                        corner_time: float = 0.5) -> Trajectory:
    """Constant-speed piecewise-linear path with heading-aligned yaw.

    Yaw follows the active segment direction and blends by slerp inside a
    corner_time window centred on each interior waypoint.  A zero-length
    path yields a two-sample stationary trajectory.

    Args:
        waypoints: (K, 3) corner positions.
        speed: travel speed in m/s, > 0.
        rate: sampling rate in Hz, > 0.
        corner_time: yaw blend duration at corners, seconds.
    """
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 3)
    if wp.shape[0] < 2:
        raise ValueError("need at least two waypoints")
    if speed <= 0.0 or rate <= 0.0:
        raise ValueError("speed and rate must be positive")
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    total = float(seg_len.sum())
    if total < 1e-12:
        q = np.array([0.0, 0.0, 0.0, 1.0])
        poses = [RigidTransform(q, wp[0]), RigidTransform(q, wp[0])]
        return Trajectory(np.array([0.0, 1.0 / rate]), poses)

    keep = seg_len > 1e-12
    seg = seg[keep]
    seg_len = seg_len[keep]
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    starts = wp[:-1][keep]
    yaws = np.arctan2(seg[:, 1], seg[:, 0])
    quats = [quat_from_rotvec(np.array([0.0, 0.0, y])) for y in yaws]

    duration = total / speed
    n = int(np.floor(duration * rate + 1e-9)) + 1
    times = np.arange(n) / rate
    half_w = 0.5 * corner_time * speed

    poses = []
    for tk in times:
        s = min(tk * speed, total)
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg_len) - 1)
        i = max(i, 0)
        pos = starts[i] + seg[i] * ((s - cum[i]) / seg_len[i])
        q = quats[i]
        # corner blending: compare distance to the nearest interior corner
        if i + 1 < len(seg_len) and cum[i + 1] - s < half_w:
            u = 0.5 + 0.5 * (s - cum[i + 1]) / half_w
            q = slerp(quats[i], quats[i + 1], float(np.clip(u, 0.0, 1.0)))
        elif i > 0 and s - cum[i] < half_w:
            u = 0.5 + 0.5 * (s - cum[i]) / half_w
            q = slerp(quats[i - 1], quats[i], float(np.clip(u, 0.0, 1.0)))
        poses.append(RigidTransform(q, pos))
    return Trajectory(times, poses)


# ---------------------------------------------------------------------------
# stock scenes and rigs


def default_rig() -> SensorRig:
    """32-beam spinning lidar plus a VGA camera with mild distortion."""
    camera = CameraModel(alpha_x=500.0, alpha_y=500.0, gamma=0.0,
                         u0=320.0, v0=240.0,
                         k1=-0.08, k2=0.01, k3=0.0, p1=0.0005, p2=-0.0005,
                         width=640, height=480)
    R = np.array([[0.0, -1.0, 0.0],
                  [0.0, 0.0, -1.0],
                  [1.0, 0.0, 0.0]])
    extrinsic = RigidTransform.from_matrix(R, np.array([0.02, -0.05, 0.08]))
    return SensorRig(LidarSpec(), camera, extrinsic)


def default_room(patch: bool = True) -> Scene:
    """10 m x 8 m x 3 m room with two boxes and one corrosion patch."""
    s = Scene()
    s.add_rectangle(Rectangle([5, 4, 0], [1, 0, 0], [0, 1, 0], 5, 4,
                              color=(90, 90, 95), name="floor"))
    s.add_rectangle(Rectangle([5, 4, 3], [1, 0, 0], [0, 1, 0], 5, 4,
                              color=(200, 200, 200), name="ceiling"))
    wall_s = s.add_rectangle(Rectangle([5, 0, 1.5], [1, 0, 0], [0, 0, 1], 5, 1.5,
                                       color=(170, 172, 175), name="wall_south"))
    s.add_rectangle(Rectangle([5, 8, 1.5], [1, 0, 0], [0, 0, 1], 5, 1.5,
                              color=(170, 172, 175), name="wall_north"))
    s.add_rectangle(Rectangle([0, 4, 1.5], [0, 1, 0], [0, 0, 1], 4, 1.5,
                              color=(160, 162, 165), name="wall_west"))
    s.add_rectangle(Rectangle([10, 4, 1.5], [0, 1, 0], [0, 0, 1], 4, 1.5,
                              color=(160, 162, 165), name="wall_east"))
    s.add_box([3.0, 2.5, 0.6], [0.5, 0.4, 0.6], yaw=0.3,
              color=(110, 125, 140), name="crate")
    s.add_box([7.4, 5.8, 0.45], [0.6, 0.35, 0.45], yaw=-0.2,
              color=(140, 110, 100), name="bench")
    if patch:
        # irregular pentagon on the south wall, plane coords (u east, v up)
        poly = np.array([[-0.9, -0.45], [0.7, -0.55], [1.1, 0.1],
                         [0.2, 0.5], [-0.8, 0.35]])
        wall_s.patches.append(SurfacePatch(poly))
    return s


def default_loop_waypoints() -> np.ndarray:
    return np.array([[2.0, 2.0, 1.4], [8.0, 2.0, 1.4], [8.0, 6.0, 1.4],
                     [2.0, 6.0, 1.4], [2.0, 2.0, 1.4]])


def calibration_scene(target_pose: RigidTransform,
                      spec: TargetSpec | None = None,
                      plate_half_u: float = 0.6, plate_half_v: float = 0.45,
                      backdrop_distance: float = 7.0) -> Scene:
    """Calibration plate with four holes, open space behind, distant backdrop.

    The target frame has x along the plate width, y up the height, z out of
    the plate towards the sensor; holes sit at (+-width/2, +-height/2).
    """
    spec = spec or TargetSpec()
    s = Scene()
    plate = Rectangle(target_pose.t,
                      target_pose.rotation @ np.array([1.0, 0.0, 0.0]),
                      target_pose.rotation @ np.array([0.0, 1.0, 0.0]),
                      plate_half_u, plate_half_v,
                      color=(220, 220, 220), name="target")
    for sa in (-1.0, 1.0):
        for sb in (-1.0, 1.0):
            plate.holes.append((sa * spec.width / 2.0, sb * spec.height / 2.0,
                                spec.hole_radius))
    s.add_rectangle(plate)
    s.add_rectangle(Rectangle([backdrop_distance, 0, 0], [0, 1, 0], [0, 0, 1],
                              8.0, 4.0, color=(60, 60, 60), name="backdrop"))
    s.add_rectangle(Rectangle([backdrop_distance / 2.0, 0, -1.3],
                              [1, 0, 0], [0, 1, 0], backdrop_distance / 2.0, 8.0,
                              color=(80, 80, 80), name="floor"))
    return s


def target_hole_centers(target_pose: RigidTransform,
                        spec: TargetSpec | None = None) -> np.ndarray:
    """World coordinates of the four hole centres, one row per hole."""
    spec = spec or TargetSpec()
    local = np.array([[sa * spec.width / 2.0, sb * spec.height / 2.0, 0.0]
                      for sa in (-1.0, 1.0) for sb in (-1.0, 1.0)])
    return target_pose.apply(local)
