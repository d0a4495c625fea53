"""Map-based localization: error-state UKF driven by NDT scan matching.

The state is pose plus linear and angular velocity; uncertainty lives in a
12-dimensional local error space [position, orientation, linear velocity,
angular velocity] with orientation errors as rotation vectors composed on
the right of the nominal quaternion.  Prediction integrates a constant
velocity model through the sigma points; the update treats the NDT
scan-to-map result as a direct 6-DoF pose measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (PointCloud, RigidTransform, quat_from_rotvec,
                       quat_multiply, quat_conjugate, rotvec_from_quat)
from .ndt import EmptyOverlap, MatchResult, NdtGrid, build_ndt, ndt_match
from .slam import voxel_downsample
from .trajectory import Trajectory


class InvalidDt(ValueError):
    """Prediction interval must be positive and finite."""


class MatchRejected(RuntimeError):
    """Scan match unusable; the filter keeps its prediction."""

    def __init__(self, message: str, fitness: float = float("nan")):
        super().__init__(message)
        self.fitness = fitness


class LocalizationLost(RuntimeError):
    """Too many consecutive rejections; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: Trajectory,
                 diagnostics: list["StepDiagnostics"]):
        super().__init__(message)
        self.trajectory = trajectory
        self.diagnostics = diagnostics


@dataclass
class UkfConfig:
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0
    # process noise densities, per second
    q_pos: float = 1e-6
    q_rot: float = 1e-6
    q_vel: float = 1.0
    q_angvel: float = 1.0
    # measurement variances
    r_pos: float = 0.01        # m^2
    r_rot: float = 0.005       # rad^2
    # initial covariance diagonal
    init_pos_var: float = 1e-4
    init_rot_var: float = 1e-4
    init_vel_var: float = 0.25
    init_angvel_var: float = 0.25
    # scan matching
    scan_voxel: float = 0.2
    ndt_cell: float = 1.0
    ndt_min_points: int = 5
    match_max_iter: int = 30
    match_tol: float = 1e-6
    min_fitness: float = 0.1
    max_innovation: float = 1.0   # metres; larger corrections are rejected
    lost_after: int = 5
    cov_floor: float = 1e-12

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        for name in ("q_pos", "q_rot", "q_vel", "q_angvel", "r_pos", "r_rot",
                     "init_pos_var", "init_rot_var", "init_vel_var",
                     "init_angvel_var"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    def process_noise(self, dt: float) -> np.ndarray:
        return np.diag([self.q_pos] * 3 + [self.q_rot] * 3
                       + [self.q_vel] * 3 + [self.q_angvel] * 3) * dt

    def measurement_noise(self) -> np.ndarray:
        return np.diag([self.r_pos] * 3 + [self.r_rot] * 3)

    def initial_covariance(self) -> np.ndarray:
        return np.diag([self.init_pos_var] * 3 + [self.init_rot_var] * 3
                       + [self.init_vel_var] * 3 + [self.init_angvel_var] * 3)


@dataclass
class UkfState:
    position: np.ndarray
    orientation: np.ndarray           # quaternion (x, y, z, w)
    velocity: np.ndarray
    angular_velocity: np.ndarray
    covariance: np.ndarray            # (12, 12)

    @staticmethod
    def from_pose(pose: RigidTransform, config: UkfConfig) -> "UkfState":
        return UkfState(pose.t.copy(), pose.q.copy(), np.zeros(3), np.zeros(3),
                        config.initial_covariance())

    def pose(self) -> RigidTransform:
        return RigidTransform(self.orientation, self.position)


def _floor_spd(P: np.ndarray, floor: float) -> np.ndarray:
    P = 0.5 * (P + P.T)
    w, v = np.linalg.eigh(P)
    w = np.maximum(w, floor)
    return (v * w) @ v.T


def _apply_error(state: UkfState, e: np.ndarray) -> tuple[np.ndarray, ...]:
    """Nominal (+) error: returns (position, orientation, velocity, angvel)."""
    return (state.position + e[0:3],
            quat_multiply(state.orientation, quat_from_rotvec(e[3:6])),
            state.velocity + e[6:9],
            state.angular_velocity + e[9:12])


def _sigma_errors(P: np.ndarray, config: UkfConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Error-space sigma offsets and mean/covariance weights."""
    n = 12
    lam = config.alpha ** 2 * (n + config.kappa) - n
    c = n + lam
    try:
        S = np.linalg.cholesky(c * P)
    except np.linalg.LinAlgError:
        S = np.linalg.cholesky(c * _floor_spd(P, 1e-12))
    offsets = np.zeros((2 * n + 1, n))
    offsets[1:n + 1] = S.T
    offsets[n + 1:] = -S.T
    wm = np.full(2 * n + 1, 1.0 / (2.0 * c))
    wc = wm.copy()
    wm[0] = lam / c
    wc[0] = lam / c + (1.0 - config.alpha ** 2 + config.beta)
    return offsets, wm, wc


def ukf_predict(state: UkfState, dt: float, config: UkfConfig) -> UkfState:
    """Constant-velocity propagation through the sigma points.

    Raises:
        InvalidDt: dt is non-positive or non-finite.
    """
    if not np.isfinite(dt) or dt <= 0.0:
        raise InvalidDt(f"dt must be positive, got {dt}")
    offsets, wm, wc = _sigma_errors(state.covariance, config)

    props = []
    for e in offsets:
        p, q, v, w = _apply_error(state, e)
        p = p + v * dt
        q = quat_multiply(q, quat_from_rotvec(w * dt))
        props.append((p, q, v, w))

    p_ref, q_ref, v_ref, w_ref = props[0]
    q_ref_inv = quat_conjugate(q_ref)
    errs = np.empty((len(props), 12))
    for k, (p, q, v, w) in enumerate(props):
        errs[k, 0:3] = p - p_ref
        errs[k, 3:6] = rotvec_from_quat(quat_multiply(q_ref_inv, q))
        errs[k, 6:9] = v - v_ref
        errs[k, 9:12] = w - w_ref
    mean_err = wm @ errs
    centered = errs - mean_err
    P = centered.T @ (centered * wc[:, None]) + config.process_noise(dt)

    ref_state = UkfState(p_ref, q_ref, v_ref, w_ref, P)
    p, q, v, w = _apply_error(ref_state, mean_err)
    return UkfState(p, q, v, w, _floor_spd(P, config.cov_floor))


def ukf_pose_update(state: UkfState, measured: RigidTransform,
                    config: UkfConfig) -> UkfState:
    """Fuse a 6-DoF pose measurement (measurement-noise model from config)."""
    offsets, wm, wc = _sigma_errors(state.covariance, config)
    q_inv = quat_conjugate(state.orientation)
    Z = np.empty((offsets.shape[0], 6))
    for k, e in enumerate(offsets):
        p, q, _, _ = _apply_error(state, e)
        Z[k, 0:3] = p
        Z[k, 3:6] = rotvec_from_quat(quat_multiply(q_inv, q))
    z_mean = wm @ Z
    Zc = Z - z_mean
    S = Zc.T @ (Zc * wc[:, None]) + config.measurement_noise()
    mean_err = wm @ offsets
    Xc = offsets - mean_err
    Pxz = Xc.T @ (Zc * wc[:, None])

    z_obs = np.concatenate([
        measured.t,
        rotvec_from_quat(quat_multiply(q_inv, measured.q))])
    K = np.linalg.solve(S.T, Pxz.T).T
    delta = mean_err + K @ (z_obs - z_mean)
    P = state.covariance - K @ S @ K.T
    p, q, v, w = _apply_error(state, delta)
    return UkfState(p, q, v, w, _floor_spd(P, config.cov_floor))


def ukf_update(state: UkfState, scan: PointCloud, grid: NdtGrid,
               config: UkfConfig) -> tuple[UkfState, MatchResult]:
    """NDT-match the scan from the predicted pose, then fuse the result.

    Raises:
        MatchRejected: no overlap, non-convergence, fitness below the
            configured minimum, or a position correction larger than
            max_innovation (a far-off match in self-similar rooms can
            converge with plausible fitness); the caller should keep the
            prediction.
    """
    try:
        res = ndt_match(scan, grid, state.pose(), config.match_max_iter,
                        config.match_tol)
    except EmptyOverlap as exc:
        raise MatchRejected(str(exc)) from exc
    if not res.converged or res.fitness < config.min_fitness:
        raise MatchRejected(
            f"fitness {res.fitness:.3f} below {config.min_fitness}",
            res.fitness)
    innovation = float(np.linalg.norm(res.transform.t - state.position))
    if innovation > config.max_innovation:
        raise MatchRejected(
            f"position correction {innovation:.2f} m exceeds "
            f"{config.max_innovation}", res.fitness)
    return ukf_pose_update(state, res.transform, config), res


@dataclass
class StepDiagnostics:
    timestamp: float
    fitness: float
    cov_trace: float
    rejected: bool


def localize_sequence(scans: list[tuple[float, PointCloud]],
                      map_cloud: PointCloud, initial_pose: RigidTransform,
                      config: UkfConfig | None = None
                      ) -> tuple[Trajectory, list[StepDiagnostics]]:
    """Track the sensor through a scan sequence against a fixed map.

    Args:
        scans: (timestamp, sensor-frame cloud) pairs, strictly increasing.
        map_cloud: prior map; an NDT grid is built from it once.
        initial_pose: starting pose in the map frame.
        config: filter and matcher tuning.

    Returns:
        (trajectory, per-step diagnostics with fitness and covariance trace).

    Raises:
        LocalizationLost: lost_after consecutive rejections; the exception
            carries the partial trajectory and diagnostics.
        InvalidDt: non-increasing scan timestamps.
    """
    config = config or UkfConfig()
    grid = build_ndt(map_cloud, config.ndt_cell, config.ndt_min_points)
    state = UkfState.from_pose(initial_pose, config)
    times: list[float] = []
    poses: list[RigidTransform] = []
    diags: list[StepDiagnostics] = []
    rejects = 0
    prev_t = None
    for ts, cloud in scans:
        if prev_t is not None:
            state = ukf_predict(state, ts - prev_t, config)
        prev_t = ts
        ds = voxel_downsample(cloud, config.scan_voxel)
        try:
            state, res = ukf_update(state, ds, grid, config)
            fitness = res.fitness
            rejects = 0
            rejected = False
        except MatchRejected as exc:
            fitness = exc.fitness
            rejects += 1
            rejected = True
        times.append(ts)
        poses.append(state.pose())
        diags.append(StepDiagnostics(ts, fitness,
                                     float(np.trace(state.covariance)),
                                     rejected))
        if rejects >= config.lost_after:
            raise LocalizationLost(
                f"{rejects} consecutive scan rejections",
                Trajectory(np.array(times), poses), diags)
    return Trajectory(np.array(times), poses), diags
