"""Normal-distributions transform: voxel Gaussians and scan registration.

A grid summarizes a reference cloud by per-voxel mean and covariance
(eigenvalue-floored so each covariance stays invertible).  Matching runs
damped Gauss-Newton ascent on the summed per-point Gaussian log-likelihood,
equivalently descent on the Mahalanobis cost sum(e' inv(C) e) / 2, first on
a coarsened copy of the grid to widen the convergence basin and then on the
grid itself.  The reported fitness is the mean per-point likelihood
exp(-m^2 / 2) over all source points, zero for points landing in empty
cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, RigidTransform


class EmptyOverlap(RuntimeError):
    """No source point falls into an occupied grid cell."""


_PACK_BASE = np.int64(1) << 21
_PACK_OFF = np.int64(1) << 20


def _pack_keys(idx: np.ndarray) -> np.ndarray:
    k = idx.astype(np.int64) + _PACK_OFF
    if np.any(k < 0) or np.any(k >= _PACK_BASE):
        raise ValueError("points exceed the packable voxel index range")
    return (k[:, 0] * _PACK_BASE + k[:, 1]) * _PACK_BASE + k[:, 2]


def _unpack_keys(keys: np.ndarray) -> np.ndarray:
    k = keys.astype(np.int64)
    z = k % _PACK_BASE
    k //= _PACK_BASE
    y = k % _PACK_BASE
    x = k // _PACK_BASE
    return np.stack([x, y, z], axis=1) - _PACK_OFF


def _floor_invert(cov: np.ndarray,
                  eigen_floor_ratio: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Floor covariance eigenvalues and return (covariance, inverse)."""
    if cov.shape[0] == 0:
        return cov, cov.copy()
    w, v = np.linalg.eigh(cov)
    floor = np.maximum(eigen_floor_ratio * w[:, -1:], 1e-12)
    w = np.maximum(w, floor)
    cov = np.einsum('cij,cj,ckj->cik', v, w, v)
    inv = np.einsum('cij,cj,ckj->cik', v, 1.0 / w, v)
    return cov, inv


@dataclass
class NdtGrid:
    """Voxelized Gaussian field over a reference cloud."""

    cell_size: float
    min_points_per_cell: int
    means: np.ndarray          # (C, 3)
    covariances: np.ndarray    # (C, 3, 3), after eigenvalue flooring
    inv_covariances: np.ndarray
    counts: np.ndarray         # (C,)
    packed_keys: np.ndarray    # (C,) sorted packed voxel indices
    point_cells: np.ndarray    # (N,) cell id per input point, -1 if dropped

    def __len__(self) -> int:
        return self.means.shape[0]

    def lookup(self, points: np.ndarray) -> np.ndarray:
        """Cell index per query point, -1 where the voxel holds no Gaussian."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        keys = _pack_keys(np.floor(p / self.cell_size).astype(np.int64))
        pos = np.searchsorted(self.packed_keys, keys)
        pos = np.minimum(pos, self.packed_keys.size - 1) if self.packed_keys.size \
            else np.zeros(keys.size, dtype=np.int64)
        out = np.full(keys.size, -1, dtype=np.int64)
        if self.packed_keys.size:
            hit = self.packed_keys[pos] == keys
            out[hit] = pos[hit]
        return out


def build_ndt(cloud: PointCloud | np.ndarray, cell_size: float = 1.0,
              min_points_per_cell: int = 5,
              eigen_floor_ratio: float = 1e-3) -> NdtGrid:
    """Summarize a cloud into per-voxel Gaussians.

    Args:
        cloud: reference points.
        cell_size: voxel edge length in metres.
        min_points_per_cell: voxels with fewer members get no distribution.
        eigen_floor_ratio: covariance eigenvalues are floored at this
            fraction of the largest eigenvalue (and at 1e-12 absolutely).

    Covariances use the n-1 sample normalization.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else \
        np.asarray(cloud, dtype=float).reshape(-1, 3)
    if cell_size <= 0.0:
        raise ValueError("cell_size must be positive")
    n = pts.shape[0]
    if n == 0:
        empty = np.zeros(0)
        return NdtGrid(cell_size, min_points_per_cell, empty.reshape(0, 3),
                       empty.reshape(0, 3, 3), empty.reshape(0, 3, 3),
                       np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                       np.full(0, -1, dtype=np.int64))
    keys = _pack_keys(np.floor(pts / cell_size).astype(np.int64))
    uniq, inverse, counts = np.unique(keys, return_inverse=True,
                                      return_counts=True)
    sums = np.zeros((uniq.size, 3))
    np.add.at(sums, inverse, pts)
    outer = np.zeros((uniq.size, 3, 3))
    np.add.at(outer, inverse, pts[:, :, None] * pts[:, None, :])

    keep = counts >= max(min_points_per_cell, 2)
    cell_map = np.full(uniq.size, -1, dtype=np.int64)
    cell_map[keep] = np.arange(int(keep.sum()))
    counts_k = counts[keep]
    means = sums[keep] / counts_k[:, None]
    cov = (outer[keep] - counts_k[:, None, None]
           * means[:, :, None] * means[:, None, :]) / (counts_k - 1)[:, None, None]
    cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))

    cov, inv = _floor_invert(cov, eigen_floor_ratio)
    return NdtGrid(cell_size, min_points_per_cell, means, cov, inv,
                   counts_k.astype(np.int64), uniq[keep],
                   cell_map[inverse])


def coarsen(grid: NdtGrid, factor: int = 2,
            eigen_floor_ratio: float = 0.01) -> NdtGrid:
    """Merge voxel Gaussians into a grid with factor-times larger cells.

    Parent statistics are moment-matched from the member cells' counts,
    means, and covariances, so the coarse Gaussian equals the one built
    directly from the pooled points (up to the per-cell eigenvalue floor).
    The default floor is generous: coarse grids serve as a smoothing stage
    for registration, where fat distributions widen the basin.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError("factor must be a positive integer")
    if factor == 1 or len(grid) == 0:
        return grid
    coords = _unpack_keys(grid.packed_keys)
    parents = _pack_keys(np.floor_divide(coords, factor))
    uniq, inverse = np.unique(parents, return_inverse=True)
    n = grid.counts.astype(float)
    total = np.zeros(uniq.size)
    np.add.at(total, inverse, n)
    sums = np.zeros((uniq.size, 3))
    np.add.at(sums, inverse, n[:, None] * grid.means)
    means = sums / total[:, None]
    d = grid.means - means[inverse]
    scatter = ((n - 1.0)[:, None, None] * grid.covariances
               + n[:, None, None] * d[:, :, None] * d[:, None, :])
    pooled = np.zeros((uniq.size, 3, 3))
    np.add.at(pooled, inverse, scatter)
    cov = pooled / (total - 1.0)[:, None, None]
    cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
    cov, inv = _floor_invert(cov, eigen_floor_ratio)
    return NdtGrid(grid.cell_size * factor, grid.min_points_per_cell,
                   means, cov, inv, total.astype(np.int64), uniq,
                   np.full(0, -1, dtype=np.int64))


def _skew_batch(p: np.ndarray) -> np.ndarray:
    S = np.zeros((p.shape[0], 3, 3))
    S[:, 0, 1] = -p[:, 2]
    S[:, 0, 2] = p[:, 1]
    S[:, 1, 0] = p[:, 2]
    S[:, 1, 2] = -p[:, 0]
    S[:, 2, 0] = -p[:, 1]
    S[:, 2, 1] = p[:, 0]
    return S


@dataclass
class MatchResult:
    transform: RigidTransform
    fitness: float
    score: float
    converged: bool
    n_iter: int
    matched_fraction: float


# cost charged to a source point outside every occupied cell; keeps the
# objective comparable when the matched set changes between iterates
_UNMATCHED_COST = 0.5 * 9.0


def _objective(grid: NdtGrid, p: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    ci = grid.lookup(p)
    matched = ci >= 0
    if not np.any(matched):
        return float("inf"), matched, np.zeros(0)
    e = p[matched] - grid.means[ci[matched]]
    lam = grid.inv_covariances[ci[matched]]
    md2 = np.einsum('ni,nij,nj->n', e, lam, e)
    obj = 0.5 * float(md2.sum()) + _UNMATCHED_COST * float((~matched).sum())
    return obj, matched, md2


def _gn_step(grid: NdtGrid, p: np.ndarray,
             matched: np.ndarray) -> np.ndarray | None:
    """Left-multiplicative [t, rotvec] Gauss-Newton step, None if singular."""
    pm = p[matched]
    ci = grid.lookup(pm)
    e = pm - grid.means[ci]
    lam = grid.inv_covariances[ci]
    J = np.zeros((pm.shape[0], 3, 6))
    J[:, 0, 0] = J[:, 1, 1] = J[:, 2, 2] = 1.0
    J[:, :, 3:] = -_skew_batch(pm)
    H = np.einsum('nai,nab,nbj->ij', J, lam, J)
    g = np.einsum('nai,nab,nb->i', J, lam, e)
    try:
        return -np.linalg.solve(H + 1e-9 * np.eye(6), g)
    except np.linalg.LinAlgError:
        return None


def _gn_loop(grid: NdtGrid, src: np.ndarray, T: RigidTransform,
             max_iter: int, tol: float) -> tuple[RigidTransform, int, bool]:
    p = T.apply(src)
    obj, matched, _ = _objective(grid, p)
    if not np.any(matched):
        return T, 0, False
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        delta = _gn_step(grid, p, matched)
        if delta is None:
            break
        if np.linalg.norm(delta) < tol:
            converged = True
            break
        # step halving keeps the (penalized) objective non-increasing
        accepted = False
        for _ in range(10):
            T_new = RigidTransform.from_rotvec(delta[3:], delta[:3]) @ T
            p_new = T_new.apply(src)
            obj_new, matched_new, _ = _objective(grid, p_new)
            if obj_new < obj:
                T, p, obj, matched = T_new, p_new, obj_new, matched_new
                accepted = True
                break
            delta = 0.5 * delta
        if not accepted:
            converged = True
            break
    return T, n_iter, converged


def _coarse_seed(fine: NdtGrid, coarse: NdtGrid, src: np.ndarray,
                 T: RigidTransform, fine_obj0: float, max_iter: int,
                 tol: float) -> tuple[RigidTransform, int]:
    """Descend the coarse objective, keeping the iterate that scores best
    on the fine grid.

    The coarse minimizer itself can sit decimetres off (its fat Gaussians
    have biased means), but its descent path passes through the fine
    basin; selecting by fine objective captures that point.
    """
    p = T.apply(src)
    obj, matched, _ = _objective(coarse, p)
    if not np.any(matched):
        return T, 0
    best_T, best_obj = T, fine_obj0
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        delta = _gn_step(coarse, p, matched)
        if delta is None or np.linalg.norm(delta) < tol:
            break
        accepted = False
        for _ in range(10):
            T_new = RigidTransform.from_rotvec(delta[3:], delta[:3]) @ T
            p_new = T_new.apply(src)
            obj_new, matched_new, _ = _objective(coarse, p_new)
            if obj_new < obj:
                T, p, obj, matched = T_new, p_new, obj_new, matched_new
                accepted = True
                break
            delta = 0.5 * delta
        if not accepted:
            break
        fine_obj, fine_m, _ = _objective(fine, T.apply(src))
        if np.any(fine_m) and fine_obj < best_obj:
            best_T, best_obj = T, fine_obj
    return best_T, n_iter


def ndt_match(source: PointCloud | np.ndarray, grid: NdtGrid,
              initial: RigidTransform | None = None, max_iter: int = 30,
              tol: float = 1e-6, coarse_factor: int = 2) -> MatchResult:
    """Register a source cloud against an NDT grid.

    Runs two resolutions: a pass over a coarsened copy of the grid pulls
    the pose into the right basin, then the grid itself refines.  The
    iterate along the coarse descent path that scores best on the fine
    grid becomes the refinement seed (never worse than the start), and
    both passes are skipped when the first fine-grid step already falls
    below tol (so matching a cloud against its own grid returns the
    initial transform unchanged).

    Args:
        source: cloud to align.
        grid: reference field.
        initial: starting transform (identity if None); must overlap the
            grid or EmptyOverlap is raised.
        max_iter: per-resolution Gauss-Newton iteration cap; exceeding it
            returns the best iterate with converged=False.
        tol: step-norm convergence threshold.
        coarse_factor: cell-size multiplier for the coarse pass; 1 turns
            the pass off.

    Returns:
        MatchResult whose transform maps source points into the grid frame.
    """
    src = source.points if isinstance(source, PointCloud) else \
        np.asarray(source, dtype=float).reshape(-1, 3)
    if src.shape[0] == 0:
        raise EmptyOverlap("empty source cloud")
    T = initial if initial is not None else RigidTransform.identity()
    n_src = src.shape[0]

    p = T.apply(src)
    obj0, matched0, _ = _objective(grid, p)
    if not np.any(matched0):
        raise EmptyOverlap("initial transform shares no occupied cell")

    delta = _gn_step(grid, p, matched0)
    if delta is not None and np.linalg.norm(delta) < tol:
        _, matched, md2 = _objective(grid, p)
        fitness = float(np.exp(-0.5 * md2).sum() / n_src) if md2.size else 0.0
        return MatchResult(T, fitness, -0.5 * float(md2.sum()), True, 1,
                           float(matched.sum()) / n_src)

    n_total = 1
    if coarse_factor > 1 and len(grid) > 1:
        T, it_c = _coarse_seed(grid, coarsen(grid, coarse_factor), src, T,
                               obj0, max_iter, tol)
        n_total += it_c

    T, it_f, converged = _gn_loop(grid, src, T, max_iter, tol)
    n_total += it_f

    _, matched, md2 = _objective(grid, T.apply(src))
    fitness = float(np.exp(-0.5 * md2).sum() / n_src) if md2.size else 0.0
    score = -0.5 * float(md2.sum())
    return MatchResult(T, fitness, score, converged, n_total,
                       float(matched.sum()) / n_src)
