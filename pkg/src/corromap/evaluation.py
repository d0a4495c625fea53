"""Trajectory and segmentation metrics.

Trajectory comparison follows the usual two-step recipe: associate poses
by nearest timestamp, rigidly align (similarity transform optional), then
report absolute and relative translational errors.  Segmentation metrics
operate on boolean masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DegenerateConfiguration, RigidTransform
from .trajectory import Trajectory


class NoOverlap(ValueError):
    """No timestamp pairs within the association tolerance."""


class DimensionMismatch(ValueError):
    pass


def associate(est: Trajectory, ref: Trajectory,
              max_dt: float = 0.02) -> list[tuple[int, int]]:
    """Greedy nearest-timestamp matching; each reference index used once.

    Candidate pairs are ordered by |dt|, so the globally closest pairs win.

    Raises:
        NoOverlap: nothing matches within max_dt.
    """
    te, tr = est.timestamps, ref.timestamps
    # nearest reference for each estimate via binary search
    idx = np.searchsorted(tr, te)
    cands = []
    for i, k in enumerate(idx):
        for j in (k - 1, k):
            if 0 <= j < len(tr):
                dt = abs(te[i] - tr[j])
                if dt <= max_dt:
                    cands.append((dt, i, j))
    cands.sort()
    used_e: set[int] = set()
    used_r: set[int] = set()
    pairs = []
    for _, i, j in cands:
        if i in used_e or j in used_r:
            continue
        used_e.add(i)
        used_r.add(j)
        pairs.append((i, j))
    if not pairs:
        raise NoOverlap(f"no timestamp pairs within {max_dt} s")
    pairs.sort()
    return pairs


def umeyama_align(source: np.ndarray, target: np.ndarray,
                  with_scale: bool = False) -> tuple[RigidTransform, float]:
    """Least-squares similarity transform: s * R @ source + t ~ target.

    Returns:
        (transform, scale); the transform holds R and t, scale is 1.0
        unless with_scale.

    Raises:
        DegenerateConfiguration: fewer than 3 points or rank-deficient
            point sets.
    """
    a = np.asarray(source, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise DimensionMismatch("point arrays must both be (N, 3)")
    n = a.shape[0]
    if n < 3:
        raise DegenerateConfiguration("need at least 3 points")
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    ac = a - mu_a
    bc = b - mu_b
    cov = bc.T @ ac / n
    U, D, Vt = np.linalg.svd(cov)
    if D[1] < 1e-12 * max(D[0], 1e-300):
        raise DegenerateConfiguration("points are collinear")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0.0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    if with_scale:
        var_a = (ac ** 2).sum() / n
        scale = float(np.trace(np.diag(D) @ S) / var_a)
    else:
        scale = 1.0
    t = mu_b - scale * R @ mu_a
    return RigidTransform.from_matrix(R, t), scale


@dataclass
class ErrorSeries:
    """Per-sample error magnitudes with summary statistics."""

    values: np.ndarray
    mean: float = field(init=False)
    median: float = field(init=False)
    rms: float = field(init=False)
    std: float = field(init=False)
    max: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        object.__setattr__(self, "values", v)
        self.mean = float(v.mean())
        self.median = float(np.median(v))
        self.rms = float(np.sqrt((v ** 2).mean()))
        self.std = float(v.std())
        self.max = float(v.max())


def ape(est: Trajectory, ref: Trajectory, max_dt: float = 0.02,
        align: bool = True, with_scale: bool = False) -> ErrorSeries:
    """Absolute (translational) pose error after optional rigid alignment."""
    pairs = associate(est, ref, max_dt)
    pe = np.array([est.poses[i].t for i, _ in pairs])
    pr = np.array([ref.poses[j].t for _, j in pairs])
    if align:
        T, s = umeyama_align(pe, pr, with_scale)
        pe = s * (T.rotation @ pe.T).T + T.translation
    return ErrorSeries(np.linalg.norm(pe - pr, axis=1))


def rpe(est: Trajectory, ref: Trajectory, delta: int = 1,
        max_dt: float = 0.02) -> ErrorSeries:
    """Relative pose error over index offsets of the matched pair list.

    For matched pairs k and k+delta, compares the estimated relative
    translation with the reference one; alignment-free by construction.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    pairs = associate(est, ref, max_dt)
    if len(pairs) <= delta:
        raise NoOverlap(f"need more than {delta} matched pairs")
    errs = []
    for k in range(len(pairs) - delta):
        i0, j0 = pairs[k]
        i1, j1 = pairs[k + delta]
        de = est.poses[i0].inverse() @ est.poses[i1]
        dr = ref.poses[j0].inverse() @ ref.poses[j1]
        errs.append(np.linalg.norm((dr.inverse() @ de).t))
    return ErrorSeries(np.array(errs))


@dataclass
class MaskMetrics:
    precision: float
    recall: float
    iou: float
    f1: float
    tp: int
    fp: int
    fn: int


def mask_metrics(pred: np.ndarray, truth: np.ndarray) -> MaskMetrics:
    """Pixelwise detection metrics for boolean masks.

    Empty-set conventions: if both masks are empty precision, recall and
    IoU are all 1; an empty prediction against a non-empty truth has
    precision 0 (and symmetrically for recall); F1 is 0 whenever
    precision + recall is 0.

    Raises:
        DimensionMismatch: shapes differ.
    """
    p = np.asarray(pred).astype(bool)
    t = np.asarray(truth).astype(bool)
    if p.shape != t.shape:
        raise DimensionMismatch(f"mask shapes {p.shape} vs {t.shape}")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    both_empty = (tp + fp + fn) == 0
    precision = 1.0 if both_empty else (tp / (tp + fp) if tp + fp else 0.0)
    recall = 1.0 if both_empty else (tp / (tp + fn) if tp + fn else 0.0)
    iou = 1.0 if both_empty else tp / (tp + fp + fn)
    f1 = (0.0 if precision + recall == 0.0
          else 2.0 * precision * recall / (precision + recall))
    return MaskMetrics(precision, recall, iou, f1, tp, fp, fn)
