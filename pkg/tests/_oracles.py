"""Brute-force reference implementations for the trajectory metrics.

Deliberately naive: homogeneous 4x4 arithmetic and explicit per-pair
loops, sharing nothing with the package code beyond the containers.
"""

import numpy as np

from corromap.geometry import RigidTransform
from corromap.trajectory import Trajectory


def hom(pose) -> np.ndarray:
    M = np.eye(4)
    M[:3, :3] = pose.rotation
    M[:3, 3] = pose.t
    return M


def brute_associate(ta, tb, max_dt):
    cands = []
    for i, t1 in enumerate(ta):
        for j, t2 in enumerate(tb):
            dt = abs(float(t1) - float(t2))
            if dt <= max_dt:
                cands.append((dt, i, j))
    cands.sort()
    used_a, used_b, pairs = set(), set(), []
    for _, i, j in cands:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    return sorted(pairs)


def brute_umeyama(src, dst, with_scale=False):
    """Closed-form similarity fit, covariance accumulated pair by pair."""
    n = src.shape[0]
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cov = np.zeros((3, 3))
    var_s = 0.0
    for a, b in zip(src, dst):
        cov += np.outer(b - mu_d, a - mu_s)
        var_s += float((a - mu_s) @ (a - mu_s))
    cov /= n
    var_s /= n
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0.0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    c = float(np.trace(np.diag(D) @ S) / var_s) if with_scale else 1.0
    t = mu_d - c * R @ mu_s
    return R, t, c


def brute_ape(est, ref, max_dt=0.02, align=True):
    pairs = brute_associate(est.timestamps, ref.timestamps, max_dt)
    P = np.array([hom(est.poses[i])[:3, 3] for i, _ in pairs])
    Q = np.array([hom(ref.poses[j])[:3, 3] for _, j in pairs])
    if align:
        R, t, c = brute_umeyama(P, Q)
        P = np.array([c * R @ p + t for p in P])
    return np.array([float(np.sqrt(((q - p) ** 2).sum()))
                     for p, q in zip(P, Q)])


def brute_rpe(est, ref, delta=1, max_dt=0.02):
    pairs = brute_associate(est.timestamps, ref.timestamps, max_dt)
    errs = []
    for k in range(len(pairs) - delta):
        i0, j0 = pairs[k]
        i1, j1 = pairs[k + delta]
        De = np.linalg.inv(hom(est.poses[i0])) @ hom(est.poses[i1])
        Dr = np.linalg.inv(hom(ref.poses[j0])) @ hom(ref.poses[j1])
        E = np.linalg.inv(Dr) @ De
        errs.append(float(np.linalg.norm(E[:3, 3])))
    return np.array(errs)


def random_trajectory(rng, n=50):
    ts = np.cumsum(rng.uniform(0.05, 0.15, n))
    poses = [RigidTransform.from_rotvec(rng.normal(0.0, 0.5, 3),
                                        rng.normal(0.0, 2.0, 3))
             for _ in range(n)]
    return Trajectory(ts, poses)
