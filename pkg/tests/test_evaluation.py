"""Trajectory association, alignment, APE/RPE, and mask metrics."""

import numpy as np
import pytest

from _oracles import (brute_ape, brute_associate, brute_rpe, brute_umeyama,
                      random_trajectory)
from corromap.evaluation import (DimensionMismatch, ErrorSeries, NoOverlap,
                                 ape, associate, mask_metrics, rpe,
                                 umeyama_align)
from corromap.geometry import DegenerateConfiguration, RigidTransform
from corromap.trajectory import Trajectory


def traj_from_positions(ts, positions, q=None):
    q = np.array([0.0, 0.0, 0.0, 1.0]) if q is None else q
    return Trajectory(np.asarray(ts, dtype=float),
                      [RigidTransform(q, p) for p in np.asarray(positions)])


@pytest.fixture
def zigzag():
    rng = np.random.default_rng(42)
    ts = np.arange(20) * 0.1
    pos = np.cumsum(rng.normal(0.0, 0.3, (20, 3)), axis=0)
    return traj_from_positions(ts, pos)


# ---------------------------------------------------------------------------
# association


def test_associate_identical_timestamps(zigzag):
    pairs = associate(zigzag, zigzag)
    assert pairs == [(i, i) for i in range(len(zigzag))]


def test_associate_small_offset(zigzag):
    shifted = Trajectory(zigzag.timestamps + 0.01, zigzag.poses)
    pairs = associate(shifted, zigzag, max_dt=0.05)
    assert pairs == [(i, i) for i in range(len(zigzag))]


def test_associate_disjoint_ranges(zigzag):
    far = Trajectory(zigzag.timestamps + 100.0, zigzag.poses)
    with pytest.raises(NoOverlap):
        associate(far, zigzag, max_dt=0.02)


def test_associate_reference_used_once():
    est = traj_from_positions([0.0, 0.005], np.zeros((2, 3)))
    ref = traj_from_positions([0.001], np.zeros((1, 3)))
    pairs = associate(est, ref, max_dt=0.02)
    # both estimates are within tolerance of the single reference; only
    # the closer one may claim it
    assert pairs == [(0, 0)]


# ---------------------------------------------------------------------------
# umeyama


def test_umeyama_identity(zigzag):
    P = zigzag.positions()
    T, scale = umeyama_align(P, P)
    assert scale == 1.0
    assert np.abs(T.rotation - np.eye(3)).max() < 1e-9
    assert np.linalg.norm(T.t) < 1e-9


def test_umeyama_recovers_rigid_transform(zigzag):
    P = zigzag.positions()
    true = RigidTransform.from_rotvec(np.array([0.2, -0.1, 0.7]),
                                      np.array([3.0, -1.0, 0.5]))
    T, scale = umeyama_align(P, true.apply(P))
    assert scale == 1.0
    assert np.abs(T.rotation - true.rotation).max() < 1e-9
    assert np.linalg.norm(T.t - true.t) < 1e-9


def test_umeyama_recovers_scale(zigzag):
    P = zigzag.positions()
    true = RigidTransform.from_rotvec(np.array([0.0, 0.3, -0.2]),
                                      np.array([1.0, 2.0, 3.0]))
    Q = 2.0 * (true.rotation @ P.T).T + true.t
    T, scale = umeyama_align(P, Q, with_scale=True)
    assert scale == pytest.approx(2.0, abs=1e-9)
    aligned = scale * (T.rotation @ P.T).T + T.t
    assert np.abs(aligned - Q).max() < 1e-9


def test_umeyama_degenerate_inputs():
    line = np.outer(np.arange(5.0), np.array([1.0, 2.0, 0.0]))
    with pytest.raises(DegenerateConfiguration):
        umeyama_align(line, line)
    with pytest.raises(DegenerateConfiguration):
        umeyama_align(np.zeros((2, 3)), np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# ape / rpe


def test_ape_identical(zigzag):
    series = ape(zigzag, zigzag, align=False)
    assert series.max == 0.0


def test_ape_alignment_removes_rigid_offset(zigzag):
    shift = RigidTransform.from_rotvec(np.array([0.0, 0.0, 1.0]),
                                       np.array([5.0, -2.0, 1.0]))
    moved = Trajectory(zigzag.timestamps,
                       [shift @ p for p in zigzag.poses])
    assert ape(moved, zigzag, align=True).max < 1e-9
    # sanity: the offset is real before alignment
    assert ape(moved, zigzag, align=False).mean > 1.0


def test_ape_unaligned_constant_offset(zigzag):
    moved = Trajectory(
        zigzag.timestamps,
        [RigidTransform(p.q, p.t + np.array([0.03, 0.0, 0.0]))
         for p in zigzag.poses])
    series = ape(moved, zigzag, align=False)
    assert series.mean == pytest.approx(0.03, abs=1e-12)
    assert series.std == pytest.approx(0.0, abs=1e-12)


def test_rpe_identical(zigzag):
    assert rpe(zigzag, zigzag).max == 0.0


def test_rpe_invariant_under_global_transform(zigzag):
    shift = RigidTransform.from_rotvec(np.array([0.1, 0.2, 0.3]),
                                       np.array([4.0, 4.0, -2.0]))
    moved = Trajectory(zigzag.timestamps, [shift @ p for p in zigzag.poses])
    assert rpe(moved, zigzag).max < 1e-9


def test_rpe_localizes_single_jump(zigzag):
    k = 7
    poses = [RigidTransform(p.q, p.t.copy()) for p in zigzag.poses]
    for i in range(k + 1, len(poses)):
        poses[i] = RigidTransform(poses[i].q,
                                  poses[i].t + np.array([0.05, 0.0, 0.0]))
    est = Trajectory(zigzag.timestamps, poses)
    series = rpe(est, zigzag, delta=1)
    nz = np.nonzero(series.values > 1e-12)[0]
    assert nz.tolist() == [k]
    assert series.values[k] == pytest.approx(0.05, abs=1e-12)


def test_rpe_needs_enough_pairs(zigzag):
    short = Trajectory(zigzag.timestamps[:2], zigzag.poses[:2])
    with pytest.raises(NoOverlap):
        rpe(short, short, delta=5)
    with pytest.raises(ValueError):
        rpe(zigzag, zigzag, delta=0)


# ---------------------------------------------------------------------------
# brute-force cross-check


def test_metrics_match_brute_force_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        ref = random_trajectory(rng, n=50)
        jitter = rng.uniform(-0.004, 0.004, 50)
        est = Trajectory(
            ref.timestamps + jitter,
            [RigidTransform.from_rotvec(
                p.rotvec() + rng.normal(0.0, 0.02, 3),
                p.t + rng.normal(0.0, 0.05, 3)) for p in ref.poses])

        assert (associate(est, ref, 0.02)
                == brute_associate(est.timestamps, ref.timestamps, 0.02))

        for align in (False, True):
            got = ape(est, ref, align=align)
            want = brute_ape(est, ref, align=align)
            assert np.abs(got.values - want).max() < 1e-9
        for delta in (1, 5):
            got = rpe(est, ref, delta=delta)
            want = brute_rpe(est, ref, delta=delta)
            assert np.abs(got.values - want).max() < 1e-9

        P = est.positions()
        Q = ref.positions()
        for with_scale in (False, True):
            T, s = umeyama_align(P, Q, with_scale=with_scale)
            R_o, t_o, s_o = brute_umeyama(P, Q, with_scale=with_scale)
            assert np.abs(T.rotation - R_o).max() < 1e-9
            assert np.abs(T.t - t_o).max() < 1e-9
            assert abs(s - s_o) < 1e-9


# ---------------------------------------------------------------------------
# summaries


def test_error_series_summary_recomputable():
    rng = np.random.default_rng(9)
    v = rng.exponential(0.1, 500)
    s = ErrorSeries(v)
    assert s.mean == pytest.approx(v.mean(), abs=1e-12)
    assert s.median == pytest.approx(np.median(v), abs=1e-12)
    assert s.rms == pytest.approx(np.sqrt((v ** 2).mean()), abs=1e-12)
    assert s.std == pytest.approx(v.std(), abs=1e-12)
    assert s.max == pytest.approx(v.max(), abs=0.0)


# ---------------------------------------------------------------------------
# mask metrics


def test_mask_metrics_perfect_prediction():
    m = np.zeros((10, 10), dtype=bool)
    m[2:5, 3:8] = True
    r = mask_metrics(m, m)
    assert (r.precision, r.recall, r.iou, r.f1) == (1.0, 1.0, 1.0, 1.0)


def test_mask_metrics_empty_prediction():
    truth = np.zeros((4, 4), dtype=bool)
    truth[0, 0] = True
    r = mask_metrics(np.zeros((4, 4), dtype=bool), truth)
    assert r.iou == 0.0 and r.recall == 0.0 and r.precision == 0.0
    assert r.f1 == 0.0


def test_mask_metrics_both_empty():
    z = np.zeros((3, 3), dtype=bool)
    r = mask_metrics(z, z)
    assert (r.precision, r.recall, r.iou) == (1.0, 1.0, 1.0)


def test_mask_metrics_hand_counted():
    # TP=50, FP=50, FN=50 -> iou 1/3, precision .5, recall .5, f .5
    truth = np.zeros((10, 20), dtype=bool)
    truth[:5, :20] = True          # 100 positive pixels
    pred = np.zeros((10, 20), dtype=bool)
    pred[:5, :10] = True           # half the truth region
    pred[5:, :5] = True            # 25 false pixels...
    pred[5:, 15:20] = True         # ...plus 25 more
    r = mask_metrics(pred, truth)
    assert (r.tp, r.fp, r.fn) == (50, 50, 50)
    assert r.iou == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert r.precision == 0.5 and r.recall == 0.5 and r.f1 == 0.5


def test_mask_metrics_swap_exchanges_precision_recall():
    rng = np.random.default_rng(8)
    pred = rng.random((32, 32)) > 0.6
    truth = rng.random((32, 32)) > 0.4
    a = mask_metrics(pred, truth)
    b = mask_metrics(truth, pred)
    assert a.precision == b.recall and a.recall == b.precision
    assert a.iou == b.iou and a.f1 == b.f1


def test_mask_metrics_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        mask_metrics(np.zeros((2, 2), dtype=bool),
                     np.zeros((3, 3), dtype=bool))
