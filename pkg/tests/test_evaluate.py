"""Evaluation metric tests against brute-force oracles and analytic cases."""
import numpy as np
import pytest

from planarmap.errors import EmptyMesh
from planarmap.evaluate import (EvalReport, distance_stats, evaluate_points,
                                nn_distances, precision_recall_f, sample_mesh)


def brute_nn(a, b):
    return np.array([np.min(np.linalg.norm(b - p, axis=1)) for p in a])


def test_identical_clouds():
    pts = np.random.default_rng(0).normal(size=(200, 3))
    mean, std = distance_stats(pts, pts)
    assert mean == 0.0 and std == 0.0
    p, r, f = precision_recall_f(pts, pts)
    assert (p, r, f) == (1.0, 1.0, 1.0)


def test_disjoint_clouds():
    a = np.zeros((50, 3))
    b = np.zeros((50, 3)) + [10, 0, 0]
    p, r, f = precision_recall_f(a, b, tau=0.1)
    assert (p, r, f) == (0.0, 0.0, 0.0)


def test_half_subset():
    gt = np.random.default_rng(1).normal(size=(400, 3)) * 5
    recon = gt[:200]
    p, r, f = precision_recall_f(recon, gt, tau=0.1)
    assert p == 1.0
    assert r == pytest.approx(0.5)
    assert f == pytest.approx(2 / 3)


def test_shifted_plane_mean_distance():
    rng = np.random.default_rng(2)
    base = np.column_stack([rng.uniform(0, 10, 4000),
                            rng.uniform(0, 10, 4000),
                            np.zeros(4000)])
    shifted = base + [0, 0, 0.05]
    mean, _ = distance_stats(shifted, base)
    assert mean == pytest.approx(0.05, rel=0.02)


def test_nn_matches_brute_force():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(150, 3))
    b = rng.normal(size=(200, 3))
    got = nn_distances(a, b)
    want = brute_nn(a, b)
    assert np.allclose(got, want, atol=1e-12)


def test_metrics_rigid_invariant():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(300, 3))
    b = rng.normal(size=(300, 3))
    p0, r0, f0 = precision_recall_f(a, b, tau=0.5)
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta), 0],
                    [np.sin(theta), np.cos(theta), 0],
                    [0, 0, 1]])
    shift = np.array([3.0, -2.0, 1.0])
    p1, r1, f1 = precision_recall_f(a @ rot.T + shift, b @ rot.T + shift,
                                    tau=0.5)
    assert p0 == pytest.approx(p1, abs=1e-12)
    assert r0 == pytest.approx(r1, abs=1e-12)


def test_f_symmetric_under_swap():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(100, 3))
    b = rng.normal(size=(120, 3))
    p0, r0, f0 = precision_recall_f(a, b, tau=0.4)
    p1, r1, f1 = precision_recall_f(b, a, tau=0.4)
    assert p0 == pytest.approx(r1) and r0 == pytest.approx(p1)
    assert f0 == pytest.approx(f1)


def test_sample_mesh_single_face():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    f = np.array([[0, 1, 2]])
    pts = sample_mesh(v, f, 10, seed=0)
    assert pts.shape == (10, 3)
    assert np.allclose(pts[:, 2], 0.0, atol=1e-12)
    assert (pts[:, 0] >= -1e-12).all() and (pts[:, 1] >= -1e-12).all()
    assert (pts.sum(axis=1) <= 1 + 1e-9).all()


def test_sample_mesh_area_weighted():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0],
                  [10, 0, 0], [13, 0, 0], [10, 3, 0]], float)
    f = np.array([[0, 1, 2], [3, 4, 5]])   # areas 0.5 and 4.5 -> 1:9
    counts = []
    for seed in range(20):
        pts = sample_mesh(v, f, 500, seed=seed)
        counts.append(int(np.sum(pts[:, 0] >= 5)))
    frac = np.mean(counts) / 500
    assert frac == pytest.approx(0.9, abs=0.02)


def test_sample_mesh_deterministic():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    f = np.array([[0, 1, 2]])
    assert np.array_equal(sample_mesh(v, f, 50, seed=3),
                          sample_mesh(v, f, 50, seed=3))


def test_sample_empty_mesh():
    with pytest.raises(EmptyMesh):
        sample_mesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=int), 5)


def test_report_serialization():
    r = evaluate_points(np.zeros((10, 3)), np.zeros((10, 3)))
    text = r.to_text()
    assert "precision=1.0" in text and "f_score=1.0" in text
    row = r.to_csv_row()
    assert len(row.split(",")) == len(EvalReport.CSV_HEADER.split(","))
