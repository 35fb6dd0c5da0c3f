"""Scan simulator tests: scene presets, determinism, noise statistics."""
import math

import numpy as np
import pytest

from planarmap.simulate import (SCENE_PRESETS, Pose, SensorModel,
                                default_trajectory, ground_truth_cloud,
                                make_scene, sensor_directions, simulate_scan,
                                simulate_sequence, yaw_pose)


def test_room_preset_triangle_count():
    scene = make_scene("room")
    assert len(scene.triangles) == 12
    assert len(set(scene.surface_ids.tolist())) == 6


def test_gap_preset_structure():
    scene = make_scene("two-wall-with-gap")
    front = scene.triangles[scene.surface_ids < 2]
    xs = front[:, :, 0]
    assert xs.min() == pytest.approx(-4.0)
    assert xs.max() == pytest.approx(4.0)
    # the wall segments leave the 1 m opening clear
    for tri in front:
        assert (tri[:, 0] <= -0.5 + 1e-12).all() or (tri[:, 0] >= 0.5 - 1e-12).all()
    # nothing at all inside the doorway (below the header)
    for tri, sid in zip(scene.triangles, scene.surface_ids):
        c = tri.mean(axis=0)
        assert not (abs(c[0]) < 0.5 and abs(c[1]) < 0.01 and c[2] < 2.0)


def test_recessed_panel_offset():
    scene = make_scene("recessed-panel")
    wall_y = scene.triangles[scene.surface_ids == 0][:, :, 1]
    panel_y = scene.triangles[scene.surface_ids == 1][:, :, 1]
    assert np.allclose(wall_y, 0.0)
    assert np.allclose(panel_y, 0.02)


def test_unknown_preset():
    with pytest.raises(ValueError):
        make_scene("nope")


def test_all_presets_build():
    for name in SCENE_PRESETS:
        scene = make_scene(name)
        assert len(scene.triangles) > 0
        assert scene.areas.min() > 0


def test_zero_noise_points_on_geometry():
    scene = make_scene("room")
    sensor = SensorModel(azimuth_count=64, elevation_count=8, sigma_noise=0.0)
    frame = simulate_scan(scene, Pose(np.array([5.0, 4.0, 1.5])), sensor)
    assert len(frame.points) > 0
    for p in frame.points[::17]:
        d = _dist_to_scene(p, scene)
        assert d < 1e-9


def _dist_to_scene(p, scene):
    best = math.inf
    for tri in scene.triangles:
        a, b, c = tri
        n = np.cross(b - a, c - a)
        n /= np.linalg.norm(n)
        best = min(best, abs(float((p - a) @ n)))
    return best


def test_head_on_wall_exact():
    scene = make_scene("single-plane")
    sensor = SensorModel(azimuth_count=1, elevation_count=1,
                         elevation_min_deg=-90, elevation_max_deg=-90,
                         sigma_noise=0.0)
    frame = simulate_scan(scene, Pose(np.array([0.0, 0.0, 1.0])), sensor)
    assert len(frame.points) == 1
    assert np.allclose(frame.points[0], [0, 0, 0], atol=1e-12)


def test_scan_deterministic_under_seed():
    scene = make_scene("room")
    sensor = SensorModel(azimuth_count=128, elevation_count=16,
                         sigma_noise=0.01, seed=7)
    poses = default_trajectory("room", 3)
    a = simulate_sequence(scene, poses, sensor)
    b = simulate_sequence(scene, poses, sensor)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.points, fb.points)


def test_range_noise_statistics():
    scene = make_scene("single-plane")
    sensor = SensorModel(azimuth_count=512, elevation_count=256,
                         elevation_min_deg=-80, elevation_max_deg=-45,
                         sigma_noise=0.01, seed=1)
    pose = Pose(np.array([0.0, 0.0, 2.0]))
    clean = simulate_scan(scene, pose,
                          SensorModel(azimuth_count=512, elevation_count=256,
                                      elevation_min_deg=-80,
                                      elevation_max_deg=-45, sigma_noise=0.0))
    noisy = simulate_scan(scene, pose, sensor)
    n = min(len(clean.points), len(noisy.points))
    assert n > 100000
    err = np.linalg.norm(noisy.points[:n] - clean.points[:n], axis=1)
    assert abs(err.std() - 0.0) < 0.02  # sanity: same ray order
    ranges_noisy = np.linalg.norm(noisy.points[:n] - pose.t, axis=1)
    ranges_clean = np.linalg.norm(clean.points[:n] - pose.t, axis=1)
    resid = ranges_noisy - ranges_clean
    assert abs(resid.std() - sensor.sigma_noise) / sensor.sigma_noise < 0.02


def test_points_within_max_range():
    scene = make_scene("room")
    sensor = SensorModel(azimuth_count=256, elevation_count=32,
                         max_range=6.0, sigma_noise=0.01)
    frame = simulate_scan(scene, Pose(np.array([5.0, 4.0, 1.5])), sensor)
    r = np.linalg.norm(frame.points - frame.origins, axis=1)
    assert (r <= 6.0 + 1e-12).all()


def test_gap_rays_reach_far_wall():
    scene = make_scene("two-wall-with-gap")
    sensor = SensorModel(azimuth_count=256, elevation_count=16,
                         elevation_min_deg=-5, elevation_max_deg=5,
                         sigma_noise=0.0)
    frame = simulate_scan(scene, yaw_pose([0.0, -2.0, 1.5], math.pi / 2),
                          sensor)
    far = frame.points[frame.true_surface == 2]
    assert len(far) > 0
    assert np.allclose(far[:, 1], 4.0, atol=1e-9)


def test_ground_truth_cloud_counts_and_on_surface():
    scene = make_scene("single-plane")      # 100 m^2
    gt = ground_truth_cloud(scene, density=100.0, seed=0)
    assert abs(len(gt) - 10000) < 400       # Poisson fluctuation
    assert np.allclose(gt[:, 2], 0.0, atol=1e-12)


def test_ground_truth_area_proportional():
    scene = make_scene("room")
    gt = ground_truth_cloud(scene, density=200.0, seed=1)
    areas = {0: 80.0, 1: 80.0, 2: 30.0, 3: 30.0, 4: 24.0, 5: 24.0}
    tol = 1e-9
    counts = {
        0: int(np.sum(np.abs(gt[:, 2]) < tol)),
        1: int(np.sum(np.abs(gt[:, 2] - 3) < tol)),
        2: int(np.sum(np.abs(gt[:, 1]) < tol)),
        3: int(np.sum(np.abs(gt[:, 1] - 8) < tol)),
        4: int(np.sum(np.abs(gt[:, 0]) < tol)),
        5: int(np.sum(np.abs(gt[:, 0] - 10) < tol)),
    }
    total = sum(counts.values())
    assert total == len(gt)
    total_area = sum(areas.values())
    # each face's share within 5 percent relative of its area share
    for k in areas:
        expect = areas[k] / total_area
        got = counts[k] / total
        assert abs(got - expect) / expect < 0.05


def test_sensor_directions_unit():
    d = sensor_directions(SensorModel(azimuth_count=64, elevation_count=8))
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    assert len(d) == 64 * 8
