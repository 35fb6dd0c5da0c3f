"""Plane statistics and the relative position check.

Shows the incremental covariance update matching a batch recompute, the PCA
normal fit, how the propagated range uncertainty shrinks as a plane absorbs
samples, and the resulting front / within / behind classification bands.

Run:  python demos/02_plane_estimation_and_position_check.py
"""
import numpy as np

from planarmap import (Plane, PlaneStats, SensorNoiseModel, classify,
                       fit_normal, param_uncertainty, range_sigma,
                       ray_from_measurement, update_stats)

rng = np.random.default_rng(1)

# ---------------------------------------------------------------------------
# Stream noisy samples of the plane z = 0.2 into the sufficient statistics.
true_normal = np.array([0.0, 0.0, 1.0])
pts = np.column_stack([rng.uniform(-2, 2, 1500), rng.uniform(-2, 2, 1500),
                       0.2 + rng.normal(0, 0.01, 1500)])
stats = PlaneStats()
for p in pts:
    stats = update_stats(stats, p)

mu = pts.mean(axis=0)
centered = pts - mu
batch = centered.T @ centered / len(pts)
err = np.linalg.norm(stats.scatter - batch, "fro") / np.linalg.norm(batch, "fro")
print(f"incremental vs batch covariance: relative error {err:.2e}")

normal = fit_normal(stats.scatter, stats.centroid, toward=[0, 0, 5])
angle = np.degrees(np.arccos(min(abs(float(normal @ true_normal)), 1.0)))
print(f"fitted normal off truth by {angle:.4f} deg; "
      f"centroid z = {stats.centroid[2]:.4f} (truth 0.2)")

cov_p, cov_n = param_uncertainty(stats)
print(f"parameter uncertainty traces: centroid {np.trace(cov_p):.2e}, "
      f"normal {np.trace(cov_n):.2e} (shrink as 1/n)")

# ---------------------------------------------------------------------------
# Range uncertainty budget for a sensor ray, early vs late in the stream.
plane = Plane(stats.centroid, normal)
ray = ray_from_measurement([0.5, -0.3, 3.0], [0.55, -0.25, 0.21])
noise = SensorNoiseModel(sigma_noise=0.01)
for n_eff in (10, 100, 1500):
    s = PlaneStats(n_eff, stats.centroid, stats.scatter)
    model = range_sigma(plane, s, ray, noise)
    print(f"  n={n_eff:5d}: expected range {model.mu:.3f} m, "
          f"sigma {model.sigma*1000:.1f} mm "
          f"(plane {np.sqrt(model.var_p)*1000:.1f}, "
          f"normal {np.sqrt(model.var_n)*1000:.1f}, "
          f"sensor {np.sqrt(model.var_noise)*1000:.1f})")

# ---------------------------------------------------------------------------
# Sweep a measurement through the classification bands.
model = range_sigma(plane, stats, ray, noise)
for d in (model.mu - 0.08, model.mu - 0.01, model.mu, model.mu + 0.01,
          model.mu + 0.08):
    pc = classify(d, model)
    print(f"  measured {d:.3f} m -> z = {pc.z:+6.2f} -> {pc.rel.value}")
