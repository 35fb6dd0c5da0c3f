"""Synthetic scenes and LiDAR scan simulation.

Every quantitative behavior of the reconstruction is exercised at desk scale
against scenes with analytic ground truth: a box room, coplanar walls with a
doorway gap, a dihedral corner, a recessed panel offset behind a wall, and a
single plane. Range noise is Gaussian along the ray (no angular noise);
everything is deterministic under a fixed seed via counter-based substreams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Scene:
    """Triangle soup with per-triangle surface ids for provenance checks."""
    triangles: np.ndarray        # (N, 3, 3)
    surface_ids: np.ndarray      # (N,)
    name: str

    @property
    def areas(self) -> np.ndarray:
        a, b, c = (self.triangles[:, i, :] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass
class SensorModel:
    azimuth_count: int = 1024
    elevation_count: int = 64
    elevation_min_deg: float = -22.5
    elevation_max_deg: float = 22.5
    max_range: float = 50.0
    sigma_noise: float = 0.01
    seed: int = 0


@dataclass
class Pose:
    """Rigid sensor pose: translation plus unit quaternion (x, y, z, w)."""
    t: np.ndarray
    q: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def rotation(self) -> np.ndarray:
        x, y, z, w = self.q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])


@dataclass
class ScanFrame:
    """One posed batch of measurements in the world frame."""
    pose: Pose
    points: np.ndarray           # (K, 3) endpoints
    origins: np.ndarray          # (K, 3) per-point ray origins
    true_surface: np.ndarray     # (K,) hit surface ids (ground truth aid)


def _quad(p0, p1, p2, p3) -> list:
    return [np.array([p0, p1, p2], float), np.array([p0, p2, p3], float)]


def make_scene(preset: str) -> Scene:
    """Analytic test scenes addressed by name."""
    tris: list[np.ndarray] = []
    ids: list[int] = []

    def add(quads_or_tris, sid):
        for t in quads_or_tris:
            tris.append(t)
            ids.append(sid)

    if preset == "room":
        # 10 x 8 x 3 m box interior
        x0, x1, y0, y1, z0, z1 = 0.0, 10.0, 0.0, 8.0, 0.0, 3.0
        add(_quad((x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0)), 0)  # floor
        add(_quad((x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)), 1)  # ceiling
        add(_quad((x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)), 2)  # y=y0
        add(_quad((x0, y1, z0), (x1, y1, z0), (x1, y1, z1), (x0, y1, z1)), 3)  # y=y1
        add(_quad((x0, y0, z0), (x0, y1, z0), (x0, y1, z1), (x0, y0, z1)), 4)  # x=x0
        add(_quad((x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)), 5)  # x=x1
    elif preset == "two-wall-with-gap":
        # coplanar wall segments at y=0 joined by a header strip above a
        # 1 m doorway opening, plus a far wall behind so rays through the
        # opening land on real geometry
        add(_quad((-4.0, 0.0, 0.0), (-0.5, 0.0, 0.0),
                  (-0.5, 0.0, 3.0), (-4.0, 0.0, 3.0)), 0)
        add(_quad((0.5, 0.0, 0.0), (4.0, 0.0, 0.0),
                  (4.0, 0.0, 3.0), (0.5, 0.0, 3.0)), 1)
        add(_quad((-0.5, 0.0, 2.0), (0.5, 0.0, 2.0),
                  (0.5, 0.0, 3.0), (-0.5, 0.0, 3.0)), 3)
        add(_quad((-5.0, 4.0, 0.0), (5.0, 4.0, 0.0),
                  (5.0, 4.0, 3.0), (-5.0, 4.0, 3.0)), 2)
        # floor behind the doorway catches downward through-rays
        add(_quad((-5.0, 0.0, 0.0), (5.0, 0.0, 0.0),
                  (5.0, 4.0, 0.0), (-5.0, 4.0, 0.0)), 4)
    elif preset == "dihedral-corner":
        # floor and wall meeting along the y axis
        add(_quad((0.0, -2.5, 0.0), (4.0, -2.5, 0.0),
                  (4.0, 2.5, 0.0), (0.0, 2.5, 0.0)), 0)
        add(_quad((0.0, -2.5, 0.0), (0.0, 2.5, 0.0),
                  (0.0, 2.5, 4.0), (0.0, -2.5, 4.0)), 1)
    elif preset == "recessed-panel":
        # wall at y=0 with a rectangular hole; panel 0.02 m behind covers it
        wx0, wx1, wz0, wz1 = -3.0, 3.0, 0.0, 3.0
        hx0, hx1, hz0, hz1 = -1.0, 1.0, 1.0, 2.0
        add(_quad((wx0, 0, wz0), (hx0, 0, wz0), (hx0, 0, wz1), (wx0, 0, wz1)), 0)
        add(_quad((hx1, 0, wz0), (wx1, 0, wz0), (wx1, 0, wz1), (hx1, 0, wz1)), 0)
        add(_quad((hx0, 0, wz0), (hx1, 0, wz0), (hx1, 0, hz0), (hx0, 0, hz0)), 0)
        add(_quad((hx0, 0, hz1), (hx1, 0, hz1), (hx1, 0, wz1), (hx0, 0, wz1)), 0)
        add(_quad((hx0, 0.02, hz0), (hx1, 0.02, hz0),
                  (hx1, 0.02, hz1), (hx0, 0.02, hz1)), 1)
    elif preset == "single-plane":
        add(_quad((-5.0, -5.0, 0.0), (5.0, -5.0, 0.0),
                  (5.0, 5.0, 0.0), (-5.0, 5.0, 0.0)), 0)
    else:
        raise ValueError(f"unknown scene preset {preset!r}")
    return Scene(np.stack(tris), np.array(ids, dtype=np.int64), preset)


SCENE_PRESETS = ("room", "two-wall-with-gap", "dihedral-corner",
                 "recessed-panel", "single-plane")


def cast_rays(scene: Scene, origin: np.ndarray, dirs: np.ndarray
              ) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-hit ranges (inf for misses) and hit triangle indices (-1)
    for a batch of rays, vectorized per scene triangle."""
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_tri = np.full(n, -1, dtype=np.int64)
    o = origin
    for k, tri in enumerate(scene.triangles):
        a, b, c = tri
        e1 = b - a
        e2 = c - a
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        ok = np.abs(det) > 1e-14
        inv = np.zeros(n)
        inv[ok] = 1.0 / det[ok]
        tvec = o - a
        u = (pvec @ tvec) * inv
        qvec = np.cross(tvec, e1)
        v = (dirs @ qvec) * inv
        t = (qvec @ e2) * inv
        hit = ok & (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1 + 1e-12) & (t > 1e-9)
        closer = hit & (t < best_t)
        best_t[closer] = t[closer]
        best_tri[closer] = k
    return best_t, best_tri


def sensor_directions(sensor: SensorModel) -> np.ndarray:
    """Unit ray directions of the scan pattern in the sensor frame."""
    az = np.linspace(0.0, 2.0 * math.pi, sensor.azimuth_count, endpoint=False)
    el = np.deg2rad(np.linspace(sensor.elevation_min_deg,
                                sensor.elevation_max_deg,
                                sensor.elevation_count))
    azg, elg = np.meshgrid(az, el)
    ce = np.cos(elg).ravel()
    return np.stack([ce * np.cos(azg.ravel()),
                     ce * np.sin(azg.ravel()),
                     np.sin(elg).ravel()], axis=1)


def simulate_scan(scene: Scene, pose: Pose, sensor: SensorModel,
                  rng: np.random.Generator | None = None) -> ScanFrame:
    """Cast the sensor pattern from a pose; ranges get Gaussian noise."""
    if rng is None:
        rng = np.random.default_rng(sensor.seed)
    dirs = sensor_directions(sensor) @ pose.rotation().T
    t, tri_idx = cast_rays(scene, pose.t, dirs)
    hit = np.isfinite(t) & (t <= sensor.max_range)
    t = t[hit]
    dirs = dirs[hit]
    tri_idx = tri_idx[hit]
    if sensor.sigma_noise > 0:
        t = t + rng.normal(0.0, sensor.sigma_noise, len(t))
        keep = (t > 1e-6) & (t <= sensor.max_range)
        t = t[keep]
        dirs = dirs[keep]
        tri_idx = tri_idx[keep]
    points = pose.t + t[:, None] * dirs
    origins = np.broadcast_to(pose.t, points.shape).copy()
    return ScanFrame(pose, points, origins, scene.surface_ids[tri_idx])


def simulate_sequence(scene: Scene, poses: list[Pose], sensor: SensorModel
                      ) -> list[ScanFrame]:
    """Deterministic multi-frame simulation: per-frame counter-based rng."""
    return [simulate_scan(scene, pose, sensor,
                          rng=np.random.default_rng((sensor.seed, i)))
            for i, pose in enumerate(poses)]


def ground_truth_cloud(scene: Scene, density: float,
                       seed: int = 0) -> np.ndarray:
    """Uniform-by-area surface sampling at `density` points per m^2."""
    rng = np.random.default_rng(seed)
    pts = []
    for tri, area in zip(scene.triangles, scene.areas):
        k = rng.poisson(density * area)
        if k == 0:
            continue
        r1 = np.sqrt(rng.random(k))
        r2 = rng.random(k)
        a, b, c = tri
        pts.append((1 - r1)[:, None] * a
                   + (r1 * (1 - r2))[:, None] * b
                   + (r1 * r2)[:, None] * c)
    if not pts:
        return np.zeros((0, 3))
    return np.concatenate(pts)


def yaw_pose(position, yaw: float) -> Pose:
    """Pose rotated by yaw about world z."""
    return Pose(np.asarray(position, float),
                np.array([0.0, 0.0, math.sin(yaw / 2), math.cos(yaw / 2)]))


def default_trajectory(preset: str, frames: int) -> list[Pose]:
    """A reasonable scanning path for each scene preset."""
    poses = []
    if preset == "room":
        # rectangular loop inside the room, yawing along the path
        cx, cy, h = 5.0, 4.0, 1.5
        ax, ay = 3.0, 2.2
        for i in range(frames):
            s = 2.0 * math.pi * i / max(frames, 1)
            pos = (cx + ax * math.cos(s), cy + ay * math.sin(s), h)
            poses.append(yaw_pose(pos, s + math.pi / 2))
    elif preset == "two-wall-with-gap":
        for i in range(frames):
            s = i / max(frames - 1, 1)
            pos = (-2.0 + 4.0 * s, -3.0, 1.5)
            poses.append(yaw_pose(pos, math.pi / 2))  # facing +y
    elif preset == "dihedral-corner":
        for i in range(frames):
            s = i / max(frames - 1, 1)
            pos = (2.5 + 1.0 * s, -1.0 + 2.0 * s, 1.5)
            poses.append(yaw_pose(pos, math.pi))      # facing -x
    elif preset == "recessed-panel":
        for i in range(frames):
            s = i / max(frames - 1, 1)
            pos = (-2.5 + 5.0 * s, -2.5, 1.5)
            poses.append(yaw_pose(pos, math.pi / 2))
    elif preset == "single-plane":
        for i in range(frames):
            s = 2.0 * math.pi * i / max(frames, 1)
            pos = (1.5 * math.cos(s), 1.5 * math.sin(s), 3.0)
            poses.append(Pose(np.asarray(pos, float)))
    else:
        raise ValueError(f"unknown scene preset {preset!r}")
    return poses
