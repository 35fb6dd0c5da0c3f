"""Scalar/vector/AABB/triangle primitives and the geometric predicates used
everywhere else.

Points and directions are float64 numpy arrays of shape (3,) (meters, or
unitless for directions). Hot inner kernels additionally exist as plain-float
functions so per-point loops avoid numpy dispatch overhead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroLengthRay

EPS_RAY = 1e-9        # parametric tolerance along rays
EPS_PLANE = 1e-6      # on-plane / in-plane distance tolerance, meters
EPS_AREA = 1e-10      # minimum face area, m^2


def as_vec3(p) -> np.ndarray:
    """Coerce to a float64 (3,) array and require finite components."""
    v = np.asarray(p, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite component in 3-vector")
    return v


def normalize(v: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(v @ v))
    if n < EPS_RAY:
        raise ZeroLengthRay("cannot normalize near-zero vector")
    return v / n


@dataclass
class Ray:
    """A single range measurement: origin, unit direction, endpoint, range."""
    origin: np.ndarray
    dir: np.ndarray
    endpoint: np.ndarray
    range: float


def ray_from_measurement(origin, endpoint) -> Ray:
    """Build a Ray from a sensor origin and measured endpoint.

    Raises ZeroLengthRay when the two coincide within 1e-9 m.
    """
    o = as_vec3(origin)
    e = as_vec3(endpoint)
    d = e - o
    r = math.sqrt(float(d @ d))
    if r < EPS_RAY:
        raise ZeroLengthRay("endpoint coincides with origin")
    return Ray(o, d / r, e, r)


@dataclass
class Triangle:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def triangle_area(a, b, c) -> float:
    ab = b - a
    ac = c - a
    cx = ab[1] * ac[2] - ab[2] * ac[1]
    cy = ab[2] * ac[0] - ab[0] * ac[2]
    cz = ab[0] * ac[1] - ab[1] * ac[0]
    return 0.5 * math.sqrt(cx * cx + cy * cy + cz * cz)


def ray_triangle_t(ox, oy, oz, dx, dy, dz,
                   ax, ay, az, bx, by, bz, cx, cy, cz,
                   tmax):
    """Moller-Trumbore on plain floats.

    Returns hit distance t in (EPS_RAY, tmax], or None. Edge and vertex hits
    are inclusive; degenerate triangles never intersect.
    """
    e1x = bx - ax; e1y = by - ay; e1z = bz - az
    e2x = cx - ax; e2y = cy - ay; e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-14 < det < 1e-14:
        return None
    inv = 1.0 / det
    tx = ox - ax; ty = oy - ay; tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -1e-12 or u > 1.0 + 1e-12:
        return None
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -1e-12 or u + v > 1.0 + 1e-12:
        return None
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= EPS_RAY or t > tmax:
        return None
    return t


def ray_triangle_intersect(ray: Ray, tri: Triangle, slack: float = 0.0):
    """Hit distance t in (EPS_RAY, ray.range + slack], or None.

    The slack lets faces slightly behind the measured endpoint still be
    reported, so the within-band of the position check sees them.
    """
    o, d = ray.origin, ray.dir
    return ray_triangle_t(o[0], o[1], o[2], d[0], d[1], d[2],
                          tri.a[0], tri.a[1], tri.a[2],
                          tri.b[0], tri.b[1], tri.b[2],
                          tri.c[0], tri.c[1], tri.c[2],
                          ray.range + slack)


def segment_intersect_2d(a0, a1, b0, b1) -> bool:
    """Proper interior crossing of two 2D segments.

    Shared endpoints do NOT count: new mesh edges attach at existing boundary
    vertices and must not be rejected for touching them. Collinear overlap is
    not a proper crossing either.
    """
    return _seg_cross(float(a0[0]), float(a0[1]), float(a1[0]), float(a1[1]),
                      float(b0[0]), float(b0[1]), float(b1[0]), float(b1[1]))


def _seg_cross(a0x, a0y, a1x, a1y, b0x, b0y, b1x, b1y) -> bool:
    """Plain-float core of segment_intersect_2d."""
    rx = a1x - a0x; ry = a1y - a0y
    sx = b1x - b0x; sy = b1y - b0y
    denom = rx * sy - ry * sx
    if denom == 0.0:
        return False
    qpx = b0x - a0x; qpy = b0y - a0y
    t = (qpx * sy - qpy * sx) / denom
    u = (qpx * ry - qpy * rx) / denom
    eps = 1e-12
    if not (eps < t < 1.0 - eps and eps < u < 1.0 - eps):
        return False
    # endpoint sharing exemption
    tol2 = 1e-18
    for px, py in ((b0x, b0y), (b1x, b1y)):
        if (a0x - px) ** 2 + (a0y - py) ** 2 < tol2:
            return False
        if (a1x - px) ** 2 + (a1y - py) ** 2 < tol2:
            return False
    return True


def point_in_triangle_2d(p, a, b, c, eps: float = EPS_PLANE) -> bool:
    """True iff p lies inside triangle abc or within eps (meters) of it."""
    px, py = float(p[0]), float(p[1])
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    cx, cy = float(c[0]), float(c[1])
    area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area2 < 0.0:
        bx, by, cx, cy = cx, cy, bx, by  # reorient CCW
    for (x0, y0, x1, y1) in ((ax, ay, bx, by), (bx, by, cx, cy),
                             (cx, cy, ax, ay)):
        ex = x1 - x0; ey = y1 - y0
        elen = math.sqrt(ex * ex + ey * ey)
        if elen == 0.0:
            return False
        # signed distance of p left of the directed edge
        d = ((x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)) / elen
        if d < -eps:
            return False
    return True


def points_in_triangle_2d(pts: np.ndarray, a, b, c,
                          eps: float = EPS_PLANE) -> np.ndarray:
    """Vectorized point_in_triangle_2d over an (N, 2) array."""
    a = np.asarray(a, float); b = np.asarray(b, float); c = np.asarray(c, float)
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if area2 < 0.0:
        b, c = c, b
    inside = np.ones(len(pts), dtype=bool)
    for p0, p1 in ((a, b), (b, c), (c, a)):
        e = p1 - p0
        elen = math.hypot(e[0], e[1])
        if elen == 0.0:
            return np.zeros(len(pts), dtype=bool)
        d = (e[0] * (pts[:, 1] - p0[1]) - e[1] * (pts[:, 0] - p0[0])) / elen
        inside &= d >= -eps
    return inside


# ---------------------------------------------------------------------------
# Axis-aligned bounding boxes


@dataclass
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def of_points(pts: np.ndarray) -> "Aabb":
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        return Aabb(pts.min(axis=0), pts.max(axis=0))


def aabb_union(a: Aabb, b: Aabb) -> Aabb:
    return Aabb(np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi))


def aabb_surface_area(a: Aabb) -> float:
    d = a.hi - a.lo
    return 2.0 * float(d[0] * d[1] + d[1] * d[2] + d[2] * d[0])


def aabb_of_sphere(center, radius: float) -> Aabb:
    c = as_vec3(center)
    r = abs(float(radius))
    return Aabb(c - r, c + r)


def ray_aabb_intersect(ray: Ray, box: Aabb, tmax: float | None = None) -> bool:
    """Slab test for the ray segment [0, tmax] (default the ray's range)."""
    if tmax is None:
        tmax = ray.range
    return ray_aabb_hit(ray.origin[0], ray.origin[1], ray.origin[2],
                        ray.dir[0], ray.dir[1], ray.dir[2],
                        box.lo[0], box.lo[1], box.lo[2],
                        box.hi[0], box.hi[1], box.hi[2], tmax)


def ray_aabb_hit(ox, oy, oz, dx, dy, dz,
                 lx, ly, lz, hx, hy, hz, tmax) -> bool:
    """Plain-float slab test, inclusive at faces."""
    t0 = 0.0
    t1 = tmax
    for o, d, lo, hi in ((ox, dx, lx, hx), (oy, dy, ly, hy), (oz, dz, lz, hz)):
        if d > 1e-300 or d < -1e-300:
            inv = 1.0 / d
            ta = (lo - o) * inv
            tb = (hi - o) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return False
        elif o < lo or o > hi:
            return False
    return True


# ---------------------------------------------------------------------------
# Plane frames: 2D parameterization of a plane for in-plane predicates


@dataclass
class PlaneFrame:
    """Orthonormal right-handed frame {u, v, normal} anchored at origin."""
    origin: np.ndarray
    normal: np.ndarray
    u: np.ndarray
    v: np.ndarray


def make_plane_frame(origin, normal, u_hint=None) -> PlaneFrame:
    """Frame for a plane; u_hint (projected onto the plane) keeps in-plane
    coordinates continuous across refits when supplied."""
    o = as_vec3(origin)
    n = normalize(as_vec3(normal))
    u = None
    if u_hint is not None:
        h = as_vec3(u_hint)
        h = h - (h @ n) * n
        if float(h @ h) > 1e-12:
            u = normalize(h)
    if u is None:
        # axis least aligned with the normal
        k = int(np.argmin(np.abs(n)))
        axis = np.zeros(3)
        axis[k] = 1.0
        u = normalize(axis - (axis @ n) * n)
    v = np.cross(n, u)
    return PlaneFrame(o, n, u, v)


def to_plane_2d(frame: PlaneFrame, pts: np.ndarray) -> np.ndarray:
    """World points (N,3) or (3,) to in-plane (N,2) or (2,) coordinates."""
    p = np.asarray(pts, dtype=np.float64)
    d = p - frame.origin
    if d.ndim == 1:
        return np.array([d @ frame.u, d @ frame.v])
    return np.stack([d @ frame.u, d @ frame.v], axis=-1)


def to_world_3d(frame: PlaneFrame, pts2: np.ndarray) -> np.ndarray:
    p = np.asarray(pts2, dtype=np.float64)
    if p.ndim == 1:
        return frame.origin + p[0] * frame.u + p[1] * frame.v
    return frame.origin + np.outer(p[:, 0], frame.u) + np.outer(p[:, 1], frame.v)


def project_to_plane(frame: PlaneFrame, p) -> np.ndarray:
    q = as_vec3(p)
    return q - float((q - frame.origin) @ frame.normal) * frame.normal
