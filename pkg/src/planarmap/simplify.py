"""Output-time mesh simplification, per planar-mesh and non-destructive.

Five steps: collect vertices, sort ascending by radius, greedily keep a
vertex only if no previously kept vertex lies within its radius, Delaunay
triangulate the kept set (convex), then restore concavity by dropping
triangles whose centroid falls inside no original face. Vertices are never
moved: output positions are a subset of input positions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay as _SciDelaunay
from scipy.spatial import QhullError

from .errors import CollinearInput
from .geometry import EPS_PLANE
from .mesh import MapState, PlanarMesh


@dataclass
class Triangulation2D:
    points: np.ndarray       # (N, 2)
    triangles: np.ndarray    # (M, 3) indices into points


@dataclass
class SimplifiedMesh:
    """Reduced tessellation of one planar-mesh; vertex positions are copied
    bitwise from the source."""
    source_pm: int
    pos3: np.ndarray         # (N, 3)
    pos2: np.ndarray         # (N, 2)
    faces: np.ndarray        # (M, 3)


def _greedy_keep(order_rows: np.ndarray, pos2: np.ndarray,
                 radii: np.ndarray) -> list[int]:
    """Walk rows in the given order; keep a row iff no already-kept row lies
    within its radius (in-plane distance)."""
    kept: list[int] = []
    kept_pts: list[np.ndarray] = []
    for row in order_rows:
        r = radii[row]
        p = pos2[row]
        ok = True
        if kept_pts:
            arr = np.asarray(kept_pts)
            d2 = np.min(np.sum((arr - p) ** 2, axis=1))
            ok = d2 > r * r
        if ok:
            kept.append(int(row))
            kept_pts.append(p)
    return kept


def sample_vertices(pm: PlanarMesh) -> list[int]:
    """Radius-ordered greedy vertex sampling (steps 1-3): ids of the kept
    vertices, ascending by radius with ties broken by id."""
    rows = pm.alive_rows()
    if len(rows) == 0:
        return []
    # rows are allocated in vertex-id order, so row ties == id ties
    order = rows[np.lexsort((rows, pm.RAD[rows]))]
    kept_rows = _greedy_keep(order, pm.P2, pm.RAD)
    return [pm._vid_of_row[row] for row in kept_rows]


def delaunay_2d(points: np.ndarray) -> Triangulation2D:
    """Delaunay triangulation of the convex hull of 2D points.

    Raises CollinearInput when the points have no 2D extent. Cocircular
    quadruples resolve to either diagonal deterministically for identical
    input.
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise CollinearInput(f"need 3 points, got {len(pts)}")
    try:
        tri = _SciDelaunay(pts)
    except QhullError as e:
        raise CollinearInput(str(e).splitlines()[0]) from e
    if len(tri.simplices) == 0:
        raise CollinearInput("no triangles produced")
    return Triangulation2D(pts, tri.simplices.astype(np.int64))


def _original_face_corners(pm: PlanarMesh) -> np.ndarray | None:
    """(F, 3, 2) in-plane corners of the live original faces."""
    nf = pm._n_frows
    if nf == 0:
        return None
    alive = pm._f_alive[:nf]
    if not alive.any():
        return None
    fv = pm.FV[:nf][alive]
    return pm.P2[fv]


def restore_concavity(tri: Triangulation2D, pm: PlanarMesh) -> SimplifiedMesh:
    """Drop convex-hull triangles whose centroid lies inside no original face
    (closed containment within the on-plane tolerance), then re-index."""
    corners = _original_face_corners(pm)
    if corners is None or len(tri.triangles) == 0:
        return SimplifiedMesh(pm.id, np.zeros((0, 3)), np.zeros((0, 2)),
                              np.zeros((0, 3), dtype=np.int64))
    cent = tri.points[tri.triangles].mean(axis=1)           # (M, 2)
    keep = _centroids_covered(cent, corners)
    faces = tri.triangles[keep]
    used = np.unique(faces)
    remap = {int(old): i for i, old in enumerate(used)}
    new_faces = np.array([[remap[int(v)] for v in f] for f in faces],
                         dtype=np.int64).reshape(-1, 3)
    pos2 = tri.points[used]
    # lift back to 3D through the owner frame
    fr = pm.frame
    pos3 = fr.origin + np.outer(pos2[:, 0], fr.u) + np.outer(pos2[:, 1], fr.v)
    return SimplifiedMesh(pm.id, pos3, pos2, new_faces)


def _centroids_covered(cent: np.ndarray, corners: np.ndarray,
                       eps: float = EPS_PLANE) -> np.ndarray:
    """Boolean mask: each centroid inside at least one original face.

    Faces are binned on a uniform grid so each centroid only tests nearby
    faces; results match the quadratic scan exactly.
    """
    m = len(cent)
    covered = np.zeros(m, dtype=bool)
    fmin = corners.min(axis=1)       # (F, 2)
    fmax = corners.max(axis=1)
    cell = max(float(np.median(fmax[:, 0] - fmin[:, 0])),
               float(np.median(fmax[:, 1] - fmin[:, 1])), 1e-6)
    grid: dict[tuple[int, int], list[int]] = {}
    for i in range(len(corners)):
        gx0 = int(math.floor((fmin[i, 0] - eps) / cell))
        gx1 = int(math.floor((fmax[i, 0] + eps) / cell))
        gy0 = int(math.floor((fmin[i, 1] - eps) / cell))
        gy1 = int(math.floor((fmax[i, 1] + eps) / cell))
        for gx in range(gx0, gx1 + 1):
            for gy in range(gy0, gy1 + 1):
                grid.setdefault((gx, gy), []).append(i)
    for j in range(m):
        px, py = cent[j]
        for i in grid.get((int(math.floor(px / cell)),
                           int(math.floor(py / cell))), ()):
            a, b, c = corners[i]
            # inline closed point-in-triangle with distance tolerance
            area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if area2 < 0.0:
                b, c = c, b
            inside = True
            for p0, p1 in ((a, b), (b, c), (c, a)):
                ex = p1[0] - p0[0]
                ey = p1[1] - p0[1]
                el = math.hypot(ex, ey)
                if el == 0.0:
                    inside = False
                    break
                if (ex * (py - p0[1]) - ey * (px - p0[0])) / el < -eps:
                    inside = False
                    break
            if inside:
                covered[j] = True
                break
    return covered


def simplify_planar_mesh(pm: PlanarMesh) -> SimplifiedMesh:
    """Steps 1-5 for one planar-mesh; planar-meshes with under three vertices
    or no usable triangulation pass through unchanged."""
    if pm.frame is None or len(pm.vertices) == 0 or not pm.faces:
        return SimplifiedMesh(pm.id, np.zeros((0, 3)), np.zeros((0, 2)),
                              np.zeros((0, 3), dtype=np.int64))
    rows = pm.alive_rows()
    if len(rows) < 3:
        return _passthrough(pm)
    kept = sample_vertices(pm)
    if len(kept) < 3:
        return _passthrough(pm)
    kept_rows = [pm.vertices[vid].row for vid in kept]
    pts = pm.P2[kept_rows]
    try:
        tri = delaunay_2d(pts)
    except CollinearInput:
        return _passthrough(pm)
    return restore_concavity(tri, pm)


def _passthrough(pm: PlanarMesh) -> SimplifiedMesh:
    """Original tessellation, re-indexed densely."""
    rows = pm.alive_rows()
    order = {int(r): i for i, r in enumerate(rows)}
    faces = []
    for f in pm.faces.values():
        faces.append([order[pm.vertices[f.v0].row],
                      order[pm.vertices[f.v1].row],
                      order[pm.vertices[f.v2].row]])
    return SimplifiedMesh(pm.id, pm.P3[rows].copy(), pm.P2[rows].copy(),
                          np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def simplify_map(map_state: MapState) -> list[SimplifiedMesh]:
    """Simplify every planar-mesh without touching the live map. Seeds with
    no faces are emitted as vertex-only meshes when configured, else
    skipped."""
    out = []
    for pm in map_state.planar_meshes.values():
        if not pm.faces:
            if map_state.config.emit_seed_vertices and pm.vertices:
                rows = pm.alive_rows()
                p2 = (pm.P2[rows].copy() if pm.frame is not None
                      else np.zeros((len(rows), 2)))
                out.append(SimplifiedMesh(pm.id, pm.P3[rows].copy(), p2,
                                          np.zeros((0, 3), dtype=np.int64)))
            continue
        out.append(simplify_planar_mesh(pm))
    return out
