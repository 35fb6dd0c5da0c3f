"""Planar-mesh data structure and the map that holds them.

A PlanarMesh is one plane (sufficient statistics plus uncertainty) carrying a
triangle mesh whose vertices lie on that plane; each vertex stores a
curvature radius (distance to the nearest vertex of a different planar-mesh,
capped). MapState owns the collection plus the two search trees kept in exact
bijection with it: a face tree for ray queries and a boundary-vertex tree for
reverse radius queries.

Vertex coordinates, radii and face areas live in per-planar-mesh numpy
buffers (append-only rows, dead rows set to a large sentinel) so projection,
radius search and area audits stay vectorized. In-plane 2D coordinates are
authoritative for topology predicates; 3D positions feed the trees and
output.
"""
from __future__ import annotations

import math
import time
from typing import Iterable, Optional

import numpy as np

from .bvh import BOUNDARY_VERTEX, FACE, DynamicBvh, LeafPayload
from .config import Config
from .errors import (DegeneratePlane, EdgeFaceOverflow, UnknownElement)
from .geometry import (EPS_AREA, EPS_PLANE, PlaneFrame, make_plane_frame,
                       ray_triangle_t)
from .planes import Plane, PlaneStats, eig_scatter, fit_normal

DEAD = 1.0e30  # sentinel coordinate for dead buffer rows


class Vertex:
    __slots__ = ("row", "edges", "boundary")

    def __init__(self, row: int):
        self.row = row
        self.edges: set[int] = set()
        self.boundary = True


class Edge:
    __slots__ = ("v0", "v1", "faces")

    def __init__(self, v0: int, v1: int):
        self.v0 = v0
        self.v1 = v1
        self.faces: set[int] = set()


class Face:
    __slots__ = ("v0", "v1", "v2", "frow")

    def __init__(self, v0: int, v1: int, v2: int, frow: int):
        self.v0 = v0
        self.v1 = v1
        self.v2 = v2
        self.frow = frow


class PlanarMesh:
    """One plane plus its embedded triangle mesh and bookkeeping buffers."""

    def __init__(self, pm_id: int, created_at_scan: int):
        self.id = pm_id
        self.created_at_scan = created_at_scan
        self.plane: Optional[Plane] = None
        self.frame: Optional[PlaneFrame] = None
        self.stats = PlaneStats()
        self.vertices: dict[int, Vertex] = {}
        self.edges: dict[int, Edge] = {}
        self.faces: dict[int, Face] = {}
        self.total_area = 0.0
        self._edge_by_pair: dict[tuple[int, int], int] = {}
        self._next_vid = 0
        self._next_eid = 0
        self._next_fid = 0
        # vertex buffers
        cap = 8
        self.P3 = np.full((cap, 3), DEAD)
        self.P2 = np.full((cap, 2), DEAD)
        self.RAD = np.zeros(cap)
        self._row_alive = np.zeros(cap, dtype=bool)
        self._vid_of_row: list[int] = []
        # face buffers (vertex rows + area)
        fcap = 8
        self.FV = np.zeros((fcap, 3), dtype=np.int64)
        self.FA = np.zeros(fcap)
        self._f_alive = np.zeros(fcap, dtype=bool)
        self._n_frows = 0
        # conservative prune boxes / extents (grow-only between reprojections)
        self.bbox_lo: Optional[np.ndarray] = None
        self.bbox_hi: Optional[np.ndarray] = None
        self.rho_max = 0.0          # max vertex distance from frame origin
        self.tree_drift = 0.0       # accumulated plane motion since box refresh
        self.offplane_acc = 0.0     # plane motion since last vertex snap
        self._eig = None            # cached (eigvals, eigvecs) of stats.scatter
        # uniform 2D grid over in-plane edge bboxes (crossing-test candidates);
        # the grid origin follows pure in-plane translations so only frame
        # rotations force rebuilds
        self.grid_cell = 0.125
        self.grid_pad = 0.03
        self._egrid: dict[tuple[int, int], set[int]] = {}
        self._ecells: dict[int, list[tuple[int, int]]] = {}
        self._egrid_org = (0.0, 0.0)
        self._egrid_drift = 0.0     # accumulated non-translational drift

    # -- buffers ------------------------------------------------------------

    def _new_row(self) -> int:
        row = len(self._vid_of_row)
        if row == self.P3.shape[0]:
            grow = max(8, row)
            self.P3 = np.vstack([self.P3, np.full((grow, 3), DEAD)])
            self.P2 = np.vstack([self.P2, np.full((grow, 2), DEAD)])
            self.RAD = np.concatenate([self.RAD, np.zeros(grow)])
            self._row_alive = np.concatenate(
                [self._row_alive, np.zeros(grow, dtype=bool)])
        self._row_alive[row] = True
        return row

    def _new_frow(self) -> int:
        frow = self._n_frows
        if frow == self.FV.shape[0]:
            grow = max(8, frow)
            self.FV = np.vstack([self.FV, np.zeros((grow, 3), dtype=np.int64)])
            self.FA = np.concatenate([self.FA, np.zeros(grow)])
            self._f_alive = np.concatenate(
                [self._f_alive, np.zeros(grow, dtype=bool)])
        self._n_frows = frow + 1
        return frow

    def alive_rows(self) -> np.ndarray:
        used = len(self._vid_of_row)
        return np.nonzero(self._row_alive[:used])[0]

    def pos3(self, vid: int) -> np.ndarray:
        return self.P3[self.vertices[vid].row]

    def pos2(self, vid: int) -> np.ndarray:
        return self.P2[self.vertices[vid].row]

    def radius(self, vid: int) -> float:
        return float(self.RAD[self.vertices[vid].row])

    def edge_id(self, va: int, vb: int) -> Optional[int]:
        return self._edge_by_pair.get((va, vb) if va < vb else (vb, va))

    def edge_length(self, eid: int) -> float:
        e = self.edges[eid]
        d = self.P3[self.vertices[e.v0].row] - self.P3[self.vertices[e.v1].row]
        return math.sqrt(float(d @ d))

    def eig(self):
        if self._eig is None:
            self._eig = eig_scatter(self.stats.scatter)
        return self._eig

    def invalidate_eig(self):
        self._eig = None

    def recompute_area_sum(self) -> float:
        if self._n_frows == 0:
            return 0.0
        return float(self.FA[:self._n_frows][self._f_alive[:self._n_frows]].sum())

    def centroid_guess(self) -> np.ndarray:
        """Plane position when defined, else the running centroid."""
        if self.plane is not None:
            return self.plane.p
        return self.stats.centroid

    # -- in-plane edge grid ---------------------------------------------------

    def _cells_of_bbox(self, x0, y0, x1, y1):
        c = self.grid_cell
        p = self.grid_pad
        ox, oy = self._egrid_org
        gx0 = math.floor((min(x0, x1) - p - ox) / c)
        gx1 = math.floor((max(x0, x1) + p - ox) / c)
        gy0 = math.floor((min(y0, y1) - p - oy) / c)
        gy1 = math.floor((max(y0, y1) + p - oy) / c)
        return [(gx, gy) for gx in range(gx0, gx1 + 1)
                for gy in range(gy0, gy1 + 1)]

    def grid_add_edge(self, eid: int):
        e = self.edges[eid]
        a = self.P2[self.vertices[e.v0].row]
        b = self.P2[self.vertices[e.v1].row]
        cells = self._cells_of_bbox(a[0], a[1], b[0], b[1])
        self._ecells[eid] = cells
        for cell in cells:
            self._egrid.setdefault(cell, set()).add(eid)

    def grid_remove_edge(self, eid: int):
        for cell in self._ecells.pop(eid, ()):
            bucket = self._egrid.get(cell)
            if bucket is not None:
                bucket.discard(eid)
                if not bucket:
                    del self._egrid[cell]

    def grid_query_segment(self, a2, b2) -> set[int]:
        """Edge ids whose padded bbox cells overlap the segment bbox."""
        out: set[int] = set()
        for cell in self._cells_of_bbox(a2[0], a2[1], b2[0], b2[1]):
            bucket = self._egrid.get(cell)
            if bucket:
                out.update(bucket)
        return out

    def grid_rebuild(self):
        self._egrid.clear()
        self._ecells.clear()
        self._egrid_org = (0.0, 0.0)
        self._egrid_drift = 0.0
        for eid in self.edges:
            self.grid_add_edge(eid)


def is_seed(pm: PlanarMesh, a_min: float) -> bool:
    """Too uncertain for the relative position check: under three points or
    sub-threshold mesh area."""
    return pm.stats.n < 3 or pm.total_area < a_min


def largest(pms: Iterable[PlanarMesh]) -> PlanarMesh:
    """Greatest total face area; ties go to the lowest id."""
    return max(pms, key=lambda pm: (pm.total_area, -pm.id))


def closest(pms: Iterable[PlanarMesh], lp) -> PlanarMesh:
    """Least nearest-vertex distance to lp (centroid distance when the
    planar-mesh has no vertices); ties go to the lowest id."""
    q = np.asarray(lp, float)
    best = None
    best_key = None
    for pm in pms:
        if pm.vertices:
            rows = pm.alive_rows()
            d2 = np.min(np.sum((pm.P3[rows] - q) ** 2, axis=1))
            d = math.sqrt(float(d2))
        else:
            c = pm.centroid_guess() - q
            d = math.sqrt(float(c @ c))
        key = (d, pm.id)
        if best_key is None or key < best_key:
            best_key = key
            best = pm
    if best is None:
        raise ValueError("closest() over empty set")
    return best


class MapState:
    """All planar-meshes plus the two search trees kept consistent with them."""

    def __init__(self, config: Config | None = None):
        self.config = config or Config()
        self.planar_meshes: dict[int, PlanarMesh] = {}
        self.fis_tree = DynamicBvh(margin=self.config.fat_margin)
        self.rrs_tree = DynamicBvh(margin=self.config.fat_margin)
        self.current_scan = 0
        self._next_pm = 0
        self.tree_seconds = 0.0   # accumulated time in tree maintenance
        # packed bbox table over planar-meshes for the radius search
        self._bbox_ids: list[int] = []
        self._bbox_arr = np.zeros((0, 6))
        self._bbox_stale = True

    # -- planar-mesh lifecycle ----------------------------------------------

    def new_planar_mesh(self) -> PlanarMesh:
        pm = PlanarMesh(self._next_pm, self.current_scan)
        pm.grid_cell = 0.5 * self.config.r_max
        pm.grid_pad = self.config.r_max / 16.0
        self._next_pm += 1
        self.planar_meshes[pm.id] = pm
        return pm

    def remove_planar_mesh(self, pm_id: int):
        pm = self.planar_meshes.pop(pm_id, None)
        if pm is None:
            raise UnknownElement(f"planar-mesh {pm_id}")
        self._bbox_stale = True
        t0 = time.perf_counter()
        for fid in pm.faces:
            self.fis_tree.remove(self.fis_tree.leaf_for(LeafPayload(FACE, pm_id, fid)))
        for vid, v in pm.vertices.items():
            if v.boundary:
                self.rrs_tree.remove(
                    self.rrs_tree.leaf_for(LeafPayload(BOUNDARY_VERTEX, pm_id, vid)))
        self.tree_seconds += time.perf_counter() - t0

    # -- tree helpers ---------------------------------------------------------

    def _face_box6(self, pm: PlanarMesh, f: Face) -> tuple:
        rows = (pm.vertices[f.v0].row, pm.vertices[f.v1].row,
                pm.vertices[f.v2].row)
        p = pm.P3
        xs = (p[rows[0], 0], p[rows[1], 0], p[rows[2], 0])
        ys = (p[rows[0], 1], p[rows[1], 1], p[rows[2], 1])
        zs = (p[rows[0], 2], p[rows[1], 2], p[rows[2], 2])
        return (min(xs), min(ys), min(zs), max(xs), max(ys), max(zs))

    def _vertex_box6(self, pm: PlanarMesh, vid: int) -> tuple:
        row = pm.vertices[vid].row
        x, y, z = pm.P3[row, 0], pm.P3[row, 1], pm.P3[row, 2]
        r = pm.RAD[row]
        return (x - r, y - r, z - r, x + r, y + r, z + r)

    def _rrs_register(self, pm: PlanarMesh, vid: int):
        t0 = time.perf_counter()
        self.rrs_tree.insert(LeafPayload(BOUNDARY_VERTEX, pm.id, vid),
                             self._vertex_box6(pm, vid))
        self.tree_seconds += time.perf_counter() - t0

    def _rrs_deregister(self, pm: PlanarMesh, vid: int):
        t0 = time.perf_counter()
        leaf = self.rrs_tree.leaf_for(LeafPayload(BOUNDARY_VERTEX, pm.id, vid))
        self.rrs_tree.remove(leaf)
        self.tree_seconds += time.perf_counter() - t0

    def _rrs_refresh(self, pm: PlanarMesh, vid: int):
        t0 = time.perf_counter()
        leaf = self.rrs_tree.leaf_for(LeafPayload(BOUNDARY_VERTEX, pm.id, vid))
        self.rrs_tree.update(leaf, self._vertex_box6(pm, vid))
        self.tree_seconds += time.perf_counter() - t0

    # -- vertex / edge / face operations --------------------------------------

    def add_vertex(self, pm: PlanarMesh, point3, radius: float | None = None) -> int:
        """Project onto the plane (seeds keep the raw point), compute in-plane
        coordinates, initialize the radius, register as boundary.

        Projection targets the frame's plane so in-plane coordinates stay
        mutually consistent between vertex snaps (the statistical plane may
        lead the frame by the mid-scan slack)."""
        p = np.asarray(point3, dtype=np.float64)
        if pm.frame is not None:
            f = pm.frame
            p = p - float((p - f.origin) @ f.normal) * f.normal
        row = pm._new_row()
        vid = pm._next_vid
        pm._next_vid += 1
        pm.P3[row] = p
        if pm.frame is not None:
            d = p - pm.frame.origin
            pm.P2[row, 0] = float(d @ pm.frame.u)
            pm.P2[row, 1] = float(d @ pm.frame.v)
            rho = math.sqrt(float(d @ d))
            if rho > pm.rho_max:
                pm.rho_max = rho
        if radius is None:
            radius = self.recompute_radius(p, pm.id)
        pm.RAD[row] = radius
        pm._vid_of_row.append(vid)
        v = Vertex(row)
        pm.vertices[vid] = v
        self._bbox_grow(pm, p)
        self._rrs_register(pm, vid)
        return vid

    def add_edge(self, pm: PlanarMesh, va: int, vb: int) -> int:
        """Get-or-create the edge between two existing vertices."""
        if va == vb:
            raise ValueError("edge endpoints must differ")
        if va not in pm.vertices or vb not in pm.vertices:
            raise UnknownElement(f"vertex {va} or {vb}")
        key = (va, vb) if va < vb else (vb, va)
        eid = pm._edge_by_pair.get(key)
        if eid is not None:
            return eid
        eid = pm._next_eid
        pm._next_eid += 1
        pm.edges[eid] = Edge(va, vb)
        pm._edge_by_pair[key] = eid
        pm.vertices[va].edges.add(eid)
        pm.vertices[vb].edges.add(eid)
        if pm.frame is not None:
            pm.grid_add_edge(eid)
        # endpoints gain a faceless edge: both are boundary now
        for vid in (va, vb):
            self._set_boundary(pm, vid, True)
        return eid

    def add_face(self, pm: PlanarMesh, va: int, vb: int, vc: int) -> int:
        """Create a face (counter-clockwise in the plane frame), creating any
        missing edges; raises EdgeFaceOverflow if an edge would gain a third
        face."""
        if len({va, vb, vc}) != 3:
            raise ValueError("face needs three distinct vertices")
        ra = pm.vertices[va].row
        rb = pm.vertices[vb].row
        rc = pm.vertices[vc].row
        area2 = ((pm.P2[rb, 0] - pm.P2[ra, 0]) * (pm.P2[rc, 1] - pm.P2[ra, 1])
                 - (pm.P2[rb, 1] - pm.P2[ra, 1]) * (pm.P2[rc, 0] - pm.P2[ra, 0]))
        if area2 < 0.0:
            vb, vc = vc, vb
            rb, rc = rc, rb
            area2 = -area2
        area = 0.5 * area2
        # all three edges must have room before any mutation
        for x, y in ((va, vb), (vb, vc), (vc, va)):
            eid = pm.edge_id(x, y)
            if eid is not None and len(pm.edges[eid].faces) >= 2:
                raise EdgeFaceOverflow(f"edge {eid} already has two faces")
        fid = pm._next_fid
        pm._next_fid += 1
        frow = pm._new_frow()
        pm.FV[frow] = (ra, rb, rc)
        pm.FA[frow] = area
        pm._f_alive[frow] = True
        f = Face(va, vb, vc, frow)
        pm.faces[fid] = f
        for x, y in ((va, vb), (vb, vc), (vc, va)):
            eid = self.add_edge(pm, x, y)
            pm.edges[eid].faces.add(fid)
        pm.total_area += area
        t0 = time.perf_counter()
        self.fis_tree.insert(LeafPayload(FACE, pm.id, fid), self._face_box6(pm, f))
        self.tree_seconds += time.perf_counter() - t0
        for vid in (va, vb, vc):
            self._refresh_boundary(pm, vid)
        return fid

    def remove_face(self, pm: PlanarMesh, fid: int):
        """Remove a face; edges left without faces and vertices left without
        edges cascade away (dangling rule)."""
        f = pm.faces.get(fid)
        if f is None:
            raise UnknownElement(f"face {fid}")
        self._detach_face(pm, fid, f)
        touched = (f.v0, f.v1, f.v2)
        for x, y in ((f.v0, f.v1), (f.v1, f.v2), (f.v2, f.v0)):
            eid = pm.edge_id(x, y)
            if eid is not None and not pm.edges[eid].faces:
                self._delete_edge(pm, eid)
        for vid in touched:
            v = pm.vertices.get(vid)
            if v is None:
                continue
            if not v.edges:
                self._delete_vertex(pm, vid)
            else:
                self._refresh_boundary(pm, vid)

    def _detach_face(self, pm: PlanarMesh, fid: int, f: Face):
        """Unregister a face and detach it from its edges, leaving edges in
        place (callers decide about cascades)."""
        del pm.faces[fid]
        pm._f_alive[f.frow] = False
        pm.total_area -= float(pm.FA[f.frow])
        t0 = time.perf_counter()
        self.fis_tree.remove(self.fis_tree.leaf_for(LeafPayload(FACE, pm.id, fid)))
        self.tree_seconds += time.perf_counter() - t0
        for x, y in ((f.v0, f.v1), (f.v1, f.v2), (f.v2, f.v0)):
            eid = pm.edge_id(x, y)
            if eid is not None:
                pm.edges[eid].faces.discard(fid)

    def remove_edge(self, pm: PlanarMesh, eid: int):
        """Remove an edge: its faces go first, then the dangling cascade."""
        e = pm.edges.get(eid)
        if e is None:
            raise UnknownElement(f"edge {eid}")
        for fid in list(e.faces):
            if fid in pm.faces:
                self.remove_face(pm, fid)
        if eid in pm.edges:  # not consumed by the cascade
            v0, v1 = e.v0, e.v1
            self._delete_edge(pm, eid)
            for vid in (v0, v1):
                v = pm.vertices.get(vid)
                if v is None:
                    continue
                if not v.edges:
                    self._delete_vertex(pm, vid)
                else:
                    self._refresh_boundary(pm, vid)

    def remove_vertex(self, pm: PlanarMesh, vid: int):
        v = pm.vertices.get(vid)
        if v is None:
            raise UnknownElement(f"vertex {vid}")
        for eid in list(v.edges):
            if eid in pm.edges:
                self.remove_edge(pm, eid)
        if vid in pm.vertices:
            self._delete_vertex(pm, vid)

    def _delete_edge(self, pm: PlanarMesh, eid: int):
        e = pm.edges.pop(eid)
        pm.grid_remove_edge(eid)
        key = (e.v0, e.v1) if e.v0 < e.v1 else (e.v1, e.v0)
        del pm._edge_by_pair[key]
        for vid in (e.v0, e.v1):
            v = pm.vertices.get(vid)
            if v is not None:
                v.edges.discard(eid)

    def _delete_vertex(self, pm: PlanarMesh, vid: int):
        v = pm.vertices[vid]
        if v.boundary:
            self._rrs_deregister(pm, vid)
        pm.P3[v.row] = DEAD
        pm.P2[v.row] = DEAD
        pm._row_alive[v.row] = False
        del pm.vertices[vid]

    def _set_boundary(self, pm: PlanarMesh, vid: int, flag: bool):
        v = pm.vertices[vid]
        if v.boundary == flag:
            return
        v.boundary = flag
        if flag:
            self._rrs_register(pm, vid)
        else:
            self._rrs_deregister(pm, vid)

    def _refresh_boundary(self, pm: PlanarMesh, vid: int):
        v = pm.vertices[vid]
        flag = (not v.edges) or any(
            len(pm.edges[e].faces) < 2 for e in v.edges)
        self._set_boundary(pm, vid, flag)

    def set_vertex_radius(self, pm: PlanarMesh, vid: int, r: float):
        v = pm.vertices[vid]
        pm.RAD[v.row] = r
        if v.boundary:
            self._rrs_refresh(pm, vid)

    # -- radius search ---------------------------------------------------------

    def _bbox_table(self) -> tuple[list[int], np.ndarray]:
        """Packed grow-only bounding boxes of all planar-meshes with
        vertices; rebuilt lazily after membership changes, refreshed
        in place otherwise (boxes only grow, so staleness is conservative
        only while membership is unchanged)."""
        if self._bbox_stale:
            ids = [pm.id for pm in self.planar_meshes.values()
                   if pm.bbox_lo is not None and pm.vertices]
            arr = np.empty((len(ids), 6))
            for k, pid in enumerate(ids):
                pm = self.planar_meshes[pid]
                arr[k, :3] = pm.bbox_lo
                arr[k, 3:] = pm.bbox_hi
            self._bbox_ids = ids
            self._bbox_arr = arr
            self._bbox_stale = False
        return self._bbox_ids, self._bbox_arr

    def _bbox_grow(self, pm: PlanarMesh, p: np.ndarray):
        if pm.bbox_lo is None:
            pm.bbox_lo = p.copy()
            pm.bbox_hi = p.copy()
            self._bbox_stale = True
        else:
            np.minimum(pm.bbox_lo, p, out=pm.bbox_lo)
            np.maximum(pm.bbox_hi, p, out=pm.bbox_hi)
            if not self._bbox_stale:
                try:
                    k = self._bbox_ids.index(pm.id)
                except ValueError:
                    self._bbox_stale = True
                else:
                    np.minimum(self._bbox_arr[k, :3], p,
                               out=self._bbox_arr[k, :3])
                    np.maximum(self._bbox_arr[k, 3:], p,
                               out=self._bbox_arr[k, 3:])

    def recompute_radius(self, point3, own_pm_id: int,
                         cap: float | None = None) -> float:
        """Distance to the nearest vertex of any other planar-mesh, capped at
        r_max (the medial-axis proxy driving adaptive resolution). A caller
        that only needs "is anything closer than cap" passes a smaller cap so
        far planar-meshes get pruned early."""
        q = np.asarray(point3, dtype=np.float64)
        best2 = min(self.config.r_max, cap) ** 2 if cap is not None \
            else self.config.r_max ** 2
        ids, boxes = self._bbox_table()
        if not ids:
            return max(math.sqrt(best2), 1e-9)
        d_lo = np.maximum(boxes[:, :3] - q, 0.0)
        d_hi = np.maximum(q - boxes[:, 3:], 0.0)
        box_d2 = np.einsum("ij,ij->i", d_lo, d_lo) + np.einsum(
            "ij,ij->i", d_hi, d_hi)
        for k in np.argsort(box_d2):
            if box_d2[k] >= best2:
                break
            pid = ids[k]
            if pid == own_pm_id:
                continue
            pm = self.planar_meshes.get(pid)
            if pm is None or not pm.vertices:
                continue
            used = len(pm._vid_of_row)
            d = pm.P3[:used] - q
            d2 = float(np.min(np.einsum("ij,ij->i", d, d)))
            if d2 < best2:
                best2 = d2
        return max(math.sqrt(best2), 1e-9)

    def curvature_radius(self, point3, own_pm_id: int, normal,
                         off_plane_tol: float, cap: float) -> float:
        """Distance to the nearest foreign vertex that lies meaningfully off
        the given plane (capped). Coplanar foreign vertices are duplicates
        awaiting the merge effect, not curvature, so refinement decisions
        ignore them."""
        q = np.asarray(point3, dtype=np.float64)
        nrm = np.asarray(normal, dtype=np.float64)
        plane_d = float(q @ nrm)
        best2 = min(self.config.r_max, cap) ** 2
        ids, boxes = self._bbox_table()
        if not ids:
            return math.sqrt(best2)
        d_lo = np.maximum(boxes[:, :3] - q, 0.0)
        d_hi = np.maximum(q - boxes[:, 3:], 0.0)
        box_d2 = np.einsum("ij,ij->i", d_lo, d_lo) + np.einsum(
            "ij,ij->i", d_hi, d_hi)
        for k in np.argsort(box_d2):
            if box_d2[k] >= best2:
                break
            pid = ids[k]
            if pid == own_pm_id:
                continue
            pm = self.planar_meshes.get(pid)
            if pm is None or not pm.vertices:
                continue
            used = len(pm._vid_of_row)
            pts = pm.P3[:used]
            off = np.abs(pts @ nrm - plane_d)
            d = pts - q
            d2 = np.einsum("ij,ij->i", d, d)
            d2[off <= off_plane_tol] = np.inf
            m2 = float(np.min(d2))
            if m2 < best2:
                best2 = m2
        return math.sqrt(best2)

    def vertices_within_2d(self, pm: PlanarMesh, center2, dist: float) -> list[int]:
        """Vertex ids of pm within dist of center2 in the plane frame."""
        used = len(pm._vid_of_row)
        if used == 0:
            return []
        d = pm.P2[:used] - np.asarray(center2, float)
        mask = np.einsum("ij,ij->i", d, d) <= dist * dist
        rows = np.nonzero(mask)[0]
        out = []
        for row in rows:
            vid = pm._vid_of_row[row]
            if vid in pm.vertices and pm.vertices[vid].row == row:
                out.append(vid)
        return out

    # -- plane definition / refit ----------------------------------------------

    def define_plane(self, pm: PlanarMesh, toward) -> bool:
        """First plane fit of a seed: on success, all raw vertices are
        projected and both trees pick up the moved geometry."""
        try:
            normal = fit_normal(pm.stats.scatter, pm.stats.centroid, toward,
                                eig=pm.eig())
        except DegeneratePlane:
            return False
        pm.plane = Plane(pm.stats.centroid.copy(), normal)
        self._reproject(pm)
        return True

    def refresh_plane(self, pm: PlanarMesh, toward):
        """Refit after absorbing a sample; keeps the previous normal when the
        scatter is degenerate.

        Vertex snapping is deferred: plane parameters move a little with every
        sample, so per-point reprojection of all vertices would dominate the
        runtime. Vertices follow the frame until the accumulated plane motion
        crosses a loose mid-scan bound (or the normal rotates hard); settle()
        at scan boundaries restores the tight on-plane tolerance before any
        audit."""
        if pm.plane is None:
            if pm.stats.n >= 3:
                self.define_plane(pm, toward)
            return
        try:
            normal = fit_normal(pm.stats.scatter, pm.stats.centroid, toward,
                                eig=pm.eig())
        except DegeneratePlane:
            normal = pm.plane.normal
        pm.plane = Plane(pm.stats.centroid.copy(), normal)
        frame = pm.frame
        cosang = abs(float(frame.normal @ normal))
        sinang = math.sqrt(max(1.0 - min(cosang, 1.0) ** 2, 0.0))
        offset = abs(float((pm.plane.p - frame.origin) @ normal))
        pm.offplane_acc = offset + sinang * pm.rho_max
        if (pm.offplane_acc > self.config.midscan_offplane_slack
                or sinang > math.sin(math.radians(self.config.reproject_angle_deg))):
            self._reproject(pm)

    def settle(self):
        """Snap every planar-mesh whose plane drifted since the last vertex
        projection; run between scans so quiescent-state audits see vertices
        on their planes within the tight tolerance."""
        for pm in self.planar_meshes.values():
            if pm.plane is not None and pm.vertices \
                    and pm.offplane_acc > self.config.reproject_offset:
                self._reproject(pm)

    def _reproject(self, pm: PlanarMesh):
        """Snap every vertex onto the current plane, rebuild the frame and the
        in-plane coordinates, refresh face areas, and refresh tree boxes once
        accumulated drift threatens the fat margins."""
        plane = pm.plane
        old_frame = pm.frame
        old_u = old_frame.u if old_frame is not None else None
        pm.frame = make_plane_frame(plane.p, plane.normal, u_hint=old_u)
        if old_frame is not None and pm._ecells:
            # a pure in-plane translation shifts every pos2 uniformly: move
            # the grid origin along instead of rebuilding; only the rotation
            # residual accrues as drift
            dorg = pm.frame.origin - old_frame.origin
            ox, oy = pm._egrid_org
            pm._egrid_org = (ox - float(dorg @ pm.frame.u),
                             oy - float(dorg @ pm.frame.v))
            twist = (float(np.linalg.norm(pm.frame.u - old_frame.u))
                     + float(np.linalg.norm(pm.frame.v - old_frame.v)))
            pm._egrid_drift += pm.rho_max * twist
        used = len(pm._vid_of_row)
        if used:
            rows = pm.alive_rows()
            if rows.size:
                pts = pm.P3[rows]
                off = (pts - plane.p) @ plane.normal
                max_move = float(np.max(np.abs(off)))
                pts = pts - off[:, None] * plane.normal
                pm.P3[rows] = pts
                d = pts - pm.frame.origin
                pm.P2[rows, 0] = d @ pm.frame.u
                pm.P2[rows, 1] = d @ pm.frame.v
                pm.rho_max = float(np.sqrt(np.max(np.einsum("ij,ij->i", d, d))))
                self._bbox_grow(pm, pts.min(axis=0))
                self._bbox_grow(pm, pts.max(axis=0))
                pm.tree_drift += max_move
        pm.offplane_acc = 0.0
        # exact area refresh (in-plane shoelace over live faces)
        nf = pm._n_frows
        if nf:
            alive = pm._f_alive[:nf]
            if alive.any():
                fv = pm.FV[:nf][alive]
                a = pm.P2[fv[:, 0]]
                b = pm.P2[fv[:, 1]]
                c = pm.P2[fv[:, 2]]
                areas = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                                     - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
                pm.FA[:nf][alive] = areas
                pm.total_area = float(areas.sum())
            else:
                pm.total_area = 0.0
        if pm.tree_drift > 0.4 * self.config.fat_margin:
            self.refresh_tree_boxes(pm)
        if pm._egrid_drift > 0.5 * pm.grid_pad:
            pm.grid_rebuild()

    def refresh_tree_boxes(self, pm: PlanarMesh):
        """Push current tight bounds of all of pm's leaves into both trees."""
        t0 = time.perf_counter()
        for vid, v in pm.vertices.items():
            if v.boundary:
                leaf = self.rrs_tree.leaf_for(LeafPayload(BOUNDARY_VERTEX, pm.id, vid))
                self.rrs_tree.update(leaf, self._vertex_box6(pm, vid))
        for fid, f in pm.faces.items():
            leaf = self.fis_tree.leaf_for(LeafPayload(FACE, pm.id, fid))
            self.fis_tree.update(leaf, self._face_box6(pm, f))
        pm.tree_drift = 0.0
        self.tree_seconds += time.perf_counter() - t0

    # -- face split (update-branch refinement) ----------------------------------

    def split_face(self, pm: PlanarMesh, fid: int, point3) -> Optional[int]:
        """Insert a vertex interior to a face, splitting it into three. Returns
        None (no change) when any sub-triangle would be degenerate."""
        f = pm.faces.get(fid)
        if f is None:
            raise UnknownElement(f"face {fid}")
        fr = pm.frame
        p = np.asarray(point3, float)
        p = p - float((p - fr.origin) @ fr.normal) * fr.normal
        d = p - fr.origin
        p2 = (float(d @ fr.u), float(d @ fr.v))
        corners = (pm.P2[pm.vertices[f.v0].row], pm.P2[pm.vertices[f.v1].row],
                   pm.P2[pm.vertices[f.v2].row])
        for a, b in ((0, 1), (1, 2), (2, 0)):
            ax, ay = corners[a]
            bx, by = corners[b]
            sub2 = (bx - ax) * (p2[1] - ay) - (by - ay) * (p2[0] - ax)
            if abs(0.5 * sub2) <= EPS_AREA:
                return None
        v0, v1, v2 = f.v0, f.v1, f.v2
        self._detach_face(pm, fid, f)
        vid = self.add_vertex(pm, p)
        self.add_face(pm, v0, v1, vid)
        self.add_face(pm, v1, v2, vid)
        self.add_face(pm, v2, v0, vid)
        self._refresh_boundary(pm, vid)
        return vid

    # -- query callbacks ----------------------------------------------------

    def fis_hit_test(self, ray, slack: float):
        """Per-payload predicate resolving true face geometry for ray queries."""
        ox, oy, oz = float(ray.origin[0]), float(ray.origin[1]), float(ray.origin[2])
        dx, dy, dz = float(ray.dir[0]), float(ray.dir[1]), float(ray.dir[2])
        tmax = ray.range + slack
        pms = self.planar_meshes

        def test(payload: LeafPayload):
            pm = pms.get(payload.planar_mesh_id)
            if pm is None:
                return None
            f = pm.faces.get(payload.element_id)
            if f is None:
                return None
            P3 = pm.P3
            V = pm.vertices
            ra, rb, rc = V[f.v0].row, V[f.v1].row, V[f.v2].row
            return ray_triangle_t(ox, oy, oz, dx, dy, dz,
                                  P3[ra, 0], P3[ra, 1], P3[ra, 2],
                                  P3[rb, 0], P3[rb, 1], P3[rb, 2],
                                  P3[rc, 0], P3[rc, 1], P3[rc, 2], tmax)
        return test

    def rrs_containment(self, point3):
        """Per-payload predicate: is the query point inside the vertex's own
        radius sphere."""
        px, py, pz = float(point3[0]), float(point3[1]), float(point3[2])
        pms = self.planar_meshes

        def test(payload: LeafPayload) -> bool:
            pm = pms.get(payload.planar_mesh_id)
            if pm is None:
                return False
            v = pm.vertices.get(payload.element_id)
            if v is None:
                return False
            row = v.row
            dx = pm.P3[row, 0] - px
            dy = pm.P3[row, 1] - py
            dz = pm.P3[row, 2] - pz
            r = pm.RAD[row]
            return dx * dx + dy * dy + dz * dz <= r * r
        return test

    # -- audits ---------------------------------------------------------------

    def audit(self) -> list[str]:
        """Full consistency audit: adjacency, boundary flags, on-plane
        vertices, tracked areas, tree/map bijections, tree structure."""
        problems = []
        want_faces = set()
        want_bverts = set()
        for pm in self.planar_meshes.values():
            pid = pm.id
            for eid, e in pm.edges.items():
                if len(e.faces) > 2:
                    problems.append(f"pm{pid} edge{eid} has {len(e.faces)} faces")
                for vid in (e.v0, e.v1):
                    v = pm.vertices.get(vid)
                    if v is None or eid not in v.edges:
                        problems.append(f"pm{pid} edge{eid} endpoint {vid} broken")
                for fid in e.faces:
                    if fid not in pm.faces:
                        problems.append(f"pm{pid} edge{eid} lists dead face {fid}")
            for fid, f in pm.faces.items():
                want_faces.add(LeafPayload(FACE, pid, fid))
                for x, y in ((f.v0, f.v1), (f.v1, f.v2), (f.v2, f.v0)):
                    eid = pm.edge_id(x, y)
                    if eid is None or fid not in pm.edges[eid].faces:
                        problems.append(f"pm{pid} face{fid} edge ({x},{y}) broken")
            for vid, v in pm.vertices.items():
                expect = (not v.edges) or any(
                    len(pm.edges[e].faces) < 2 for e in v.edges)
                if v.boundary != expect:
                    problems.append(f"pm{pid} vertex{vid} boundary flag wrong")
                if v.boundary:
                    want_bverts.add(LeafPayload(BOUNDARY_VERTEX, pid, vid))
                for eid in v.edges:
                    e = pm.edges.get(eid)
                    if e is None or vid not in (e.v0, e.v1):
                        problems.append(f"pm{pid} vertex{vid} edge {eid} broken")
            if pm.plane is not None and pm.vertices:
                rows = pm.alive_rows()
                off = np.abs((pm.P3[rows] - pm.plane.p) @ pm.plane.normal)
                worst = float(off.max())
                if worst > EPS_PLANE + 1e-9:
                    problems.append(f"pm{pid} vertex off-plane by {worst:.2e}")
            recomputed = pm.recompute_area_sum()
            scale = max(abs(recomputed), 1e-12)
            if abs(pm.total_area - recomputed) > 1e-6 * scale + 1e-12:
                problems.append(
                    f"pm{pid} total_area {pm.total_area} != {recomputed}")
        have_faces = self.fis_tree.payloads()
        if have_faces != want_faces:
            problems.append(
                f"FIS bijection broken: {len(have_faces ^ want_faces)} mismatches")
        have_bv = self.rrs_tree.payloads()
        if have_bv != want_bverts:
            problems.append(
                f"RRS bijection broken: {len(have_bv ^ want_bverts)} mismatches")
        problems.extend("FIS " + p for p in self.fis_tree.validate())
        problems.extend("RRS " + p for p in self.rrs_tree.validate())
        return problems
