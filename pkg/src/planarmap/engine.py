"""Per-point map integration: accelerated search, relative position check,
and dispatch to the mesh operations (update / grow / new / delete / shrink).

Priority order per point: refine the plane of the largest planar-mesh whose
face the ray crossed within band; else grow the largest planar-mesh whose
boundary-vertex radius sphere contains the point; else grow the closest seed;
else start a new seed. When the chosen planar-mesh was within-classified, the
ray additionally carves faces of behind-classified planar-meshes (free-space
information) and shrinks the radii of other planar-meshes' returned boundary
vertices (adaptive resolution). Merging of coplanar planar-meshes is emergent
from this cascade, not an explicit operation.
"""
from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import RETENTION_ALL
from .errors import (DegeneratePlane, EdgeFaceOverflow, GrazingRay,
                     ZeroLengthRay)
from .geometry import (EPS_AREA, Ray, point_in_triangle_2d, ray_from_measurement,
                       segment_intersect_2d)
from .mesh import MapState, PlanarMesh, closest, is_seed, largest
from .planes import (PositionClass, RelPos, SensorNoiseModel, classify,
                     param_uncertainty, range_sigma, update_stats)


class Action(Enum):
    UPDATED = "updated"
    GROWN = "grown"
    SEEDED = "seeded"
    SKIPPED = "skipped"


@dataclass
class IntegrationOutcome:
    action: Action
    touched: set = field(default_factory=set)
    deleted_faces: int = 0
    shrunk_edges: int = 0
    within_branch: bool = False   # chosen planar-mesh was within-classified


@dataclass
class ClassifiedCandidates:
    """Search results grouped by planar-mesh and position class."""
    faces_within: dict = field(default_factory=dict)   # pid -> [(fid, t)]
    faces_behind: dict = field(default_factory=dict)   # pid -> [fid]
    faces_front: dict = field(default_factory=dict)    # recorded, no operation
    verts_within: dict = field(default_factory=dict)   # pid -> [vid]
    verts_seed: dict = field(default_factory=dict)     # pid -> [vid]
    verts_other: dict = field(default_factory=dict)    # front/behind, recorded
    verts_by_pm: dict = field(default_factory=dict)    # pid -> [vid], all hits


@dataclass
class TimingRecord:
    """Per-scan stage durations mirroring the pipeline blocks, seconds."""
    scan_index: int
    n_points: int
    search: float
    position_check: float
    mesh_update: float
    tree_maintenance: float
    total: float


def _noise_model(map_state: MapState) -> SensorNoiseModel:
    nm = getattr(map_state, "_noise_model", None)
    if nm is None or nm.sigma_noise != map_state.config.sigma_noise:
        nm = SensorNoiseModel(sigma_noise=map_state.config.sigma_noise)
        map_state._noise_model = nm
    return nm


def _pm_params(pm: PlanarMesh):
    """Cached (cov_centroid, cov_normal); invalidated with the eig cache."""
    cached = getattr(pm, "_param_cache", None)
    if cached is not None and cached[0] is pm._eig:
        return cached[1]
    eig = pm.eig()
    params = param_uncertainty(pm.stats, eig=eig)
    pm._param_cache = (eig, params)
    return params


def classify_candidates(map_state: MapState, ray: Ray,
                        fis_hits, rrs_hits) -> ClassifiedCandidates:
    """Group search results by planar-mesh and run the relative position
    check once per candidate. Raises GrazingRay when any candidate plane is
    too oblique to classify (the caller skips the point)."""
    cfg = map_state.config
    noise = _noise_model(map_state)
    out = ClassifiedCandidates()

    faces_by_pm: dict[int, list] = {}
    for payload, t in fis_hits:
        faces_by_pm.setdefault(payload.planar_mesh_id, []).append(
            (payload.element_id, t))
    for payload in rrs_hits:
        out.verts_by_pm.setdefault(payload.planar_mesh_id, []).append(
            payload.element_id)

    rpc: dict[int, PositionClass | None] = {}
    for pid in set(faces_by_pm) | set(out.verts_by_pm):
        pm = map_state.planar_meshes[pid]
        if is_seed(pm, cfg.a_min) or pm.plane is None:
            rpc[pid] = None  # seed: no position check possible
            continue
        try:
            cov_p, cov_n = _pm_params(pm)
        except DegeneratePlane:
            rpc[pid] = None  # scatter collapsed; treat like a seed
            continue
        model = range_sigma(pm.plane, pm.stats, ray, noise, eig=pm.eig(),
                            cos_grazing=cfg.cos_grazing)
        rpc[pid] = classify(ray.range, model, cfg.z_crit)

    for pid, hits in faces_by_pm.items():
        pc = rpc[pid]
        if pc is None:
            continue  # seeds hit via faces trigger nothing
        if pc.rel is RelPos.WITHIN:
            out.faces_within[pid] = hits
        elif pc.rel is RelPos.BEHIND:
            out.faces_behind[pid] = [fid for fid, _ in hits]
        else:
            out.faces_front[pid] = [fid for fid, _ in hits]
    for pid, vids in out.verts_by_pm.items():
        pc = rpc[pid]
        if pc is None:
            out.verts_seed[pid] = vids
        elif pc.rel is RelPos.WITHIN:
            out.verts_within[pid] = vids
        else:
            out.verts_other[pid] = vids
    return out


def op_update(map_state: MapState, pm: PlanarMesh, ray: Ray, hit_faces) -> bool:
    """Refine the plane of a within-classified planar-mesh with the new
    sample. The point becomes a vertex only where refinement is needed: when
    its foreign-vertex radius is below the local mean edge length, the
    containing face is split around it. Returns True if a vertex was added."""
    lp = ray.endpoint
    pm.stats = update_stats(pm.stats, lp)
    pm.invalidate_eig()
    map_state.refresh_plane(pm, ray.origin)

    fr = pm.frame
    p3 = lp - float((lp - fr.origin) @ fr.normal) * fr.normal
    d = p3 - fr.origin
    p2 = (float(d @ fr.u), float(d @ fr.v))
    containing = None
    for fid, _t in sorted(hit_faces, key=lambda ft: ft[1]):
        f = pm.faces.get(fid)
        if f is None:
            continue
        V = pm.vertices
        if point_in_triangle_2d(p2, pm.P2[V[f.v0].row], pm.P2[V[f.v1].row],
                                pm.P2[V[f.v2].row]):
            containing = (fid, f)
            break
    if containing is None:
        return False
    fid, f = containing
    V = pm.vertices
    c0 = pm.P3[V[f.v0].row]
    c1 = pm.P3[V[f.v1].row]
    c2 = pm.P3[V[f.v2].row]
    mean_edge = (math.dist(c0, c1) + math.dist(c1, c2) + math.dist(c2, c0)) / 3.0
    if mean_edge <= map_state.config.min_split_edge:
        return False  # already at noise-floor resolution
    radius = map_state.curvature_radius(
        p3, pm.id, fr.normal,
        off_plane_tol=map_state.config.endpoint_slack, cap=mean_edge)
    if radius >= mean_edge:
        return False
    return map_state.split_face(pm, fid, p3) is not None


def op_grow(map_state: MapState, pm: PlanarMesh, ray: Ray, hit_vids) -> int:
    """Expand a planar-mesh with the new point: add it as a vertex, connect
    edges to the returned boundary vertices (angular order, no crossings),
    and fill faces between consecutive committed edges that contain no
    existing vertex. Returns the new vertex id (or -1 for raw seed points)."""
    lp = ray.endpoint
    pm.stats = update_stats(pm.stats, lp)
    pm.invalidate_eig()
    map_state.refresh_plane(pm, ray.origin)
    if pm.plane is None:
        map_state.add_vertex(pm, lp)  # seed still accumulating raw points
        return -1

    vnew = map_state.add_vertex(pm, lp)
    vrow = pm.vertices[vnew].row
    p2 = pm.P2[vrow]
    p3 = pm.P3[vrow]
    r_max = map_state.config.r_max

    # candidate set is the reverse-radius result; edge lengths are bounded by
    # the matched vertices' radii already
    candidates = []
    for vid in hit_vids:
        v = pm.vertices.get(vid)
        if v is None or vid == vnew:
            continue
        if math.dist(p3, pm.P3[v.row]) < 1e-9:
            continue
        q2 = pm.P2[v.row]
        ang = math.atan2(q2[1] - p2[1], q2[0] - p2[0])
        candidates.append((ang, vid, v.row))
    candidates.sort()

    P2 = pm.P2
    V = pm.vertices
    E = pm.edges

    def crosses(a2, b2):
        ax, ay = float(a2[0]), float(a2[1])
        bx, by = float(b2[0]), float(b2[1])
        for eid in pm.grid_query_segment(a2, b2):
            e = E.get(eid)
            if e is None:
                continue
            c2 = P2[V[e.v0].row]
            d2 = P2[V[e.v1].row]
            if segment_intersect_2d((ax, ay), (bx, by),
                                    (c2[0], c2[1]), (d2[0], d2[1])):
                return True
        return False

    committed = []
    reach = 0.0
    for ang, vid, row in candidates:
        if not crosses(p2, P2[row]):
            map_state.add_edge(pm, vnew, vid)
            committed.append((ang, vid, row))
            reach = max(reach, math.dist(p2, P2[row]))

    n = len(committed)
    if n >= 2:
        # a vertex inside any new face must lie within the candidate reach
        near_vids = map_state.vertices_within_2d(pm, p2, reach + 1e-9)
        contain_rows = [V[v].row for v in near_vids if v in V]
        for i in range(n):
            ang_i, vi, ri = committed[i]
            ang_j, vj, rj = committed[(i + 1) % n]
            gap = (ang_j - ang_i) % (2.0 * math.pi)
            if gap >= math.pi - 1e-12:
                continue  # no face across a reflex span around lp
            a2, b2, c2 = p2, P2[ri], P2[rj]
            area2 = ((b2[0] - a2[0]) * (c2[1] - a2[1])
                     - (b2[1] - a2[1]) * (c2[0] - a2[0]))
            if abs(0.5 * area2) <= EPS_AREA:
                continue
            eid = pm.edge_id(vi, vj)
            if eid is None:
                dij = math.dist(pm.P3[ri], pm.P3[rj])
                if dij > min(pm.RAD[ri], pm.RAD[rj]):
                    continue
                if crosses(P2[ri], P2[rj]):
                    continue
            # no existing vertex may lie inside the new face
            blocked = False
            for row in contain_rows:
                if row in (vrow, ri, rj):
                    continue
                if point_in_triangle_2d(P2[row], a2, b2, c2, eps=1e-9):
                    blocked = True
                    break
            if blocked:
                continue
            try:
                map_state.add_face(pm, vnew, vi, vj)
            except EdgeFaceOverflow:
                continue
    return vnew


def op_new(map_state: MapState, ray: Ray) -> PlanarMesh:
    """Seed a new planar-mesh from one point in an empty region."""
    pm = map_state.new_planar_mesh()
    pm.stats = update_stats(pm.stats, ray.endpoint)
    pm.invalidate_eig()
    map_state.add_vertex(pm, ray.endpoint)
    return pm


def op_delete(map_state: MapState, faces_behind: dict) -> int:
    """Remove all hit faces of behind-classified planar-meshes (the ray
    passed through them before landing within the chosen one)."""
    count = 0
    for pid, fids in faces_behind.items():
        pm = map_state.planar_meshes.get(pid)
        if pm is None:
            continue
        for fid in fids:
            if fid in pm.faces:
                map_state.remove_face(pm, fid)
                count += 1
    return count


def op_shrink(map_state: MapState, lp_pos, verts_by_pm: dict,
              exclude_pid: int) -> int:
    """Clamp the radius of other planar-meshes' returned boundary vertices to
    their distance from the new point; edges now longer than the clamped
    radius are removed, with the dangling cascade."""
    count = 0
    lp = np.asarray(lp_pos, float)
    for pid, vids in verts_by_pm.items():
        if pid == exclude_pid:
            continue
        pm = map_state.planar_meshes.get(pid)
        if pm is None:
            continue
        for vid in vids:
            v = pm.vertices.get(vid)
            if v is None:
                continue
            row = v.row
            d = math.sqrt((pm.P3[row, 0] - lp[0]) ** 2
                          + (pm.P3[row, 1] - lp[1]) ** 2
                          + (pm.P3[row, 2] - lp[2]) ** 2)
            if d >= pm.RAD[row]:
                continue
            map_state.set_vertex_radius(pm, vid, max(d, 1e-9))
            r = pm.RAD[row]
            for eid in list(v.edges):
                if eid in pm.edges and pm.edge_length(eid) > r:
                    map_state.remove_edge(pm, eid)
                    count += 1
    return count


def integrate_point(map_state: MapState, origin, lp,
                    timing: dict | None = None) -> IntegrationOutcome:
    """Integrate one measurement; exactly one of update / grow / new runs,
    then delete and shrink when the chosen planar-mesh was within-classified.
    Grazing or zero-length measurements are skipped (recorded)."""
    cfg = map_state.config
    try:
        ray = ray_from_measurement(origin, lp)
    except ZeroLengthRay:
        return IntegrationOutcome(Action.SKIPPED)

    lock = getattr(map_state, "engine_lock", None)
    if lock is None:
        lock = map_state.engine_lock = threading.Lock()
    with lock:
        t0 = time.perf_counter()
        fis_hits = map_state.fis_tree.query_ray(
            ray, map_state.fis_hit_test(ray, cfg.endpoint_slack),
            slack=cfg.endpoint_slack)
        rrs_hits = map_state.rrs_tree.query_point(
            ray.endpoint, map_state.rrs_containment(ray.endpoint))
        t1 = time.perf_counter()
        try:
            cands = classify_candidates(map_state, ray, fis_hits, rrs_hits)
        except GrazingRay:
            if timing is not None:
                timing["search"] += t1 - t0
                timing["position_check"] += time.perf_counter() - t1
            return IntegrationOutcome(Action.SKIPPED)
        t2 = time.perf_counter()
        tree0 = map_state.tree_seconds

        outcome = IntegrationOutcome(Action.SKIPPED)
        pm_star = None
        if cands.faces_within:
            pm_star = largest(map_state.planar_meshes[p]
                              for p in cands.faces_within)
            op_update(map_state, pm_star, ray, cands.faces_within[pm_star.id])
            outcome = IntegrationOutcome(Action.UPDATED, {pm_star.id},
                                         within_branch=True)
        elif cands.verts_within:
            pm_star = largest(map_state.planar_meshes[p]
                              for p in cands.verts_within)
            op_grow(map_state, pm_star, ray, cands.verts_within[pm_star.id])
            outcome = IntegrationOutcome(Action.GROWN, {pm_star.id},
                                         within_branch=True)
        elif cands.verts_seed:
            pm_star = closest((map_state.planar_meshes[p]
                               for p in cands.verts_seed), ray.endpoint)
            op_grow(map_state, pm_star, ray, cands.verts_seed[pm_star.id])
            outcome = IntegrationOutcome(Action.GROWN, {pm_star.id},
                                         within_branch=False)
        else:
            pm = op_new(map_state, ray)
            outcome = IntegrationOutcome(Action.SEEDED, {pm.id})

        if outcome.within_branch:
            outcome.deleted_faces = op_delete(map_state, cands.faces_behind)
            for pid in cands.faces_behind:
                outcome.touched.add(pid)
            outcome.shrunk_edges = op_shrink(map_state, ray.endpoint,
                                             cands.verts_by_pm, pm_star.id)
            for pid in cands.verts_by_pm:
                if pid != pm_star.id:
                    outcome.touched.add(pid)
        t3 = time.perf_counter()
        if timing is not None:
            timing["search"] += t1 - t0
            timing["position_check"] += t2 - t1
            tree_delta = map_state.tree_seconds - tree0
            timing["tree"] += tree_delta
            timing["mesh_update"] += (t3 - t2) - tree_delta
        return outcome


def purge_seeds(map_state: MapState) -> int:
    """Drop seed planar-meshes older than the retention window (in scans)."""
    retention = map_state.config.seed_retention
    if retention == RETENTION_ALL:
        return 0
    a_min = map_state.config.a_min
    doomed = [pm.id for pm in map_state.planar_meshes.values()
              if is_seed(pm, a_min)
              and map_state.current_scan - pm.created_at_scan >= retention]
    for pid in doomed:
        map_state.remove_planar_mesh(pid)
    return len(doomed)


def process_scan(map_state: MapState, origins, points,
                 outcomes: list | None = None) -> TimingRecord:
    """Integrate one posed scan point by point, then purge stale seeds.

    origins: (N, 3) per-point sensor origins; points: (N, 3) endpoints.
    Deterministic mode (config) processes points sequentially in input
    order; otherwise a thread pool drains the points (each point's
    integration is still atomic)."""
    cfg = map_state.config
    origins = np.asarray(origins, float)
    points = np.asarray(points, float)
    n = len(points)
    scan_index = map_state.current_scan
    timing = {"search": 0.0, "position_check": 0.0,
              "mesh_update": 0.0, "tree": 0.0}
    t_start = time.perf_counter()

    if cfg.deterministic or cfg.threads <= 1:
        for i in range(n):
            out = integrate_point(map_state, origins[i], points[i], timing)
            if outcomes is not None:
                outcomes.append(out)
    else:
        from concurrent.futures import ThreadPoolExecutor
        lock = threading.Lock()

        def work(chunk):
            for i in chunk:
                out = integrate_point(map_state, origins[i], points[i], timing)
                if outcomes is not None:
                    with lock:
                        outcomes.append(out)
        chunks = np.array_split(np.arange(n), cfg.threads)
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(work, chunks))

    purge_seeds(map_state)
    map_state.settle()
    map_state.current_scan += 1
    total = time.perf_counter() - t_start
    return TimingRecord(scan_index, n, timing["search"],
                        timing["position_check"], timing["mesh_update"],
                        timing["tree"], total)
