"""Planar-mesh and MapState topology tests: adjacency, cascades, boundary
tracking, tree bijections, radius search."""
import math

import numpy as np
import pytest

from planarmap.config import Config
from planarmap.errors import EdgeFaceOverflow, UnknownElement
from planarmap.geometry import make_plane_frame
from planarmap.mesh import MapState, closest, is_seed, largest
from planarmap.planes import Plane, PlaneStats


def make_planar(map_state, origin=(0, 0, 0), normal=(0, 0, 1), n_stats=10):
    """A planar-mesh with a defined plane, ready for topology ops."""
    pm = map_state.new_planar_mesh()
    origin = np.asarray(origin, float)
    normal = np.asarray(normal, float)
    normal = normal / np.linalg.norm(normal)
    pm.plane = Plane(origin, normal)
    pm.frame = make_plane_frame(origin, normal)
    pm.stats = PlaneStats(n_stats, origin.copy(),
                          np.eye(3) - np.outer(normal, normal))
    return pm


def test_add_vertex_projects_onto_plane():
    m = MapState(Config())
    pm = make_planar(m)
    vid = m.add_vertex(pm, [1, 2, 0.004])
    assert np.allclose(pm.pos3(vid), [1, 2, 0])
    assert np.allclose(sorted(np.abs(pm.pos2(vid))), [1, 2])
    assert pm.vertices[vid].boundary
    assert len(m.rrs_tree) == 1


def test_first_vertex_radius_capped():
    m = MapState(Config(r_max=1.0))
    pm = make_planar(m)
    vid = m.add_vertex(pm, [0, 0, 0])
    assert pm.radius(vid) == pytest.approx(1.0)


def test_radius_sees_foreign_vertex():
    m = MapState(Config(r_max=1.0))
    pm_a = make_planar(m)
    pm_b = make_planar(m, origin=(0.3, 0, 0))
    m.add_vertex(pm_b, [0.3, 0, 0])
    vid = m.add_vertex(pm_a, [0, 0, 0])
    assert pm_a.radius(vid) == pytest.approx(0.3)


def test_radius_brute_force_oracle():
    rng = np.random.default_rng(0)
    m = MapState(Config(r_max=1.0))
    pms = [make_planar(m, origin=(0, 0, z), normal=(0, 0, 1))
           for z in (0.0, 0.1, 0.2)]
    pts = {pm.id: [] for pm in pms}
    for _ in range(200):
        pm = pms[rng.integers(3)]
        p = [rng.uniform(-2, 2), rng.uniform(-2, 2), pm.plane.p[2]]
        m.add_vertex(pm, p)
        pts[pm.id].append(np.asarray(p))
    for _ in range(100):
        q = rng.uniform(-2, 2, size=3)
        own = int(rng.integers(3))
        got = m.recompute_radius(q, pms[own].id)
        foreign = [p for pid, ps in pts.items() if pid != pms[own].id
                   for p in ps]
        want = min(1.0, min(np.linalg.norm(np.asarray(foreign) - q, axis=1)))
        assert got == pytest.approx(want, abs=1e-12)


def test_single_triangle_lifecycle():
    m = MapState(Config())
    pm = make_planar(m)
    a = m.add_vertex(pm, [0, 0, 0])
    b = m.add_vertex(pm, [1, 0, 0])
    c = m.add_vertex(pm, [0, 1, 0])
    fid = m.add_face(pm, a, b, c)
    assert len(pm.faces) == 1 and len(pm.edges) == 3
    assert all(v.boundary for v in pm.vertices.values())
    assert len(m.rrs_tree) == 3 and len(m.fis_tree) == 1
    assert pm.total_area == pytest.approx(0.5)
    assert m.audit() == []
    # removing the face cascades everything away
    m.remove_face(pm, fid)
    assert not pm.faces and not pm.edges and not pm.vertices
    assert len(m.rrs_tree) == 0 and len(m.fis_tree) == 0
    assert pm.total_area == pytest.approx(0.0)
    assert m.audit() == []


def test_shared_edge_two_faces():
    m = MapState(Config())
    pm = make_planar(m)
    a = m.add_vertex(pm, [0, 0, 0])
    b = m.add_vertex(pm, [1, 0, 0])
    c = m.add_vertex(pm, [0, 1, 0])
    d = m.add_vertex(pm, [1, 1, 0])
    m.add_face(pm, a, b, c)
    m.add_face(pm, b, d, c)
    shared = pm.edge_id(b, c)
    assert len(pm.edges[shared].faces) == 2
    # endpoints of the shared edge remain boundary through other edges
    assert pm.vertices[b].boundary and pm.vertices[c].boundary
    assert m.audit() == []


def test_edge_face_overflow():
    m = MapState(Config())
    pm = make_planar(m)
    a = m.add_vertex(pm, [0, 0, 0])
    b = m.add_vertex(pm, [1, 0, 0])
    c = m.add_vertex(pm, [0, 1, 0])
    d = m.add_vertex(pm, [1, 1, 0])
    e = m.add_vertex(pm, [0.7, 0.7, 0])
    m.add_face(pm, a, b, c)
    m.add_face(pm, b, d, c)
    with pytest.raises(EdgeFaceOverflow):
        m.add_face(pm, b, e, c)
    assert m.audit() == []


def test_two_triangle_strip_partial_removal():
    m = MapState(Config())
    pm = make_planar(m)
    a = m.add_vertex(pm, [0, 0, 0])
    b = m.add_vertex(pm, [1, 0, 0])
    c = m.add_vertex(pm, [0, 1, 0])
    d = m.add_vertex(pm, [1, 1, 0])
    f1 = m.add_face(pm, a, b, c)
    m.add_face(pm, b, d, c)
    m.remove_face(pm, f1)
    # shared edge survives with one face; a's dangling edges cascade
    assert a not in pm.vertices
    assert set(pm.vertices) == {b, c, d}
    assert pm.edge_id(b, c) is not None
    assert len(pm.faces) == 1
    assert m.audit() == []


def test_remove_vertex_cascades():
    m = MapState(Config())
    pm = make_planar(m)
    a = m.add_vertex(pm, [0, 0, 0])
    b = m.add_vertex(pm, [1, 0, 0])
    c = m.add_vertex(pm, [0, 1, 0])
    m.add_face(pm, a, b, c)
    m.remove_vertex(pm, a)
    # a's edges die, the face dies, b-c edge dangles away, b and c empty out
    assert not pm.vertices and not pm.edges and not pm.faces
    assert m.audit() == []


def test_unknown_element_errors():
    m = MapState(Config())
    pm = make_planar(m)
    with pytest.raises(UnknownElement):
        m.remove_face(pm, 99)
    with pytest.raises(UnknownElement):
        m.remove_edge(pm, 99)
    with pytest.raises(UnknownElement):
        m.remove_vertex(pm, 99)


def test_boundary_vertex_becomes_interior():
    m = MapState(Config())
    pm = make_planar(m)
    hub = m.add_vertex(pm, [0, 0, 0])
    ring = [m.add_vertex(pm, [math.cos(t), math.sin(t), 0])
            for t in np.linspace(0, 2 * math.pi, 6, endpoint=False)]
    for i in range(6):
        m.add_face(pm, hub, ring[i], ring[(i + 1) % 6])
    assert not pm.vertices[hub].boundary
    assert all(pm.vertices[v].boundary for v in ring)
    # hub no longer in the RRS tree
    assert len(m.rrs_tree) == 6
    assert m.audit() == []


def test_split_face_refines():
    m = MapState(Config())
    pm = make_planar(m)
    a = m.add_vertex(pm, [0, 0, 0])
    b = m.add_vertex(pm, [1, 0, 0])
    c = m.add_vertex(pm, [0, 1, 0])
    fid = m.add_face(pm, a, b, c)
    area_before = pm.total_area
    vid = m.split_face(pm, fid, [0.3, 0.3, 0.0])
    assert vid is not None
    assert len(pm.faces) == 3
    assert not pm.vertices[vid].boundary
    assert pm.total_area == pytest.approx(area_before)
    assert m.audit() == []


def test_split_face_rejects_degenerate():
    m = MapState(Config())
    pm = make_planar(m)
    a = m.add_vertex(pm, [0, 0, 0])
    b = m.add_vertex(pm, [1, 0, 0])
    c = m.add_vertex(pm, [0, 1, 0])
    fid = m.add_face(pm, a, b, c)
    assert m.split_face(pm, fid, [0.5, 0.0, 0.0]) is None  # on an edge
    assert len(pm.faces) == 1
    assert m.audit() == []


def test_is_seed_rules():
    m = MapState(Config(a_min=0.01))
    pm = make_planar(m, n_stats=2)
    assert is_seed(pm, 0.01)              # under three points
    pm.stats.n = 50
    assert is_seed(pm, 0.01)              # no faces yet: area 0
    pm.total_area = 1.0
    assert not is_seed(pm, 0.01)


def test_largest_and_closest():
    m = MapState(Config())
    a = make_planar(m)
    b = make_planar(m)
    a.total_area = 1.0
    b.total_area = 2.0
    assert largest([a, b]) is b
    b.total_area = 1.0
    assert largest([a, b]) is a            # tie: lowest id
    assert largest([b]) is b
    m.add_vertex(a, [0, 0, 0])
    m.add_vertex(b, [5, 0, 0])
    assert closest([a, b], [1, 0, 0]) is a
    assert closest([a, b], [4, 0, 0]) is b


def test_reprojection_keeps_vertices_on_plane():
    m = MapState(Config())
    pm = make_planar(m)
    for x in np.linspace(0, 2, 10):
        m.add_vertex(pm, [x, 0.5 * x, 0])
    # rotate the plane a bit and refit: vertices must snap back on
    pm.stats = PlaneStats(50, np.array([1.0, 0.5, 0.01]),
                          _tilted_scatter(math.radians(2.0)))
    pm.invalidate_eig()
    m.refresh_plane(pm, toward=np.array([0.0, 0.0, 10.0]))
    rows = pm.alive_rows()
    off = np.abs((pm.P3[rows] - pm.plane.p) @ pm.plane.normal)
    assert float(off.max()) <= 1e-6 + 1e-12
    assert m.audit() == []


def _tilted_scatter(angle):
    axis = np.array([math.sin(angle), 0.0, math.cos(angle)])
    u = np.cross(axis, [0, 1, 0])
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return np.outer(u, u) + 0.5 * np.outer(v, v)


def test_tree_bijections_random_ops():
    rng = np.random.default_rng(12)
    m = MapState(Config())
    pm = make_planar(m)
    verts = []
    for _ in range(40):
        verts.append(m.add_vertex(
            pm, [rng.uniform(0, 5), rng.uniform(0, 5), 0]))
    faces = []
    for _ in range(60):
        tri = rng.choice(verts, size=3, replace=False)
        tri = [int(v) for v in tri if v in pm.vertices]
        if len(set(tri)) != 3:
            continue
        p = [pm.pos2(v) for v in tri]
        area = abs((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                   - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]))
        if area < 1e-6:
            continue
        try:
            faces.append(m.add_face(pm, *tri))
        except EdgeFaceOverflow:
            continue
        if faces and rng.random() < 0.3:
            fid = faces.pop(int(rng.integers(len(faces))))
            if fid in pm.faces:
                m.remove_face(pm, fid)
        assert m.audit() == []
