"""File formats: PLY point clouds and meshes (ascii and binary
little-endian), pose files, per-scan timing CSV, and a versioned binary
container for whole-map snapshots (used by the audit entry point).

All multi-byte binary values are little-endian.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .bvh import BOUNDARY_VERTEX, FACE, LeafPayload
from .config import format_config, parse_config
from .engine import TimingRecord
from .errors import FileFormatError, NonUnitQuaternion
from .geometry import PlaneFrame
from .mesh import Edge, Face, MapState, PlanarMesh, Vertex
from .planes import Plane, PlaneStats
from .simulate import Pose

_PLY_SCALARS = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}

_PLY_NUMPY = {
    "char": "<i1", "int8": "<i1", "uchar": "<u1", "uint8": "<u1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
}


def stable_color(pm_id: int) -> tuple[int, int, int]:
    """Deterministic id -> RGB mapping (independent of hash seeding)."""
    h = ((pm_id + 1) * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 31
    h = (h * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    return (64 + (h >> 8) % 192, 64 + (h >> 24) % 192, 64 + (h >> 40) % 192)


# ---------------------------------------------------------------------------
# PLY point clouds


def write_cloud(points: np.ndarray, path, binary: bool = True):
    pts = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (f"ply\nformat {fmt} 1.0\nelement vertex {len(pts)}\n"
              "property float x\nproperty float y\nproperty float z\n"
              "end_header\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(pts.astype("<f4").tobytes())
        else:
            for x, y, z in pts:
                fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n".encode("ascii"))


@dataclass
class _PlyElement:
    name: str
    count: int
    properties: list  # (name, scalar_type) or ("list", count_type, item_type, name)


def _parse_ply_header(fh) -> tuple[str, list[_PlyElement], int]:
    """Returns (format, elements, header line count). Raises FileFormatError
    with the offending line number."""
    lineno = 0

    def next_line():
        nonlocal lineno
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise FileFormatError(f"line {lineno}: unexpected end of header")
        return raw.decode("ascii", errors="replace").strip()

    if next_line() != "ply":
        raise FileFormatError("line 1: not a PLY file (missing 'ply')")
    fmt = None
    elements: list[_PlyElement] = []
    while True:
        line = next_line()
        if line == "end_header":
            break
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii",
                                                  "binary_little_endian"):
                raise FileFormatError(
                    f"line {lineno}: unsupported format {line!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise FileFormatError(f"line {lineno}: bad element {line!r}")
            try:
                elements.append(_PlyElement(parts[1], int(parts[2]), []))
            except ValueError:
                raise FileFormatError(
                    f"line {lineno}: bad element count {parts[2]!r}")
        elif parts[0] == "property":
            if not elements:
                raise FileFormatError(
                    f"line {lineno}: property before any element")
            if parts[1] == "list":
                if len(parts) != 5:
                    raise FileFormatError(f"line {lineno}: bad list property")
                elements[-1].properties.append(
                    ("list", parts[2], parts[3], parts[4]))
            else:
                if len(parts) != 3 or parts[1] not in _PLY_SCALARS:
                    raise FileFormatError(
                        f"line {lineno}: bad property {line!r}")
                elements[-1].properties.append((parts[2], parts[1]))
        else:
            raise FileFormatError(f"line {lineno}: unknown keyword {parts[0]!r}")
    if fmt is None:
        raise FileFormatError(f"line {lineno}: missing format line")
    return fmt, elements, lineno


def read_cloud(path) -> np.ndarray:
    """Positions from a PLY point cloud; extra properties are ignored."""
    with open(path, "rb") as fh:
        fmt, elements, _ = _parse_ply_header(fh)
        vert = next((e for e in elements if e.name == "vertex"), None)
        if vert is None:
            raise FileFormatError("no vertex element")
        names = [p[0] for p in vert.properties]
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise FileFormatError(f"vertex element missing property {axis}")
        if elements[0] is not vert:
            raise FileFormatError("vertex element must come first")
        if fmt == "ascii":
            out = np.empty((vert.count, 3), dtype=np.float64)
            xi, yi, zi = names.index("x"), names.index("y"), names.index("z")
            for i in range(vert.count):
                parts = fh.readline().split()
                if len(parts) < len(names):
                    raise FileFormatError(f"vertex row {i}: too few values")
                out[i] = (float(parts[xi]), float(parts[yi]), float(parts[zi]))
            return out
        # binary: scalar properties only in the vertex element; bulk-parse
        # through a numpy structured dtype
        formats = []
        for p in vert.properties:
            if p[0] == "list":
                raise FileFormatError("list property in vertex element")
            formats.append(_PLY_NUMPY[p[1]])
        dt = np.dtype({"names": [f"f{k}" for k in range(len(formats))],
                       "formats": formats})
        raw = fh.read(vert.count * dt.itemsize)
        if len(raw) < vert.count * dt.itemsize:
            raise FileFormatError("truncated vertex data")
        rec = np.frombuffer(raw, dtype=dt, count=vert.count)
        xi, yi, zi = names.index("x"), names.index("y"), names.index("z")
        out = np.empty((vert.count, 3), dtype=np.float64)
        out[:, 0] = rec[f"f{xi}"]
        out[:, 1] = rec[f"f{yi}"]
        out[:, 2] = rec[f"f{zi}"]
        return out


read_scan = read_cloud


# ---------------------------------------------------------------------------
# PLY meshes


def write_mesh(path, vertices: np.ndarray, faces: np.ndarray,
               face_pm_ids: np.ndarray | None = None):
    """Binary little-endian PLY mesh; when face_pm_ids is given, each face
    carries a color encoding its planar-mesh id via a stable hash."""
    v = np.asarray(vertices, dtype="<f4").reshape(-1, 3)
    f = np.asarray(faces, dtype="<i4").reshape(-1, 3)
    with_color = face_pm_ids is not None
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {len(v)}",
              "property float x", "property float y", "property float z",
              f"element face {len(f)}",
              "property list uchar int vertex_indices"]
    if with_color:
        header += ["property uchar red", "property uchar green",
                   "property uchar blue"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(v.tobytes())
        if with_color:
            colors = np.array([stable_color(int(i)) for i in face_pm_ids],
                              dtype=np.uint8).reshape(-1, 3)
            rec = np.zeros(len(f), dtype=np.dtype(
                [("n", "u1"), ("idx", "<i4", (3,)), ("rgb", "u1", (3,))]))
            rec["n"] = 3
            rec["idx"] = f
            rec["rgb"] = colors
            fh.write(rec.tobytes())
        else:
            rec = np.zeros(len(f), dtype=np.dtype(
                [("n", "u1"), ("idx", "<i4", (3,))]))
            rec["n"] = 3
            rec["idx"] = f
            fh.write(rec.tobytes())


def read_mesh(path) -> tuple[np.ndarray, np.ndarray]:
    """Vertices (float32 preserved bitwise) and int face index triples."""
    with open(path, "rb") as fh:
        fmt, elements, _ = _parse_ply_header(fh)
        if fmt != "binary_little_endian":
            raise FileFormatError("mesh reader expects binary_little_endian")
        vert = next((e for e in elements if e.name == "vertex"), None)
        face = next((e for e in elements if e.name == "face"), None)
        if vert is None or face is None:
            raise FileFormatError("missing vertex or face element")
        vcodes = []
        for p in vert.properties:
            if p[0] == "list":
                raise FileFormatError("list property in vertex element")
            vcodes.append(_PLY_SCALARS[p[1]])
        vrow = "<" + "".join(c for c, _ in vcodes)
        vsize = struct.calcsize(vrow)
        names = [p[0] for p in vert.properties]
        xi, yi, zi = names.index("x"), names.index("y"), names.index("z")
        raw = fh.read(vert.count * vsize)
        verts = np.empty((vert.count, 3), dtype=np.float32)
        for i, row in enumerate(struct.iter_unpack(vrow, raw)):
            verts[i] = (row[xi], row[yi], row[zi])
        # face rows: list property first, then optional scalars
        if not face.properties or face.properties[0][0] != "list":
            raise FileFormatError("face element must start with a list property")
        _, cnt_t, item_t, _name = face.properties[0]
        cnt_fmt, cnt_size = _PLY_SCALARS[cnt_t]
        item_fmt, item_size = _PLY_SCALARS[item_t]
        trail = 0
        for p in face.properties[1:]:
            if p[0] == "list":
                raise FileFormatError("multiple list properties per face")
            trail += _PLY_SCALARS[p[1]][1]
        faces = np.empty((face.count, 3), dtype=np.int64)
        for i in range(face.count):
            (k,) = struct.unpack("<" + cnt_fmt, fh.read(cnt_size))
            if k != 3:
                raise FileFormatError(f"face {i}: expected 3 indices, got {k}")
            faces[i] = struct.unpack("<" + item_fmt * 3, fh.read(item_size * 3))
            if trail:
                fh.read(trail)
        return verts, faces


# ---------------------------------------------------------------------------
# Poses


def read_poses(path) -> list[Pose]:
    """One pose per line: timestamp tx ty tz qx qy qz qw. Timestamps must
    strictly increase; quaternions are renormalized (warning beyond 1e-3)."""
    poses = []
    last_t = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 8:
                raise FileFormatError(
                    f"line {lineno}: expected 8 fields, got {len(parts)}")
            try:
                vals = [float(x) for x in parts]
            except ValueError:
                raise FileFormatError(f"line {lineno}: non-numeric field")
            ts, tx, ty, tz, qx, qy, qz, qw = vals
            if last_t is not None and ts <= last_t:
                raise FileFormatError(
                    f"line {lineno}: timestamps not increasing")
            last_t = ts
            q = np.array([qx, qy, qz, qw])
            norm = float(np.linalg.norm(q))
            if norm < 0.5:
                raise NonUnitQuaternion(
                    f"line {lineno}: quaternion norm {norm:.3f}")
            if abs(norm - 1.0) > 1e-3:
                warnings.warn(f"pose line {lineno}: quaternion norm {norm:.4f}"
                              " renormalized")
            poses.append(Pose(np.array([tx, ty, tz]), q / norm))
    return poses


def write_poses(path, poses: list[Pose], t0: float = 0.0, dt: float = 0.1):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# timestamp tx ty tz qx qy qz qw\n")
        for i, p in enumerate(poses):
            q = p.q / np.linalg.norm(p.q)
            fh.write(f"{t0 + i * dt:.6f} "
                     f"{p.t[0]:.9g} {p.t[1]:.9g} {p.t[2]:.9g} "
                     f"{q[0]:.17g} {q[1]:.17g} {q[2]:.17g} {q[3]:.17g}\n")


# ---------------------------------------------------------------------------
# Timing CSV


TIMING_HEADER = ("scan_index,n_points,search_s,position_check_s,"
                 "mesh_update_s,tree_maintenance_s,total_s")


def write_timing_csv(path, records: list[TimingRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TIMING_HEADER + "\n")
        for r in records:
            fh.write(f"{r.scan_index},{r.n_points},{r.search:.6f},"
                     f"{r.position_check:.6f},{r.mesh_update:.6f},"
                     f"{r.tree_maintenance:.6f},{r.total:.6f}\n")


# ---------------------------------------------------------------------------
# Map container (versioned binary snapshot)

_MAP_MAGIC = b"PMAP"
_MAP_VERSION = 1


def _w(fh, fmt, *vals):
    fh.write(struct.pack("<" + fmt, *vals))


def _r(fh, fmt):
    size = struct.calcsize("<" + fmt)
    raw = fh.read(size)
    if len(raw) != size:
        raise FileFormatError("truncated map container")
    return struct.unpack("<" + fmt, raw)


def save_map(map_state: MapState, path):
    """Snapshot the whole map: config, stats, planes, frames, topology."""
    with open(path, "wb") as fh:
        fh.write(_MAP_MAGIC)
        _w(fh, "I", _MAP_VERSION)
        cfg = format_config(map_state.config).encode("utf-8")
        _w(fh, "I", len(cfg))
        fh.write(cfg)
        _w(fh, "qq", map_state.current_scan, map_state._next_pm)
        _w(fh, "I", len(map_state.planar_meshes))
        for pm in map_state.planar_meshes.values():
            _w(fh, "qq", pm.id, pm.created_at_scan)
            _w(fh, "q", pm.stats.n)
            fh.write(pm.stats.centroid.astype("<f8").tobytes())
            fh.write(pm.stats.scatter.astype("<f8").tobytes())
            _w(fh, "B", 1 if pm.plane is not None else 0)
            if pm.plane is not None:
                fh.write(pm.plane.p.astype("<f8").tobytes())
                fh.write(pm.plane.normal.astype("<f8").tobytes())
                for vec in (pm.frame.origin, pm.frame.normal,
                            pm.frame.u, pm.frame.v):
                    fh.write(np.asarray(vec, "<f8").tobytes())
            _w(fh, "qqq", pm._next_vid, pm._next_eid, pm._next_fid)
            _w(fh, "I", len(pm.vertices))
            for vid, v in pm.vertices.items():
                _w(fh, "q", vid)
                fh.write(pm.P3[v.row].astype("<f8").tobytes())
                fh.write(pm.P2[v.row].astype("<f8").tobytes())
                _w(fh, "d", float(pm.RAD[v.row]))
            _w(fh, "I", len(pm.edges))
            for eid, e in pm.edges.items():
                _w(fh, "qqq", eid, e.v0, e.v1)
            _w(fh, "I", len(pm.faces))
            for fid, f in pm.faces.items():
                _w(fh, "qqqq", fid, f.v0, f.v1, f.v2)


def load_map(path) -> MapState:
    """Rebuild a MapState (including both trees) from a snapshot."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAP_MAGIC:
            raise FileFormatError("bad magic; not a map container")
        (version,) = _r(fh, "I")
        if version != _MAP_VERSION:
            raise FileFormatError(f"unsupported map version {version}")
        (cfg_len,) = _r(fh, "I")
        cfg = parse_config(fh.read(cfg_len).decode("utf-8"))
        ms = MapState(cfg)
        ms.current_scan, ms._next_pm = _r(fh, "qq")
        (n_pms,) = _r(fh, "I")
        for _ in range(n_pms):
            pm_id, created = _r(fh, "qq")
            pm = PlanarMesh(pm_id, created)
            ms.planar_meshes[pm_id] = pm
            (n_stats,) = _r(fh, "q")
            centroid = np.frombuffer(fh.read(24), "<f8").copy()
            scatter = np.frombuffer(fh.read(72), "<f8").reshape(3, 3).copy()
            pm.stats = PlaneStats(n_stats, centroid, scatter)
            (has_plane,) = _r(fh, "B")
            if has_plane:
                p = np.frombuffer(fh.read(24), "<f8").copy()
                normal = np.frombuffer(fh.read(24), "<f8").copy()
                pm.plane = Plane(p, normal)
                origin = np.frombuffer(fh.read(24), "<f8").copy()
                fnormal = np.frombuffer(fh.read(24), "<f8").copy()
                fu = np.frombuffer(fh.read(24), "<f8").copy()
                fv = np.frombuffer(fh.read(24), "<f8").copy()
                pm.frame = PlaneFrame(origin, fnormal, fu, fv)  # exact basis
            pm._next_vid, pm._next_eid, pm._next_fid = _r(fh, "qqq")
            (nv,) = _r(fh, "I")
            for _i in range(nv):
                (vid,) = _r(fh, "q")
                p3 = np.frombuffer(fh.read(24), "<f8").copy()
                p2 = np.frombuffer(fh.read(16), "<f8").copy()
                (rad,) = _r(fh, "d")
                row = pm._new_row()
                pm.P3[row] = p3
                pm.P2[row] = p2
                pm.RAD[row] = rad
                pm._vid_of_row.append(vid)
                pm.vertices[vid] = Vertex(row)
                if pm.bbox_lo is None:
                    pm.bbox_lo = p3.copy()
                    pm.bbox_hi = p3.copy()
                else:
                    np.minimum(pm.bbox_lo, p3, out=pm.bbox_lo)
                    np.maximum(pm.bbox_hi, p3, out=pm.bbox_hi)
            (ne,) = _r(fh, "I")
            for _i in range(ne):
                eid, v0, v1 = _r(fh, "qqq")
                e = Edge(v0, v1)
                pm.edges[eid] = e
                pm._edge_by_pair[(v0, v1) if v0 < v1 else (v1, v0)] = eid
                pm.vertices[v0].edges.add(eid)
                pm.vertices[v1].edges.add(eid)
            (nf,) = _r(fh, "I")
            for _i in range(nf):
                fid, v0, v1, v2 = _r(fh, "qqqq")
                frow = pm._new_frow()
                r0 = pm.vertices[v0].row
                r1 = pm.vertices[v1].row
                r2 = pm.vertices[v2].row
                pm.FV[frow] = (r0, r1, r2)
                a, b, c = pm.P2[r0], pm.P2[r1], pm.P2[r2]
                pm.FA[frow] = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1])
                                        - (b[1] - a[1]) * (c[0] - a[0]))
                pm._f_alive[frow] = True
                pm.faces[fid] = Face(v0, v1, v2, frow)
                for x, y in ((v0, v1), (v1, v2), (v2, v0)):
                    eid = pm.edge_id(x, y)
                    if eid is None:
                        raise FileFormatError(
                            f"pm {pm_id} face {fid}: missing edge ({x},{y})")
                    pm.edges[eid].faces.add(fid)
            pm.total_area = pm.recompute_area_sum()
            if pm.frame is not None and pm.vertices:
                rows = pm.alive_rows()
                d = pm.P3[rows] - pm.frame.origin
                pm.rho_max = float(np.sqrt(np.max(np.einsum("ij,ij->i", d, d))))
            # boundary flags + tree registration
            for vid, v in pm.vertices.items():
                v.boundary = (not v.edges) or any(
                    len(pm.edges[e].faces) < 2 for e in v.edges)
                if v.boundary:
                    ms.rrs_tree.insert(LeafPayload(BOUNDARY_VERTEX, pm_id, vid),
                                       ms._vertex_box6(pm, vid))
            for fid, f in pm.faces.items():
                ms.fis_tree.insert(LeafPayload(FACE, pm_id, fid),
                                   ms._face_box6(pm, f))
        return ms
