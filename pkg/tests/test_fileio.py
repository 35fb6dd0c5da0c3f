"""File format tests: PLY round trips, malformed headers, poses, map
snapshots, timing CSV."""
import struct

import numpy as np
import pytest

from planarmap.config import Config
from planarmap.engine import TimingRecord, process_scan
from planarmap.errors import FileFormatError, NonUnitQuaternion
from planarmap.fileio import (load_map, read_cloud, read_mesh, read_poses,
                              save_map, stable_color, write_cloud, write_mesh,
                              write_poses, write_timing_csv)
from planarmap.mesh import MapState
from planarmap.simulate import Pose


def test_cloud_round_trip_binary(tmp_path):
    pts = np.random.default_rng(0).normal(size=(500, 3)).astype(np.float32)
    path = tmp_path / "c.ply"
    write_cloud(pts, path, binary=True)
    back = read_cloud(path)
    assert np.array_equal(back.astype(np.float32), pts)


def test_cloud_round_trip_ascii(tmp_path):
    pts = np.random.default_rng(1).normal(size=(50, 3)).astype(np.float32)
    path = tmp_path / "c.ply"
    write_cloud(pts, path, binary=False)
    back = read_cloud(path)
    assert np.allclose(back.astype(np.float32), pts, atol=1e-6)


def test_cloud_reader_ignores_extra_properties(tmp_path):
    path = tmp_path / "extra.ply"
    header = ("ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
              "property float x\nproperty float y\nproperty float z\n"
              "property uchar intensity\nend_header\n")
    with open(path, "wb") as fh:
        fh.write(header.encode())
        for i in range(2):
            fh.write(struct.pack("<fffB", 1.0 * i, 2.0 * i, 3.0 * i, 42))
    pts = read_cloud(path)
    assert np.allclose(pts, [[0, 0, 0], [1, 2, 3]])


def test_million_point_read_under_a_second(tmp_path):
    pts = np.random.default_rng(5).normal(size=(1_000_000, 3)).astype(np.float32)
    path = tmp_path / "big.ply"
    write_cloud(pts, path, binary=True)
    import time
    t0 = time.perf_counter()
    back = read_cloud(path)
    elapsed = time.perf_counter() - t0
    assert len(back) == 1_000_000
    assert elapsed < 1.0, f"read took {elapsed:.2f}s"
    assert np.array_equal(back.astype(np.float32), pts)


def test_malformed_header_line_number(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_bytes(b"ply\nformat ascii 1.0\nelement vertex x\nend_header\n")
    with pytest.raises(FileFormatError, match="line 3"):
        read_cloud(path)
    path.write_bytes(b"nope\n")
    with pytest.raises(FileFormatError, match="line 1"):
        read_cloud(path)


def test_mesh_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(2)
    v = rng.normal(size=(40, 3)).astype(np.float32)
    f = rng.integers(0, 40, size=(60, 3)).astype(np.int64)
    path = tmp_path / "m.ply"
    write_mesh(path, v, f)
    v2, f2 = read_mesh(path)
    assert np.array_equal(v2, v)          # bitwise float32 preservation
    assert np.array_equal(f2, f)


def test_mesh_with_colors_round_trip(tmp_path):
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.float32)
    f = np.array([[0, 1, 2]])
    path = tmp_path / "m.ply"
    write_mesh(path, v, f, face_pm_ids=np.array([7]))
    v2, f2 = read_mesh(path)
    assert np.array_equal(f2, f)
    # manual parse of the color bytes as an independent check
    raw = path.read_bytes()
    body = raw.split(b"end_header\n", 1)[1]
    face_rec = body[3 * 3 * 4:]
    n, i0, i1, i2, r, g, b = struct.unpack("<BiiiBBB", face_rec)
    assert n == 3 and (i0, i1, i2) == (0, 1, 2)
    assert (r, g, b) == stable_color(7)


def test_mesh_file_size_scales_linearly(tmp_path):
    v = np.zeros((100, 3), np.float32)
    f = np.zeros((200, 3), np.int64)
    p1 = tmp_path / "a.ply"
    p2 = tmp_path / "b.ply"
    write_mesh(p1, v, f)
    write_mesh(p2, np.zeros((200, 3), np.float32),
               np.zeros((400, 3), np.int64))
    s1 = p1.stat().st_size
    s2 = p2.stat().st_size
    header = len(b"".join(p1.read_bytes().split(b"end_header\n")[:1]))
    assert (s2 - header) >= 1.9 * (s1 - header)


def test_stable_color_deterministic():
    assert stable_color(3) == stable_color(3)
    assert stable_color(3) != stable_color(4)
    assert all(0 <= c <= 255 for c in stable_color(12345))


# -- poses ------------------------------------------------------------------------

def test_pose_round_trip(tmp_path):
    poses = [Pose(np.array([1.0, 2, 3]), np.array([0, 0, 0, 1.0])),
             Pose(np.array([4.0, 5, 6]),
                  np.array([0, 0, np.sin(0.3), np.cos(0.3)]))]
    path = tmp_path / "poses.txt"
    write_poses(path, poses)
    back = read_poses(path)
    assert len(back) == 2
    for a, b in zip(poses, back):
        assert np.allclose(a.t, b.t)
        assert np.allclose(a.q, b.q, atol=1e-12)


def test_pose_identity_line(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0.0 0 0 0 0 0 0 1\n")
    poses = read_poses(path)
    assert np.allclose(poses[0].rotation(), np.eye(3))


def test_pose_shuffled_timestamps_error(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("1.0 0 0 0 0 0 0 1\n0.5 1 0 0 0 0 0 1\n")
    with pytest.raises(FileFormatError, match="line 2"):
        read_poses(path)


def test_pose_norm_renormalized_with_warning(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0.0 0 0 0 0 0 0 0.9\n")
    with pytest.warns(UserWarning, match="renormalized"):
        poses = read_poses(path)
    assert np.linalg.norm(poses[0].q) == pytest.approx(1.0)


def test_pose_tiny_norm_rejected(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0.0 0 0 0 0 0 0 0.01\n")
    with pytest.raises(NonUnitQuaternion):
        read_poses(path)


def test_pose_bad_field_count(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0.0 0 0 0 1\n")
    with pytest.raises(FileFormatError, match="line 1"):
        read_poses(path)


# -- timing CSV ----------------------------------------------------------------------

def test_timing_csv(tmp_path):
    recs = [TimingRecord(0, 100, 0.01, 0.02, 0.03, 0.004, 0.07),
            TimingRecord(1, 90, 0.011, 0.019, 0.031, 0.005, 0.069)]
    path = tmp_path / "t.csv"
    write_timing_csv(path, recs)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("scan_index,")
    assert len(lines) == 3
    row = lines[1].split(",")
    assert row[0] == "0" and row[1] == "100"
    # stage sum bounded by total (plus slack)
    for line in lines[1:]:
        vals = [float(x) for x in line.split(",")[2:]]
        assert sum(vals[:-1]) <= vals[-1] * 1.05 + 1e-9


# -- map snapshots ----------------------------------------------------------------------

def _built_map():
    rng = np.random.default_rng(12)
    m = MapState(Config())
    pts = np.column_stack([rng.uniform(0, 2, 300), rng.uniform(0, 2, 300),
                           rng.normal(0, 0.01, 300)])
    origins = np.broadcast_to(np.array([1.0, 1.0, 4.0]), pts.shape)
    process_scan(m, origins, pts)
    # second surface for foreign-radius structure
    pts2 = np.column_stack([np.zeros(100) + rng.normal(0, 0.01, 100),
                            rng.uniform(0, 2, 100), rng.uniform(0, 2, 100)])
    origins2 = np.broadcast_to(np.array([3.0, 1.0, 1.0]), pts2.shape)
    process_scan(m, origins2, pts2)
    assert m.audit() == []
    return m


def test_map_snapshot_round_trip(tmp_path):
    m = _built_map()
    path = tmp_path / "map.bin"
    save_map(m, path)
    back = load_map(path)
    assert back.audit() == []
    assert set(back.planar_meshes) == set(m.planar_meshes)
    for pid, pm in m.planar_meshes.items():
        b = back.planar_meshes[pid]
        assert b.stats.n == pm.stats.n
        assert np.array_equal(b.stats.centroid, pm.stats.centroid)
        assert np.array_equal(b.stats.scatter, pm.stats.scatter)
        assert set(b.vertices) == set(pm.vertices)
        assert set(b.edges) == set(pm.edges)
        assert set(b.faces) == set(pm.faces)
        assert b.total_area == pytest.approx(pm.total_area, rel=1e-12)
        for vid in pm.vertices:
            assert np.array_equal(b.pos3(vid), pm.pos3(vid))
            assert b.radius(vid) == pm.radius(vid)
    assert len(back.fis_tree) == len(m.fis_tree)
    assert len(back.rrs_tree) == len(m.rrs_tree)


def test_map_snapshot_identical_bytes_for_identical_maps(tmp_path):
    p1 = tmp_path / "a.bin"
    p2 = tmp_path / "b.bin"
    save_map(_built_map(), p1)
    save_map(_built_map(), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_map_bad_magic(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"JUNKJUNKJUNK")
    with pytest.raises(FileFormatError, match="magic"):
        load_map(path)
