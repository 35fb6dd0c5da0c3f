"""Shared helpers for building hand-constructed maps in tests."""
import numpy as np
import pytest

from planarmap.config import Config
from planarmap.geometry import make_plane_frame
from planarmap.mesh import MapState, PlanarMesh
from planarmap.planes import Plane, PlaneStats


def planar_with_plane(map_state: MapState, origin=(0, 0, 0), normal=(0, 0, 1),
                      n_stats=10, spread=1.0, thickness=0.0) -> PlanarMesh:
    """A planar-mesh with a defined plane and healthy statistics."""
    pm = map_state.new_planar_mesh()
    origin = np.asarray(origin, float)
    normal = np.asarray(normal, float)
    normal = normal / np.linalg.norm(normal)
    u = np.cross(normal, [1.0, 0.13, 0.27])
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    scatter = (spread ** 2 * (np.outer(u, u) + np.outer(v, v))
               + thickness ** 2 * np.outer(normal, normal))
    pm.plane = Plane(origin.copy(), normal)
    pm.frame = make_plane_frame(origin, normal)
    pm.stats = PlaneStats(n_stats, origin.copy(), scatter)
    return pm


def add_quad(map_state: MapState, pm: PlanarMesh, corners) -> list[int]:
    """Two-triangle quad from four 3D corners (in winding order)."""
    vids = [map_state.add_vertex(pm, c) for c in corners]
    map_state.add_face(pm, vids[0], vids[1], vids[2])
    map_state.add_face(pm, vids[0], vids[2], vids[3])
    return vids


@pytest.fixture
def default_config():
    return Config()
