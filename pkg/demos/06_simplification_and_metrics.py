"""Output-time simplification and the evaluation metrics.

A densely tessellated wall collapses to a handful of vertices: vertices are
sampled greedily in ascending radius order, re-triangulated (Delaunay), and
concave outlines restored by dropping triangles outside the original faces.

Run:  python demos/06_simplification_and_metrics.py
"""
import numpy as np

from planarmap import Config, MapState
from planarmap import sample_vertices, simplify_map
from planarmap import distance_stats, precision_recall_f, sample_mesh
from planarmap.geometry import make_plane_frame
from planarmap.planes import Plane, PlaneStats

# ---------------------------------------------------------------------------
# Hand-build an L-shaped wall tessellated at 0.25 m with uniform 1 m radii.
state = MapState(Config())
pm = state.new_planar_mesh()
pm.plane = Plane(np.array([2.0, 2.0, 0.0]), np.array([0.0, 0.0, 1.0]))
pm.frame = make_plane_frame(pm.plane.p, pm.plane.normal)
pm.stats = PlaneStats(5000, pm.plane.p.copy(), np.diag([1.0, 1.0, 1e-6]))

step = 0.25
vids = {}
for j in range(17):
    for i in range(17):
        x, y = i * step, j * step
        if x > 2.0 and y > 2.0:
            continue  # the notch of the L
        vids[i, j] = state.add_vertex(pm, [x, y, 0.0])
for (i, j), vid in list(vids.items()):
    if (i + 1, j) in vids and (i + 1, j + 1) in vids and (i, j + 1) in vids:
        state.add_face(pm, vids[i, j], vids[i + 1, j], vids[i + 1, j + 1])
        state.add_face(pm, vids[i, j], vids[i + 1, j + 1], vids[i, j + 1])
for vid in pm.vertices:
    state.set_vertex_radius(pm, vid, 1.0)

print(f"original: {len(pm.vertices)} vertices, {len(pm.faces)} faces, "
      f"area {pm.total_area:.2f} m^2")

kept = sample_vertices(pm)
print(f"radius-ordered greedy sampling keeps {len(kept)} vertices")

parts = simplify_map(state)
sm = parts[0]
area = 0.0
for f in sm.faces:
    a, b, c = sm.pos2[f]
    area += 0.5 * abs((b[0] - a[0]) * (c[1] - a[1])
                      - (b[1] - a[1]) * (c[0] - a[0]))
print(f"simplified: {len(sm.pos3)} vertices, {len(sm.faces)} faces, "
      f"area {area:.2f} m^2 (concave notch preserved, "
      f"{100 * (1 - len(sm.pos3) / len(pm.vertices)):.0f}% vertex reduction)")

# ---------------------------------------------------------------------------
# Metrics: sample both tessellations and compare as point clouds.
dense = sample_mesh(np.array([pm.P3[pm.vertices[v].row] for v in pm.vertices]),
                    np.array([[list(pm.vertices).index(f.v0),
                               list(pm.vertices).index(f.v1),
                               list(pm.vertices).index(f.v2)]
                              for f in pm.faces.values()]), 20000, seed=0)
simple = sample_mesh(sm.pos3, sm.faces, 20000, seed=1)
mean, std = distance_stats(simple, dense)
p, r, f1 = precision_recall_f(simple, dense, tau=0.1)
print(f"simplified vs dense surface: mean distance {mean*1000:.2f} mm, "
      f"precision {p:.3f}, recall {r:.3f}, F {f1:.3f}")
