"""Incremental adaptive-resolution surface reconstruction from posed range
scans, built on plane-carrying triangle meshes with free-space carving and
curvature-driven resolution control."""

from .config import RETENTION_ALL, Config
from .engine import (Action, IntegrationOutcome, TimingRecord, integrate_point,
                     process_scan)
from .errors import (CollinearInput, DegeneratePlane, DuplicatePayload,
                     EdgeFaceOverflow, EmptyMesh, FileFormatError, GrazingRay,
                     NonUnitQuaternion, PlanarMapError, UnknownElement,
                     UnknownLeaf, ZeroLengthRay)
from .evaluate import (EvalReport, distance_stats, evaluate_points,
                       precision_recall_f, sample_mesh)
from .geometry import (Aabb, PlaneFrame, Ray, Triangle, aabb_of_sphere,
                       aabb_surface_area, aabb_union, make_plane_frame,
                       point_in_triangle_2d, ray_aabb_intersect,
                       ray_from_measurement, ray_triangle_intersect,
                       segment_intersect_2d)
from .bvh import BOUNDARY_VERTEX, FACE, DynamicBvh, LeafPayload
from .mesh import MapState, PlanarMesh, closest, is_seed, largest
from .planes import (Plane, PlaneStats, PositionClass, RangeModel, RelPos,
                     SensorNoiseModel, classify, expected_range, fit_normal,
                     param_uncertainty, range_sigma, update_stats)
from .pipeline import combine_simplified, reconstruct_frames, run_pipeline
from .simplify import (SimplifiedMesh, Triangulation2D, delaunay_2d,
                       restore_concavity, sample_vertices, simplify_map)
from .simulate import (Pose, ScanFrame, Scene, SensorModel,
                       default_trajectory, ground_truth_cloud, make_scene,
                       simulate_scan, simulate_sequence)

__version__ = "0.1.0"
