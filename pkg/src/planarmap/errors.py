"""Exception types raised across the library."""


class PlanarMapError(Exception):
    """Base class for all library-specific errors."""


class ZeroLengthRay(PlanarMapError):
    """Measurement endpoint coincides with the sensor origin."""


class GrazingRay(PlanarMapError):
    """Ray is too close to parallel with a plane for a range prediction."""


class DegeneratePlane(PlanarMapError):
    """Scatter matrix has no isolated smallest eigenvalue; normal undefined."""


class DuplicatePayload(PlanarMapError):
    """Payload already registered in the BVH."""


class UnknownLeaf(PlanarMapError):
    """Leaf id not present in the BVH."""


class UnknownElement(PlanarMapError):
    """Vertex/edge/face id not present in the planar-mesh."""


class EdgeFaceOverflow(PlanarMapError):
    """An edge would become adjacent to a third face."""


class CollinearInput(PlanarMapError):
    """2D triangulation input has no interior (all points collinear)."""


class EmptyMesh(PlanarMapError):
    """Mesh has no faces to sample."""


class NonUnitQuaternion(PlanarMapError):
    """Pose quaternion norm too far from 1 to renormalize safely."""


class FileFormatError(PlanarMapError):
    """Malformed input file; message carries the offending line number."""
