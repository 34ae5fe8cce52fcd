"""Exception types shared across the package."""


class DominofieldError(Exception):
    """Base class for all package-specific errors."""


class InfeasibleGeometry(DominofieldError):
    """The corner condition cannot be satisfied at the requested lattice scale."""


class UnbalancedRegion(DominofieldError):
    """White and black square counts differ after marking."""


class RegionTooLarge(DominofieldError):
    """Region exceeds the exhaustive-enumeration guard."""


class InvalidEdge(DominofieldError):
    """A requested edge does not join adjacent white/black squares."""


class Untileable(DominofieldError):
    """The region admits no domino tiling."""


class InconsistentTiling(DominofieldError):
    """Height increments do not close up around a face (corrupted tiling)."""


class MissingHarmonicData(DominofieldError):
    """Hole-height correction requested without the harmonic measures."""


class MeshTooCoarse(DominofieldError):
    """Mesh does not resolve the domain gaps."""


class SolverDiverged(DominofieldError):
    """Linear solve failed to produce a usable solution."""


class SourceTooCloseToBoundary(DominofieldError):
    """Green's function source point violates the boundary clearance."""


class MismatchedMeshes(DominofieldError):
    """Fields expected on a common mesh have different grids."""


class PathLeavesDomain(DominofieldError):
    """Integration path exits the domain interior."""


class SingularPeriodMatrix(DominofieldError):
    """A-period matrix is numerically singular."""


class TruncationInsufficient(DominofieldError):
    """Theta lattice-sum tail bound exceeds the target tolerance."""


class NonRealShift(DominofieldError):
    """Imaginary part of the shift vector exceeds tolerance."""


class CoincidentPoints(DominofieldError):
    """Kernel evaluation requested at coincident surface points."""


class ThetaNearZero(DominofieldError):
    """log-theta derivative requested where theta is near a zero."""


class PathsIntersect(DominofieldError):
    """Contour-integral paths are not disjoint."""


class InsufficientSamples(DominofieldError):
    """Statistical test invoked with too few samples."""


class ConfigError(DominofieldError):
    """Experiment configuration failed validation."""
