"""Exception taxonomy for the toolkit.

The CLI maps these onto its exit codes: configuration/input problems exit 2,
numerical failures exit 3, io problems exit 4.
"""


class FlipmonError(Exception):
    """Base class for all toolkit errors."""


# --- geometry ---

class GeometryError(FlipmonError):
    """Invalid or inconsistent device geometry."""


class OverlapError(GeometryError):
    """Solids of different conductor nets intersect or touch (zero gap)."""


class DanglingReference(GeometryError):
    """A solid references an unknown material or net, or a net has no solids."""


class DegenerateSolid(GeometryError):
    """A solid has zero or negative extent along some axis."""


# --- meshing / solving ---

class MeshBudgetExceeded(FlipmonError):
    """Grid construction would exceed the configured cell budget."""


class SolverError(FlipmonError):
    """Base class for field-solver failures."""


class NoConvergence(SolverError):
    """Iterative solve did not reach the requested residual."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class NetNotFound(FlipmonError):
    """Requested conductor net does not exist."""


class PlaneOutsideDomain(FlipmonError):
    """Requested slice plane does not intersect the simulation domain."""


# --- participation ---

class RegionEmpty(FlipmonError):
    """A bulk region contains no cells in this geometry."""


class EmptySurfaceSet(FlipmonError):
    """An interface integral was requested over an empty set of faces."""


# --- transmon ---

class MissingNet(FlipmonError):
    """Capacitance matrix lacks a required pad or ground net."""


class NonPositiveCSigma(FlipmonError):
    """Total shunt capacitance came out non-positive."""


class CutoffTooSmall(FlipmonError):
    """Charge-basis cutoff hit its hard cap before boundary support vanished."""


class NoRoot(FlipmonError):
    """Spectrum inversion failed (inputs outside the transmon regime)."""


class Ambiguous(FlipmonError):
    """Spectrum inversion landed at EJ/EC < 5 where the map is unreliable."""


class NonPositive(FlipmonError):
    """A strictly positive physical quantity was given as <= 0."""


# --- loss ---

class NegativeTangent(FlipmonError):
    """Extracted loss tangent is negative (background rate exceeds measured)."""


class SingularSystem(FlipmonError):
    """Two-design decomposition has equal participations (singular 2x2)."""


class StraddlePoint(FlipmonError):
    """Dispersive formula evaluated at Delta ~ 0 or Delta ~ eta."""


# --- cli ---

class ConfigError(FlipmonError):
    """Malformed run configuration or command-line input."""


class OutputExists(FlipmonError):
    """Output file exists and --force was not given."""
