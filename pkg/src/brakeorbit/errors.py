"""Exception hierarchy for numerical failures and misuse."""


class BrakeOrbitError(Exception):
    """Base class for all package errors."""


class DomainError(BrakeOrbitError):
    """Point outside the declared domain box or the regular band."""


class ProjectionError(BrakeOrbitError):
    """Newton projection onto the energy shell did not converge."""


class EscapeError(BrakeOrbitError):
    """Trajectory left the domain box."""


class StiffnessError(BrakeOrbitError):
    """Integrator step size underflow."""


class NoBrakeError(BrakeOrbitError):
    """No rebrake event found before t_max (not an integrator failure)."""


class InvalidGeodesicError(BrakeOrbitError):
    """Geodesic touches the boundary at an interior parameter."""


class HandoffError(BrakeOrbitError):
    """Arc-parameter integration got too close to the degenerate boundary;
    use the time-parameterized lift instead."""


class DegenerateCurveError(BrakeOrbitError):
    """Constant curve where a nonconstant one is required."""


class TruncationError(BrakeOrbitError):
    """Requested arc length not available before rebrake."""


class StallError(BrakeOrbitError):
    """Optimizer stalled before reaching the gradient tolerance."""


class MissError(BrakeOrbitError):
    """No shooting start reached the target within tolerance."""


class QuadratureError(BrakeOrbitError):
    """Non-finite quadrature result (weight mishandled)."""


class SamplingError(BrakeOrbitError):
    """Not enough samples/nodes for the requested fit."""


class UsageError(BrakeOrbitError):
    """Bad CLI arguments or malformed input files."""
