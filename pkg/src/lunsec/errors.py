"""Exception taxonomy.

Two families matter for callers (and for the CLI exit-code map): domain
errors (the request lies outside the region where the operation is
defined) and precision errors (the request is well posed but the numerics
could not meet the advertised tolerance).
"""


class LunsecError(Exception):
    """Base class for all package errors."""


class DomainError(LunsecError):
    """Input outside the operation's domain of validity (CLI exit 1)."""


class ChartSingularError(DomainError):
    """State too close to a singularity of the orbital-element chart
    (circular, horizontal or rectilinear orbit)."""


class DegenerateCaseError(DomainError):
    """Excluded degenerate configuration (e.g. C = G2, or vanishing total
    angular momentum)."""


class SeparatrixProximityError(DomainError):
    """Requested level too close to a separatrix for reliable tracing."""


class ConsistencyError(DomainError):
    """Internal cross-check failed (e.g. no admissible cubic root for a
    region that should contain one); signals a misclassification."""


class PrecisionError(LunsecError):
    """Numerics could not reach the advertised tolerance (CLI exit 2)."""


class SolverError(PrecisionError):
    """Iterative solver failed to converge within its iteration cap."""


class TracingError(PrecisionError):
    """Orbit tracing / period extraction failed to close."""
