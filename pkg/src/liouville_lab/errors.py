"""Exception hierarchy shared by all liouville_lab modules.

Every failure mode that callers are expected to catch has its own class;
anything else is a plain bug and surfaces as a built-in exception.
"""


class LiouvilleLabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LiouvilleLabError):
    """Malformed run configuration (bad key, unparsable value, missing seed)."""


class CoefficientEvaluationError(LiouvilleLabError):
    """A drift/diffusion callable returned a non-finite or mis-shaped value."""


class CatalogueError(LiouvilleLabError):
    """Unknown catalogue field name or invalid parameter vector."""


class ExpressionError(CatalogueError):
    """A coefficient expression failed to parse or uses a forbidden construct."""


class EllipticityViolation(LiouvilleLabError):
    """A sampled diffusion matrix was not positive definite."""


class EigenFailure(LiouvilleLabError):
    """Jacobi sweeps did not reduce the off-diagonal mass within the limit."""


class ShiftTooLarge(LiouvilleLabError):
    """Requested shift mu is not strictly below the smallest eigenvalue."""


class ConstantMismatch(LiouvilleLabError):
    """Modulus profile and criterion constants disagree on the q-weight."""


class NoAdmissibleConstants(LiouvilleLabError):
    """No (mu, s0, s1) triple on the scan grid satisfies the margin condition."""


class QuadratureError(LiouvilleLabError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class BoundaryUndecided(LiouvilleLabError):
    """Tail classification landed inside the undecidable window."""


class SimulationBlowUp(LiouvilleLabError):
    """A simulated path became non-finite or violated the growth guard.

    Carries the path index and simulation time at which the blow-up was
    detected.
    """

    def __init__(self, message, path_index=None, time=None):
        super().__init__(message)
        self.path_index = path_index
        self.time = time


class NotApplicable(LiouvilleLabError):
    """The requested diagnostic is undefined for this profile (e.g. an
    oscillation ratio of an unbounded harmonic function)."""
