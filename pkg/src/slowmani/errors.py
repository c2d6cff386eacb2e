"""Exception types shared across the package."""


class SlowmaniError(Exception):
    """Base class for all package-specific errors."""


class EvaluationError(SlowmaniError):
    """A model function returned a non-finite or out-of-domain value."""


class LinAlgError(SlowmaniError):
    """A linear-algebra step failed (singular solve, complex residue, ...)."""


class DefectiveJacobian(LinAlgError):
    """Jacobian eigenvector matrix is numerically defective.

    The eigenvector-based routes assume a diagonalizable Jacobian; use the
    flow-map oracle route instead.
    """


class AmbiguousSlowDirection(LinAlgError):
    """Near-zero eigenvalues cannot be uniquely split into slow and fast."""


class SingularFrame(SlowmaniError):
    """1-D local frame is transversality-degenerate (v . gamma' ~ 0)."""


class UnstableManifold(SlowmaniError):
    """Manifold is not attracting at the requested point (lambda >= 0)."""


class NoConvergence(SlowmaniError):
    """Flow-map integration did not settle onto the manifold before t_max."""


class StiffnessError(SlowmaniError):
    """Adaptive ODE step size underflowed."""


class BlowUpError(SlowmaniError):
    """A stochastic path left the finite domain."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class ConfigError(SlowmaniError):
    """Invalid model definition or run configuration."""


class DomainError(SlowmaniError):
    """A point lies outside the domain required by the operation."""
