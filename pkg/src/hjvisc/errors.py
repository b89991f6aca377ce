"""Exception hierarchy shared by all modules."""


class HJViscError(Exception):
    """Base class for library errors."""


class ConfigurationError(HJViscError, ValueError):
    """Malformed domain, scenario or parameter."""


class ResourceError(HJViscError):
    """Requested grid or table is larger than the configured cap."""


class AssumptionError(HJViscError):
    """A structural hypothesis (H(x,0)=0, containment bound, ...) fails on the grid."""


class CertificationError(HJViscError):
    """Containment certification could not be completed."""


class EvaluationError(HJViscError):
    """A Hamiltonian evaluation returned non-finite values."""


class ConstructionError(HJViscError):
    """A derived object (psi table, ...) cannot be built from the inputs."""


class SpliceError(HJViscError):
    """Two curves do not meet at the splice time."""

    def __init__(self, gap: float):
        super().__init__(f"curves do not meet at the splice point (gap {gap:.3g})")
        self.gap = gap


class CapabilityError(HJViscError):
    """The Hamiltonian lacks a feature the operation needs (e.g. a p-gradient)."""


class IntegrationError(HJViscError):
    """A computed trajectory fails its quality check."""

    def __init__(self, residual: float, threshold: float):
        super().__init__(
            f"Young residual {residual:.3e} exceeds threshold {threshold:.3e}")
        self.residual = residual
        self.threshold = threshold


class ConvergenceError(HJViscError):
    """Fixed-point iteration stopped at max_iters above tolerance."""

    def __init__(self, last_update: float, iterations: int):
        super().__init__(
            f"no convergence after {iterations} sweeps (last update {last_update:.3e})")
        self.last_update = last_update
        self.iterations = iterations


class SchemeError(HJViscError):
    """Every velocity in the stencil is inadmissible at some node."""


class DomainError(ConfigurationError):
    """A test function's boundedness does not fit the requested operator."""
