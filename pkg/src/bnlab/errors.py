"""Exception types shared across the package."""


class BNLabError(Exception):
    pass


class ConfigurationError(BNLabError, ValueError):
    """Invalid dimension, domain or run configuration."""


class CapabilityError(BNLabError):
    """Request outside what a provider implements (e.g. ball eigen-ladder sector)."""


class ProviderError(BNLabError):
    """A domain provider cannot reach the requested accuracy."""

    def __init__(self, message, achieved_bound=None):
        super().__init__(message)
        self.achieved_bound = achieved_bound


class SingularityError(BNLabError, ValueError):
    pass


class NumericalError(BNLabError):
    """Quadrature, root-finding or optimisation failure."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateSiteError(NumericalError):
    pass


class SolverError(NumericalError):
    pass


class BranchNotFoundError(NumericalError):
    pass


class RangeError(NumericalError):
    """Parameters leave the floating-point usable window."""


class CapacityError(BNLabError, ValueError):
    """More bubbles requested than the eigenfunction combination can host."""
