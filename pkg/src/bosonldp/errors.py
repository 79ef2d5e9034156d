"""Exception types raised across the package."""


class BosonLDPError(Exception):
    """Base class for all package errors."""


class GridMismatchError(BosonLDPError, ValueError):
    """Two fields or operators live on different grids."""


class ParameterError(BosonLDPError, ValueError):
    """An argument is outside the supported range."""


class NumericalConsistencyError(BosonLDPError, RuntimeError):
    """A quantity that must be real / Hermitian / normalized drifted."""


class PropagationError(BosonLDPError, RuntimeError):
    """A time-stepping invariant was violated during a run."""


class SolverDriftError(PropagationError):
    """The fluctuation field lost orthogonality to the condensate."""


class DomainError(BosonLDPError, ValueError):
    """A requested point lies outside the domain covered by sampled data."""


class DegenerateObservableError(BosonLDPError, ValueError):
    """The observable has zero fluctuation variance."""


class BasisSizeError(BosonLDPError, ValueError):
    """A Fock sector is larger than the desk-scale cap."""


class ConfigError(BosonLDPError, ValueError):
    """An experiment configuration is malformed."""


class DependencyError(BosonLDPError, RuntimeError):
    """A required upstream artifact is missing."""
