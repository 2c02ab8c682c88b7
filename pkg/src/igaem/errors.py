"""Exception types shared across the package."""


class IgaError(Exception):
    """Base class for all library errors."""


class ValidationError(IgaError):
    """Invalid user input or inconsistent data."""


class SolverError(IgaError):
    """A linear or eigenvalue solve failed or is ill-posed."""


class SingularMappingError(SolverError):
    """Geometry mapping is (numerically) singular at an evaluation point."""


class PointLocationError(IgaError):
    """A physical point could not be located inside any patch."""
