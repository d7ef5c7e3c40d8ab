"""Exception types shared across the package."""


class GeometryError(ValueError):
    """A point or ball lies outside the region an operation is defined on."""


class GridRangeError(ValueError):
    """A query point falls outside the lattice extents."""


class InvalidExponentError(ValueError):
    """The exponent function violates 1 < p_min <= p(x) <= p_max < inf."""


class ConfigurationError(ValueError):
    """A run configuration or solver setup is invalid."""


class ParameterError(ValueError):
    """An analysis parameter is outside its admissible range."""


class GameLogicError(RuntimeError):
    """The game engine was driven into an impossible state."""


class EstimationError(RuntimeError):
    """A Monte Carlo estimate could not be formed."""
