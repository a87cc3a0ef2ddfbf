class SimulationError(Exception):
    """Base class for simulator failures."""


class ConfigurationError(SimulationError, ValueError):
    """Missing profiles or files, or inputs that violate their schema."""
