class QShapError(Exception):
    """Base class for library errors."""


class ConfigError(QShapError, ValueError):
    """Malformed circuit, experiment or target configuration."""


class ResourceCapError(QShapError):
    """A computation would exceed a configured resource cap."""


class NumericError(QShapError, ArithmeticError):
    """A numerical procedure failed (singular matrix, non-finite input)."""


class MitigationError(NumericError):
    pass


class RoutingError(QShapError):
    """The coupling graph cannot connect the requested qubits."""
