"""Exception types shared across the package."""


class GradcommError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(GradcommError, ValueError):
    """An operator, model, or selection parameter is out of its valid range."""


class ConfigError(GradcommError, ValueError):
    """A config file or CLI input could not be parsed or validated."""


class DecodeError(GradcommError, ValueError):
    """A compressed message payload is malformed and cannot be decoded."""


class DegenerateDesignError(GradcommError, ValueError):
    """The least-squares design matrix is singular (message sizes do not vary)."""


class DegenerateModelError(ParameterError):
    """The time model is degenerate (both coefficients zero)."""


class DivergenceError(GradcommError, RuntimeError):
    """The simulated objective exceeded the divergence guard."""


class NetworkError(GradcommError, OSError):
    """A probe or server operation failed at the socket level."""
