"""Exception types shared across the package."""


class ConfigError(ValueError):
    """An experiment or model configuration value is invalid."""


class ParseError(ValueError):
    """An input file could not be parsed; the message names the offending line."""


class EmptyCorrelationError(LookupError):
    """A filtering operation was asked to pick from an empty correlation set."""


class GradientError(ArithmeticError):
    """An optimizer step received non-finite gradients."""
