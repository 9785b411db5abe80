"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration (profiles, tables, specs)."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class SizingError(ValueError):
    """Input series too short (or too long) for the requested operation."""


class ResourceError(RuntimeError):
    """Requested allocation exceeds the configured memory budget."""


class TrainingError(RuntimeError):
    """Non-finite values encountered while computing gradients or training."""
