class ConfigError(ValueError):
    """Invalid configuration value, range, or key."""


class ShapeError(ValueError):
    """Array shapes that must agree do not."""


class InfeasibleTargetError(ValueError):
    """CTC target cannot be aligned to the given number of frames."""
