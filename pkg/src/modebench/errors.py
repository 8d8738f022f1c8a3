"""Exception types shared across the package."""


class BracketError(ValueError):
    """The root-finding bracket does not enclose a sign change."""


class DegenerateWeightsError(ValueError):
    """All importance weights vanished (every log weight is -inf)."""


class ConfigError(ValueError):
    """A sweep configuration file is malformed or contains unknown keys."""
