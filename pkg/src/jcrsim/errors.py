"""Exception types.  ``ConfigError`` maps to CLI exit code 2, ``SimulationError`` to 3."""


class ConfigError(ValueError):
    """Invalid parameters or a violated precondition."""


class SimulationError(RuntimeError):
    """A run that started but could not complete (e.g. lost frame sync)."""
