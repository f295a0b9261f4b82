class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class ConfigParseError(ConfigError):
    pass


class ConfigFileNotFound(ConfigError, FileNotFoundError):
    pass


class SimulationInvariantError(RuntimeError):
    """The simulator reached a state that its invariants forbid."""


class TrainingError(RuntimeError):
    pass
