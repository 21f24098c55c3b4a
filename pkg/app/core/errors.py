"""Exception types raised across the engine."""


class ConfigError(ValueError):
    """Invalid run or model configuration."""


class DataError(ValueError):
    """Input data that violates the dataset contract."""


class CheckpointError(RuntimeError):
    """A checkpoint that cannot be read or does not match the model."""


class TrainingDivergedError(RuntimeError):
    """The training loss stopped being finite."""


__all__ = ["ConfigError", "DataError", "CheckpointError", "TrainingDivergedError"]
