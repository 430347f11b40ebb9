"""Exception types mapped to CLI exit codes (2 = bad input, 3 = bad checkpoint)."""


class InputError(Exception):
    """Bad user input: unknown prompt, missing file, malformed config, shape mismatch."""


class ConfigError(InputError):
    """Invalid configuration value (e.g. unsupported degradation kind)."""


class CheckpointError(Exception):
    """Missing, corrupt, or incompatible checkpoint."""


class TrainingError(Exception):
    """Training aborted (e.g. non-finite loss); details point at the diagnostic dump."""
