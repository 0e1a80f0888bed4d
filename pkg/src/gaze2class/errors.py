"""Exception types shared across the package; the CLI maps them to exit codes."""


class GazeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GazeError):
    """Invalid configuration, spec, or CLI usage (exit code 2)."""


class DataError(GazeError):
    """Malformed, out-of-range, missing, or empty input data (exit code 3)."""


class TrainingError(GazeError):
    """Numeric failure during optimization, e.g. divergence (exit code 4)."""
