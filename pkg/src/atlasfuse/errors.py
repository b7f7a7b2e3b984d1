"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration file or value (CLI exit code 1)."""


class DataError(Exception):
    """Invalid or unreadable recording data, or a failed pipeline stage (CLI exit code 2)."""
