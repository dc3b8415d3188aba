"""Shared exception taxonomy.

The CLI maps ConfigError (and bad usage) to exit code 1 and every other
ArahateError raised while a stage is running to exit code 2.
"""


class ArahateError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(ArahateError):
    """Invalid configuration, registry entry or CLI input."""
