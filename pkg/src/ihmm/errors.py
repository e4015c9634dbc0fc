"""Shared exception types.

Parameter validation raises plain ValueError; these classes cover failures
that callers (in particular the CLI) need to tell apart.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class DataError(ValueError):
    """Input data cannot be ingested or does not match the model."""


class NumericalError(RuntimeError):
    """A sampler reached a numerically impossible state."""
