"""Exception types shared across the pipeline.

The CLI maps these onto stable exit codes: ValidationError/ConfigError -> 2,
NetworkError/ProviderError -> 3.
"""


class ValidationError(ValueError):
    """Input data violates a documented invariant (bad row, bad shape, bad value)."""


class ConfigError(ValueError):
    """Configuration file or override is malformed or out of range."""


class NetworkError(RuntimeError):
    """HTTP transport failed and no fallback was available."""


class ProviderError(RuntimeError):
    """A data or sentiment provider returned an unusable response."""
