"""Stock direction prediction from OHLCV technicals and news sentiment.

The pipeline: fetch daily bars, exponentially smooth them, compute 15
technical indicator columns, score and aggregate news sentiment into 4
daily features, assemble a labeled feature matrix, prune correlated
columns, then train and evaluate a seeded from-scratch random forest
against a technical-only baseline.
"""

__version__ = "0.1.0"

from .errors import ConfigError, NetworkError, ProviderError, ValidationError

__all__ = [
    "ConfigError",
    "NetworkError",
    "ProviderError",
    "ValidationError",
    "__version__",
]
