"""Exponential smoothing of bar channels and up/down label construction.

Smoothing runs independently over the open/high/low/close/volume channels
before indicator extraction; labels always read RAW closes so they reflect
actual market movement regardless of the smoothing weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .market_data import Bar, BarSeries


@dataclass(frozen=True)
class SmoothingParams:
    """Exponential smoothing weight for the newest observation, in (0, 1]."""

    alpha: float = 0.2

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class LabelSpec:
    """Prediction horizon in trading days."""

    horizon: int = 60

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")


def exponential_smooth(values, params: SmoothingParams) -> np.ndarray:
    """out[0] = values[0]; out[t] = alpha*values[t] + (1-alpha)*out[t-1].

    Newer observations get weight alpha, older ones geometrically less.
    Output stays within [min(values), max(values)].
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("cannot smooth an empty sequence")
    if not np.all(np.isfinite(x)):
        raise ValidationError("cannot smooth non-finite values")
    alpha = params.alpha
    out = np.empty_like(x)
    out[0] = x[0]
    for t in range(1, x.size):
        out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1]
    return out


def smooth_series(series: BarSeries, params: SmoothingParams) -> BarSeries:
    """Smooth each OHLCV channel of a series with the same alpha.

    The recurrence is monotone, so the per-bar orderings (low <= open/close
    <= high) survive and the result is a valid BarSeries.
    """
    channels = {
        name: exponential_smooth(series.channel(name), params)
        for name in ("open", "high", "low", "close", "volume")
    }
    bars = tuple(
        Bar(
            date=b.date,
            open=float(channels["open"][i]),
            high=float(channels["high"][i]),
            low=float(channels["low"][i]),
            close=float(channels["close"][i]),
            volume=float(channels["volume"][i]),
        )
        for i, b in enumerate(series.bars)
    )
    return BarSeries(symbol=series.symbol, bars=bars)


def make_labels(series: BarSeries, spec: LabelSpec) -> np.ndarray:
    """0/1 direction labels against the raw close `horizon` days ahead.

    label[t] = 1 iff close[t + horizon] > close[t] (an unchanged close is
    "not up"). Only the first len(series) - horizon days carry a label.
    """
    n = len(series)
    h = spec.horizon
    if n <= h:
        raise ValidationError(
            f"series of length {n} is too short for horizon {h}"
        )
    closes = np.asarray(series.channel("close"), dtype=np.float64)
    labels = (closes[h:] > closes[:-h]).astype(np.int64)
    assert labels.size == n - h
    return labels


def smoothing_weight_profile(alpha: float, k: int) -> list[float]:
    """Weights the smoother puts on the last k observations (diagnostic)."""
    if not 0 < alpha <= 1:
        raise ValidationError(f"alpha must be in (0, 1], got {alpha}")
    return [alpha * math.pow(1.0 - alpha, i) for i in range(k)]
