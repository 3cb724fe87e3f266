"""The 15 technical indicator columns computed from a (smoothed) bar series.

Each indicator family is reduced to a single scale-free scalar per day so
that multiplying every price by k > 0 leaves the column unchanged and the
feature count stays literal. Reductions:

  ma          (close - SMA_10) / SMA_10
  macd        MACD histogram / close, EMAs seeded with the SMA of their
              first period (12/26/9)
  rsi         Wilder RSI(14); first averages are simple means of the first
              14 gains/losses; avg loss 0 -> 100, else avg gain 0 -> 0
  stochastic  %D = SMA_3 of %K(14); %K = 100*(close-LL)/(HH-LL), 50 when
              the range is degenerate
  williams_r  -100*(HH_14-close)/(HH_14-LL_14); degenerate -> -50
  bollinger   %B(20, 2): (close - (SMA - 2*sigma)) / (4*sigma) with
              population sigma; sigma 0 -> 0.5
  obv         10-day OBV change / 10-day volume sum; unchanged close adds
              0; zero volume sum -> 0
  adl         10-day ADL change / 10-day volume sum; CLV 0 when high == low
  aroon       AroonUp - AroonDown over 25 days (window of the prior 25
              days plus today); ties use the most recent extreme
  atr         Wilder ATR(14) / close; TR = max(h-l, |h-pc|, |l-pc|)
  ichimoku    (close - cloud midpoint) / close with 9/26/52 periods; the
              cloud value shown at t was computed from data ending at
              t - 26, and each midpoint window spans the prior `period`
              days plus its own day
  psar        (close - SAR) / close; acceleration 0.02 start/step, 0.2 max
  fibonacci   retracement position (HH_60 - close)/(HH_60 - LL_60) in
              [0, 1]; degenerate -> 0.5
  cmf         Chaikin money flow over 20 days; zero volume sum -> 0
  adx         Wilder ADX(14); DX = 0 when +DI + -DI == 0

Every column reports its warm-up (count of leading days with no defined
value); undefined values are never emitted. Values at day t depend only on
bars up to t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError
from .market_data import BarSeries

KIND_ORDER = [
    "ma",
    "macd",
    "rsi",
    "stochastic",
    "williams_r",
    "bollinger",
    "obv",
    "adl",
    "aroon",
    "atr",
    "ichimoku",
    "psar",
    "fibonacci",
    "cmf",
    "adx",
]

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "ma": {"period": 10},
    "macd": {"fast": 12, "slow": 26, "signal": 9},
    "rsi": {"period": 14},
    "stochastic": {"k_period": 14, "d_period": 3},
    "williams_r": {"period": 14},
    "bollinger": {"period": 20, "num_std": 2.0},
    "obv": {"period": 10},
    "adl": {"period": 10},
    "aroon": {"period": 25},
    "atr": {"period": 14},
    "ichimoku": {"tenkan": 9, "kijun": 26, "senkou": 52, "displacement": 26},
    "psar": {"start": 0.02, "step": 0.02, "max": 0.2},
    "fibonacci": {"period": 60},
    "cmf": {"period": 20},
    "adx": {"period": 14},
}


@dataclass
class IndicatorSpec:
    """One indicator kind plus parameter overrides (defaults fill the rest)."""

    kind: str
    params: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.kind

    def resolved(self) -> dict[str, float]:
        if self.kind not in DEFAULT_PARAMS:
            raise ValidationError(f"unknown indicator kind {self.kind!r}")
        merged = dict(DEFAULT_PARAMS[self.kind])
        for key, value in self.params.items():
            if key not in merged:
                raise ValidationError(f"{self.kind}: unknown parameter {key!r}")
            merged[key] = value
        _validate_params(self.kind, merged)
        return merged


@dataclass
class IndicatorColumn:
    """A named daily column defined from index `warm_up` onward."""

    name: str
    warm_up: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.warm_up < 0:
            raise ValidationError(f"{self.name}: warm_up must be >= 0")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError(f"{self.name}: produced non-finite values")


def default_specs() -> list[IndicatorSpec]:
    """All 15 kinds with default parameters, in the fixed column order."""
    return [IndicatorSpec(kind) for kind in KIND_ORDER]


def compute_indicator(series: BarSeries, spec: IndicatorSpec) -> IndicatorColumn:
    """Evaluate one indicator column over the whole series."""
    params = spec.resolved()
    fn = _KIND_FUNCS[spec.kind]
    warm_up = _warm_up(spec.kind, params)
    if len(series) <= warm_up:
        raise ValidationError(
            f"{spec.kind}: series of length {len(series)} is within the "
            f"warm-up of {warm_up} days"
        )
    o = np.asarray(series.channel("open"), dtype=np.float64)
    h = np.asarray(series.channel("high"), dtype=np.float64)
    l = np.asarray(series.channel("low"), dtype=np.float64)
    c = np.asarray(series.channel("close"), dtype=np.float64)
    v = np.asarray(series.channel("volume"), dtype=np.float64)
    values = fn(o, h, l, c, v, params)
    assert values.size == len(series) - warm_up
    return IndicatorColumn(name=spec.name, warm_up=warm_up, values=values)


def compute_all(series: BarSeries, specs: list[IndicatorSpec]) -> list[IndicatorColumn]:
    """Evaluate a non-empty spec list with unique names."""
    if not specs:
        raise ValidationError("indicator spec list must not be empty")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValidationError(f"duplicate indicator names: {dupes}")
    return [compute_indicator(series, spec) for spec in specs]


def global_warm_up(columns: list[IndicatorColumn]) -> int:
    return max(col.warm_up for col in columns)


def _validate_params(kind: str, p: dict[str, float]):
    if kind == "psar":
        if not (0 < p["start"] <= p["max"]):
            raise ValidationError("psar: require 0 < start <= max")
        if p["step"] <= 0:
            raise ValidationError("psar: require step > 0")
        return
    if kind == "bollinger" and p["num_std"] <= 0:
        raise ValidationError("bollinger: require num_std > 0")
    for key, value in p.items():
        if key == "num_std":
            continue
        if key == "displacement":
            if int(value) != value or value < 0:
                raise ValidationError(f"{kind}: {key} must be an integer >= 0")
            continue
        if int(value) != value or value < 1:
            raise ValidationError(f"{kind}: {key} must be an integer >= 1")


def _warm_up(kind: str, p: dict[str, float]) -> int:
    if kind == "ma":
        return int(p["period"]) - 1
    if kind == "macd":
        return int(p["slow"]) - 1 + int(p["signal"]) - 1
    if kind == "rsi":
        return int(p["period"])
    if kind == "stochastic":
        return int(p["k_period"]) - 1 + int(p["d_period"]) - 1
    if kind == "williams_r":
        return int(p["period"]) - 1
    if kind == "bollinger":
        return int(p["period"]) - 1
    if kind in ("obv", "adl"):
        return int(p["period"])
    if kind == "aroon":
        return int(p["period"])
    if kind == "atr":
        return int(p["period"])
    if kind == "ichimoku":
        return int(p["senkou"]) + int(p["displacement"])
    if kind == "psar":
        return 1
    if kind == "fibonacci":
        return int(p["period"]) - 1
    if kind == "cmf":
        return int(p["period"]) - 1
    if kind == "adx":
        return 2 * int(p["period"]) - 1
    raise ValidationError(f"unknown indicator kind {kind!r}")


# ---------------------------------------------------------------------------
# rolling / recursive primitives


def _rolling(x: np.ndarray, width: int) -> np.ndarray:
    return sliding_window_view(x, width)


def _sma(x: np.ndarray, period: int) -> np.ndarray:
    return _rolling(x, period).mean(axis=1)


def _ema(x: np.ndarray, period: int) -> np.ndarray:
    """EMA seeded with the SMA of the first `period` values; aligned from
    index period - 1 of x."""
    k = 2.0 / (period + 1)
    out = np.empty(x.size - period + 1)
    out[0] = x[:period].mean()
    for i in range(1, out.size):
        out[i] = k * x[period - 1 + i] + (1.0 - k) * out[i - 1]
    return out


def _wilder(x: np.ndarray, period: int) -> np.ndarray:
    """Wilder smoothing (weight 1/period) seeded with the simple mean of the
    first `period` values; aligned from index period - 1 of x."""
    out = np.empty(x.size - period + 1)
    out[0] = x[:period].mean()
    for i in range(1, out.size):
        out[i] = (out[i - 1] * (period - 1) + x[period - 1 + i]) / period
    return out


def _true_range(h: np.ndarray, l: np.ndarray, c: np.ndarray) -> np.ndarray:
    """TR for days 1..n-1 (day 0 has no previous close)."""
    prev_close = c[:-1]
    return np.maximum.reduce(
        [h[1:] - l[1:], np.abs(h[1:] - prev_close), np.abs(l[1:] - prev_close)]
    )


def _clv(h: np.ndarray, l: np.ndarray, c: np.ndarray) -> np.ndarray:
    span = h - l
    with np.errstate(divide="ignore", invalid="ignore"):
        clv = ((c - l) - (h - c)) / span
    return np.where(span == 0.0, 0.0, clv)


def _safe_ratio(num: np.ndarray, den: np.ndarray, fallback: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    return np.where(den == 0.0, fallback, ratio)


# ---------------------------------------------------------------------------
# kind implementations; each returns values aligned from the kind's warm-up


def _calc_ma(o, h, l, c, v, p):
    period = int(p["period"])
    sma = _sma(c, period)
    return (c[period - 1 :] - sma) / sma


def _calc_macd(o, h, l, c, v, p):
    fast, slow, signal = int(p["fast"]), int(p["slow"]), int(p["signal"])
    if fast >= slow:
        raise ValidationError("macd: require fast < slow")
    ema_fast = _ema(c, fast)
    ema_slow = _ema(c, slow)
    line = ema_fast[slow - fast :] - ema_slow
    sig = _ema(line, signal)
    hist = line[signal - 1 :] - sig
    warm = slow - 1 + signal - 1
    return hist / c[warm:]


def _calc_rsi(o, h, l, c, v, p):
    period = int(p["period"])
    delta = np.diff(c)
    gains = np.maximum(delta, 0.0)
    losses = np.maximum(-delta, 0.0)
    avg_gain = _wilder(gains, period)
    avg_loss = _wilder(losses, period)
    with np.errstate(divide="ignore", invalid="ignore"):
        rsi = 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    return np.where(avg_loss == 0.0, 100.0, np.where(avg_gain == 0.0, 0.0, rsi))


def _stoch_k(h, l, c, k_period):
    hh = _rolling(h, k_period).max(axis=1)
    ll = _rolling(l, k_period).min(axis=1)
    return _safe_ratio(100.0 * (c[k_period - 1 :] - ll), hh - ll, 50.0)


def _calc_stochastic(o, h, l, c, v, p):
    k_period, d_period = int(p["k_period"]), int(p["d_period"])
    return _sma(_stoch_k(h, l, c, k_period), d_period)


def _calc_williams_r(o, h, l, c, v, p):
    period = int(p["period"])
    hh = _rolling(h, period).max(axis=1)
    ll = _rolling(l, period).min(axis=1)
    return _safe_ratio(-100.0 * (hh - c[period - 1 :]), hh - ll, -50.0)


def _calc_bollinger(o, h, l, c, v, p):
    period, num_std = int(p["period"]), float(p["num_std"])
    sma = _sma(c, period)
    sigma = _rolling(c, period).std(axis=1)
    lower = sma - num_std * sigma
    return _safe_ratio(c[period - 1 :] - lower, 2.0 * num_std * sigma, 0.5)


def _calc_obv(o, h, l, c, v, p):
    period = int(p["period"])
    steps = np.sign(np.diff(c)) * v[1:]
    obv = np.concatenate([[0.0], np.cumsum(steps)])
    vol_sum = _rolling(v, period).sum(axis=1)
    return _safe_ratio(obv[period:] - obv[:-period], vol_sum[1:], 0.0)


def _calc_adl(o, h, l, c, v, p):
    period = int(p["period"])
    adl = np.cumsum(_clv(h, l, c) * v)
    vol_sum = _rolling(v, period).sum(axis=1)
    return _safe_ratio(adl[period:] - adl[:-period], vol_sum[1:], 0.0)


def _calc_aroon(o, h, l, c, v, p):
    period = int(p["period"])
    # reversed windows make argmax/argmin return the most recent extreme
    days_since_high = _rolling(h, period + 1)[:, ::-1].argmax(axis=1)
    days_since_low = _rolling(l, period + 1)[:, ::-1].argmin(axis=1)
    up = 100.0 * (period - days_since_high) / period
    down = 100.0 * (period - days_since_low) / period
    return up - down


def _calc_atr(o, h, l, c, v, p):
    period = int(p["period"])
    atr = _wilder(_true_range(h, l, c), period)
    return atr / c[period:]


def _calc_ichimoku(o, h, l, c, v, p):
    tenkan, kijun = int(p["tenkan"]), int(p["kijun"])
    senkou, disp = int(p["senkou"]), int(p["displacement"])
    if not tenkan <= kijun <= senkou:
        raise ValidationError("ichimoku: require tenkan <= kijun <= senkou")

    def midpoint(period):
        hh = _rolling(h, period + 1).max(axis=1)
        ll = _rolling(l, period + 1).min(axis=1)
        return (hh + ll) / 2.0  # aligned from index `period`

    conversion = midpoint(tenkan)
    base = midpoint(kijun)
    span_a = (conversion[kijun - tenkan :] + base) / 2.0  # from index kijun
    span_b = midpoint(senkou)  # from index senkou
    cloud_mid = (span_a[senkou - kijun :] + span_b) / 2.0  # from index senkou
    warm = senkou + disp
    # cloud value at t was computed at t - disp
    return (c[warm:] - cloud_mid[: cloud_mid.size - disp]) / c[warm:]


def _calc_psar(o, h, l, c, v, p):
    start, step, max_af = float(p["start"]), float(p["step"]), float(p["max"])
    n = c.size
    out = np.empty(n - 1)
    uptrend = c[1] > c[0]
    if uptrend:
        sar, ep = min(l[0], l[1]), max(h[0], h[1])
    else:
        sar, ep = max(h[0], h[1]), min(l[0], l[1])
    af = start
    out[0] = (c[1] - sar) / c[1]
    for t in range(2, n):
        nxt = sar + af * (ep - sar)
        if uptrend:
            nxt = min(nxt, l[t - 1], l[t - 2])
            if l[t] < nxt:  # stop hit: reverse to downtrend
                uptrend, nxt, ep, af = False, ep, l[t], start
            elif h[t] > ep:
                ep, af = h[t], min(af + step, max_af)
        else:
            nxt = max(nxt, h[t - 1], h[t - 2])
            if h[t] > nxt:
                uptrend, nxt, ep, af = True, ep, h[t], start
            elif l[t] < ep:
                ep, af = l[t], min(af + step, max_af)
        sar = nxt
        out[t - 1] = (c[t] - sar) / c[t]
    return out


def _calc_fibonacci(o, h, l, c, v, p):
    period = int(p["period"])
    hh = _rolling(h, period).max(axis=1)
    ll = _rolling(l, period).min(axis=1)
    return _safe_ratio(hh - c[period - 1 :], hh - ll, 0.5)


def _calc_cmf(o, h, l, c, v, p):
    period = int(p["period"])
    flow_sum = _rolling(_clv(h, l, c) * v, period).sum(axis=1)
    vol_sum = _rolling(v, period).sum(axis=1)
    return _safe_ratio(flow_sum, vol_sum, 0.0)


def _calc_adx(o, h, l, c, v, p):
    period = int(p["period"])
    up_move = h[1:] - h[:-1]
    down_move = l[:-1] - l[1:]
    plus_dm = np.where((up_move > down_move) & (up_move > 0.0), up_move, 0.0)
    minus_dm = np.where((down_move > up_move) & (down_move > 0.0), down_move, 0.0)
    tr = _true_range(h, l, c)
    s_tr = _wilder(tr, period)
    s_plus = _wilder(plus_dm, period)
    s_minus = _wilder(minus_dm, period)
    plus_di = _safe_ratio(100.0 * s_plus, s_tr, 0.0)
    minus_di = _safe_ratio(100.0 * s_minus, s_tr, 0.0)
    dx = _safe_ratio(100.0 * np.abs(plus_di - minus_di), plus_di + minus_di, 0.0)
    return _wilder(dx, period)


_KIND_FUNCS = {
    "ma": _calc_ma,
    "macd": _calc_macd,
    "rsi": _calc_rsi,
    "stochastic": _calc_stochastic,
    "williams_r": _calc_williams_r,
    "bollinger": _calc_bollinger,
    "obv": _calc_obv,
    "adl": _calc_adl,
    "aroon": _calc_aroon,
    "atr": _calc_atr,
    "ichimoku": _calc_ichimoku,
    "psar": _calc_psar,
    "fibonacci": _calc_fibonacci,
    "cmf": _calc_cmf,
    "adx": _calc_adx,
}
