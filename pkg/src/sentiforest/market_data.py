"""Daily OHLCV bar acquisition: CSV parsing, validation, caching, HTTP fetch.

Bars come either from a local CSV (`date,open,high,low,close,volume`) or from
the Alpha Vantage TIME_SERIES_DAILY endpoint with a per-symbol CSV cache.
Prices are ingested exactly as the endpoint returns them (no split/dividend
adjustment); index-level studies should use ETF proxies such as SPY, QQQ or
DIA since the API has no direct index symbols.

All parsing is pure; the HTTP client enforces a minimum inter-request delay
and must be used sequentially within a process.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path
from typing import Callable, Optional

from .errors import NetworkError, ProviderError, ValidationError

ALPHA_VANTAGE_URL = "https://www.alphavantage.co/query"
CSV_HEADER = ["date", "open", "high", "low", "close", "volume"]


@dataclass(frozen=True)
class Bar:
    """One trading day. Prices strictly positive, volume non-negative,
    low <= min(open, close) and high >= max(open, close)."""

    date: Date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def rule_violations(self) -> list[str]:
        """Names of every invariant this bar breaks (empty when valid)."""
        broken = []
        if not all(v > 0 for v in (self.open, self.high, self.low, self.close)):
            broken.append("all prices must be > 0")
        if self.volume < 0:
            broken.append("volume must be >= 0")
        if self.low > self.high:
            broken.append("low must be <= high")
        if self.low > min(self.open, self.close):
            broken.append("low must be <= min(open, close)")
        if self.high < max(self.open, self.close):
            broken.append("high must be >= max(open, close)")
        return broken


@dataclass(frozen=True)
class BarSeries:
    """Bars for one symbol in strictly increasing date order, length >= 1."""

    symbol: str
    bars: tuple[Bar, ...]

    def __post_init__(self):
        if len(self.bars) < 1:
            raise ValidationError("a bar series must contain at least one bar")
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date <= prev.date:
                raise ValidationError(
                    f"dates must be strictly increasing: {prev.date} then {cur.date}"
                )

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def dates(self) -> list[Date]:
        return [b.date for b in self.bars]

    def channel(self, name: str) -> list[float]:
        """One price/volume channel as a list (name in open/high/low/close/volume)."""
        return [getattr(b, name) for b in self.bars]


def parse_bars_csv(text: str, symbol: str = "") -> BarSeries:
    """Parse a `date,open,high,low,close,volume` document into a BarSeries.

    Rows may appear in any order; the result is sorted ascending by date.
    Errors carry the physical line number (header is line 1) and the rule
    that failed.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("empty CSV: missing header row") from None
    if [h.strip().lower() for h in header] != CSV_HEADER:
        raise ValidationError(
            f"bad header {header!r}: expected {','.join(CSV_HEADER)}"
        )

    bars = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 6:
            raise ValidationError(f"row {lineno}: expected 6 columns, got {len(row)}")
        try:
            bar = Bar(
                date=Date.fromisoformat(row[0].strip()),
                open=float(row[1]),
                high=float(row[2]),
                low=float(row[3]),
                close=float(row[4]),
                volume=float(row[5]),
            )
        except ValueError as exc:
            raise ValidationError(f"row {lineno}: unparsable value ({exc})") from None
        broken = bar.rule_violations()
        if broken:
            raise ValidationError(f"row {lineno}: {'; '.join(broken)}")
        bars.append(bar)

    if not bars:
        raise ValidationError("CSV contains a header but no data rows")
    bars.sort(key=lambda b: b.date)
    for prev, cur in zip(bars, bars[1:]):
        if cur.date == prev.date:
            raise ValidationError(f"duplicate date {cur.date}")
    return BarSeries(symbol=symbol, bars=tuple(bars))


def serialize_bars_csv(series: BarSeries) -> str:
    """Render a BarSeries in the canonical CSV format.

    Numbers use the shortest decimal representation that round-trips to the
    same float, so parse(serialize(s)) == s bit-exactly. UTF-8, LF endings.
    """
    lines = [",".join(CSV_HEADER)]
    for b in series.bars:
        lines.append(
            f"{b.date.isoformat()},{b.open!r},{b.high!r},{b.low!r},{b.close!r},{b.volume!r}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class FetchResult:
    """fetch_daily outcome: the series plus whether it came from a stale cache."""

    series: BarSeries
    stale: bool = False


def _default_transport(params: dict, timeout: float) -> dict:
    import requests

    try:
        resp = requests.get(ALPHA_VANTAGE_URL, params=params, timeout=timeout)
        resp.raise_for_status()
        return resp.json()
    except requests.RequestException as exc:
        raise NetworkError(f"daily quote request failed: {exc}") from exc


@dataclass
class AlphaVantageClient:
    """TIME_SERIES_DAILY client with CSV caching, throttling and retries.

    min_interval throttles consecutive requests (free tier allows ~5/min);
    rate-limit notes in the payload are retried with exponential backoff up
    to `retries` attempts. `transport`, `sleep` and `clock` are injectable
    so tests run offline against recorded fixtures.
    """

    api_key: str
    cache_dir: Path
    min_interval: float = 13.0
    retries: int = 3
    backoff_base: float = 1.0
    timeout: float = 30.0
    transport: Callable[[dict, float], dict] = field(default=_default_transport)
    sleep: Callable[[float], None] = field(default=time.sleep)
    clock: Callable[[], float] = field(default=time.monotonic)
    _last_request: Optional[float] = field(default=None, repr=False)

    def cache_path(self, symbol: str) -> Path:
        return Path(self.cache_dir) / f"{symbol.upper()}.csv"

    def fetch_daily(self, symbol: str) -> FetchResult:
        """Full daily history for `symbol`, refreshing the cache CSV.

        On transport failure with a warm cache, returns the cached series
        flagged stale. API error payloads (bad key, exhausted rate limit)
        are surfaced verbatim and never silently replaced by the cache.
        """
        try:
            payload = self._request_with_retries(symbol)
        except NetworkError:
            cached = self._read_cache(symbol)
            if cached is not None:
                return FetchResult(series=cached, stale=True)
            raise
        series = self._parse_payload(symbol, payload)
        path = self.cache_path(symbol)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_bars_csv(series), encoding="utf-8")
        return FetchResult(series=series, stale=False)

    def _read_cache(self, symbol: str) -> Optional[BarSeries]:
        path = self.cache_path(symbol)
        if not path.exists():
            return None
        return parse_bars_csv(path.read_text(encoding="utf-8"), symbol=symbol)

    def _throttle(self):
        now = self.clock()
        if self._last_request is not None:
            wait = self.min_interval - (now - self._last_request)
            if wait > 0:
                self.sleep(wait)
        self._last_request = self.clock()

    def _request_with_retries(self, symbol: str) -> dict:
        params = {
            "function": "TIME_SERIES_DAILY",
            "symbol": symbol,
            "outputsize": "full",
            "apikey": self.api_key,
        }
        for attempt in range(self.retries + 1):
            self._throttle()
            payload = self.transport(params, self.timeout)
            if "Error Message" in payload:
                raise ProviderError(f"API error: {payload['Error Message']}")
            note = payload.get("Note") or payload.get("Information")
            if note is not None:
                if attempt < self.retries:
                    self.sleep(self.backoff_base * 2**attempt)
                    continue
                raise ProviderError(f"API rate limit after {self.retries} retries: {note}")
            return payload
        raise ProviderError("unreachable retry state")  # pragma: no cover

    def _parse_payload(self, symbol: str, payload: dict) -> BarSeries:
        ts = payload.get("Time Series (Daily)")
        if not isinstance(ts, dict) or not ts:
            raise ProviderError(
                "response missing required field 'Time Series (Daily)'"
            )
        bars = []
        for day, fields in ts.items():
            try:
                bar = Bar(
                    date=Date.fromisoformat(day),
                    open=float(fields["1. open"]),
                    high=float(fields["2. high"]),
                    low=float(fields["3. low"]),
                    close=float(fields["4. close"]),
                    volume=float(fields["5. volume"]),
                )
            except (KeyError, ValueError) as exc:
                raise ProviderError(f"response entry {day}: missing/bad field ({exc})") from None
            broken = bar.rule_violations()
            if broken:
                raise ValidationError(f"fetched bar {day}: {'; '.join(broken)}")
            bars.append(bar)
        bars.sort(key=lambda b: b.date)
        return BarSeries(symbol=symbol, bars=tuple(bars))
