"""News sentiment scoring and daily aggregation into 4 feature columns.

Scoring is delegated to a pluggable provider (HTTP endpoint, recorded
fixture file, or the bundled lexicon test double); every provider yields
positive/negative/neutral class probabilities summing to 1, and the
composite score is positive - negative, in [-1, 1].

Daily aggregation maps each article to the first trading day on or after
its calendar date (intraday times are ignored; news between sessions rolls
forward), takes arithmetic means on days with articles, and on empty days
decays the previous day's means toward neutral: positive/negative shrink by
the decay factor, neutral absorbs the freed mass, composite shrinks by the
same factor. Leading no-news days are exactly neutral. The 4 daily features
are mean_positive, mean_negative, mean_neutral, mean_composite.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from bisect import bisect_left
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date as Date
from datetime import datetime
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .errors import ProviderError, ValidationError

_SUM_TOLERANCE = 1e-9
_NORMALIZE_WINDOW = (0.99, 1.01)


@dataclass(frozen=True)
class NewsItem:
    """One article: an ISO-8601 timestamp, non-empty text, optional ticker."""

    timestamp: datetime
    text: str
    symbol: Optional[str] = None

    def __post_init__(self):
        if not self.text:
            raise ValidationError("news item text must be non-empty")


@dataclass(frozen=True)
class SentimentScore:
    """Class probabilities plus the composite score positive - negative."""

    positive: float
    negative: float
    neutral: float

    def __post_init__(self):
        probs = (self.positive, self.negative, self.neutral)
        if any(p < 0 for p in probs):
            raise ValidationError(f"negative class probability in {probs}")
        if abs(sum(probs) - 1.0) > _SUM_TOLERANCE:
            raise ValidationError(f"class probabilities {probs} do not sum to 1")

    @property
    def composite(self) -> float:
        return self.positive - self.negative


@dataclass(frozen=True)
class DailySentiment:
    """Per trading day aggregate of article scores (decay-filled when empty)."""

    date: Date
    mean_positive: float
    mean_negative: float
    mean_neutral: float
    mean_composite: float
    article_count: int

    def __post_init__(self):
        if self.article_count < 0:
            raise ValidationError("article_count must be >= 0")
        if not -1.0 <= self.mean_composite <= 1.0:
            raise ValidationError(f"mean_composite {self.mean_composite} outside [-1, 1]")


class SentimentProvider(Protocol):
    def raw_score(self, text: str) -> tuple[float, float, float]:
        """(positive, negative, neutral) for one text; may be unnormalized
        within the tolerance score_text accepts."""
        ...


def text_hash(text: str) -> str:
    """Content hash used to key fixture scores (sha256 of the UTF-8 text)."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def score_text(provider: SentimentProvider, item: NewsItem) -> SentimentScore:
    """Score one item, normalizing tiny probability drift and rejecting the rest.

    Responses whose probabilities sum within [0.99, 1.01] are renormalized;
    anything further off (or negative) is a provider error.
    """
    pos, neg, neu = provider.raw_score(item.text)
    if min(pos, neg, neu) < 0:
        raise ProviderError(f"provider returned a negative probability: {(pos, neg, neu)}")
    total = pos + neg + neu
    if not _NORMALIZE_WINDOW[0] <= total <= _NORMALIZE_WINDOW[1]:
        raise ProviderError(
            f"provider probabilities sum to {total}, outside {_NORMALIZE_WINDOW}"
        )
    return SentimentScore(positive=pos / total, negative=neg / total, neutral=neu / total)


def score_items(
    provider: SentimentProvider,
    items: Sequence[NewsItem],
    parallelism: int = 1,
) -> list[SentimentScore]:
    """Score many items, preserving input order; parallelism caps concurrency."""
    if parallelism <= 1 or len(items) <= 1:
        return [score_text(provider, item) for item in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda it: score_text(provider, it), items))


def aggregate_daily(
    scored: Sequence[tuple[NewsItem, SentimentScore]],
    calendar: Sequence[Date],
    decay: float = 0.9,
) -> list[DailySentiment]:
    """Aggregate scored articles onto a trading calendar.

    Articles dated on a trading day map to it; off-calendar dates roll
    forward to the next trading day; anything after the final day is
    dropped. Empty days decay the previous day's means (see module doc);
    with decay 0 they are exactly neutral.
    """
    if not calendar:
        raise ValidationError("trading calendar must be non-empty")
    if not 0.0 <= decay <= 1.0:
        raise ValidationError(f"decay must be in [0, 1], got {decay}")
    cal = list(calendar)
    for prev, cur in zip(cal, cal[1:]):
        if cur <= prev:
            raise ValidationError("trading calendar must be strictly increasing")

    buckets: list[list[SentimentScore]] = [[] for _ in cal]
    for item, score in scored:
        idx = bisect_left(cal, item.timestamp.date())
        if idx < len(cal):
            buckets[idx].append(score)

    out: list[DailySentiment] = []
    prev: Optional[DailySentiment] = None
    for day, scores in zip(cal, buckets):
        if scores:
            n = len(scores)
            cur = DailySentiment(
                date=day,
                mean_positive=sum(s.positive for s in scores) / n,
                mean_negative=sum(s.negative for s in scores) / n,
                mean_neutral=sum(s.neutral for s in scores) / n,
                mean_composite=sum(s.composite for s in scores) / n,
                article_count=n,
            )
        elif prev is None:
            cur = DailySentiment(day, 0.0, 0.0, 1.0, 0.0, 0)
        else:
            pos = decay * prev.mean_positive
            neg = decay * prev.mean_negative
            cur = DailySentiment(
                date=day,
                mean_positive=pos,
                mean_negative=neg,
                mean_neutral=1.0 - pos - neg,
                mean_composite=decay * prev.mean_composite,
                article_count=0,
            )
        out.append(cur)
        prev = cur
    return out


def load_news_jsonl(path: Path, symbol: Optional[str] = None) -> list[NewsItem]:
    """Read a JSON-lines news file; when `symbol` is given, keep items whose
    symbol matches or is absent."""
    items = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            item = NewsItem(
                timestamp=datetime.fromisoformat(obj["timestamp"]),
                text=obj["text"],
                symbol=obj.get("symbol"),
            )
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"news line {lineno}: {exc}") from None
        if symbol is None or item.symbol is None or item.symbol == symbol:
            items.append(item)
    return items


# ---------------------------------------------------------------------------
# providers


class FixtureProvider:
    """Scores keyed by text content hash, from a JSON-lines fixture file.

    Line format: {"hash": sha256-hex, "positive": x, "negative": y,
    "neutral": z}. A missing hash is an error so tampered test corpora
    fail loudly.
    """

    def __init__(self, path: Path):
        self.scores: dict[str, tuple[float, float, float]] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                self.scores[obj["hash"]] = (
                    float(obj["positive"]),
                    float(obj["negative"]),
                    float(obj["neutral"]),
                )
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"fixture line {lineno}: {exc}") from None

    def raw_score(self, text: str) -> tuple[float, float, float]:
        key = text_hash(text)
        if key not in self.scores:
            raise ProviderError(f"fixture has no score for text hash {key[:16]}…")
        return self.scores[key]


_POSITIVE_WORDS = frozenset(
    """gain gains profit profits surge surges soar soars rally rallies beat beats
    upgrade upgraded strong bullish growth record boom booming outperform
    outperforms exceed exceeds rise rises jump jumps win wins robust upbeat
    optimistic breakthrough dividend expansion recovery rebound momentum""".split()
)

_NEGATIVE_WORDS = frozenset(
    """loss losses plunge plunges drop drops fall falls crash crashes miss misses
    downgrade downgraded weak bearish decline declines slump slumps recession
    layoff layoffs default bankruptcy fraud lawsuit warning cuts cut tumble
    tumbles fear fears panic selloff underperform underperforms shortfall""".split()
)

_TOKEN_RE = re.compile(r"[a-z']+")


class LexiconProvider:
    """Deterministic offline scorer counting hits against small word lists.

    This is a test double for a real sentiment model, not a research claim:
    with p positive and n negative hits, the non-neutral mass is
    (p + n) / (p + n + 2), split between the classes in proportion to their
    counts; no hits means exactly (0, 0, 1).
    """

    def raw_score(self, text: str) -> tuple[float, float, float]:
        tokens = _TOKEN_RE.findall(text.lower())
        p = sum(1 for t in tokens if t in _POSITIVE_WORDS)
        n = sum(1 for t in tokens if t in _NEGATIVE_WORDS)
        total = p + n
        if total == 0:
            return (0.0, 0.0, 1.0)
        mass = total / (total + 2.0)
        return (mass * p / total, mass * n / total, 1.0 - mass)


class HttpProvider:
    """POSTs {"text": ...} to an endpoint returning the three probabilities."""

    def __init__(
        self,
        url: str,
        timeout: float = 10.0,
        retries: int = 2,
        backoff_base: float = 0.5,
        transport=None,
        sleep=time.sleep,
    ):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff_base = backoff_base
        self.transport = transport or self._requests_transport
        self.sleep = sleep

    def _requests_transport(self, url: str, body: dict, timeout: float) -> dict:
        import requests

        resp = requests.post(url, json=body, timeout=timeout)
        resp.raise_for_status()
        return resp.json()

    def raw_score(self, text: str) -> tuple[float, float, float]:
        last_error: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            try:
                payload = self.transport(self.url, {"text": text}, self.timeout)
                return (
                    float(payload["positive"]),
                    float(payload["negative"]),
                    float(payload["neutral"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"sentiment endpoint returned a bad payload: {exc}") from exc
            except Exception as exc:  # transport failure: retry with backoff
                last_error = exc
                if attempt < self.retries:
                    self.sleep(self.backoff_base * 2**attempt)
        raise ProviderError(
            f"sentiment endpoint failed after {self.retries} retries: {last_error}"
        )
