"""Design-matrix assembly, correlation pruning, PCA, ridge diagnostic, split.

The frame holds one row per date where every indicator is past its warm-up
AND a direction label exists; columns are the technical indicators in their
fixed order followed by the 4 sentiment means. All train-derived statistics
(correlations, PCA moments, ridge standardization) are computed on training
rows only and then applied to the full frame.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date as Date
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .indicators import IndicatorColumn
from .sentiment import DailySentiment

SENTIMENT_NAMES = ["sent_positive", "sent_negative", "sent_neutral", "sent_composite"]


@dataclass
class FeatureFrame:
    """Date-aligned matrix of named predictor columns, optionally labeled."""

    dates: list[Date]
    names: list[str]
    matrix: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValidationError("feature matrix must be 2-D")
        n, p = self.matrix.shape
        if n != len(self.dates):
            raise ValidationError(f"{n} rows but {len(self.dates)} dates")
        if p != len(self.names):
            raise ValidationError(f"{p} columns but {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("column names must be unique")
        bad = [self.names[j] for j in range(p) if not np.all(np.isfinite(self.matrix[:, j]))]
        if bad:
            raise ValidationError(f"non-finite values in column(s): {', '.join(bad)}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ValidationError("labels must align with rows")
            if not np.all((self.labels == 0) | (self.labels == 1)):
                raise ValidationError("labels must be 0 or 1")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def select(self, names: Sequence[str]) -> "FeatureFrame":
        idx = [self.names.index(n) for n in names]
        return FeatureFrame(
            dates=list(self.dates),
            names=list(names),
            matrix=self.matrix[:, idx].copy(),
            labels=None if self.labels is None else self.labels.copy(),
        )

    def rows(self, start: int, stop: int) -> "FeatureFrame":
        return FeatureFrame(
            dates=self.dates[start:stop],
            names=list(self.names),
            matrix=self.matrix[start:stop].copy(),
            labels=None if self.labels is None else self.labels[start:stop].copy(),
        )

    def take(self, indices: np.ndarray) -> "FeatureFrame":
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureFrame(
            dates=[self.dates[i] for i in idx],
            names=list(self.names),
            matrix=self.matrix[idx].copy(),
            labels=None if self.labels is None else self.labels[idx].copy(),
        )


def assemble(
    calendar: Sequence[Date],
    technical: Sequence[IndicatorColumn],
    sentiment: Optional[Sequence[DailySentiment]],
    labels: np.ndarray,
) -> FeatureFrame:
    """Build the labeled frame from indicator columns and daily sentiment.

    Rows span the indices where every indicator is defined and a label
    exists: [max warm-up, n_labeled). Column order is the technical columns
    as given, then the 4 sentiment means.
    """
    n = len(calendar)
    labels = np.asarray(labels, dtype=np.int64)
    n_labeled = labels.size
    if n_labeled >= n:
        raise ValidationError("labels must be shorter than the calendar (horizon >= 1)")
    for col in technical:
        if col.warm_up + col.values.size != n:
            raise ValidationError(
                f"column {col.name}: warm_up {col.warm_up} + {col.values.size} values "
                f"does not cover the {n}-day calendar"
            )
    if sentiment is not None:
        if len(sentiment) != n:
            raise ValidationError(
                f"sentiment covers {len(sentiment)} days but the calendar has {n}"
            )
        for daily, day in zip(sentiment, calendar):
            if daily.date != day:
                raise ValidationError(
                    f"sentiment calendar mismatch at {daily.date} vs {day}"
                )

    warm = max(col.warm_up for col in technical)
    if warm >= n_labeled:
        raise ValidationError(
            f"empty intersection: warm-up {warm} leaves no labeled rows "
            f"(labels end at {n_labeled})"
        )
    n_rows = n_labeled - warm

    columns = []
    names = []
    for col in technical:
        offset = warm - col.warm_up
        columns.append(col.values[offset : offset + n_rows])
        names.append(col.name)
    if sentiment is not None:
        window = sentiment[warm : warm + n_rows]
        columns.append(np.array([d.mean_positive for d in window]))
        columns.append(np.array([d.mean_negative for d in window]))
        columns.append(np.array([d.mean_neutral for d in window]))
        columns.append(np.array([d.mean_composite for d in window]))
        names.extend(SENTIMENT_NAMES)

    return FeatureFrame(
        dates=list(calendar[warm : warm + n_rows]),
        names=names,
        matrix=np.column_stack(columns),
        labels=labels[warm : warm + n_rows],
    )


# ---------------------------------------------------------------------------
# correlation pruning


@dataclass
class DroppedColumn:
    name: str
    partner: Optional[str]  # None when dropped as constant
    correlation: Optional[float]
    reason: str  # "correlated" or "constant"


@dataclass
class PruneReport:
    threshold: float
    dropped: list[DroppedColumn]
    kept: list[str]


def prune_correlated(
    frame: FeatureFrame, threshold: float, n_train: int
) -> tuple[FeatureFrame, PruneReport]:
    """Greedily eliminate columns until no training |correlation| exceeds
    the threshold.

    Constant training columns are dropped first. Then, repeatedly, the
    offending pair with the largest |rho| (ties: earliest pair in column
    order) loses the member with the larger mean |rho| against the
    currently kept columns; mean ties drop the later column.
    """
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"prune threshold must be in (0, 1), got {threshold}")
    if not 2 <= n_train <= frame.n_rows:
        raise ValidationError(f"need at least 2 training rows, got {n_train}")

    train = frame.matrix[:n_train]
    dropped: list[DroppedColumn] = []
    alive = []
    for j, name in enumerate(frame.names):
        if np.min(train[:, j]) == np.max(train[:, j]):
            dropped.append(DroppedColumn(name, None, None, "constant"))
        else:
            alive.append(j)

    if len(alive) >= 2:
        corr = np.corrcoef(train[:, alive], rowvar=False)
        # map back to original column indices
        corr_of = {a: i for i, a in enumerate(alive)}
        while True:
            # pairs scanned in column order, so strict improvement keeps the
            # earliest pair when |rho| ties
            worst = None
            for ai, a in enumerate(alive):
                for b in alive[ai + 1 :]:
                    r = abs(corr[corr_of[a], corr_of[b]])
                    if r > threshold and (worst is None or r > worst[0]):
                        worst = (r, a, b)
            if worst is None:
                break
            _, a, b = worst
            rho = corr[corr_of[a], corr_of[b]]

            def mean_abs(col):
                others = [x for x in alive if x != col]
                return float(
                    np.mean([abs(corr[corr_of[col], corr_of[o]]) for o in others])
                )

            drop = b if mean_abs(b) >= mean_abs(a) else a
            keep = a if drop == b else b
            dropped.append(
                DroppedColumn(frame.names[drop], frame.names[keep], float(rho), "correlated")
            )
            alive.remove(drop)

    kept_names = [frame.names[j] for j in alive]
    pruned = frame.select(kept_names)
    return pruned, PruneReport(threshold=threshold, dropped=dropped, kept=kept_names)


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaTransform:
    """Train-fitted standardization plus orthonormal principal loadings."""

    means: np.ndarray
    scales: np.ndarray
    components: np.ndarray  # (k, p) rows are loading vectors
    explained_variance_ratio: np.ndarray  # (k,) of the retained components

    def standardize(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.means) / self.scales

    def project(self, matrix: np.ndarray) -> np.ndarray:
        return self.standardize(matrix) @ self.components.T

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        """Back to standardized feature space (exact when all components kept)."""
        return projected @ self.components


def fit_pca(frame: FeatureFrame, variance_target: float) -> PcaTransform:
    """Fit standardization and principal components on (training) rows,
    keeping the minimal prefix of components reaching the variance target."""
    if not 0.0 < variance_target <= 1.0:
        raise ValidationError(f"variance_target must be in (0, 1], got {variance_target}")
    X = frame.matrix
    if X.shape[0] < 2:
        raise ValidationError("PCA needs at least 2 rows")
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    zero = [frame.names[j] for j in range(X.shape[1]) if scales[j] == 0.0]
    if zero:
        raise ValidationError(
            f"zero-variance column(s) {', '.join(zero)}: prune before PCA"
        )
    Z = (X - means) / scales
    cov = Z.T @ Z / (X.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    ratios = eigvals / eigvals.sum()

    # sign convention: largest-magnitude loading entry is positive
    for k in range(eigvecs.shape[1]):
        pivot = int(np.argmax(np.abs(eigvecs[:, k])))
        if eigvecs[pivot, k] < 0:
            eigvecs[:, k] = -eigvecs[:, k]

    cum = np.cumsum(ratios)
    n_keep = int(np.searchsorted(cum, variance_target - 1e-12) + 1)
    n_keep = min(n_keep, ratios.size)
    return PcaTransform(
        means=means,
        scales=scales,
        components=eigvecs[:, :n_keep].T.copy(),
        explained_variance_ratio=ratios[:n_keep].copy(),
    )


def apply_pca(transform: PcaTransform, frame: FeatureFrame) -> FeatureFrame:
    """Project any frame through stored means/scales/loadings."""
    if frame.matrix.shape[1] != transform.means.size:
        raise ValidationError(
            f"frame has {frame.matrix.shape[1]} columns, transform expects "
            f"{transform.means.size}"
        )
    projected = transform.project(frame.matrix)
    names = [f"pc{i + 1}" for i in range(projected.shape[1])]
    return FeatureFrame(
        dates=list(frame.dates),
        names=names,
        matrix=projected,
        labels=None if frame.labels is None else frame.labels.copy(),
    )


# ---------------------------------------------------------------------------
# ridge diagnostic


@dataclass
class RidgeDiagnostic:
    """Linear-probability ridge fit on standardized features.

    Reported alongside forest importances for interpretation only; the
    prediction path never uses it.
    """

    lam: float
    names: list[str]
    coefficients: np.ndarray
    intercept: float


def ridge_fit(frame: FeatureFrame, lam: float) -> RidgeDiagnostic:
    """Solve (Z'Z + lam*I) beta = Z'(y - ybar) on standardized features."""
    if lam < 0:
        raise ValidationError(f"ridge lambda must be >= 0, got {lam}")
    if frame.labels is None:
        raise ValidationError("ridge diagnostic needs a labeled frame")
    X = frame.matrix
    y = frame.labels.astype(np.float64)
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    zero = [frame.names[j] for j in range(X.shape[1]) if scales[j] == 0.0]
    if zero:
        raise ValidationError(f"zero-variance column(s) {', '.join(zero)} in ridge fit")
    Z = (X - means) / scales
    ybar = float(y.mean())
    gram = Z.T @ Z + lam * np.eye(X.shape[1])
    if lam == 0.0 and (not np.isfinite(np.linalg.cond(gram)) or np.linalg.cond(gram) > 1e12):
        raise ValidationError(
            "singular system at lambda=0 (collinear columns); use lambda > 0"
        )
    try:
        beta = np.linalg.solve(gram, Z.T @ (y - ybar))
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"ridge solve failed: {exc}; use lambda > 0") from None
    if not np.all(np.isfinite(beta)):
        raise ValidationError("ridge produced non-finite coefficients")
    return RidgeDiagnostic(lam=lam, names=list(frame.names), coefficients=beta, intercept=ybar)


# ---------------------------------------------------------------------------
# chronological split


def train_row_count(n_rows: int, train_fraction: float) -> int:
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    return math.ceil(n_rows * train_fraction)


def chronological_split(
    frame: FeatureFrame, train_fraction: float
) -> tuple[FeatureFrame, FeatureFrame]:
    """First ceil(n * fraction) rows train, the rest test; never shuffled."""
    n_train = train_row_count(frame.n_rows, train_fraction)
    if n_train == 0 or n_train >= frame.n_rows:
        raise ValidationError(
            f"split leaves an empty side: {n_train} train of {frame.n_rows} rows"
        )
    return frame.rows(0, n_train), frame.rows(n_train, frame.n_rows)


# ---------------------------------------------------------------------------
# CSV round-trip


def frame_to_csv(frame: FeatureFrame) -> str:
    """`date,<names...>[,label]` with shortest round-trip float formatting."""
    header = ["date", *frame.names]
    if frame.labels is not None:
        header.append("label")
    lines = [",".join(header)]
    for i in range(frame.n_rows):
        cells = [frame.dates[i].isoformat()]
        cells.extend(repr(float(x)) for x in frame.matrix[i])
        if frame.labels is not None:
            cells.append(str(int(frame.labels[i])))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def frame_from_csv(text: str) -> FeatureFrame:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("empty feature CSV") from None
    if not header or header[0] != "date":
        raise ValidationError("feature CSV must start with a 'date' column")
    has_labels = bool(header) and header[-1] == "label"
    names = header[1 : -1 if has_labels else len(header)]
    if not names:
        raise ValidationError("feature CSV has no feature columns")

    dates, rows, labels = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        expected = 1 + len(names) + (1 if has_labels else 0)
        if len(row) != expected:
            raise ValidationError(f"feature CSV row {lineno}: expected {expected} cells")
        try:
            dates.append(Date.fromisoformat(row[0]))
            rows.append([float(x) for x in row[1 : 1 + len(names)]])
            if has_labels:
                labels.append(int(row[-1]))
        except ValueError as exc:
            raise ValidationError(f"feature CSV row {lineno}: {exc}") from None
    if not rows:
        raise ValidationError("feature CSV has no data rows")
    return FeatureFrame(
        dates=dates,
        names=list(names),
        matrix=np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64) if has_labels else None,
    )
