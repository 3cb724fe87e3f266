"""Metric suite, time-ordered CV, random hyperparameter search, comparison.

ROC sweeps thresholds over the distinct scores in descending order (tied
scores form one group) and integrates with the trapezoid rule, which equals
the pairwise concordance statistic with ties counted 1/2. Cross-validation
folds are contiguous time blocks, never shuffled, so no fold trains on its
own future. The comparison harness tunes and trains a technical-only
baseline and a sentiment-augmented model under identical budgets and seeds
and reports held-out accuracies side by side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ValidationError
from .features import FeatureFrame, chronological_split
from .forest import ForestModel, HyperParams, predict, predict_proba, train_forest
from .rng import SplitMix64, derive

_PARAM_STREAM = 1  # derive() tags keeping the search streams disjoint
_FOLD_MODEL = 2


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with class 1 ("up") as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class ClassMetrics:
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    roc_points: list[tuple[float, float, float]]  # (fpr, tpr, threshold)
    pr_points: list[tuple[float, float, float]]  # (recall, precision, threshold)
    model_id: str = ""
    dataset_id: str = ""


def confusion_metrics(predictions, labels) -> ClassMetrics:
    """Accuracy, precision, recall and F1 with the 0/0 -> 0 convention."""
    pred = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if pred.shape != y.shape or pred.size == 0:
        raise ValidationError(
            f"predictions ({pred.size}) and labels ({y.size}) must have equal length >= 1"
        )
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    cm = ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return ClassMetrics(
        confusion=cm,
        accuracy=(tp + tn) / cm.total,
        precision=precision,
        recall=recall,
        f1=f1,
    )


def _sweep(scores: np.ndarray, labels: np.ndarray):
    """Yield (tp, fp, threshold) after absorbing each tied-score group,
    scores descending."""
    order = np.argsort(-scores, kind="stable")
    tp = fp = 0
    i = 0
    n = scores.size
    while i < n:
        thr = scores[order[i]]
        j = i
        while j < n and scores[order[j]] == thr:
            if labels[order[j]] == 1:
                tp += 1
            else:
                fp += 1
            j += 1
        yield tp, fp, float(thr)
        i = j


def roc_auc(scores, labels) -> tuple[list[tuple[float, float, float]], float]:
    """ROC points (FPR, TPR, threshold) from (0,0) to (1,1) plus trapezoidal AUC."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.size == 0:
        raise ValidationError("scores and labels must have equal length >= 1")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC is undefined when labels contain a single class")
    points = [(0.0, 0.0, math.inf)]
    for tp, fp, thr in _sweep(s, y):
        points.append((fp / n_neg, tp / n_pos, thr))
    auc = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return points, auc


def pr_curve(scores, labels) -> list[tuple[float, float, float]]:
    """Precision-recall points (recall, precision, threshold), anchored at
    recall 0 / precision 1."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise ValidationError("PR curve is undefined without positive labels")
    points = [(0.0, 1.0, math.inf)]
    for tp, fp, thr in _sweep(s, y):
        points.append((tp / n_pos, tp / (tp + fp), thr))
    return points


def evaluate_model(
    model: ForestModel,
    frame: FeatureFrame,
    model_id: str = "",
    dataset_id: str = "",
) -> EvalReport:
    """Score a labeled frame; frame columns must match the model exactly."""
    if frame.labels is None:
        raise ValidationError("evaluation needs a labeled frame")
    if list(frame.names) != list(model.feature_names):
        raise ValidationError(
            f"feature mismatch: model expects {model.feature_names}, frame has {frame.names}"
        )
    scores = predict_proba(model, frame.matrix)
    metrics = confusion_metrics(predict(model, frame.matrix), frame.labels)
    roc_points, auc = roc_auc(scores, frame.labels)
    return EvalReport(
        confusion=metrics.confusion,
        accuracy=metrics.accuracy,
        precision=metrics.precision,
        recall=metrics.recall,
        f1=metrics.f1,
        auc=auc,
        roc_points=roc_points,
        pr_points=pr_curve(scores, frame.labels),
        model_id=model_id,
        dataset_id=dataset_id,
    )


# ---------------------------------------------------------------------------
# cross-validation and random search


def kfold_splits(n_rows: int, k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """k contiguous time blocks (larger blocks first); fold i validates on
    block i and trains on everything else."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    if n_rows < k:
        raise ValidationError(f"cannot make {k} folds from {n_rows} rows")
    base, extra = divmod(n_rows, k)
    sizes = [base + 1] * extra + [base] * (k - extra)
    splits = []
    start = 0
    all_idx = np.arange(n_rows)
    for size in sizes:
        val = all_idx[start : start + size]
        train = np.concatenate([all_idx[:start], all_idx[start + size :]])
        splits.append((train, val))
        start += size
    return splits


@dataclass(frozen=True)
class SearchSpace:
    """Uniform sampling ranges for the 5 tuned hyperparameters."""

    n_trees: tuple[int, int] = (100, 800)
    max_depth: tuple = tuple(range(3, 21)) + (None,)
    min_samples_split: tuple[int, int] = (2, 20)
    min_samples_leaf: tuple[int, int] = (1, 10)
    max_features: tuple = ("sqrt", "log2", 0.5)


@dataclass
class Trial:
    params: HyperParams
    fold_aucs: list[Optional[float]]  # None marks a skipped single-class fold
    mean_auc: float


@dataclass
class SearchResult:
    trials: list[Trial]
    best: HyperParams
    best_index: int


def _draw_params(rng: SplitMix64, space: SearchSpace, seed: int) -> HyperParams:
    # draw order is part of the reproducibility contract:
    # n_trees, max_depth, min_samples_split, min_samples_leaf, max_features
    lo, hi = space.n_trees
    n_trees = lo + rng.randbelow(hi - lo + 1)
    max_depth = space.max_depth[rng.randbelow(len(space.max_depth))]
    lo, hi = space.min_samples_split
    min_split = lo + rng.randbelow(hi - lo + 1)
    lo, hi = space.min_samples_leaf
    min_leaf = lo + rng.randbelow(hi - lo + 1)
    max_features = space.max_features[rng.randbelow(len(space.max_features))]
    return HyperParams(
        n_trees=n_trees,
        max_depth=max_depth,
        min_samples_split=min_split,
        min_samples_leaf=min_leaf,
        max_features=max_features,
        seed=seed,
    )


def _depth_key(depth: Optional[int]) -> float:
    return math.inf if depth is None else depth


def random_search(
    frame: FeatureFrame,
    space: SearchSpace,
    n_trials: int,
    k: int,
    seed: int,
    workers: int = 1,
) -> SearchResult:
    """Sample n_trials parameter sets and rank them by mean fold AUC.

    Single-class validation folds are skipped (recorded as null); a trial
    errors only if every fold skips. Ties on mean AUC prefer fewer trees,
    then shallower depth, then the earlier trial.
    """
    if n_trials < 1:
        raise ValidationError(f"n_trials must be >= 1, got {n_trials}")
    if frame.labels is None or frame.n_rows == 0:
        raise ValidationError("random search needs a non-empty labeled frame")
    rng = SplitMix64(derive(seed, _PARAM_STREAM))
    splits = kfold_splits(frame.n_rows, k)

    trials: list[Trial] = []
    for t in range(n_trials):
        params = _draw_params(rng, space, seed=derive(seed, _FOLD_MODEL, t))
        fold_aucs: list[Optional[float]] = []
        for f, (train_idx, val_idx) in enumerate(splits):
            val_labels = frame.labels[val_idx]
            if val_labels.min() == val_labels.max():
                fold_aucs.append(None)
                continue
            fold_params = HyperParams(
                n_trees=params.n_trees,
                max_depth=params.max_depth,
                min_samples_split=params.min_samples_split,
                min_samples_leaf=params.min_samples_leaf,
                max_features=params.max_features,
                seed=derive(seed, _FOLD_MODEL, t, f),
            )
            model = train_forest(frame.take(train_idx), fold_params, workers=workers)
            scores = predict_proba(model, frame.matrix[val_idx])
            _, auc = roc_auc(scores, val_labels)
            fold_aucs.append(auc)
        scored = [a for a in fold_aucs if a is not None]
        if not scored:
            raise ValidationError(
                f"trial {t}: every validation fold had single-class labels"
            )
        trials.append(Trial(params=params, fold_aucs=fold_aucs, mean_auc=sum(scored) / len(scored)))

    best_index = min(
        range(len(trials)),
        key=lambda i: (
            -trials[i].mean_auc,
            trials[i].params.n_trees,
            _depth_key(trials[i].params.max_depth),
            i,
        ),
    )
    return SearchResult(trials=trials, best=trials[best_index].params, best_index=best_index)


# ---------------------------------------------------------------------------
# comparison harness


@dataclass
class TuningConfig:
    """Shared budget for both sides of a comparison. trials=0 skips the
    search and trains base_params directly."""

    trials: int = 50
    folds: int = 3
    seed: int = 0
    train_fraction: float = 2.0 / 3.0
    space: SearchSpace = field(default_factory=SearchSpace)
    base_params: HyperParams = field(default_factory=HyperParams)
    workers: int = 1


@dataclass
class ComparisonReport:
    dataset_id: str
    accuracy_technical: float
    accuracy_augmented: float
    delta: float
    report_technical: EvalReport
    report_augmented: EvalReport
    params_technical: HyperParams
    params_augmented: HyperParams
    search_technical: Optional[SearchResult]
    search_augmented: Optional[SearchResult]


def _tune_and_evaluate(
    frame: FeatureFrame, tuning: TuningConfig, model_id: str, dataset_id: str
) -> tuple[EvalReport, HyperParams, Optional[SearchResult]]:
    train, test = chronological_split(frame, tuning.train_fraction)
    search = None
    if tuning.trials > 0:
        search = random_search(
            train, tuning.space, tuning.trials, tuning.folds, tuning.seed, tuning.workers
        )
        chosen = search.best
    else:
        chosen = tuning.base_params
    params = HyperParams(
        n_trees=chosen.n_trees,
        max_depth=chosen.max_depth,
        min_samples_split=chosen.min_samples_split,
        min_samples_leaf=chosen.min_samples_leaf,
        max_features=chosen.max_features,
        seed=tuning.seed,
    )
    model = train_forest(train, params, workers=tuning.workers)
    return evaluate_model(model, test, model_id=model_id, dataset_id=dataset_id), params, search


def compare_models(
    frame_augmented: FeatureFrame,
    frame_technical: FeatureFrame,
    tuning: TuningConfig,
    dataset_id: str = "",
) -> ComparisonReport:
    """Tune/train/evaluate the technical-only baseline and the
    sentiment-augmented model under identical budget, split and seeds."""
    if frame_augmented.dates != frame_technical.dates:
        raise ValidationError("comparison frames must share their dates")
    if (
        frame_augmented.labels is None
        or frame_technical.labels is None
        or not np.array_equal(frame_augmented.labels, frame_technical.labels)
    ):
        raise ValidationError("comparison frames must share their labels")

    rep_tech, params_tech, search_tech = _tune_and_evaluate(
        frame_technical, tuning, "technical-rf", dataset_id
    )
    rep_aug, params_aug, search_aug = _tune_and_evaluate(
        frame_augmented, tuning, "augmented-rf", dataset_id
    )
    return ComparisonReport(
        dataset_id=dataset_id,
        accuracy_technical=rep_tech.accuracy,
        accuracy_augmented=rep_aug.accuracy,
        delta=rep_aug.accuracy - rep_tech.accuracy,
        report_technical=rep_tech,
        report_augmented=rep_aug,
        params_technical=params_tech,
        params_augmented=params_aug,
        search_technical=search_tech,
        search_augmented=search_aug,
    )


def comparison_table(reports: Sequence[ComparisonReport]) -> str:
    """Pipe-separated accuracy table, one row per dataset."""
    header = ("Index", "Technical RF", "Sentiment-Augmented RF", "Delta")
    rows = [
        (
            r.dataset_id or "-",
            f"{r.accuracy_technical:.2f}",
            f"{r.accuracy_augmented:.2f}",
            f"{r.delta:+.2f}",
        )
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
    lines = [
        " | ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "-+-".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append(" | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# serialization helpers


def curve_to_csv(points: Sequence[tuple[float, float, float]]) -> str:
    lines = ["x,y,threshold"]
    for x, y, thr in points:
        lines.append(f"{float(x)!r},{float(y)!r},{float(thr)!r}")
    return "\n".join(lines) + "\n"


def report_to_dict(report: EvalReport) -> dict:
    return {
        "model_id": report.model_id,
        "dataset_id": report.dataset_id,
        "confusion": {
            "tp": report.confusion.tp,
            "fp": report.confusion.fp,
            "fn": report.confusion.fn,
            "tn": report.confusion.tn,
        },
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "auc": report.auc,
        "roc_points": [[x, y, _json_safe(t)] for x, y, t in report.roc_points],
        "pr_points": [[x, y, _json_safe(t)] for x, y, t in report.pr_points],
    }


def _json_safe(x: float):
    return "inf" if math.isinf(x) else x


def hyperparams_to_dict(params: HyperParams) -> dict:
    return {
        "n_trees": params.n_trees,
        "max_depth": params.max_depth,
        "min_samples_split": params.min_samples_split,
        "min_samples_leaf": params.min_samples_leaf,
        "max_features": params.max_features,
        "seed": params.seed,
    }


def search_to_dict(result: SearchResult) -> dict:
    return {
        "trials": [
            {
                "params": hyperparams_to_dict(t.params),
                "fold_aucs": t.fold_aucs,
                "mean_auc": t.mean_auc,
            }
            for t in result.trials
        ],
        "best": hyperparams_to_dict(result.best),
        "best_index": result.best_index,
    }


def comparison_to_dict(report: ComparisonReport) -> dict:
    return {
        "dataset_id": report.dataset_id,
        "accuracy_technical": report.accuracy_technical,
        "accuracy_augmented": report.accuracy_augmented,
        "delta": report.delta,
        "report_technical": report_to_dict(report.report_technical),
        "report_augmented": report_to_dict(report.report_augmented),
        "params_technical": hyperparams_to_dict(report.params_technical),
        "params_augmented": hyperparams_to_dict(report.params_augmented),
        "search_technical": None
        if report.search_technical is None
        else search_to_dict(report.search_technical),
        "search_augmented": None
        if report.search_augmented is None
        else search_to_dict(report.search_augmented),
    }
