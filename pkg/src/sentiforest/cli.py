"""Command-line surface: fetch -> featurize -> tune -> train -> evaluate/compare.

Every command is a pure function of (inputs, config, seed): artifacts embed
the config hash, the seed and content hashes of their inputs, and reruns
produce byte-identical files. Exit codes are stable: 0 success, 1 usage
error, 2 data/validation error, 3 network/provider error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .config import RunConfig, schema_json
from .errors import ConfigError, NetworkError, ProviderError, ValidationError
from .evaluate import (
    TuningConfig,
    compare_models,
    comparison_table,
    comparison_to_dict,
    curve_to_csv,
    evaluate_model,
    random_search,
    report_to_dict,
    search_to_dict,
    SearchSpace,
)
from .features import (
    FeatureFrame,
    apply_pca,
    assemble,
    chronological_split,
    fit_pca,
    frame_from_csv,
    frame_to_csv,
    prune_correlated,
    ridge_fit,
    train_row_count,
)
from .forest import HyperParams, model_from_json, model_to_json, train_forest
from .indicators import DEFAULT_PARAMS, IndicatorSpec, compute_all, default_specs
from .market_data import AlphaVantageClient, parse_bars_csv, serialize_bars_csv
from .preprocess import LabelSpec, SmoothingParams, make_labels, smooth_series
from .sentiment import (
    FixtureProvider,
    HttpProvider,
    LexiconProvider,
    aggregate_daily,
    load_news_jsonl,
    score_items,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NETWORK = 3


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    data errors and use 1 for usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(cfg: RunConfig, inputs: dict[str, Path]) -> dict:
    return {
        "tool": f"sentiforest {__version__}",
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "inputs": {name: _sha256_file(p) for name, p in sorted(inputs.items())},
    }


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.data["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        cfg.data["label"]["horizon"] = args.horizon
    if getattr(args, "trials", None) is not None:
        cfg.data["search"]["trials"] = args.trials
        cfg.data["compare"]["trials"] = args.trials
    return cfg


def _make_provider(cfg: RunConfig):
    s = cfg["sentiment"]
    if s["provider"] == "none":
        return None
    if s["provider"] == "lexicon":
        return LexiconProvider()
    if s["provider"] == "fixture":
        return FixtureProvider(Path(s["fixture_path"]))
    return HttpProvider(
        url=s["endpoint"], timeout=s["timeout"], retries=s["retries"]
    )


def _build_specs(cfg: RunConfig) -> list[IndicatorSpec]:
    overrides = cfg["indicators"]
    specs = []
    for spec in default_specs():
        if spec.kind in overrides:
            specs.append(IndicatorSpec(spec.kind, dict(overrides[spec.kind])))
        else:
            specs.append(spec)
    unknown = sorted(set(overrides) - set(DEFAULT_PARAMS))
    if unknown:
        raise ConfigError(f"indicator overrides for unknown kinds: {unknown}")
    return specs


# ---------------------------------------------------------------------------
# featurize pipeline (kept as a function so tests can run it without a shell)


def run_featurize(
    bars_text: str,
    news_path: Optional[Path],
    cfg: RunConfig,
    symbol: Optional[str] = None,
) -> tuple[FeatureFrame, dict]:
    series = parse_bars_csv(bars_text, symbol=symbol or "")
    smoothed = smooth_series(series, SmoothingParams(cfg["smoothing"]["alpha"]))
    columns = compute_all(smoothed, _build_specs(cfg))
    labels = make_labels(series, LabelSpec(cfg["label"]["horizon"]))

    provider = _make_provider(cfg)
    daily = None
    if provider is not None:
        if news_path is None:
            raise ValidationError(
                "a news file is required unless sentiment.provider is 'none'"
            )
        items = load_news_jsonl(news_path, symbol=symbol)
        scores = score_items(provider, items, cfg["sentiment"]["parallelism"])
        daily = aggregate_daily(
            list(zip(items, scores)), series.dates, cfg["sentiment"]["decay"]
        )

    from .features import assemble  # local import keeps module load cheap

    frame = assemble(series.dates, columns, daily, labels)
    n_train = train_row_count(frame.n_rows, cfg["split"]["train_fraction"])
    pruned, prune_report = prune_correlated(frame, cfg["prune"]["threshold"], n_train)
    ridge = ridge_fit(pruned.rows(0, n_train), cfg["ridge"]["lambda"])

    pca_info = None
    final = pruned
    if cfg["pca"]["enabled"]:
        transform = fit_pca(pruned.rows(0, n_train), cfg["pca"]["variance_target"])
        final = apply_pca(transform, pruned)
        pca_info = {
            "n_components": int(transform.components.shape[0]),
            "explained_variance_ratio": [
                float(x) for x in transform.explained_variance_ratio
            ],
        }

    report = {
        "pre_prune_columns": list(frame.names),
        "warm_up": series.dates.index(frame.dates[0]),
        "rows": frame.n_rows,
        "n_train": n_train,
        "label_horizon": cfg["label"]["horizon"],
        "prune": {
            "threshold": prune_report.threshold,
            "kept": prune_report.kept,
            "dropped": [
                {
                    "name": d.name,
                    "partner": d.partner,
                    "correlation": d.correlation,
                    "reason": d.reason,
                }
                for d in prune_report.dropped
            ],
        },
        "ridge": {
            "lambda": ridge.lam,
            "intercept": ridge.intercept,
            "coefficients": {
                name: float(c) for name, c in zip(ridge.names, ridge.coefficients)
            },
        },
        "pca": pca_info,
        "notes": [
            "prices ingested as returned by the daily endpoint (no split/dividend adjustment)",
        ],
    }
    return final, report


# ---------------------------------------------------------------------------
# commands


def cmd_fetch(args) -> int:
    cfg = _load_config(args)
    api_key = args.api_key or os.environ.get("ALPHAVANTAGE_API_KEY", "")
    client = AlphaVantageClient(
        api_key=api_key,
        cache_dir=Path(cfg["fetch"]["cache_dir"]),
        min_interval=cfg["fetch"]["min_interval"],
        retries=cfg["fetch"]["retries"],
        timeout=cfg["fetch"]["timeout"],
    )
    result = client.fetch_daily(args.symbol)
    if result.stale:
        print(
            f"warning: network unavailable, serving stale cache for {args.symbol}",
            file=sys.stderr,
        )
    if args.out:
        Path(args.out).write_text(serialize_bars_csv(result.series), encoding="utf-8")
    print(f"{args.symbol}: {len(result.series)} bars", file=sys.stderr)
    return EXIT_OK


def cmd_featurize(args) -> int:
    cfg = _load_config(args)
    bars_path = Path(args.bars)
    news_path = Path(args.news) if args.news else None
    frame, report = run_featurize(
        bars_path.read_text(encoding="utf-8"), news_path, cfg, symbol=args.symbol
    )
    inputs = {"bars": bars_path}
    if news_path is not None:
        inputs["news"] = news_path
    report["provenance"] = _provenance(cfg, inputs)
    Path(args.out).write_text(frame_to_csv(frame), encoding="utf-8")
    if args.report:
        Path(args.report).write_text(_dump_json(report), encoding="utf-8")
    print(f"featurized {frame.n_rows} rows x {len(frame.names)} columns", file=sys.stderr)
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _load_config(args)
    frame_path = Path(args.frame)
    frame = frame_from_csv(frame_path.read_text(encoding="utf-8"))
    train, _ = chronological_split(frame, cfg["split"]["train_fraction"])
    result = random_search(
        train,
        SearchSpace(),
        n_trials=cfg["search"]["trials"],
        k=cfg["cv"]["folds"],
        seed=cfg["search"].get("seed", cfg.seed),
        workers=cfg["workers"],
    )
    doc = search_to_dict(result)
    doc["provenance"] = _provenance(cfg, {"frame": frame_path})
    Path(args.out).write_text(_dump_json(doc), encoding="utf-8")
    best = result.best
    print(
        f"best of {len(result.trials)} trials: {best.n_trees} trees, "
        f"depth {best.max_depth}, mean AUC {result.trials[result.best_index].mean_auc:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def _params_from_search(path: Path, seed: int) -> HyperParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        best = doc["best"]
        mf = best["max_features"]
        return HyperParams(
            n_trees=int(best["n_trees"]),
            max_depth=None if best["max_depth"] is None else int(best["max_depth"]),
            min_samples_split=int(best["min_samples_split"]),
            min_samples_leaf=int(best["min_samples_leaf"]),
            max_features=mf if isinstance(mf, str) else float(mf),
            seed=seed,
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed search result {path}: {exc}") from None


def cmd_train(args) -> int:
    cfg = _load_config(args)
    frame_path = Path(args.frame)
    frame = frame_from_csv(frame_path.read_text(encoding="utf-8"))
    train, _ = chronological_split(frame, cfg["split"]["train_fraction"])
    if args.search:
        params = _params_from_search(Path(args.search), cfg.seed)
    else:
        params = cfg.hyperparams()
    model = train_forest(train, params, workers=cfg["workers"])
    inputs = {"frame": frame_path}
    if args.search:
        inputs["search"] = Path(args.search)
    Path(args.out).write_text(
        model_to_json(model, extra={"provenance": _provenance(cfg, inputs)}),
        encoding="utf-8",
    )
    print(f"trained {params.n_trees} trees on {train.n_rows} rows", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    frame_path = Path(args.frame)
    model_path = Path(args.model)
    frame = frame_from_csv(frame_path.read_text(encoding="utf-8"))
    model = model_from_json(model_path.read_text(encoding="utf-8"))
    _, test = chronological_split(frame, cfg["split"]["train_fraction"])
    report = evaluate_model(
        model, test, model_id=model_path.name, dataset_id=args.dataset_id or frame_path.name
    )
    doc = report_to_dict(report)
    doc["provenance"] = _provenance(cfg, {"frame": frame_path, "model": model_path})
    Path(args.out).write_text(_dump_json(doc), encoding="utf-8")
    if args.roc_csv:
        Path(args.roc_csv).write_text(curve_to_csv(report.roc_points), encoding="utf-8")
    if args.pr_csv:
        Path(args.pr_csv).write_text(curve_to_csv(report.pr_points), encoding="utf-8")
    print(
        f"accuracy {report.accuracy:.4f}  precision {report.precision:.4f}  "
        f"recall {report.recall:.4f}  f1 {report.f1:.4f}  auc {report.auc:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    aug_path = Path(args.frame_augmented)
    tech_path = Path(args.frame_technical)
    frame_aug = frame_from_csv(aug_path.read_text(encoding="utf-8"))
    frame_tech = frame_from_csv(tech_path.read_text(encoding="utf-8"))
    tuning = TuningConfig(
        trials=cfg["compare"]["trials"],
        folds=cfg["cv"]["folds"],
        seed=cfg.seed,
        train_fraction=cfg["split"]["train_fraction"],
        base_params=cfg.hyperparams(),
        workers=cfg["workers"],
    )
    report = compare_models(frame_aug, frame_tech, tuning, dataset_id=args.dataset_id)
    doc = comparison_to_dict(report)
    doc["provenance"] = _provenance(
        cfg, {"frame_augmented": aug_path, "frame_technical": tech_path}
    )
    Path(args.out).write_text(_dump_json(doc), encoding="utf-8")
    table = comparison_table([report])
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_config_schema(args) -> int:
    sys.stdout.write(schema_json() + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="sentiforest", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--trials", type=int, help="override tuning trial count")
        p.add_argument("--horizon", type=int, help="override the label horizon")

    p = sub.add_parser("fetch", help="download daily bars into the cache")
    common(p)
    p.add_argument("--symbol", required=True)
    p.add_argument("--out", help="also write the series CSV here")
    p.add_argument("--api-key", help="falls back to $ALPHAVANTAGE_API_KEY")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("featurize", help="bars (+news) -> labeled feature frame CSV")
    common(p)
    p.add_argument("--bars", required=True, help="bar CSV path")
    p.add_argument("--news", help="news JSONL path")
    p.add_argument("--symbol", help="filter news items by ticker")
    p.add_argument("--out", required=True, help="feature frame CSV path")
    p.add_argument("--report", help="feature report JSON path")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("tune", help="random hyperparameter search on the train split")
    common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--out", required=True, help="search result JSON path")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("train", help="train a forest on the train split")
    common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--search", help="search result JSON to take params from")
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a model on the test split")
    common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="evaluation report JSON path")
    p.add_argument("--roc-csv", help="ROC curve points CSV path")
    p.add_argument("--pr-csv", help="PR curve points CSV path")
    p.add_argument("--dataset-id")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="technical-only vs sentiment-augmented")
    common(p)
    p.add_argument("--frame-augmented", required=True)
    p.add_argument("--frame-technical", required=True)
    p.add_argument("--out", required=True, help="comparison JSON path")
    p.add_argument("--table", help="text table output path")
    p.add_argument("--dataset-id", default="")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("config-schema", help="print the config JSON schema")
    p.set_defaults(func=cmd_config_schema)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NetworkError, ProviderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NETWORK


if __name__ == "__main__":
    sys.exit(main())
