"""Split protocol, prediction metrics, error distributions, and report
files comparing every model against the persistence baseline."""

from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from .core import HORIZONS, StudyConfig, named_rng
from .errors import DataFormatError
from .fusion import FeatureTable
from .models import predict_rows, rows_for_days


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint train/validation/test day sets covering the dataset."""

    train_days: frozenset
    validation_days: frozenset
    test_days: frozenset
    seed: int

    def __post_init__(self):
        if (self.train_days & self.validation_days
                or self.train_days & self.test_days
                or self.validation_days & self.test_days):
            raise ValueError("split day sets overlap")


def make_split(days, seed: int, validation_days: int = 21,
               test_days_per_month: int = 2) -> SplitAssignment:
    """Partition dataset days into train/validation/test.

    Validation is the final `validation_days` calendar days of the span.
    Test draws `test_days_per_month` days uniformly (seeded, without
    replacement) from each calendar month's non-validation days; the
    remainder trains. A month with too few eligible days is an error.
    """
    days = sorted(set(days))
    if not days:
        raise DataFormatError("no dataset days given")
    months = sorted({(d.year, d.month) for d in days})
    if len(months) < 2:
        raise DataFormatError("dataset must span at least two calendar months")

    val_cutoff = days[-1] - timedelta(days=validation_days - 1)
    validation = frozenset(d for d in days if d >= val_cutoff)

    rng = named_rng(seed, "split")
    test = set()
    for year, month in months:
        eligible = [
            d for d in days
            if (d.year, d.month) == (year, month) and d not in validation
        ]
        if len(eligible) < test_days_per_month:
            raise DataFormatError(
                f"month {year}-{month:02d} has only {len(eligible)} days "
                f"eligible for the test draw (needs {test_days_per_month})"
            )
        picks = rng.choice(len(eligible), size=test_days_per_month,
                           replace=False)
        test.update(eligible[i] for i in sorted(picks))
    train = frozenset(d for d in days if d not in validation and d not in test)
    return SplitAssignment(
        train_days=train,
        validation_days=validation,
        test_days=frozenset(test),
        seed=seed,
    )


@dataclass(frozen=True)
class Metrics:
    mae: float
    mape: float
    r2: float  # NaN marks the undefined (zero-variance) case


def compute_metrics(y, yhat, mape_guard: float = 0.0) -> Metrics:
    """MAE, MAPE, and R-squared about the mean of y.

    MAPE averages only entries with |y| >= mape_guard; R-squared is NaN
    when y has no variance.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {yhat.shape}")
    if y.size < 2:
        raise ValueError("need at least two points")
    err = y - yhat
    mae = float(np.mean(np.abs(err)))
    guarded = np.abs(y) >= mape_guard
    if guarded.any():
        mape = float(np.mean(np.abs(err[guarded]) / np.abs(y[guarded])))
    else:
        mape = float("nan")
    ss_res = float(np.sum(err ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return Metrics(mae=mae, mape=mape, r2=r2)


@dataclass(frozen=True)
class ErrorDistribution:
    """Five-number summary with Tukey whiskers at 1.5 IQR."""

    minimum: float
    whisker_low: float
    q1: float
    median: float
    q3: float
    whisker_high: float
    maximum: float
    outliers: int

    def __post_init__(self):
        chain = (self.minimum, self.whisker_low, self.q1, self.median,
                 self.q3, self.whisker_high, self.maximum)
        if any(a > b + 1e-12 for a, b in zip(chain, chain[1:])):
            raise ValueError(f"ordering violated: {chain}")


def error_distribution(errors) -> ErrorDistribution:
    """Box statistics of (actual - predicted) with interpolated quartiles.

    Whiskers sit at the most extreme points inside the 1.5 IQR fences;
    when every point on one side lies beyond the fence the whisker
    collapses onto the box edge.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.size < 4:
        raise ValueError("need at least four error values")
    q1, med, q3 = np.percentile(errors, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = errors[(errors >= lo_fence) & (errors <= hi_fence)]
    return ErrorDistribution(
        minimum=float(errors.min()),
        whisker_low=float(min(inside.min(), q1)),
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        whisker_high=float(max(inside.max(), q3)),
        maximum=float(errors.max()),
        outliers=int(np.sum((errors < lo_fence) | (errors > hi_fence))),
    )


@dataclass(frozen=True)
class EvaluationReport:
    """metrics[(algorithm, horizon, split)] plus per-pair error boxes."""

    metrics: dict  # (algorithm, horizon, split) -> Metrics
    distributions: dict  # (algorithm, horizon) -> ErrorDistribution
    daily: dict  # (algorithm, horizon, date) -> Metrics
    files: tuple


def _fmt(x: float) -> str:
    return repr(float(x))


def evaluate_suite(artifacts, table: FeatureTable, split: SplitAssignment,
                   out_dir, cfg: StudyConfig, splits=("test",),
                   svg: bool = False) -> EvaluationReport:
    """Score every artifact on the test rows and write the report CSVs.

    Emits metrics.csv, errors_boxstats.csv, metrics_daily.csv, and the
    toll-versus-time-savings scatter CSV; with svg=True also standalone
    charts carrying the same numbers.
    """
    os.makedirs(out_dir, exist_ok=True)
    by_algo: dict = {}
    for art in artifacts:
        art.require_schema(table.schema_hash)
        by_algo.setdefault(art.algorithm, {})[art.horizon] = art
    for algo, horizons in by_algo.items():
        missing = [h for h in HORIZONS if h not in horizons]
        if missing:
            raise DataFormatError(
                f"{algo} artifacts missing horizons {missing}"
            )
    if "persistence" not in by_algo:
        raise DataFormatError("persistence baseline artifacts are required")

    guard = cfg.mape_guard
    dates = np.array(table.dates())
    row_sets = {}
    if "test" in splits:
        row_sets["test"] = rows_for_days(table, split.test_days)
    if "train" in splits:
        row_sets["train"] = rows_for_days(table, split.train_days)

    metrics: dict = {}
    distributions: dict = {}
    daily: dict = {}
    algos = sorted(by_algo)
    for algo in algos:
        for h in HORIZONS:
            art = by_algo[algo][h]
            preds_all = {
                name: predict_rows(art, table, rows)
                for name, rows in row_sets.items()
            }
            for name, rows in row_sets.items():
                y = table.target(h)[rows]
                yhat = preds_all[name]
                ok = ~np.isnan(yhat)
                if ok.sum() < 2:
                    raise DataFormatError(
                        f"{algo} h={h} has fewer than two scorable rows"
                    )
                metrics[(algo, h, name)] = compute_metrics(
                    y[ok], yhat[ok], guard
                )
                if name == "test":
                    distributions[(algo, h)] = error_distribution(
                        y[ok] - yhat[ok]
                    )
                    for day in sorted(set(dates[rows][ok])):
                        sel = dates[rows][ok] == day
                        if sel.sum() >= 2:
                            daily[(algo, h, day)] = compute_metrics(
                                y[ok][sel], yhat[ok][sel], guard
                            )

    files = []

    metrics_path = os.path.join(out_dir, "metrics.csv")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write("algorithm,horizon_min,split,mae,mape,r2\n")
        for name in splits:
            for algo in algos:
                for h in HORIZONS:
                    m = metrics[(algo, h, name)]
                    fh.write(
                        f"{algo},{6 * h},{name},{_fmt(m.mae)},"
                        f"{_fmt(m.mape)},{_fmt(m.r2)}\n"
                    )
    files.append(metrics_path)

    box_path = os.path.join(out_dir, "errors_boxstats.csv")
    with open(box_path, "w", encoding="utf-8") as fh:
        fh.write(
            "algorithm,horizon_min,min,whisker_low,q1,median,q3,"
            "whisker_high,max,outliers\n"
        )
        for algo in algos:
            for h in HORIZONS:
                d = distributions[(algo, h)]
                fh.write(
                    f"{algo},{6 * h},{_fmt(d.minimum)},{_fmt(d.whisker_low)},"
                    f"{_fmt(d.q1)},{_fmt(d.median)},{_fmt(d.q3)},"
                    f"{_fmt(d.whisker_high)},{_fmt(d.maximum)},{d.outliers}\n"
                )
    files.append(box_path)

    daily_path = os.path.join(out_dir, "metrics_daily.csv")
    with open(daily_path, "w", encoding="utf-8") as fh:
        fh.write("algorithm,horizon_min,date,mae,mape,r2\n")
        for (algo, h, day), m in sorted(
            daily.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])
        ):
            fh.write(
                f"{algo},{6 * h},{day.isoformat()},{_fmt(m.mae)},"
                f"{_fmt(m.mape)},{_fmt(m.r2)}\n"
            )
    files.append(daily_path)

    scatter_path = os.path.join(out_dir, "scatter_toll_vs_ttdiff.csv")
    with open(scatter_path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,toll_dollars,tt_diff_min\n")
        timestamps = table.timestamps()
        for i in range(table.n_rows):
            fh.write(
                f"{timestamps[i]:%Y-%m-%dT%H:%M},"
                f"{table.toll_cents[i] / 100:.2f},"
                f"{_fmt(table.tt_diff[i])}\n"
            )
    files.append(scatter_path)

    if svg:
        from . import charts

        for metric in ("mae", "mape", "r2"):
            path = os.path.join(out_dir, f"metrics_{metric}.svg")
            charts.metric_bars(metrics, algos, metric, splits[0], path)
            files.append(path)
        path = os.path.join(out_dir, "errors_box.svg")
        charts.error_boxes(distributions, algos, path)
        files.append(path)

    return EvaluationReport(
        metrics=metrics,
        distributions=distributions,
        daily=daily,
        files=tuple(files),
    )
