"""Glue between feature tables and the estimators: one fitted artifact
per (algorithm, target kind, horizon), plus window construction for the
recurrent model. Training code only ever receives train/validation rows;
test rows enter exclusively at evaluation time."""

from __future__ import annotations

import numpy as np

from ..core import StudyConfig, named_seed
from ..errors import DataFormatError
from ..fusion import FeatureTable
from . import forest, lstm, mlp, persistence
from .artifact import ModelArtifact

ALGORITHMS = ("persistence", "rf", "mlp", "lstm")

_MODULES = {
    "persistence": persistence,
    "rf": forest,
    "mlp": mlp,
    "lstm": lstm,
}

# Column of the feature matrix holding the target's current value.
_CURRENT_COLUMN = {"toll": 0, "ttdiff": 3}


def rows_for_days(table: FeatureTable, days) -> np.ndarray:
    dates = table.dates()
    member = np.array([d in days for d in dates], dtype=bool)
    return np.flatnonzero(member)


def window_ready(table: FeatureTable, lookback: int) -> np.ndarray:
    """True where a row ends a full window of consecutive intervals.

    Runs break wherever the interval sequence jumps, so windows never
    cross a tolling-window boundary or a dropped row.
    """
    n = table.n_rows
    ready = np.zeros(n, dtype=bool)
    if n == 0:
        return ready
    run_id = np.zeros(n, dtype=np.int64)
    jumps = np.diff(table.interval) != 1
    run_id[1:] = np.cumsum(jumps)
    for i in range(lookback - 1, n):
        j = i - lookback + 1
        if run_id[i] == run_id[j]:
            ready[i] = True
    return ready


def build_windows(table: FeatureTable, lookback: int,
                  rows: np.ndarray) -> np.ndarray:
    """Stack (lookback, features) slices ending at each given row."""
    X = table.feature_matrix()
    out = np.empty((len(rows), lookback, X.shape[1]))
    for k, i in enumerate(rows):
        out[k] = X[i - lookback + 1:i + 1]
    return out


def model_seed(cfg: StudyConfig, algorithm: str, horizon: int) -> int:
    return named_seed(cfg.seed, "model", algorithm, cfg.target_kind,
                      f"h{horizon}")


def train_model(table: FeatureTable, split, algorithm: str, horizon: int,
                cfg: StudyConfig) -> ModelArtifact:
    """Fit one algorithm for one horizon on the train/validation rows."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    expected = table.schema_hash
    X = table.feature_matrix()
    y = table.target(horizon)
    train_idx = rows_for_days(table, split.train_days)
    val_idx = rows_for_days(table, split.validation_days)
    if len(train_idx) == 0:
        raise DataFormatError("no training rows for this split")
    seed = model_seed(cfg, algorithm, horizon)

    if algorithm == "persistence":
        est = persistence.PersistenceRegressor(
            feature_index=_CURRENT_COLUMN[cfg.target_kind]
        ).fit(X[train_idx], y[train_idx])
    elif algorithm == "rf":
        fp = cfg.forest
        est = forest.ForestRegressor(
            n_trees=fp.n_trees, max_depth=fp.max_depth, min_leaf=fp.min_leaf,
            features_per_split=fp.features_per_split, random_state=seed,
        ).fit(X[train_idx], y[train_idx])
    elif algorithm == "mlp":
        mp = cfg.mlp
        est = mlp.MlpRegressor(
            hidden=mp.hidden, l2=mp.l2, batch_size=mp.batch_size,
            epochs=mp.epochs, patience=mp.patience,
            learning_rate=mp.adam.learning_rate, beta1=mp.adam.beta1,
            beta2=mp.adam.beta2, adam_eps=mp.adam.eps, random_state=seed,
        ).fit(
            X[train_idx], y[train_idx],
            X[val_idx] if len(val_idx) else None,
            y[val_idx] if len(val_idx) else None,
        )
    else:
        lp = cfg.lstm
        ready = window_ready(table, lp.lookback)
        w_train = train_idx[ready[train_idx]]
        w_val = val_idx[ready[val_idx]]
        if len(w_train) == 0:
            raise DataFormatError(
                f"no training rows have {lp.lookback} consecutive intervals"
            )
        est = lstm.LstmRegressor(
            lookback=lp.lookback, hidden=lp.hidden, dense=lp.dense, l2=lp.l2,
            batch_size=lp.batch_size, epochs=lp.epochs, patience=lp.patience,
            learning_rate=lp.adam.learning_rate, beta1=lp.adam.beta1,
            beta2=lp.adam.beta2, adam_eps=lp.adam.eps, random_state=seed,
        ).fit(
            build_windows(table, lp.lookback, w_train), y[w_train],
            build_windows(table, lp.lookback, w_val) if len(w_val) else None,
            y[w_val] if len(w_val) else None,
        )

    arrays, meta = _MODULES[algorithm].to_payload(est)
    meta = dict(meta)
    meta["train_rows"] = int(len(train_idx))
    meta["validation_rows"] = int(len(val_idx))
    return ModelArtifact(
        algorithm=algorithm,
        target_kind=cfg.target_kind,
        horizon=horizon,
        schema_hash=expected,
        seed=seed,
        arrays=arrays,
        meta=meta,
    )


def estimator_from_artifact(artifact: ModelArtifact):
    module = _MODULES.get(artifact.algorithm)
    if module is None:
        raise DataFormatError(f"unknown algorithm {artifact.algorithm!r}")
    return module.from_payload(artifact.arrays, artifact.meta)


def predict_rows(artifact: ModelArtifact, table: FeatureTable,
                 rows=None) -> np.ndarray:
    """Predictions aligned to the requested rows (default: all).

    Rows the model cannot serve (recurrent lookback not yet filled)
    come back NaN.
    """
    artifact.require_schema(table.schema_hash)
    if artifact.target_kind != table.target_kind:
        raise DataFormatError(
            f"artifact targets {artifact.target_kind!r}, table holds "
            f"{table.target_kind!r}"
        )
    est = estimator_from_artifact(artifact)
    if rows is None:
        rows = np.arange(table.n_rows)
    rows = np.asarray(rows, dtype=np.int64)
    X = table.feature_matrix()
    if artifact.algorithm == "lstm":
        lookback = est.lookback
        ready = window_ready(table, lookback)
        out = np.full(len(rows), np.nan)
        good = ready[rows]
        if good.any():
            windows = build_windows(table, lookback, rows[good])
            out[good] = est.predict(windows)
        return out
    return est.predict(X[rows])
