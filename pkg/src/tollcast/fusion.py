"""Fuse raw feeds into route travel times, a 6-minute volume series,
travel-time differences, and the per-interval feature table.

Missing values are NaN throughout; a feature row only exists where every
current feature and all five horizon targets are present inside the same
day's tolling window.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .core import (
    HORIZONS,
    Money,
    RouteSpec,
    StudyConfig,
    TimeGrid,
    format_timestamp,
    tolling_intervals,
)
from .errors import DataFormatError, EmptyTableError

BASE_FEATURES = (
    "toll_cents",
    "tt_toll_min",
    "tt_alt_best_min",
    "tt_diff_min",
    "volume_veh",
)
CALENDAR_FEATURES = ("minute_of_day", "day_of_week")

_UNITS = {
    "toll_cents": "cents",
    "tt_toll_min": "min",
    "tt_alt_best_min": "min",
    "tt_diff_min": "min",
    "volume_veh": "veh/6min",
    "minute_of_day": "min",
    "day_of_week": "iso0-6",
}

CSV_COLUMNS = (
    "interval", "timestamp", "toll_cents", "tt_toll_min", "tt_alt_best_min",
    "tt_diff_min", "volume_veh", "minute_of_day", "day_of_week",
    "target_h1", "target_h2", "target_h3", "target_h4", "target_h5",
)


def feature_columns(calendar: bool) -> tuple:
    return BASE_FEATURES + (CALENDAR_FEATURES if calendar else ())


def schema_hash(columns, target_kind: str) -> str:
    """Digest over feature column names, units, order, and target kind."""
    text = "|".join(f"{c}[{_UNITS[c]}]" for c in columns)
    text += f"|target_kind={target_kind}"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def space_mean_speed(segments) -> float:
    """Length-weighted harmonic mean speed over (length_miles, speed_mph).

    Chosen so total length divided by this speed equals the sum of
    per-segment traversal times.
    """
    if len(segments) == 0:
        raise ValueError("empty segment list")
    total = 0.0
    hours = 0.0
    for length, speed in segments:
        if length <= 0:
            raise ValueError(f"segment length must be > 0, got {length}")
        if speed <= 0:
            raise ValueError(f"segment speed must be > 0, got {speed}")
        total += length
        hours += length / speed
    return total / hours


def route_travel_time(route: RouteSpec, speeds) -> float:
    """Route traversal minutes from per-segment speeds; NaN if any missing.

    Equals sum of per-segment (length / speed) * 60 by construction.
    """
    minutes = 0.0
    for seg_id, length in route.segments:
        v = speeds.get(seg_id, np.nan)
        if v is None or np.isnan(v):
            return float("nan")
        minutes += length / v * 60.0
    return minutes


def aggregate_minutes_to_interval(minute_speeds) -> float:
    """Arithmetic mean of the minute speeds inside one bin; NaN if none."""
    vals = [v for v in minute_speeds if not np.isnan(v)]
    if not vals:
        return float("nan")
    return float(np.mean(vals))


def resample_volume(period_counts, grid: TimeGrid) -> np.ndarray:
    """Map 15-minute lane-summed counts onto the 6-minute grid.

    Each period's total is read as a constant flow rate; a bin receives
    rate x bin length, overlap-weighted where a bin straddles periods.
    Bins touching a missing period stay NaN.
    """
    step = grid.step_minutes
    out = np.zeros(grid.interval_count)
    ok = np.ones(grid.interval_count, dtype=bool)
    counts = {}
    for start, count in period_counts.items():
        offset = (start - grid.start).total_seconds() / 60.0
        if offset % 15 != 0:
            raise DataFormatError(f"period start {start} not aligned to 15 min")
        counts[int(offset)] = float(count)
    for b in range(grid.interval_count):
        lo = b * step
        hi = lo + step
        p = (lo // 15) * 15
        while p < hi:
            overlap = min(hi, p + 15) - max(lo, p)
            if overlap > 0:
                if p in counts:
                    out[b] += counts[p] * overlap / 15.0
                else:
                    ok[b] = False
            p += 15
    out[~ok] = np.nan
    return out


def travel_time_difference(tt_toll: float, alternatives) -> float:
    """Fastest alternative's travel time minus the toll route's.

    Positive means the toll road is faster. NaN when the toll route's
    time or every alternative is missing.
    """
    if len(alternatives) == 0:
        raise ValueError("at least one alternative required")
    if np.isnan(tt_toll):
        return float("nan")
    present = [a for a in alternatives if not np.isnan(a)]
    if not present:
        return float("nan")
    return min(present) - tt_toll


def impute_series(series: np.ndarray, max_gap: int = 2) -> np.ndarray:
    """Forward-fill NaN runs of length <= max_gap; longer runs stay NaN."""
    out = np.array(series, dtype=float, copy=True)
    n = len(out)
    i = 0
    while i < n:
        if np.isnan(out[i]):
            j = i
            while j < n and np.isnan(out[j]):
                j += 1
            if i > 0 and (j - i) <= max_gap:
                out[i:j] = out[i - 1]
            i = j
        else:
            i += 1
    return out


@dataclass(frozen=True)
class FusedSeries:
    """All per-interval series on one grid, NaN where missing."""

    grid: TimeGrid
    toll_cents: np.ndarray  # float, NaN missing
    travel_times: dict  # route_id -> minutes array
    volume: np.ndarray


def fuse_feeds(cfg: StudyConfig, toll_records, speed_records,
               volume_records) -> FusedSeries:
    """Raw records -> imputed per-interval series for every route."""
    grid = cfg.grid
    n = grid.interval_count
    step = grid.step_minutes

    toll = np.full(n, np.nan)
    for r in toll_records:
        if r.entry_ramp_id != cfg.toll_entry or r.exit_ramp_id != cfg.toll_exit:
            continue
        if grid.start <= r.timestamp < grid.end:
            toll[grid.interval_of(r.timestamp)] = float(r.toll.cents)
    toll = impute_series(toll, cfg.impute_max_gap)

    # Mean of available minute speeds per (segment, bin), then imputation.
    seg_ids = [s for route in cfg.routes for s in route.segment_ids]
    seg_pos = {s: i for i, s in enumerate(seg_ids)}
    sums = np.zeros((len(seg_ids), n))
    cnts = np.zeros((len(seg_ids), n))
    span_minutes = n * step
    for r in speed_records:
        si = seg_pos.get(r.segment_id)
        if si is None:
            continue
        offset = (r.timestamp - grid.start).total_seconds() / 60.0
        if not 0 <= offset < span_minutes:
            continue
        b = int(offset // step)
        sums[si, b] += r.speed_mph
        cnts[si, b] += 1.0
    with np.errstate(invalid="ignore"):
        seg_speed = np.where(cnts > 0, sums / np.maximum(cnts, 1.0), np.nan)
    for i in range(len(seg_ids)):
        seg_speed[i] = impute_series(seg_speed[i], cfg.impute_max_gap)

    travel_times = {}
    for route in cfg.routes:
        lengths = np.array([l for _, l in route.segments])
        rows = [seg_pos[s] for s in route.segment_ids]
        v = seg_speed[rows, :]
        tt = (lengths[:, None] / v * 60.0).sum(axis=0)
        travel_times[route.route_id] = tt

    periods = {}
    for r in volume_records:
        if cfg.synth.volume_station and r.station_id != cfg.synth.volume_station:
            continue
        periods[r.period_start] = periods.get(r.period_start, 0.0) + r.count
    volume = resample_volume(periods, grid)
    volume = impute_series(volume, cfg.impute_max_gap)

    return FusedSeries(grid=grid, toll_cents=toll,
                       travel_times=travel_times, volume=volume)


@dataclass(frozen=True)
class FeatureRow:
    """One fused interval with its per-horizon targets."""

    interval: int
    timestamp: datetime
    toll_cents: int
    tt_toll: float
    tt_alt_best: float
    tt_diff: float
    volume: float
    minute_of_day: int
    day_of_week: int
    targets: tuple  # five values, horizon order

    @property
    def toll_now(self) -> Money:
        return Money(self.toll_cents)


@dataclass(frozen=True)
class FeatureTable:
    """Per-interval rows, strictly increasing by interval, no missing values."""

    target_kind: str
    schema_hash: str
    grid: TimeGrid
    calendar_features: bool
    interval: np.ndarray
    toll_cents: np.ndarray
    tt_toll: np.ndarray
    tt_alt_best: np.ndarray
    tt_diff: np.ndarray
    volume: np.ndarray
    minute_of_day: np.ndarray
    day_of_week: np.ndarray
    targets: np.ndarray  # (n, 5)

    @property
    def n_rows(self) -> int:
        return len(self.interval)

    def timestamps(self):
        return [self.grid.timestamp_of(int(i)) for i in self.interval]

    def dates(self):
        return [ts.date() for ts in self.timestamps()]

    def feature_names(self) -> tuple:
        return feature_columns(self.calendar_features)

    def feature_matrix(self) -> np.ndarray:
        cols = [
            self.toll_cents.astype(float),
            self.tt_toll,
            self.tt_alt_best,
            self.tt_diff,
            self.volume,
        ]
        if self.calendar_features:
            cols.append(self.minute_of_day.astype(float))
            cols.append(self.day_of_week.astype(float))
        return np.column_stack(cols)

    def current_value(self) -> np.ndarray:
        """The quantity persistence extends: current toll or tt_diff."""
        if self.target_kind == "toll":
            return self.toll_cents.astype(float)
        return self.tt_diff.copy()

    def target(self, horizon: int) -> np.ndarray:
        return self.targets[:, horizon - 1].copy()

    def row(self, i: int) -> FeatureRow:
        return FeatureRow(
            interval=int(self.interval[i]),
            timestamp=self.grid.timestamp_of(int(self.interval[i])),
            toll_cents=int(self.toll_cents[i]),
            tt_toll=float(self.tt_toll[i]),
            tt_alt_best=float(self.tt_alt_best[i]),
            tt_diff=float(self.tt_diff[i]),
            volume=float(self.volume[i]),
            minute_of_day=int(self.minute_of_day[i]),
            day_of_week=int(self.day_of_week[i]),
            targets=tuple(float(t) for t in self.targets[i]),
        )


def build_feature_table(cfg: StudyConfig, fused: FusedSeries) -> FeatureTable:
    """One row per tolling-window interval of the peak direction whose
    features and all five horizon targets exist inside the same window.

    Raises EmptyTableError (with per-cause drop counts) if nothing survives.
    """
    grid = fused.grid
    direction = cfg.direction
    in_window = tolling_intervals(grid, cfg.windows, direction)
    window_set = set(in_window)

    tt_toll = fused.travel_times[cfg.toll_route.route_id]
    alt_ids = [r.route_id for r in cfg.alternatives]
    alt_matrix = np.vstack([fused.travel_times[rid] for rid in alt_ids])
    with np.errstate(invalid="ignore"):
        any_alt = ~np.all(np.isnan(alt_matrix), axis=0)
        tt_alt_best = np.where(any_alt, np.nanmin(
            np.where(np.isnan(alt_matrix), np.inf, alt_matrix), axis=0), np.nan)
    tt_diff = tt_alt_best - tt_toll

    if cfg.target_kind == "toll":
        target_series = fused.toll_cents
    else:
        target_series = tt_diff
    guard = cfg.mape_guard

    drops = {
        "missing_feature": 0,
        "missing_target": 0,
        "target_outside_window": 0,
        "target_below_mape_guard": 0,
    }
    keep = []
    rows_targets = []
    for idx in in_window:
        current = (
            fused.toll_cents[idx], tt_toll[idx], tt_alt_best[idx],
            tt_diff[idx], fused.volume[idx],
        )
        if any(np.isnan(v) for v in current):
            drops["missing_feature"] += 1
            continue
        horizon_ok = True
        targets = []
        for h in HORIZONS:
            t_idx = idx + h
            if t_idx >= grid.interval_count or t_idx not in window_set:
                drops["target_outside_window"] += 1
                horizon_ok = False
                break
            val = target_series[t_idx]
            if np.isnan(val):
                drops["missing_target"] += 1
                horizon_ok = False
                break
            if abs(val) < guard:
                drops["target_below_mape_guard"] += 1
                horizon_ok = False
                break
            targets.append(float(val))
        if not horizon_ok:
            continue
        keep.append(idx)
        rows_targets.append(targets)

    if not keep:
        raise EmptyTableError(
            "feature table is empty; drop counts: "
            + ", ".join(f"{k}={v}" for k, v in drops.items()),
            drop_counts=drops,
        )

    keep_arr = np.array(keep, dtype=np.int64)
    timestamps = [grid.timestamp_of(int(i)) for i in keep_arr]
    columns = feature_columns(cfg.calendar_features)
    return FeatureTable(
        target_kind=cfg.target_kind,
        schema_hash=schema_hash(columns, cfg.target_kind),
        grid=grid,
        calendar_features=cfg.calendar_features,
        interval=keep_arr,
        toll_cents=np.array(
            [int(round(fused.toll_cents[i])) for i in keep_arr], dtype=np.int64
        ),
        tt_toll=tt_toll[keep_arr].astype(float),
        tt_alt_best=tt_alt_best[keep_arr].astype(float),
        tt_diff=tt_diff[keep_arr].astype(float),
        volume=fused.volume[keep_arr].astype(float),
        minute_of_day=np.array(
            [ts.hour * 60 + ts.minute for ts in timestamps], dtype=np.int64
        ),
        day_of_week=np.array([ts.weekday() for ts in timestamps], dtype=np.int64),
        targets=np.array(rows_targets, dtype=float),
    )


def write_feature_csv(table: FeatureTable, path, config_digest: str = "") -> None:
    """Write the table CSV plus a sidecar metadata JSON next to it."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        timestamps = table.timestamps()
        for i in range(table.n_rows):
            parts = [
                str(int(table.interval[i])),
                format_timestamp(timestamps[i]),
                str(int(table.toll_cents[i])),
                repr(float(table.tt_toll[i])),
                repr(float(table.tt_alt_best[i])),
                repr(float(table.tt_diff[i])),
                repr(float(table.volume[i])),
                str(int(table.minute_of_day[i])),
                str(int(table.day_of_week[i])),
            ]
            parts += [repr(float(t)) for t in table.targets[i]]
            fh.write(",".join(parts) + "\n")
    meta = {
        "schema_hash": table.schema_hash,
        "target_kind": table.target_kind,
        "config_digest": config_digest,
        "grid_start": format_timestamp(table.grid.start),
        "step_minutes": table.grid.step_minutes,
        "interval_count": table.grid.interval_count,
        "calendar_features": table.calendar_features,
        "columns": list(CSV_COLUMNS),
        "n_rows": table.n_rows,
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar_path(path) -> str:
    return f"{os.fspath(path)}.meta.json"


def read_feature_csv(path) -> FeatureTable:
    """Read a table CSV and its sidecar; validates the stored schema hash."""
    try:
        with open(_sidecar_path(path), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise DataFormatError(
            f"missing feature table sidecar {_sidecar_path(path)}: {exc}"
        ) from exc
    grid = TimeGrid(
        start=datetime.fromisoformat(meta["grid_start"]),
        step_minutes=meta["step_minutes"],
        interval_count=meta["interval_count"],
    )
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.split(",") != list(CSV_COLUMNS):
            raise DataFormatError(f"unexpected feature CSV header in {path}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not rows:
        raise DataFormatError(f"feature table {path} has no rows")
    n = len(rows)
    interval = np.array([int(r[0]) for r in rows], dtype=np.int64)
    table = FeatureTable(
        target_kind=meta["target_kind"],
        schema_hash=meta["schema_hash"],
        grid=grid,
        calendar_features=bool(meta["calendar_features"]),
        interval=interval,
        toll_cents=np.array([int(r[2]) for r in rows], dtype=np.int64),
        tt_toll=np.array([float(r[3]) for r in rows]),
        tt_alt_best=np.array([float(r[4]) for r in rows]),
        tt_diff=np.array([float(r[5]) for r in rows]),
        volume=np.array([float(r[6]) for r in rows]),
        minute_of_day=np.array([int(r[7]) for r in rows], dtype=np.int64),
        day_of_week=np.array([int(r[8]) for r in rows], dtype=np.int64),
        targets=np.array([[float(v) for v in r[9:14]] for r in rows]),
    )
    expected = schema_hash(
        feature_columns(table.calendar_features), table.target_kind
    )
    if expected != table.schema_hash:
        raise DataFormatError(
            f"sidecar schema hash {table.schema_hash[:12]} does not match "
            f"recomputed {expected[:12]}"
        )
    if n > 1 and not np.all(np.diff(interval) > 0):
        raise DataFormatError("feature table intervals are not strictly increasing")
    return table
