"""Time discretization, tolling calendar, routes, money, and study configuration.

All timestamps are naive local wall-clock datetimes (single corridor
timezone). The grid is built from wall-clock bins, so every labeled
minute occurs exactly once and bins are uniform in wall-clock deltas.
Everything here is immutable after construction and safe to share.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta

import numpy as np

from .errors import ConfigError, GridRangeError

STEP_MINUTES = 6
HORIZONS = (1, 2, 3, 4, 5)
WEEKDAYS = frozenset(range(5))
ALL_DAYS = frozenset(range(7))
TARGET_KINDS = ("toll", "ttdiff")


def horizon_minutes(h: int) -> int:
    """Lead time in minutes for horizon index h (1..5 -> 6..30)."""
    if h not in HORIZONS:
        raise ValueError(f"horizon must be in {HORIZONS}, got {h}")
    return STEP_MINUTES * h


def named_rng(seed: int, *names: str) -> np.random.Generator:
    """Child generator derived from the run seed and a stable name path.

    Every source of randomness in the pipeline draws from one of these,
    so components are independently reproducible from the single seed.
    """
    key = tuple(
        int.from_bytes(hashlib.sha256(n.encode("utf-8")).digest()[:4], "big")
        for n in names
    )
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def named_seed(seed: int, *names: str) -> int:
    """Stable 63-bit integer sub-seed for the given name path."""
    return int(named_rng(seed, *names).integers(0, 2**63 - 1))


@dataclass(frozen=True, order=True)
class Money:
    """Non-negative USD amount in integer cents; arithmetic is exact."""

    cents: int

    def __post_init__(self):
        if not isinstance(self.cents, int):
            raise ValueError(f"cents must be an integer, got {self.cents!r}")
        if self.cents < 0:
            raise ValueError(f"cents must be >= 0, got {self.cents}")

    def __add__(self, other: "Money") -> "Money":
        return Money(self.cents + other.cents)

    def __sub__(self, other: "Money") -> "Money":
        return Money(self.cents - other.cents)

    @property
    def dollars(self) -> float:
        """Real-dollar value; use only at metric/report boundaries."""
        return self.cents / 100.0

    def __str__(self) -> str:
        return f"${self.cents // 100}.{self.cents % 100:02d}"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform 6-minute discretization starting at a local wall-clock time."""

    start: datetime
    step_minutes: int = STEP_MINUTES
    interval_count: int = 0

    def __post_init__(self):
        if self.step_minutes <= 0 or 1440 % self.step_minutes != 0:
            raise ConfigError(
                f"step_minutes must divide 1440, got {self.step_minutes}"
            )
        if self.interval_count <= 0:
            raise ConfigError(
                f"interval_count must be positive, got {self.interval_count}"
            )

    @property
    def step(self) -> timedelta:
        return timedelta(minutes=self.step_minutes)

    @property
    def end(self) -> datetime:
        return self.start + self.interval_count * self.step

    @property
    def intervals_per_day(self) -> int:
        return 1440 // self.step_minutes

    def interval_of(self, ts: datetime) -> int:
        if ts < self.start or ts >= self.end:
            raise GridRangeError(
                f"timestamp {ts.isoformat()} outside grid span "
                f"[{self.start.isoformat()}, {self.end.isoformat()})"
            )
        delta = ts - self.start
        return int(delta.total_seconds() // (self.step_minutes * 60))

    def timestamp_of(self, index: int) -> datetime:
        if not 0 <= index < self.interval_count:
            raise GridRangeError(
                f"interval {index} outside [0, {self.interval_count})"
            )
        return self.start + index * self.step

    def days(self) -> list[date]:
        """Calendar dates touched by the grid, in order."""
        out = []
        d = self.start.date()
        while datetime.combine(d, time.min) < self.end:
            out.append(d)
            d += timedelta(days=1)
        return out


def interval_of(ts: datetime, grid: TimeGrid) -> int:
    """Grid bin index containing ts; raises GridRangeError out of span."""
    return grid.interval_of(ts)


def timestamp_of(index: int, grid: TimeGrid) -> datetime:
    """Bin start timestamp of the given interval index."""
    return grid.timestamp_of(index)


@dataclass(frozen=True)
class TollingWindow:
    """Daily tolled period for one travel direction."""

    direction: str
    daily_start: time
    daily_end: time
    active_days: frozenset = WEEKDAYS

    def __post_init__(self):
        if self.direction not in ("EB", "WB"):
            raise ConfigError(f"direction must be EB or WB, got {self.direction!r}")
        if not self.daily_start < self.daily_end:
            raise ConfigError(
                f"window start {self.daily_start} must precede end {self.daily_end}"
            )

    def covers(self, ts: datetime) -> bool:
        return (
            ts.weekday() in self.active_days
            and self.daily_start <= ts.time() < self.daily_end
        )


def is_tolling(ts: datetime, direction: str, windows) -> bool:
    """True iff ts falls inside an active tolling window for the direction."""
    return any(w.direction == direction and w.covers(ts) for w in windows)


def tolling_intervals(grid: TimeGrid, windows, direction: str) -> list[int]:
    """Grid indices whose bin start lies inside a tolling window."""
    mine = [w for w in windows if w.direction == direction]
    out = []
    for idx in range(grid.interval_count):
        ts = grid.timestamp_of(idx)
        if any(w.covers(ts) for w in mine):
            out.append(idx)
    return out


@dataclass(frozen=True)
class RouteSpec:
    """Directed route as an ordered list of (segment_id, length_miles)."""

    route_id: str
    direction: str
    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise ConfigError(f"route {self.route_id} has no segments")
        ids = [s for s, _ in self.segments]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"route {self.route_id} repeats a segment id")
        for seg_id, length in self.segments:
            if length <= 0:
                raise ConfigError(
                    f"segment {seg_id} length must be > 0, got {length}"
                )

    @property
    def total_length(self) -> float:
        return float(sum(l for _, l in self.segments))

    @property
    def segment_ids(self) -> tuple:
        return tuple(s for s, _ in self.segments)


# Model hyperparameter bundles (carried by StudyConfig, used by models.*).

@dataclass(frozen=True)
class AdamParams:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class ForestParams:
    """Bootstrap-aggregated regression trees with per-node feature sampling."""

    n_trees: int = 200
    max_depth: int = 12
    min_leaf: int = 5
    features_per_split: int = 0  # 0 means ceil(p / 3) at fit time

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")


@dataclass(frozen=True)
class MlpParams:
    """Feed-forward net: exactly four hidden ELU layers with batch norm."""

    hidden: tuple = (64, 64, 32, 16)
    l2: float = 1e-4
    batch_size: int = 64
    epochs: int = 200
    patience: int = 15
    adam: AdamParams = field(default_factory=AdamParams)

    def __post_init__(self):
        if len(self.hidden) != 4:
            raise ConfigError(
                f"mlp.hidden must list exactly 4 widths, got {self.hidden}"
            )
        if self.l2 < 0:
            raise ConfigError("mlp.l2 must be >= 0")


@dataclass(frozen=True)
class LstmParams:
    """One recurrent layer, then three dense ELU layers, then linear output."""

    lookback: int = 10
    hidden: int = 32
    dense: tuple = (32, 16, 8)
    l2: float = 0.0
    batch_size: int = 64
    epochs: int = 200
    patience: int = 15
    adam: AdamParams = field(default_factory=AdamParams)

    def __post_init__(self):
        if self.lookback < 1:
            raise ConfigError(f"lstm.lookback must be >= 1, got {self.lookback}")
        if len(self.dense) != 3:
            raise ConfigError(
                f"lstm.dense must list exactly 3 widths, got {self.dense}"
            )


@dataclass(frozen=True)
class SplitParams:
    validation_days: int = 21
    test_days_per_month: int = 2


@dataclass(frozen=True)
class RouteDemand:
    """Synthetic demand and supply knobs for one route."""

    base_vph: float
    peak_vph: float
    peak_minute: int
    width_min: float
    capacity_vph: float
    free_flow_mph: float


@dataclass(frozen=True)
class SynthParams:
    weekend_factor: float = 0.35
    demand_ar1: float = 0.85
    demand_sigma_vph: float = 150.0
    segment_jitter_mph: float = 1.2
    minute_jitter_mph: float = 0.4
    controller_gain_cents: float = 8.0
    controller_noise_cents: float = 20.0
    toll_min_cents: int = 50
    toll_max_cents: int = 4700
    toll_open_cents: int = 200
    volume_lanes: int = 2
    volume_station: str = "station_66"

    def __post_init__(self):
        if not 0 < self.toll_min_cents < self.toll_max_cents:
            raise ConfigError("toll bounds must satisfy 0 < min < max")
        if not 0.0 <= self.demand_ar1 < 1.0:
            raise ConfigError("synth.demand_ar1 must lie in [0, 1)")


@dataclass(frozen=True)
class StudyConfig:
    """Everything a run needs: grid, routes, windows, targets, model knobs."""

    seed: int
    grid: TimeGrid
    target_kind: str
    toll_route: RouteSpec
    alternatives: tuple
    windows: tuple
    toll_entry: str
    toll_exit: str
    calendar_features: bool
    impute_max_gap: int
    mape_guard_toll: float
    mape_guard_ttdiff: float
    demand: dict  # route_id -> RouteDemand; treated as read-only
    forest: ForestParams
    mlp: MlpParams
    lstm: LstmParams
    split: SplitParams
    synth: SynthParams

    def __post_init__(self):
        if self.target_kind not in TARGET_KINDS:
            raise ConfigError(
                f"target_kind must be one of {TARGET_KINDS}, got {self.target_kind!r}"
            )
        if not self.alternatives:
            raise ConfigError("at least one alternative route is required")
        seen = set()
        for route in self.routes:
            for seg in route.segment_ids:
                if seg in seen:
                    raise ConfigError(f"segment {seg} appears in more than one route")
                seen.add(seg)
        dirs = {w.direction for w in self.windows}
        if "EB" in dirs and "WB" in dirs:
            eb = next(w for w in self.windows if w.direction == "EB")
            wb = next(w for w in self.windows if w.direction == "WB")
            if eb.daily_start < wb.daily_end and wb.daily_start < eb.daily_end:
                raise ConfigError("EB and WB tolling windows overlap")
        for route in self.routes:
            if route.route_id not in self.demand:
                raise ConfigError(f"no demand parameters for route {route.route_id}")

    @property
    def routes(self) -> tuple:
        return (self.toll_route,) + self.alternatives

    @property
    def direction(self) -> str:
        """Peak direction under study: the toll route's."""
        return self.toll_route.direction

    @property
    def mape_guard(self) -> float:
        return (
            self.mape_guard_toll
            if self.target_kind == "toll"
            else self.mape_guard_ttdiff
        )

    def window_for(self, direction: str) -> TollingWindow:
        for w in self.windows:
            if w.direction == direction:
                return w
        raise ConfigError(f"no tolling window configured for {direction}")


def _auto_segments(route_id: str, count: int, total_length: float) -> tuple:
    """Deterministic positive partition of a route into `count` segments.

    Depends only on (route_id, count, total_length) so route geometry is
    stable across run seeds.
    """
    digest = hashlib.sha256(
        f"{route_id}:{count}:{total_length!r}".encode("utf-8")
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    raw = rng.uniform(0.5, 1.5, count)
    lengths = raw / raw.sum() * total_length
    return tuple(
        (f"{route_id}_s{i:03d}", float(l)) for i, l in enumerate(lengths)
    )


_DEFAULT_ROUTES = {
    # id: (role, direction, length_miles, segment_count)
    "I66": ("toll", "EB", 11.0, 28),
    "GWPK": ("alternative", "EB", 14.2, 22),
    "US50": ("alternative", "EB", 12.6, 30),
}

_DEFAULT_DEMAND = {
    "I66": {"base_vph": 1200.0, "peak_vph": 2400.0, "capacity_vph": 4500.0,
            "free_flow_mph": 60.0},
    "GWPK": {"base_vph": 900.0, "peak_vph": 2600.0, "capacity_vph": 3200.0,
             "free_flow_mph": 48.0},
    "US50": {"base_vph": 950.0, "peak_vph": 2500.0, "capacity_vph": 3400.0,
             "free_flow_mph": 45.0},
}

_PEAK_MINUTE = {"EB": 450, "WB": 1020}  # 07:30 and 17:00


def _parse_bool(key, raw):
    if raw.lower() in ("true", "yes", "1", "on"):
        return True
    if raw.lower() in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _parse_int(key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected integer, got {raw!r}") from None


def _parse_float(key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected number, got {raw!r}") from None


def _parse_time(key, raw):
    try:
        hh, mm = raw.split(":")
        return time(int(hh), int(mm))
    except Exception:
        raise ConfigError(f"{key}: expected HH:MM, got {raw!r}") from None


def _parse_datetime(key, raw):
    try:
        return datetime.fromisoformat(raw)
    except ValueError:
        raise ConfigError(
            f"{key}: expected YYYY-MM-DDTHH:MM, got {raw!r}"
        ) from None


def _parse_int_tuple(key, raw):
    try:
        return tuple(int(p.strip()) for p in raw.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated ints, got {raw!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse flat `key = value` lines; `#` starts a comment; blank lines ok."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


_SCALAR_KEYS = {
    "seed": ("seed", _parse_int),
    "target_kind": ("target_kind", str),
    "grid.start": ("grid_start", _parse_datetime),
    "grid.days": ("grid_days", _parse_int),
    "tolling.days": ("tolling_days", str),
    "tolling.eb.start": ("eb_start", _parse_time),
    "tolling.eb.end": ("eb_end", _parse_time),
    "tolling.wb.start": ("wb_start", _parse_time),
    "tolling.wb.end": ("wb_end", _parse_time),
    "toll.entry": ("toll_entry", str),
    "toll.exit": ("toll_exit", str),
    "features.calendar": ("calendar_features", _parse_bool),
    "impute.max_gap": ("impute_max_gap", _parse_int),
    "mape.guard.toll": ("mape_guard_toll", _parse_float),
    "mape.guard.ttdiff": ("mape_guard_ttdiff", _parse_float),
    "rf.trees": ("rf_trees", _parse_int),
    "rf.max_depth": ("rf_max_depth", _parse_int),
    "rf.min_leaf": ("rf_min_leaf", _parse_int),
    "rf.split_features": ("rf_split_features", _parse_int),
    "mlp.hidden": ("mlp_hidden", _parse_int_tuple),
    "mlp.l2": ("mlp_l2", _parse_float),
    "mlp.batch": ("mlp_batch", _parse_int),
    "mlp.epochs": ("mlp_epochs", _parse_int),
    "mlp.patience": ("mlp_patience", _parse_int),
    "mlp.lr": ("mlp_lr", _parse_float),
    "lstm.lookback": ("lstm_lookback", _parse_int),
    "lstm.hidden": ("lstm_hidden", _parse_int),
    "lstm.dense": ("lstm_dense", _parse_int_tuple),
    "lstm.l2": ("lstm_l2", _parse_float),
    "lstm.batch": ("lstm_batch", _parse_int),
    "lstm.epochs": ("lstm_epochs", _parse_int),
    "lstm.patience": ("lstm_patience", _parse_int),
    "lstm.lr": ("lstm_lr", _parse_float),
    "adam.beta1": ("adam_beta1", _parse_float),
    "adam.beta2": ("adam_beta2", _parse_float),
    "adam.eps": ("adam_eps", _parse_float),
    "split.validation_days": ("split_validation_days", _parse_int),
    "split.test_days_per_month": ("split_per_month", _parse_int),
    "synth.weekend_factor": ("weekend_factor", _parse_float),
    "synth.demand_ar1": ("demand_ar1", _parse_float),
    "synth.demand_sigma_vph": ("demand_sigma_vph", _parse_float),
    "synth.segment_jitter_mph": ("segment_jitter_mph", _parse_float),
    "synth.minute_jitter_mph": ("minute_jitter_mph", _parse_float),
    "synth.controller_gain_cents": ("controller_gain_cents", _parse_float),
    "synth.controller_noise_cents": ("controller_noise_cents", _parse_float),
    "synth.toll_min_cents": ("toll_min_cents", _parse_int),
    "synth.toll_max_cents": ("toll_max_cents", _parse_int),
    "synth.toll_open_cents": ("toll_open_cents", _parse_int),
    "synth.volume_lanes": ("volume_lanes", _parse_int),
    "synth.volume_station": ("volume_station", str),
}

_ROUTE_KEYS = {
    "role": str,
    "direction": str,
    "length_miles": _parse_float,
    "segment_count": _parse_int,
    "segments": str,
    "free_flow_mph": _parse_float,
    "capacity_vph": _parse_float,
    "demand.base_vph": _parse_float,
    "demand.peak_vph": _parse_float,
    "demand.peak_minute": _parse_int,
    "demand.width_min": _parse_float,
}


def _route_overrides(raw: dict) -> dict:
    """Group `route.<id>.<field>` keys; reject unknown fields."""
    routes = {}
    for key, value in raw.items():
        if not key.startswith("route."):
            continue
        parts = key.split(".", 2)
        if len(parts) != 3 or parts[2] not in _ROUTE_KEYS:
            raise ConfigError(f"unknown route key {key!r}")
        parser = _ROUTE_KEYS[parts[2]]
        routes.setdefault(parts[1], {})[parts[2]] = parser(key, value) if parser is not str else value
    return routes


def _parse_segments(key, raw):
    segments = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            seg_id, length = part.split(":")
            segments.append((seg_id.strip(), float(length)))
        except ValueError:
            raise ConfigError(f"{key}: expected id:length pairs, got {part!r}") from None
    if not segments:
        raise ConfigError(f"{key}: no segments given")
    return tuple(segments)


def from_mapping(raw: dict) -> StudyConfig:
    """Build a StudyConfig from flat config keys, applying defaults."""
    known = set(_SCALAR_KEYS)
    for key in raw:
        if key in known or key.startswith("route."):
            continue
        raise ConfigError(f"unknown configuration key {key!r}")

    values = {}
    for key, (name, parser) in _SCALAR_KEYS.items():
        if key in raw:
            values[name] = parser(key, raw[key]) if parser is not str else raw[key]

    seed = values.get("seed", 42)
    grid_start = values.get("grid_start", datetime(2018, 7, 2, 0, 0))
    if grid_start.time() != time.min:
        raise ConfigError(
            f"grid.start must be a midnight (whole-day grid), got "
            f"{grid_start:%Y-%m-%dT%H:%M}"
        )
    grid_days = values.get("grid_days", 90)
    if grid_days < 1:
        raise ConfigError(f"grid.days must be >= 1, got {grid_days}")
    grid = TimeGrid(
        start=grid_start,
        step_minutes=STEP_MINUTES,
        interval_count=grid_days * (1440 // STEP_MINUTES),
    )

    tolling_days = values.get("tolling_days", "weekdays")
    if tolling_days == "weekdays":
        active = WEEKDAYS
    elif tolling_days == "all":
        active = ALL_DAYS
    else:
        raise ConfigError(
            f"tolling.days must be `weekdays` or `all`, got {tolling_days!r}"
        )
    windows = (
        TollingWindow("EB", values.get("eb_start", time(5, 30)),
                      values.get("eb_end", time(9, 30)), active),
        TollingWindow("WB", values.get("wb_start", time(15, 0)),
                      values.get("wb_end", time(19, 0)), active),
    )

    route_cfg = _route_overrides(raw)
    if not route_cfg:
        route_cfg = {
            rid: {"role": role, "direction": direction,
                  "length_miles": length, "segment_count": count}
            for rid, (role, direction, length, count) in _DEFAULT_ROUTES.items()
        }

    toll_route = None
    alternatives = []
    demand = {}
    for rid in sorted(route_cfg):
        entry = route_cfg[rid]
        role = entry.get("role")
        if role not in ("toll", "alternative"):
            raise ConfigError(f"route.{rid}.role must be toll or alternative")
        direction = entry.get("direction", "EB")
        length = entry.get("length_miles")
        if "segments" in entry:
            segments = _parse_segments(f"route.{rid}.segments", entry["segments"])
        else:
            if length is None:
                raise ConfigError(
                    f"route.{rid} needs either segments or length_miles"
                )
            count = entry.get("segment_count", 10)
            segments = _auto_segments(rid, count, length)
        route_spec = RouteSpec(rid, direction, segments)
        if role == "toll":
            if toll_route is not None:
                raise ConfigError("exactly one route may have role = toll")
            toll_route = route_spec
        else:
            alternatives.append(route_spec)
        base = dict(_DEFAULT_DEMAND.get(rid, {}))
        demand[rid] = RouteDemand(
            base_vph=entry.get("demand.base_vph", base.get("base_vph", 1000.0)),
            peak_vph=entry.get("demand.peak_vph", base.get("peak_vph", 2000.0)),
            peak_minute=entry.get(
                "demand.peak_minute", _PEAK_MINUTE.get(direction, 450)
            ),
            width_min=entry.get("demand.width_min", 75.0),
            capacity_vph=entry.get("capacity_vph", base.get("capacity_vph", 4000.0)),
            free_flow_mph=entry.get(
                "free_flow_mph", base.get("free_flow_mph", 55.0)
            ),
        )
    if toll_route is None:
        raise ConfigError("configuration defines no toll route")

    adam = AdamParams(
        learning_rate=values.get("mlp_lr", 1e-3),
        beta1=values.get("adam_beta1", 0.9),
        beta2=values.get("adam_beta2", 0.999),
        eps=values.get("adam_eps", 1e-8),
    )
    lstm_adam = AdamParams(
        learning_rate=values.get("lstm_lr", 1e-3),
        beta1=adam.beta1, beta2=adam.beta2, eps=adam.eps,
    )

    return StudyConfig(
        seed=seed,
        grid=grid,
        target_kind=values.get("target_kind", "toll"),
        toll_route=toll_route,
        alternatives=tuple(alternatives),
        windows=windows,
        toll_entry=values.get("toll_entry", "corridor_in"),
        toll_exit=values.get("toll_exit", "corridor_out"),
        calendar_features=values.get("calendar_features", True),
        impute_max_gap=values.get("impute_max_gap", 2),
        mape_guard_toll=values.get("mape_guard_toll", 1.0),
        mape_guard_ttdiff=values.get("mape_guard_ttdiff", 0.01),
        demand=demand,
        forest=ForestParams(
            n_trees=values.get("rf_trees", 200),
            max_depth=values.get("rf_max_depth", 12),
            min_leaf=values.get("rf_min_leaf", 5),
            features_per_split=values.get("rf_split_features", 0),
        ),
        mlp=MlpParams(
            hidden=values.get("mlp_hidden", (64, 64, 32, 16)),
            l2=values.get("mlp_l2", 1e-4),
            batch_size=values.get("mlp_batch", 64),
            epochs=values.get("mlp_epochs", 200),
            patience=values.get("mlp_patience", 15),
            adam=adam,
        ),
        lstm=LstmParams(
            lookback=values.get("lstm_lookback", 10),
            hidden=values.get("lstm_hidden", 32),
            dense=values.get("lstm_dense", (32, 16, 8)),
            l2=values.get("lstm_l2", 0.0),
            batch_size=values.get("lstm_batch", 64),
            epochs=values.get("lstm_epochs", 200),
            patience=values.get("lstm_patience", 15),
            adam=lstm_adam,
        ),
        split=SplitParams(
            validation_days=values.get("split_validation_days", 21),
            test_days_per_month=values.get("split_per_month", 2),
        ),
        synth=SynthParams(
            weekend_factor=values.get("weekend_factor", 0.35),
            demand_ar1=values.get("demand_ar1", 0.85),
            demand_sigma_vph=values.get("demand_sigma_vph", 150.0),
            segment_jitter_mph=values.get("segment_jitter_mph", 1.2),
            minute_jitter_mph=values.get("minute_jitter_mph", 0.4),
            controller_gain_cents=values.get("controller_gain_cents", 8.0),
            controller_noise_cents=values.get("controller_noise_cents", 20.0),
            toll_min_cents=values.get("toll_min_cents", 50),
            toll_max_cents=values.get("toll_max_cents", 4700),
            toll_open_cents=values.get("toll_open_cents", 200),
            volume_lanes=values.get("volume_lanes", 2),
            volume_station=values.get("volume_station", "station_66"),
        ),
    )


def load_config(path) -> StudyConfig:
    """Read a flat key=value configuration file into a StudyConfig."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_mapping(parse_config_text(text))


def default_config(seed: int = 42, **overrides) -> StudyConfig:
    """Default study configuration; overrides use flat config keys."""
    raw = {"seed": str(seed)}
    raw.update({k: str(v) for k, v in overrides.items()})
    return from_mapping(raw)


def dump_config(cfg: StudyConfig) -> str:
    """Canonical flat rendering of a config; input to the config digest."""
    lines = [
        f"seed = {cfg.seed}",
        f"target_kind = {cfg.target_kind}",
        f"grid.start = {cfg.grid.start:%Y-%m-%dT%H:%M}",
        f"grid.days = {cfg.grid.interval_count // cfg.grid.intervals_per_day}",
        f"tolling.days = {'weekdays' if cfg.windows[0].active_days == WEEKDAYS else 'all'}",
    ]
    for w in cfg.windows:
        tag = w.direction.lower()
        lines.append(f"tolling.{tag}.start = {w.daily_start:%H:%M}")
        lines.append(f"tolling.{tag}.end = {w.daily_end:%H:%M}")
    lines += [
        f"toll.entry = {cfg.toll_entry}",
        f"toll.exit = {cfg.toll_exit}",
        f"features.calendar = {str(cfg.calendar_features).lower()}",
        f"impute.max_gap = {cfg.impute_max_gap}",
        f"mape.guard.toll = {cfg.mape_guard_toll!r}",
        f"mape.guard.ttdiff = {cfg.mape_guard_ttdiff!r}",
    ]
    roles = {cfg.toll_route.route_id: "toll"}
    roles.update({r.route_id: "alternative" for r in cfg.alternatives})
    for route in sorted(cfg.routes, key=lambda r: r.route_id):
        rid = route.route_id
        d = cfg.demand[rid]
        lines += [
            f"route.{rid}.role = {roles[rid]}",
            f"route.{rid}.direction = {route.direction}",
            "route.%s.segments = %s" % (
                rid,
                ",".join(f"{s}:{l!r}" for s, l in route.segments),
            ),
            f"route.{rid}.free_flow_mph = {d.free_flow_mph!r}",
            f"route.{rid}.capacity_vph = {d.capacity_vph!r}",
            f"route.{rid}.demand.base_vph = {d.base_vph!r}",
            f"route.{rid}.demand.peak_vph = {d.peak_vph!r}",
            f"route.{rid}.demand.peak_minute = {d.peak_minute}",
            f"route.{rid}.demand.width_min = {d.width_min!r}",
        ]
    lines += [
        f"rf.trees = {cfg.forest.n_trees}",
        f"rf.max_depth = {cfg.forest.max_depth}",
        f"rf.min_leaf = {cfg.forest.min_leaf}",
        f"rf.split_features = {cfg.forest.features_per_split}",
        "mlp.hidden = %s" % ",".join(map(str, cfg.mlp.hidden)),
        f"mlp.l2 = {cfg.mlp.l2!r}",
        f"mlp.batch = {cfg.mlp.batch_size}",
        f"mlp.epochs = {cfg.mlp.epochs}",
        f"mlp.patience = {cfg.mlp.patience}",
        f"mlp.lr = {cfg.mlp.adam.learning_rate!r}",
        f"lstm.lookback = {cfg.lstm.lookback}",
        f"lstm.hidden = {cfg.lstm.hidden}",
        "lstm.dense = %s" % ",".join(map(str, cfg.lstm.dense)),
        f"lstm.l2 = {cfg.lstm.l2!r}",
        f"lstm.batch = {cfg.lstm.batch_size}",
        f"lstm.epochs = {cfg.lstm.epochs}",
        f"lstm.patience = {cfg.lstm.patience}",
        f"lstm.lr = {cfg.lstm.adam.learning_rate!r}",
        f"adam.beta1 = {cfg.mlp.adam.beta1!r}",
        f"adam.beta2 = {cfg.mlp.adam.beta2!r}",
        f"adam.eps = {cfg.mlp.adam.eps!r}",
        f"split.validation_days = {cfg.split.validation_days}",
        f"split.test_days_per_month = {cfg.split.test_days_per_month}",
        f"synth.weekend_factor = {cfg.synth.weekend_factor!r}",
        f"synth.demand_ar1 = {cfg.synth.demand_ar1!r}",
        f"synth.demand_sigma_vph = {cfg.synth.demand_sigma_vph!r}",
        f"synth.segment_jitter_mph = {cfg.synth.segment_jitter_mph!r}",
        f"synth.minute_jitter_mph = {cfg.synth.minute_jitter_mph!r}",
        f"synth.controller_gain_cents = {cfg.synth.controller_gain_cents!r}",
        f"synth.controller_noise_cents = {cfg.synth.controller_noise_cents!r}",
        f"synth.toll_min_cents = {cfg.synth.toll_min_cents}",
        f"synth.toll_max_cents = {cfg.synth.toll_max_cents}",
        f"synth.toll_open_cents = {cfg.synth.toll_open_cents}",
        f"synth.volume_lanes = {cfg.synth.volume_lanes}",
        f"synth.volume_station = {cfg.synth.volume_station}",
    ]
    return "\n".join(lines) + "\n"


def config_digest(cfg: StudyConfig) -> str:
    """SHA-256 of the canonical config rendering."""
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


def format_timestamp(ts: datetime) -> str:
    """Feed/table timestamp format: YYYY-MM-DDTHH:MM local."""
    return f"{ts:%Y-%m-%dT%H:%M}"
