"""Parse and validate the three CSV feeds into typed records.

Schemas (header row mandatory, RFC 4180 quoting, timestamps local
YYYY-MM-DDTHH:MM):

    toll.csv:   timestamp,entry_ramp,exit_ramp,toll_cents
    speed.csv:  segment_id,timestamp,speed_mph
    volume.csv: station_id,period_start,lane_id,count

Malformed rows are rejected with line-numbered reasons, never silently
dropped. Duplicate records for the same key and native period keep the
last occurrence; earlier ones are flagged.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from datetime import datetime

from .core import Money, TimeGrid, format_timestamp
from .errors import DataFormatError

SPEED_SANITY_MPH = 120.0
TOLL_SANITY_CENTS = 5000

_HEADERS = {
    "toll": ["timestamp", "entry_ramp", "exit_ramp", "toll_cents"],
    "speed": ["segment_id", "timestamp", "speed_mph"],
    "volume": ["station_id", "period_start", "lane_id", "count"],
}


@dataclass(frozen=True, slots=True)
class TollFeedRecord:
    timestamp: datetime
    entry_ramp_id: str
    exit_ramp_id: str
    toll: Money


@dataclass(frozen=True, slots=True)
class SpeedFeedRecord:
    segment_id: str
    timestamp: datetime
    speed_mph: float


@dataclass(frozen=True, slots=True)
class VolumeFeedRecord:
    station_id: str
    period_start: datetime
    lane_id: str
    count: int


@dataclass
class FeedReport:
    """Parse and coverage diagnostics for one feed."""

    accepted: int = 0
    rejected: list = field(default_factory=list)  # (line_no, reason)
    duplicates: list = field(default_factory=list)  # (line_no, key string)
    coverage: dict = field(default_factory=dict)  # key string -> fraction

    @property
    def total_rows(self) -> int:
        return self.accepted + len(self.rejected)


class RowError(ValueError):
    """Row rejected; the message is the line's reject reason."""


def _parse_ts(raw: str) -> datetime:
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError:
        raise RowError("bad timestamp") from None
    if ts.second or ts.microsecond:
        raise RowError("sub-minute timestamp")
    return ts


def _toll_row(row):
    ts = _parse_ts(row[0])
    if ts.minute % 6 != 0:
        raise RowError("unaligned timestamp")
    if not row[1] or not row[2]:
        raise RowError("empty ramp id")
    try:
        cents = int(row[3])
    except ValueError:
        raise RowError("bad toll amount") from None
    if cents < 0:
        raise RowError("negative toll")
    if cents > TOLL_SANITY_CENTS:
        raise RowError("toll above sanity bound")
    return TollFeedRecord(ts, row[1], row[2], Money(cents))


def _speed_row(row):
    if not row[0]:
        raise RowError("empty segment id")
    ts = _parse_ts(row[1])
    try:
        speed = float(row[2])
    except ValueError:
        raise RowError("bad speed") from None
    if speed <= 0:
        raise RowError("nonpositive speed")
    if speed > SPEED_SANITY_MPH:
        raise RowError("speed above sanity bound")
    return SpeedFeedRecord(row[0], ts, speed)


def _volume_row(row):
    if not row[0]:
        raise RowError("empty station id")
    ts = _parse_ts(row[1])
    if (ts.hour * 60 + ts.minute) % 15 != 0:
        raise RowError("unaligned period")
    if not row[2]:
        raise RowError("empty lane id")
    try:
        count = int(row[3])
    except ValueError:
        raise RowError("bad count") from None
    if count < 0:
        raise RowError("negative count")
    return VolumeFeedRecord(row[0], ts, row[2], count)


_ROW_PARSERS = {"toll": _toll_row, "speed": _speed_row, "volume": _volume_row}

# Native dedup key and output sort key per feed kind.
_KEYS = {
    "toll": lambda r: (r.entry_ramp_id, r.exit_ramp_id, r.timestamp),
    "speed": lambda r: (r.segment_id, r.timestamp),
    "volume": lambda r: (r.station_id, r.lane_id, r.period_start),
}
_SORT_KEYS = {
    "toll": lambda r: (r.timestamp, r.entry_ramp_id, r.exit_ramp_id),
    "speed": lambda r: (r.timestamp, r.segment_id),
    "volume": lambda r: (r.period_start, r.station_id, r.lane_id),
}


def parse_feed(kind: str, stream) -> tuple[list, FeedReport]:
    """Parse one feed; returns (records sorted by time then id, report).

    `stream` may be a path, bytes, or a text file object. Raises
    DataFormatError for a missing/incorrect header or an empty file.
    """
    if kind not in _HEADERS:
        raise ValueError(f"unknown feed kind {kind!r}")
    close = False
    if isinstance(stream, (str, os.PathLike)):
        fh = open(stream, "r", encoding="utf-8", newline="")
        close = True
    elif isinstance(stream, bytes):
        fh = io.StringIO(stream.decode("utf-8"))
    else:
        fh = stream
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{kind} feed is empty") from None
        if header != _HEADERS[kind]:
            raise DataFormatError(
                f"{kind} feed header {header!r} does not match "
                f"required {_HEADERS[kind]!r}"
            )
        parse_row = _ROW_PARSERS[kind]
        width = len(_HEADERS[kind])
        key_of = _KEYS[kind]
        report = FeedReport()
        kept: dict = {}  # key -> (line_no, record); keeps last occurrence
        for line_no, row in enumerate(reader, start=2):
            if len(row) != width:
                report.rejected.append((line_no, "wrong field count"))
                continue
            try:
                record = parse_row(row)
            except RowError as exc:
                report.rejected.append((line_no, str(exc)))
                continue
            report.accepted += 1
            key = key_of(record)
            if key in kept:
                old_line, _ = kept[key]
                report.duplicates.append((old_line, "|".join(map(str, key))))
            kept[key] = (line_no, record)
        records = sorted((r for _, r in kept.values()), key=_SORT_KEYS[kind])
        return records, report
    finally:
        if close:
            fh.close()


def _record_bins(kind: str, record, grid: TimeGrid):
    """(key string, iterable of grid bins the record's period intersects)."""
    if kind == "toll":
        key = f"{record.entry_ramp_id}|{record.exit_ramp_id}"
        ts = record.timestamp
        if grid.start <= ts < grid.end:
            return key, (grid.interval_of(ts),)
        return key, ()
    if kind == "speed":
        ts = record.timestamp
        if grid.start <= ts < grid.end:
            return record.segment_id, (grid.interval_of(ts),)
        return record.segment_id, ()
    # volume: a 15-minute period can straddle several 6-minute bins
    key = f"{record.station_id}|{record.lane_id}"
    start = record.period_start
    step = grid.step_minutes
    bins = []
    offset = (start - grid.start).total_seconds() / 60.0
    first = int(offset // step)
    last = int((offset + 15 - 1e-9) // step)
    for b in range(first, last + 1):
        if 0 <= b < grid.interval_count:
            bins.append(b)
    return key, tuple(bins)


def coverage(records, kind: str, grid: TimeGrid, expected_keys=None,
             bins=None) -> FeedReport:
    """Per-key fraction of grid bins holding at least one record.

    `bins` restricts the expected bins (e.g. tolling-window intervals for
    the toll feed); default is the whole grid. Duplicate (key, native
    period) pairs are flagged.
    """
    expected_bins = set(range(grid.interval_count)) if bins is None else set(bins)
    seen: dict = {}
    covered: dict = {}
    dup: list = []
    key_of = _KEYS[kind]
    for record in records:
        native = key_of(record)
        if native in seen:
            dup.append((0, "|".join(map(str, native))))
        seen[native] = True
        key, touched = _record_bins(kind, record, grid)
        covered.setdefault(key, set()).update(b for b in touched if b in expected_bins)
    keys = list(covered) if expected_keys is None else list(expected_keys)
    frac = {}
    for key in keys:
        got = covered.get(key, set())
        frac[str(key)] = len(got) / len(expected_bins) if expected_bins else 0.0
    report = FeedReport(accepted=len(records), coverage=frac, duplicates=dup)
    return report


def write_feed(kind: str, records, path) -> None:
    """Serialize records to the canonical CSV; inverse of parse_feed."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADERS[kind])
        if kind == "toll":
            for r in sorted(records, key=_SORT_KEYS[kind]):
                writer.writerow([
                    format_timestamp(r.timestamp), r.entry_ramp_id,
                    r.exit_ramp_id, r.toll.cents,
                ])
        elif kind == "speed":
            for r in sorted(records, key=_SORT_KEYS[kind]):
                writer.writerow([
                    r.segment_id, format_timestamp(r.timestamp),
                    repr(r.speed_mph),
                ])
        else:
            for r in sorted(records, key=_SORT_KEYS[kind]):
                writer.writerow([
                    r.station_id, format_timestamp(r.period_start),
                    r.lane_id, r.count,
                ])
