"""Seeded synthetic-corridor generator emitting the three feed CSVs.

Demand follows a commuter-peak shape per route, link speeds come from a
capacity-ratio curve, and the toll is a proportional feedback on the
55 mph speed target with noise, clipped to bounds and quantized to 25
cents. The negative feedback makes the toll series mean-reverting, so
persistence errors grow with horizon by construction. Everything derives
from (config, seed): identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .core import (
    Money,
    RouteDemand,
    StudyConfig,
    config_digest,
    format_timestamp,
    named_rng,
)
from .ingest import SpeedFeedRecord, TollFeedRecord, VolumeFeedRecord, write_feed

TARGET_SPEED_MPH = 55.0
SPEED_FLOOR_MPH = 5.0
SPEED_CEIL_MPH = 85.0
TOLL_QUANTUM_CENTS = 25

BINS_PER_DAY = 240
MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class ScenarioConfig:
    """Generator view of a study configuration."""

    study: StudyConfig

    def __post_init__(self):
        s = self.study.synth
        if not 0 < s.toll_min_cents < s.toll_max_cents:
            raise ValueError("toll bounds must satisfy 0 < min < max")
        if not 0.0 <= s.demand_ar1 < 1.0:
            raise ValueError("AR(1) coefficient must lie in [0, 1)")
        if self.study.grid.step_minutes != 6:
            raise ValueError("generator assumes the 6-minute grid")

    @property
    def day_count(self) -> int:
        g = self.study.grid
        return g.interval_count // g.intervals_per_day

    @property
    def seed(self) -> int:
        return self.study.seed


def gen_demand(day: date, minute_of_day: float, demand: RouteDemand,
               weekend_factor: float, noise: float = 0.0) -> float:
    """Baseline plus Gaussian peak, weekday-scaled, plus noise; floored at 0."""
    shape = demand.base_vph + demand.peak_vph * np.exp(
        -((minute_of_day - demand.peak_minute) ** 2)
        / (2.0 * demand.width_min ** 2)
    )
    factor = 1.0 if day.weekday() < 5 else weekend_factor
    return float(max(0.0, shape * factor + noise))


def speed_from_flow(flow_vph, capacity_vph: float, free_flow_mph: float,
                    jitter=0.0):
    """Capacity-ratio speed curve, free_flow / (1 + (flow/capacity)^4),
    plus jitter, floored at 5 mph."""
    if capacity_vph <= 0:
        raise ValueError("capacity must be positive")
    flow = np.asarray(flow_vph, dtype=float)
    speed = free_flow_mph / (1.0 + (flow / capacity_vph) ** 4) + jitter
    return np.maximum(SPEED_FLOOR_MPH, speed)


def toll_controller_step(toll_cents: int, speed_mph: float,
                         gain_cents_per_mph: float, toll_min_cents: int,
                         toll_max_cents: int, noise_cents: float = 0.0) -> int:
    """Proportional feedback on the speed error, clipped and quantized."""
    raw = toll_cents + gain_cents_per_mph * (TARGET_SPEED_MPH - speed_mph)
    raw += noise_cents
    clipped = min(float(toll_max_cents), max(float(toll_min_cents), raw))
    quantized = int(round(clipped / TOLL_QUANTUM_CENTS)) * TOLL_QUANTUM_CENTS
    return min(toll_max_cents, max(toll_min_cents, quantized))


def _day_bundles(scen: ScenarioConfig):
    """Yield per-day generated data in feed order.

    Each bundle: (day, toll rows, (segment ids, minute speed matrix),
    volume rows, per-period flow integrals).
    """
    cfg = scen.study
    synth = cfg.synth
    grid = cfg.grid
    bin_minutes = np.arange(BINS_PER_DAY) * 6.0

    ar_state = {r.route_id: 0.0 for r in cfg.routes}
    demand_rngs = {
        r.route_id: named_rng(scen.seed, "synth", "demand", r.route_id)
        for r in cfg.routes
    }
    seg_rngs = {
        r.route_id: named_rng(scen.seed, "synth", "segments", r.route_id)
        for r in cfg.routes
    }
    minute_rngs = {
        r.route_id: named_rng(scen.seed, "synth", "minutes", r.route_id)
        for r in cfg.routes
    }
    toll_rng = named_rng(scen.seed, "synth", "controller")

    window = cfg.window_for(cfg.direction)
    rho = synth.demand_ar1

    for day_index in range(scen.day_count):
        day_start = grid.start + timedelta(days=day_index)
        day = day_start.date()

        route_speed = {}
        seg_blocks = []
        toll_flow = None
        for route in cfg.routes:
            dem = cfg.demand[route.route_id]
            det = np.array([
                gen_demand(day, m, dem, synth.weekend_factor)
                for m in bin_minutes
            ])
            eps = demand_rngs[route.route_id].normal(
                0.0, synth.demand_sigma_vph, BINS_PER_DAY
            )
            z = np.empty(BINS_PER_DAY)
            prev = ar_state[route.route_id]
            for b in range(BINS_PER_DAY):
                prev = rho * prev + eps[b]
                z[b] = prev
            ar_state[route.route_id] = prev
            flow = np.maximum(0.0, det + z)
            speed = speed_from_flow(flow, dem.capacity_vph, dem.free_flow_mph)
            route_speed[route.route_id] = speed
            if route.route_id == cfg.toll_route.route_id:
                toll_flow = flow

            n_seg = len(route.segments)
            seg_jitter = seg_rngs[route.route_id].normal(
                0.0, synth.segment_jitter_mph, (n_seg, BINS_PER_DAY)
            )
            seg_bin = np.clip(
                speed[None, :] + seg_jitter, SPEED_FLOOR_MPH, SPEED_CEIL_MPH
            )
            minute_noise = minute_rngs[route.route_id].normal(
                0.0, synth.minute_jitter_mph, (n_seg, MINUTES_PER_DAY)
            )
            minute_speed = np.clip(
                np.repeat(seg_bin, 6, axis=1) + minute_noise,
                SPEED_FLOOR_MPH, SPEED_CEIL_MPH,
            )
            seg_blocks.append((route.segment_ids, np.round(minute_speed, 4)))

        toll_rows = []
        if day.weekday() in window.active_days:
            w_bins = [
                b for b in range(BINS_PER_DAY)
                if window.daily_start
                <= (day_start + timedelta(minutes=6 * b)).time()
                < window.daily_end
            ]
            toll = synth.toll_open_cents
            speed = route_speed[cfg.toll_route.route_id]
            for b in w_bins:
                ts = day_start + timedelta(minutes=6 * b)
                toll_rows.append((ts, cfg.toll_entry, cfg.toll_exit, toll))
                noise = float(
                    toll_rng.normal(0.0, synth.controller_noise_cents)
                )
                toll = toll_controller_step(
                    toll, float(speed[b]), synth.controller_gain_cents,
                    synth.toll_min_cents, synth.toll_max_cents, noise,
                )

        volume_rows = []
        integrals = []
        for p in range(MINUTES_PER_DAY // 15):
            lo, hi = p * 15, p * 15 + 15
            total = 0.0
            b = lo // 6
            while b * 6 < hi:
                overlap = min(hi, b * 6 + 6) - max(lo, b * 6)
                total += toll_flow[b] * overlap / 60.0
                b += 1
            integrals.append(total)
            count = int(round(total))
            ts = day_start + timedelta(minutes=lo)
            lanes = synth.volume_lanes
            for lane in range(lanes):
                share = count // lanes + (1 if lane < count % lanes else 0)
                volume_rows.append(
                    (synth.volume_station, ts, f"lane{lane + 1}", share)
                )

        # (segment ids, matrix) blocks share the day's minute timestamps
        yield day_start, toll_rows, seg_blocks, volume_rows, integrals


def generate_records(cfg: StudyConfig):
    """Materialize all records in memory (small scenarios and tests).

    Returns (toll, speed, volume) record lists plus a diagnostics dict
    with the generator-side per-period flow integrals.
    """
    scen = ScenarioConfig(cfg)
    toll_records, speed_records, volume_records = [], [], []
    period_integrals = []
    for day_start, toll_rows, seg_blocks, volume_rows, integrals in (
            _day_bundles(scen)):
        for ts, entry, exit_, cents in toll_rows:
            toll_records.append(TollFeedRecord(ts, entry, exit_, Money(cents)))
        for seg_ids, matrix in seg_blocks:
            for si, seg in enumerate(seg_ids):
                for m in range(MINUTES_PER_DAY):
                    speed_records.append(SpeedFeedRecord(
                        seg, day_start + timedelta(minutes=m),
                        float(matrix[si, m]),
                    ))
        for station, ts, lane, count in volume_rows:
            volume_records.append(VolumeFeedRecord(station, ts, lane, count))
        period_integrals.extend(integrals)
    diagnostics = {"period_integrals": period_integrals}
    return toll_records, speed_records, volume_records, diagnostics


def generate_scenario(cfg: StudyConfig, out_dir) -> dict:
    """Write toll.csv, speed.csv, volume.csv, and scenario.meta.

    Speed rows stream day by day in (timestamp, segment) order, matching
    the canonical writer's sort, so files are byte-stable for a seed.
    """
    os.makedirs(out_dir, exist_ok=True)
    scen = ScenarioConfig(cfg)
    paths = {
        kind: os.path.join(out_dir, f"{kind}.csv")
        for kind in ("toll", "speed", "volume")
    }
    toll_records, volume_records = [], []
    rows = {"toll": 0, "speed": 0, "volume": 0}
    with open(paths["speed"], "w", encoding="utf-8", newline="") as speed_fh:
        speed_fh.write("segment_id,timestamp,speed_mph\n")
        for day_start, toll_rows, seg_blocks, volume_rows, _ in (
                _day_bundles(scen)):
            for ts, entry, exit_, cents in toll_rows:
                toll_records.append(
                    TollFeedRecord(ts, entry, exit_, Money(cents))
                )
            all_segs = []
            for seg_ids, matrix in seg_blocks:
                for si, seg in enumerate(seg_ids):
                    all_segs.append((seg, matrix[si]))
            all_segs.sort(key=lambda item: item[0])
            for m in range(MINUTES_PER_DAY):
                ts_text = format_timestamp(day_start + timedelta(minutes=m))
                for seg, values in all_segs:
                    speed_fh.write(f"{seg},{ts_text},{float(values[m])!r}\n")
                    rows["speed"] += 1
            for station, ts, lane, count in volume_rows:
                volume_records.append(
                    VolumeFeedRecord(station, ts, lane, count)
                )
    write_feed("toll", toll_records, paths["toll"])
    write_feed("volume", volume_records, paths["volume"])
    rows["toll"] = len(toll_records)
    rows["volume"] = len(volume_records)

    meta = {
        "seed": scen.seed,
        "config_digest": config_digest(cfg),
        "days": scen.day_count,
        "grid_start": format_timestamp(cfg.grid.start),
        "routes": {
            r.route_id: {
                "direction": r.direction,
                "segments": len(r.segments),
                "length_miles": r.total_length,
            }
            for r in cfg.routes
        },
        "rows": rows,
    }
    meta_path = os.path.join(out_dir, "scenario.meta")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["meta"] = meta_path
    return paths
