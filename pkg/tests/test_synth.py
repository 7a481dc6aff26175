import json
from datetime import date

import numpy as np
import pytest

from tollcast import core, ingest, synth

from conftest import tiny_config

MONDAY = date(2018, 7, 2)
SATURDAY = date(2018, 7, 7)


def _demand(peak_minute=450):
    return core.RouteDemand(
        base_vph=1000.0, peak_vph=2000.0, peak_minute=peak_minute,
        width_min=75.0, capacity_vph=4000.0, free_flow_mph=60.0,
    )


class TestGenDemand:
    def test_peak_center_no_noise(self):
        flow = synth.gen_demand(MONDAY, 450, _demand(), weekend_factor=0.5)
        assert flow == pytest.approx(3000.0)

    def test_weekend_factor_halves_deterministic_part(self):
        weekday = synth.gen_demand(MONDAY, 450, _demand(), 0.5)
        weekend = synth.gen_demand(SATURDAY, 450, _demand(), 0.5)
        assert weekend == pytest.approx(weekday / 2)

    def test_clipped_at_zero(self):
        assert synth.gen_demand(MONDAY, 0, _demand(), 1.0, noise=-1e6) == 0.0

    def test_same_seed_identical_series(self):
        cfg = tiny_config(seed=5, days=2)
        a = synth.generate_records(cfg)
        b = synth.generate_records(cfg)
        assert a[0] == b[0]
        assert a[1][:1000] == b[1][:1000]
        assert a[2] == b[2]


class TestSpeedFromFlow:
    def test_zero_flow_gives_free_flow(self):
        assert synth.speed_from_flow(0.0, 4000, 60.0) == pytest.approx(60.0)

    def test_flow_at_capacity_halves_speed(self):
        assert synth.speed_from_flow(4000.0, 4000, 60.0) == pytest.approx(30.0)

    def test_double_capacity_seventeenth(self):
        # free-flow chosen high enough that the 5 mph floor stays inactive
        assert synth.speed_from_flow(8000.0, 4000, 100.0) == pytest.approx(
            100.0 / 17.0
        )

    def test_floored_at_five(self):
        assert synth.speed_from_flow(1e6, 100, 60.0) == 5.0

    def test_capacity_must_be_positive(self):
        with pytest.raises(ValueError):
            synth.speed_from_flow(100.0, 0, 60.0)


class TestTollController:
    def test_equilibrium_at_target_speed(self):
        toll = synth.toll_controller_step(800, 55.0, 10.0, 50, 4700)
        assert toll == 800

    def test_ten_mph_error_with_ten_cent_gain(self):
        toll = synth.toll_controller_step(800, 45.0, 10.0, 50, 4700)
        assert toll == 900

    def test_clipped_at_max_when_congested(self):
        toll = synth.toll_controller_step(4700, 20.0, 10.0, 50, 4700)
        assert toll == 4700

    def test_quantized_to_quarter(self):
        toll = synth.toll_controller_step(800, 54.0, 10.0, 50, 4700)
        assert toll % 25 == 0

    def test_stays_within_bounds(self):
        rng = np.random.default_rng(0)
        toll = 200
        for _ in range(500):
            toll = synth.toll_controller_step(
                toll, float(rng.uniform(10, 70)), 8.0, 50, 4700,
                noise_cents=float(rng.normal(0, 25)),
            )
            assert 50 <= toll <= 4700 and toll % 25 == 0


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario")
    cfg = tiny_config(seed=77, days=3)
    paths = synth.generate_scenario(cfg, out)
    return cfg, paths


class TestGenerateScenario:
    def test_feeds_parse_cleanly_with_full_coverage(self, scenario):
        cfg, paths = scenario
        tolling_bins = core.tolling_intervals(
            cfg.grid, cfg.windows, cfg.direction
        )
        expect = {
            "toll": ([f"{cfg.toll_entry}|{cfg.toll_exit}"], tolling_bins),
            "speed": ([s for r in cfg.routes for s in r.segment_ids], None),
            "volume": ([
                f"{cfg.synth.volume_station}|lane{i + 1}"
                for i in range(cfg.synth.volume_lanes)
            ], None),
        }
        for kind in ("toll", "speed", "volume"):
            records, report = ingest.parse_feed(kind, paths[kind])
            assert report.rejected == []
            keys, bins = expect[kind]
            cov = ingest.coverage(records, kind, cfg.grid, keys, bins)
            assert all(v == 1.0 for v in cov.coverage.values())

    def test_tolls_quantized_and_bounded(self, scenario):
        cfg, paths = scenario
        records, _ = ingest.parse_feed("toll", paths["toll"])
        for r in records:
            assert cfg.synth.toll_min_cents <= r.toll.cents
            assert r.toll.cents <= cfg.synth.toll_max_cents
            assert r.toll.cents % 25 == 0

    def test_vehicles_conserved_per_period(self, tmp_path):
        cfg = tiny_config(seed=31, days=2)
        toll, speed, volume, diag = synth.generate_records(cfg)
        by_period = {}
        for r in volume:
            by_period.setdefault(r.period_start, 0)
            by_period[r.period_start] += r.count
        totals = [by_period[k] for k in sorted(by_period)]
        integrals = diag["period_integrals"]
        assert len(totals) == len(integrals)
        for total, integral in zip(totals, integrals):
            assert abs(total - integral) <= 1.0

    def test_same_seed_byte_identical_files(self, tmp_path):
        cfg = tiny_config(seed=13, days=2)
        a = synth.generate_scenario(cfg, tmp_path / "a")
        b = synth.generate_scenario(cfg, tmp_path / "b")
        for kind in ("toll", "speed", "volume", "meta"):
            assert open(a[kind], "rb").read() == open(b[kind], "rb").read()

    def test_meta_records_config_and_seed(self, scenario):
        cfg, paths = scenario
        meta = json.load(open(paths["meta"]))
        assert meta["seed"] == cfg.seed
        assert meta["config_digest"] == core.config_digest(cfg)
        assert meta["rows"]["toll"] > 0

    def test_mean_reversion_persistence_error_grows(self):
        # feedback makes the toll mean-reverting: over >= 30 weekdays the
        # pooled |toll(t+h) - toll(t)| must grow with h
        cfg = tiny_config(seed=99, days=45)
        toll, _, _, _ = synth.generate_records(cfg)
        by_bin = {
            cfg.grid.interval_of(r.timestamp): r.toll.cents for r in toll
        }
        bins = sorted(by_bin)
        gaps = {h: [] for h in core.HORIZONS}
        for b in bins:
            for h in core.HORIZONS:
                if b + h in by_bin:
                    gaps[h].append(abs(by_bin[b + h] - by_bin[b]))
        maes = [np.mean(gaps[h]) for h in core.HORIZONS]
        assert all(b >= a for a, b in zip(maes, maes[1:]))
