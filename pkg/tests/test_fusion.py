import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tollcast import core, fusion, synth
from tollcast.errors import EmptyTableError

from conftest import tiny_config


class TestSpaceMeanSpeed:
    def test_two_segment_harmonic_example(self):
        # 2 mi at 60 takes 2 min, 3 mi at 30 takes 6 min: 5 mi in 8 min
        assert fusion.space_mean_speed([(2, 60), (3, 30)]) == pytest.approx(37.5)

    def test_single_segment_identity(self):
        assert fusion.space_mean_speed([(7.3, 50)]) == pytest.approx(50.0)

    def test_equal_speeds_any_lengths(self):
        assert fusion.space_mean_speed(
            [(1, 44), (9, 44), (2.5, 44)]
        ) == pytest.approx(44.0)

    def test_empty_list_errors(self):
        with pytest.raises(ValueError):
            fusion.space_mean_speed([])

    @given(
        lengths=st.lists(st.floats(0.1, 10), min_size=1, max_size=6),
        speeds=st.lists(st.floats(5, 80), min_size=6, max_size=6),
        split=st.integers(0, 5),
    )
    @settings(max_examples=200, deadline=None)
    def test_invariant_under_segment_splitting(self, lengths, speeds, split):
        segs = list(zip(lengths, speeds))
        base = fusion.space_mean_speed(segs)
        i = split % len(segs)
        length, speed = segs[i]
        halved = segs[:i] + [(length / 2, speed), (length / 2, speed)] + segs[i + 1:]
        assert fusion.space_mean_speed(halved) == pytest.approx(base, rel=1e-12)


class TestRouteTravelTime:
    def _route(self, lengths):
        return core.RouteSpec(
            "r", "EB", tuple((f"s{i}", l) for i, l in enumerate(lengths))
        )

    def test_segment_time_sum_example(self):
        r = self._route([2, 3])
        tt = fusion.route_travel_time(r, {"s0": 60.0, "s1": 30.0})
        assert tt == pytest.approx(8.0)

    def test_five_miles_at_fifty(self):
        r = self._route([5])
        assert fusion.route_travel_time(r, {"s0": 50.0}) == pytest.approx(6.0)

    def test_corridor_design_speed(self):
        # 11-mile corridor at the 55 mph design speed takes 12 minutes
        r = self._route([11])
        assert fusion.route_travel_time(r, {"s0": 55.0}) == pytest.approx(12.0)

    def test_missing_segment_gives_nan(self):
        r = self._route([2, 3])
        assert math.isnan(fusion.route_travel_time(r, {"s0": 60.0}))

    def test_identity_against_segment_sum(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            n = int(rng.integers(1, 12))
            lengths = rng.uniform(0.05, 5.0, n)
            speeds = rng.uniform(4.0, 80.0, n)
            r = self._route(lengths)
            expected = float(np.sum(lengths / speeds) * 60.0)
            got = fusion.route_travel_time(
                r, {f"s{i}": speeds[i] for i in range(n)}
            )
            assert abs(got - expected) <= 1e-9 * max(1.0, abs(expected))


class TestAggregateMinutes:
    def test_six_equal_minutes(self):
        assert fusion.aggregate_minutes_to_interval([50] * 6) == 50

    def test_two_minute_mean(self):
        assert fusion.aggregate_minutes_to_interval([40, 60]) == 50

    def test_empty_is_missing(self):
        assert math.isnan(fusion.aggregate_minutes_to_interval([]))


class TestResampleVolume:
    def _grid(self, bins):
        return core.TimeGrid(datetime(2018, 7, 2), 6, bins)

    def test_constant_rate(self):
        g = self._grid(10)
        periods = {
            datetime(2018, 7, 2) + timedelta(minutes=15 * i): 150
            for i in range(4)
        }
        out = fusion.resample_volume(periods, g)
        assert np.allclose(out, 60.0)

    def test_lane_sum_equiv(self):
        g = self._grid(5)
        periods = {
            datetime(2018, 7, 2) + timedelta(minutes=15 * i): 100 + 50
            for i in range(2)
        }
        out = fusion.resample_volume(periods, g)
        assert np.allclose(out, 60.0)

    def test_straddling_bin_blends_rates(self):
        g = self._grid(5)
        periods = {
            datetime(2018, 7, 2, 0, 0): 150,   # 600 vph
            datetime(2018, 7, 2, 0, 15): 300,  # 1200 vph
        }
        out = fusion.resample_volume(periods, g)
        # bin 2 covers 12:00-18:00 minutes: 3 min at each rate
        assert out[2] == pytest.approx(90.0)

    def test_conserves_vehicles(self):
        rng = np.random.default_rng(3)
        g = self._grid(240)
        periods = {
            datetime(2018, 7, 2) + timedelta(minutes=15 * i): int(c)
            for i, c in enumerate(rng.integers(0, 400, 96))
        }
        out = fusion.resample_volume(periods, g)
        total = sum(periods.values())
        assert abs(out.sum() - total) <= 1e-9 * max(1.0, total)

    def test_missing_period_propagates(self):
        g = self._grid(10)
        periods = {datetime(2018, 7, 2, 0, 0): 150}
        out = fusion.resample_volume(periods, g)
        assert not np.isnan(out[0]) and not np.isnan(out[1])
        assert np.isnan(out[3])  # bin fully inside the missing 15-30 period
        assert np.isnan(out[2])  # straddles a missing period


class TestTravelTimeDifference:
    def test_min_minus(self):
        assert fusion.travel_time_difference(10, [18, 14]) == pytest.approx(4)

    def test_tie_is_zero(self):
        assert fusion.travel_time_difference(14, [14]) == pytest.approx(0)

    def test_toll_road_slower_is_negative(self):
        assert fusion.travel_time_difference(20, [15, 25]) == pytest.approx(-5)

    def test_all_alternatives_missing(self):
        assert math.isnan(
            fusion.travel_time_difference(10, [float("nan")])
        )

    def test_no_alternatives_errors(self):
        with pytest.raises(ValueError):
            fusion.travel_time_difference(10, [])


class TestImputeSeries:
    def test_fills_short_gap(self):
        out = fusion.impute_series(np.array([5, np.nan, 7.0]), 2)
        assert list(out) == [5, 5, 7]

    def test_leaves_long_gap(self):
        out = fusion.impute_series(
            np.array([5, np.nan, np.nan, np.nan, 7.0]), 2
        )
        assert np.isnan(out[1:4]).all()

    def test_leading_missing_stays(self):
        out = fusion.impute_series(np.array([np.nan, 4.0]), 2)
        assert np.isnan(out[0])

    def test_input_unchanged(self):
        series = np.array([5, np.nan, 7.0])
        fusion.impute_series(series, 2)
        assert np.isnan(series[1])


class TestBuildFeatureTable:
    def test_full_window_yields_35_rows_per_day(self, small_cfg, small_table):
        days = small_cfg.grid.interval_count // 240
        assert small_table.n_rows == 35 * days

    def test_targets_match_future_toll(self, small_cfg, small_feeds):
        toll, speed, volume, _ = small_feeds
        fused = fusion.fuse_feeds(small_cfg, toll, speed, volume)
        table = fusion.build_feature_table(small_cfg, fused)
        toll_by_interval = {
            small_cfg.grid.interval_of(r.timestamp): r.toll.cents
            for r in toll
        }
        for i in (0, 10, 34):
            row = table.row(i)
            for h in core.HORIZONS:
                assert row.targets[h - 1] == toll_by_interval[row.interval + h]

    def test_speed_outage_drops_overlapping_rows(self, small_cfg, small_feeds):
        toll, speed, volume, _ = small_feeds
        seg = small_cfg.toll_route.segment_ids[0]
        blocked_lo = datetime(2018, 7, 2, 7, 0)
        blocked_hi = datetime(2018, 7, 2, 8, 0)
        speed2 = [
            r for r in speed
            if not (r.segment_id == seg and blocked_lo <= r.timestamp < blocked_hi)
        ]
        fused = fusion.fuse_feeds(small_cfg, toll, speed2, volume)
        table = fusion.build_feature_table(small_cfg, fused)
        full = fusion.build_feature_table(
            small_cfg, fusion.fuse_feeds(small_cfg, toll, speed, volume)
        )
        assert table.n_rows < full.n_rows
        gap_bins = {
            small_cfg.grid.interval_of(blocked_lo + timedelta(minutes=m))
            for m in range(0, 60, 6)
        }
        assert not gap_bins & set(table.interval.tolist())

    def test_rows_strictly_increasing_and_deterministic(
        self, small_cfg, small_feeds
    ):
        toll, speed, volume, _ = small_feeds
        t1 = fusion.build_feature_table(
            small_cfg, fusion.fuse_feeds(small_cfg, toll, speed, volume)
        )
        t2 = fusion.build_feature_table(
            small_cfg, fusion.fuse_feeds(small_cfg, toll, speed, volume)
        )
        assert np.all(np.diff(t1.interval) > 0)
        assert t1.schema_hash == t2.schema_hash
        assert np.array_equal(t1.targets, t2.targets)

    def test_row_view_carries_exact_money(self, small_table):
        row = small_table.row(0)
        assert row.toll_now.cents == row.toll_cents
        assert row.timestamp == small_table.grid.timestamp_of(row.interval)

    def test_no_feature_leakage_only_past_columns(self, small_table):
        # every feature column is measured at the row's own interval; the
        # only forward references are the designated target columns
        X = small_table.feature_matrix()
        assert X.shape[1] == len(small_table.feature_names())
        assert small_table.targets.shape == (small_table.n_rows, 5)

    def test_empty_result_reports_drop_counts(self):
        cfg = tiny_config(days=2)
        toll, speed, volume, _ = synth.generate_records(cfg)
        fused = fusion.fuse_feeds(cfg, toll, [], volume)
        with pytest.raises(EmptyTableError) as err:
            fusion.build_feature_table(cfg, fused)
        assert err.value.drop_counts["missing_feature"] > 0

    def test_schema_hash_tracks_columns_and_target(self):
        a = fusion.schema_hash(fusion.feature_columns(True), "toll")
        b = fusion.schema_hash(fusion.feature_columns(False), "toll")
        c = fusion.schema_hash(fusion.feature_columns(True), "ttdiff")
        assert len({a, b, c}) == 3


class TestFeatureCsv:
    def test_roundtrip(self, small_table, tmp_path):
        path = tmp_path / "features.csv"
        fusion.write_feature_csv(small_table, path, "digest123")
        again = fusion.read_feature_csv(path)
        assert again.schema_hash == small_table.schema_hash
        assert again.target_kind == small_table.target_kind
        assert np.array_equal(again.interval, small_table.interval)
        assert np.array_equal(again.toll_cents, small_table.toll_cents)
        assert np.array_equal(again.tt_toll, small_table.tt_toll)
        assert np.array_equal(again.targets, small_table.targets)
