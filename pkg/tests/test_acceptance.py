"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s`."""

import os
import time
from datetime import date, timedelta

import numpy as np
import pytest

import tollcast.numkit as nk
from tollcast import core, fusion
from tollcast.cli import main as cli_main
from tollcast.evaluate import compute_metrics, make_split
from tollcast.models import (
    ForestRegressor,
    load_model,
    predict_rows,
    save_model,
)
from tollcast.models import lstm as lstm_mod
from tollcast.models import mlp as mlp_mod

from conftest import TINY_ROUTE_KEYS

HORIZONS = core.HORIZONS


def _report(criterion, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    assert ok, detail


def _write_cfg(path, overrides):
    lines = [f"{k} = {v}" for k, v in overrides.items()]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _e2e_overrides(seed, days=90, target="toll", extra=None):
    o = {"seed": seed, "grid.days": days, "target_kind": target}
    o.update(TINY_ROUTE_KEYS)
    o.update(extra or {})
    return o


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    """Criterion 6 pipeline: 90-day scenario, default model settings,
    all four algorithms through the CLI."""
    root = tmp_path_factory.mktemp("e2e")
    cfg_path = _write_cfg(root / "study.cfg", _e2e_overrides(seed=2025))
    out = str(root / "out")
    base = ["--config", cfg_path, "--out", out]
    started = time.time()
    assert cli_main(base + ["synth"]) == 0
    assert cli_main(base + ["fuse"]) == 0
    for algo in ("persistence", "rf", "mlp", "lstm"):
        assert cli_main(base + ["train", "--algo", algo]) == 0
    assert cli_main(base + ["evaluate"]) == 0
    elapsed = time.time() - started
    metrics = {}
    with open(os.path.join(out, "metrics.csv")) as fh:
        header = fh.readline()
        for line in fh:
            algo, horizon_min, split_name, mae, mape, r2 = line.strip().split(",")
            metrics[(algo, int(horizon_min) // 6)] = (
                float(mae), float(mape), float(r2)
            )
    return cfg_path, out, metrics, elapsed


class TestCriterion1:
    def test_metrics_match_straightline_reference(self):
        started = time.time()
        rng = np.random.default_rng(1001)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(2, 64))
            y = rng.uniform(0.5, 60.0, n) * rng.choice([-1.0, 1.0], n)
            yhat = y + rng.normal(0, 4.0, n)
            m = compute_metrics(y, yhat)
            mae = sum(abs(a - b) for a, b in zip(y, yhat)) / n
            mape = sum(abs(a - b) / abs(a) for a, b in zip(y, yhat)) / n
            mean = sum(y) / n
            ss_res = sum((a - b) ** 2 for a, b in zip(y, yhat))
            ss_tot = sum((a - mean) ** 2 for a in y)
            r2 = 1.0 - ss_res / ss_tot
            worst = max(worst, abs(m.mae - mae), abs(m.mape - mape),
                        abs(m.r2 - r2))
        elapsed = time.time() - started
        _report(
            1, worst < 1e-12 and elapsed < 5.0,
            f"metrics vs reference, max abs diff {worst:.2e} over 1000 "
            f"vector pairs in {elapsed:.2f}s (limits 1e-12, 5s)",
        )


class TestCriterion2:
    def test_gradient_checks_mlp_and_lstm(self):
        started = time.time()
        params = mlp_mod.init_params(7, (64, 64, 32, 16),
                                     core.named_rng(42, "accept", "mlp"))
        X = core.named_rng(42, "accept", "mlp-x").normal(0, 1, (16, 7))
        y = core.named_rng(42, "accept", "mlp-y").uniform(1.0, 3.0, 16)
        mlp_err = nk.grad_check(
            lambda p: mlp_mod.loss_and_grads(p, X, y, 1e-4), params,
            n_probes=200, rng=core.named_rng(42, "accept", "mlp-probe"),
        )
        params_l = lstm_mod.init_params(7, 32, (32, 16, 8),
                                        core.named_rng(42, "accept", "lstm"))
        Xw = core.named_rng(42, "accept", "lstm-x").normal(0, 1, (8, 10, 7))
        yw = core.named_rng(42, "accept", "lstm-y").uniform(1.0, 3.0, 8)
        lstm_err = nk.grad_check(
            lambda p: lstm_mod.loss_and_grads(p, Xw, yw, 0.0), params_l,
            n_probes=200, rng=core.named_rng(42, "accept", "lstm-probe"),
        )
        elapsed = time.time() - started
        _report(
            2, mlp_err < 1e-4 and lstm_err < 1e-4 and elapsed < 60.0,
            f"gradient checks: mlp {mlp_err:.2e}, lstm(W=10) {lstm_err:.2e} "
            f"at 200 probes each in {elapsed:.1f}s (limits 1e-4, 60s)",
        )


class TestCriterion3:
    def test_travel_time_identity_and_volume_conservation(self):
        rng = np.random.default_rng(33)
        worst = 0.0
        for _ in range(10_000):
            n = int(rng.integers(1, 30))
            lengths = rng.uniform(0.05, 4.0, n)
            speeds = rng.uniform(4.0, 80.0, n)
            route = core.RouteSpec(
                "r", "EB", tuple((f"s{i}", float(l))
                                 for i, l in enumerate(lengths))
            )
            got = fusion.route_travel_time(
                route, {f"s{i}": float(speeds[i]) for i in range(n)}
            )
            expected = float(np.sum(lengths / speeds) * 60.0)
            worst = max(worst, abs(got - expected) / max(1.0, abs(expected)))

        from datetime import datetime
        conservation = 0.0
        for trial in range(50):
            bins = int(rng.integers(10, 96)) * 5  # multiples of 30 minutes
            grid = core.TimeGrid(datetime(2018, 7, 2), 6, bins)
            counts = {
                datetime(2018, 7, 2) + timedelta(minutes=15 * i):
                    float(rng.uniform(0, 500))
                for i in range(bins * 6 // 15)
            }
            out = fusion.resample_volume(counts, grid)
            total = sum(counts.values())
            conservation = max(
                conservation, abs(out.sum() - total) / max(1.0, total)
            )
        _report(
            3, worst < 1e-9 and conservation < 1e-9,
            f"travel-time identity {worst:.2e} over 10^4 routes; volume "
            f"conservation {conservation:.2e} (limits 1e-9)",
        )


class TestCriterion4:
    def test_split_protocol_on_18_months(self):
        cfg = core.default_config(4, **{"grid.days": 548})  # Jul 18 - Dec 19
        days = []
        window = cfg.window_for("EB")
        d = date(2018, 7, 2)
        while d <= date(2019, 12, 31):
            if d.weekday() in window.active_days:
                days.append(d)
            d += timedelta(days=1)
        split = make_split(days, seed=4)
        again = make_split(days, seed=4)
        cutoff = max(days) - timedelta(days=20)
        ok = (
            len(split.test_days) == 36
            and split.validation_days == frozenset(x for x in days
                                                   if x >= cutoff)
            and not split.train_days & split.test_days
            and not split.train_days & split.validation_days
            and not split.validation_days & split.test_days
            and (split.train_days | split.validation_days | split.test_days)
            == set(days)
            and split == again
        )
        _report(
            4, ok,
            f"18-month split: {len(split.test_days)} test days (=36), "
            f"21-day validation tail, disjoint, seed-deterministic",
        )


class TestCriterion5:
    def test_forest_recovers_noiseless_linear_rule(self):
        started = time.time()
        rng = np.random.default_rng(55)
        n = 2000
        toll = rng.uniform(50, 2000, n)
        tt_toll = rng.uniform(10, 20, n)
        tt_alt = rng.uniform(12, 35, n)
        tt_diff = tt_alt - tt_toll
        volume = rng.uniform(50, 450, n)
        minute = rng.integers(330, 570, n).astype(float)
        dow = rng.integers(0, 5, n).astype(float)
        X = np.column_stack([toll, tt_toll, tt_alt, tt_diff, volume, minute, dow])
        y = 2.0 * tt_diff + toll
        forest_defaults = core.ForestParams()
        est = ForestRegressor(
            n_trees=forest_defaults.n_trees,
            max_depth=forest_defaults.max_depth,
            min_leaf=forest_defaults.min_leaf,
            features_per_split=forest_defaults.features_per_split,
            random_state=55,
        ).fit(X[:1500], y[:1500])
        pred = est.predict(X[1500:])
        resid = y[1500:] - pred
        r2 = 1 - (resid ** 2).sum() / ((y[1500:] - y[1500:].mean()) ** 2).sum()
        elapsed = time.time() - started
        _report(
            5, r2 > 0.95 and elapsed < 60.0,
            f"default-forest held-out R2 {r2:.4f} on y = 2*tt_diff + toll "
            f"in {elapsed:.1f}s (limits 0.95, 60s)",
        )


class TestCriterion6:
    def test_end_to_end_shapes(self, e2e):
        _, _, metrics, elapsed = e2e
        persistence_mae = [metrics[("persistence", h)][0] for h in HORIZONS]
        non_decreasing = all(
            b >= a for a, b in zip(persistence_mae, persistence_mae[1:])
        )
        beats = {}
        r2_ok = {}
        for algo in ("rf", "mlp", "lstm"):
            beats[algo] = all(
                metrics[(algo, h)][0] <= 0.8 * metrics[("persistence", h)][0]
                for h in (3, 4, 5)
            )
            r2_ok[algo] = all(metrics[(algo, h)][2] > 0.5 for h in HORIZONS)
        ok = (
            non_decreasing
            and all(beats.values())
            and all(r2_ok.values())
            and elapsed < 900.0
        )
        detail = (
            f"persistence MAE cents {['%.1f' % m for m in persistence_mae]} "
            f"non-decreasing={non_decreasing}; >=20% better at 18-30 min: "
            f"{beats}; R2>0.5: {r2_ok}; pipeline {elapsed:.0f}s (< 900s)"
        )
        _report(6, ok, detail)


class TestCriterion7:
    def test_persistence_identical_across_horizons(self, e2e):
        cfg_path, out, _, _ = e2e
        table = fusion.read_feature_csv(
            os.path.join(out, "features_toll.csv")
        )
        preds = []
        for h in HORIZONS:
            art = load_model(
                os.path.join(out, "models", f"persistence_toll_h{h}.tcm")
            )
            preds.append(predict_rows(art, table))
        identical = all(np.array_equal(preds[0], p) for p in preds[1:])
        _report(
            7, identical,
            f"persistence predictions bit-identical across horizons on all "
            f"{table.n_rows} rows",
        )


class TestCriterion8:
    def test_determinism_and_serialization(self, tmp_path):
        overrides = _e2e_overrides(seed=8, days=90, extra={
            "route.I66.segment_count": 2,
            "route.GWPK.segment_count": 1,
            "route.US50.segment_count": 1,
            "rf.trees": 12, "rf.max_depth": 6,
            "mlp.hidden": "8,8,8,8", "mlp.epochs": 4, "mlp.patience": 4,
            "lstm.lookback": 6, "lstm.hidden": 6, "lstm.dense": "6,5,4",
            "lstm.epochs": 3, "lstm.patience": 3,
        })
        cfg_path = _write_cfg(tmp_path / "study.cfg", overrides)

        def run(out):
            base = ["--config", cfg_path, "--out", out]
            assert cli_main(base + ["synth"]) == 0
            assert cli_main(base + ["fuse"]) == 0
            for algo in ("persistence", "rf", "mlp", "lstm"):
                assert cli_main(base + ["train", "--algo", algo]) == 0
            assert cli_main(base + ["evaluate"]) == 0

        out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
        run(out_a)
        run(out_b)

        import json

        manifests_equal = True
        for name in ("synth", "fuse", "train_rf_toll", "evaluate"):
            digests = []
            for out in (out_a, out_b):
                with open(os.path.join(out, "manifests", f"{name}.json")) as fh:
                    m = json.load(fh)
                digests.append(
                    (m["config_digest"],
                     sorted(m["inputs"].values()),
                     sorted(m["outputs"].values()))
                )
            if digests[0] != digests[1]:
                manifests_equal = False

        compared = ["metrics.csv", "errors_boxstats.csv"]
        compared += [
            f"models/{algo}_toll_h{h}.tcm"
            for algo in ("persistence", "rf", "mlp", "lstm")
            for h in HORIZONS
        ]
        diffs = [
            rel for rel in compared
            if open(os.path.join(out_a, rel), "rb").read()
            != open(os.path.join(out_b, rel), "rb").read()
        ]

        # save/load round trip preserves predictions bitwise
        table = fusion.read_feature_csv(os.path.join(out_a, "features_toll.csv"))
        rng = np.random.default_rng(88)
        rows = rng.integers(0, table.n_rows, 100)
        roundtrip_ok = True
        for algo in ("persistence", "rf", "mlp", "lstm"):
            art = load_model(
                os.path.join(out_a, "models", f"{algo}_toll_h2.tcm")
            )
            path = tmp_path / f"rt_{algo}.tcm"
            save_model(art, path)
            again = load_model(path)
            a = predict_rows(art, table, rows)
            b = predict_rows(again, table, rows)
            if not np.array_equal(a, b, equal_nan=True):
                roundtrip_ok = False
        _report(
            8, not diffs and roundtrip_ok and manifests_equal,
            f"rerun byte-identical ({len(compared)} files compared"
            + (f", diffs: {diffs}" if diffs else "")
            + f"); manifest digests equal: {manifests_equal}; save/load "
            f"predictions bitwise on 100 random rows: {roundtrip_ok}",
        )


class TestCriterion9:
    def test_ttdiff_target_path(self, tmp_path):
        # calm corridor: high capacities keep both routes near free flow,
        # so the travel-time difference barely moves
        overrides = _e2e_overrides(seed=9, days=60, target="ttdiff", extra={
            "split.validation_days": 10,
            "route.I66.capacity_vph": 9000,
            "route.GWPK.capacity_vph": 8000,
            "route.US50.capacity_vph": 8000,
            "synth.demand_sigma_vph": 120,
            "mlp.epochs": 60, "mlp.patience": 10,
        })
        cfg_path = _write_cfg(tmp_path / "study.cfg", overrides)
        out = str(tmp_path / "out")
        base = ["--config", cfg_path, "--out", out]
        assert cli_main(base + ["synth"]) == 0
        assert cli_main(base + ["fuse"]) == 0
        for algo in ("persistence", "mlp"):
            assert cli_main(base + ["train", "--algo", algo]) == 0
        assert cli_main(base + ["evaluate"]) == 0

        metrics = {}
        with open(os.path.join(out, "metrics.csv")) as fh:
            fh.readline()
            for line in fh:
                algo, horizon_min, _, mae, mape, r2 = line.strip().split(",")
                metrics[(algo, int(horizon_min) // 6)] = float(mae)
        ratios = {
            h: metrics[("mlp", h)] / metrics[("persistence", h)]
            for h in HORIZONS
        }
        ok = all(r <= 1.1 for r in ratios.values())
        _report(
            9, ok,
            "tt_diff path runs end to end; MLP/persistence MAE ratios "
            + ", ".join(f"h{h}={r:.3f}" for h, r in sorted(ratios.items()))
            + " (limit 1.1)",
        )
