"""Command-line pipeline: synth, validate, fuse, train, evaluate,
predict, report.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
failure. Every run writes a manifest with config and input digests so
reruns are checkable for reproducibility.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import datetime

from . import core, fusion, ingest, synth
from .core import StudyConfig, format_timestamp
from .errors import DataFormatError, NumericError, TollcastError
from .evaluate import evaluate_suite, make_split
from .models import ALGORITHMS, load_model, predict_rows, save_model, train_model

_TARGETS = ("toll", "ttdiff")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="tollcast",
        description="Multi-horizon toll forecasting pipeline",
    )
    parser.add_argument("--config", help="study configuration file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--svg", action="store_true",
                        help="also emit SVG charts where applicable")
    sub = parser.add_subparsers(dest="command", metavar="command")

    sub.add_parser("synth", help="generate the synthetic feed files")
    sub.add_parser("validate", help="parse feeds and report coverage")

    p = sub.add_parser("fuse", help="build the feature table from feeds")
    p.add_argument("--target", choices=_TARGETS)

    p = sub.add_parser("train", help="fit one algorithm per horizon")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--horizon", default="all",
                   help="1..5 or `all` (default all)")
    p.add_argument("--target", choices=_TARGETS)

    p = sub.add_parser("evaluate", help="score artifacts on the test split")
    p.add_argument("--target", choices=_TARGETS)

    p = sub.add_parser("predict", help="print horizon predictions at a time")
    p.add_argument("--at", required=True, metavar="TIMESTAMP",
                   help="local time YYYY-MM-DDTHH:MM")
    p.add_argument("--target", choices=_TARGETS)

    p = sub.add_parser("report", help="render the evaluation reports")
    p.add_argument("--target", choices=_TARGETS)
    return parser


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir, name, command, cfg, inputs, outputs,
                    started) -> None:
    os.makedirs(os.path.join(out_dir, "manifests"), exist_ok=True)
    manifest = {
        "command": command,
        "config_digest": core.config_digest(cfg),
        "seed": cfg.seed,
        "inputs": {p: _sha256_file(p) for p in inputs if os.path.exists(p)},
        "outputs": {
            p: _sha256_file(p) for p in outputs if os.path.exists(p)
        },
        "wall_time_s": round(time.time() - started, 3),
    }
    path = os.path.join(out_dir, "manifests", f"{name}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_cfg(args) -> StudyConfig:
    cfg = core.load_config(args.config) if args.config else core.default_config()
    if args.seed is not None:
        raw = core.parse_config_text(core.dump_config(cfg))
        raw["seed"] = str(args.seed)
        cfg = core.from_mapping(raw)
    target = getattr(args, "target", None)
    if target and target != cfg.target_kind:
        raw = core.parse_config_text(core.dump_config(cfg))
        raw["target_kind"] = target
        cfg = core.from_mapping(raw)
    return cfg


def _feed_paths(out_dir) -> dict:
    return {k: os.path.join(out_dir, f"{k}.csv")
            for k in ("toll", "speed", "volume")}


def _features_path(out_dir, target) -> str:
    return os.path.join(out_dir, f"features_{target}.csv")


def _model_path(out_dir, algo, target, horizon) -> str:
    return os.path.join(out_dir, "models", f"{algo}_{target}_h{horizon}.tcm")


def _parse_feeds(cfg, paths):
    parsed = {}
    for kind, path in paths.items():
        if not os.path.exists(path):
            raise DataFormatError(
                f"missing {kind} feed {path}; run `tollcast synth` or "
                f"point --out at the data directory"
            )
        records, report = ingest.parse_feed(kind, path)
        parsed[kind] = (records, report)
    return parsed


def _cmd_synth(args, cfg) -> int:
    started = time.time()
    paths = synth.generate_scenario(cfg, args.out)
    print(f"wrote {paths['toll']}, {paths['speed']}, {paths['volume']}")
    _write_manifest(args.out, "synth", "synth", cfg, [],
                    list(paths.values()), started)
    return 0


def _cmd_validate(args, cfg) -> int:
    started = time.time()
    paths = _feed_paths(args.out)
    parsed = _parse_feeds(cfg, paths)
    tolling_bins = core.tolling_intervals(cfg.grid, cfg.windows, cfg.direction)
    expected = {
        "toll": ([f"{cfg.toll_entry}|{cfg.toll_exit}"], tolling_bins),
        "speed": ([s for r in cfg.routes for s in r.segment_ids], None),
        "volume": ([
            f"{cfg.synth.volume_station}|lane{i + 1}"
            for i in range(cfg.synth.volume_lanes)
        ], None),
    }
    worst = 1.0
    for kind, (records, report) in parsed.items():
        keys, bins = expected[kind]
        cov = ingest.coverage(records, kind, cfg.grid, keys, bins)
        lo = min(cov.coverage.values()) if cov.coverage else 0.0
        worst = min(worst, lo)
        print(
            f"{kind}: accepted={report.accepted} "
            f"rejected={len(report.rejected)} "
            f"duplicates={len(report.duplicates)} min_coverage={lo:.4f}"
        )
        for line_no, reason in report.rejected[:10]:
            print(f"  line {line_no}: {reason}")
    _write_manifest(args.out, "validate", "validate", cfg,
                    list(paths.values()), [], started)
    return 0


def _cmd_fuse(args, cfg) -> int:
    started = time.time()
    paths = _feed_paths(args.out)
    parsed = _parse_feeds(cfg, paths)
    for kind, (_, report) in parsed.items():
        if report.rejected:
            print(
                f"warning: {kind} feed had {len(report.rejected)} rejected "
                f"rows", file=sys.stderr,
            )
    fused = fusion.fuse_feeds(
        cfg, parsed["toll"][0], parsed["speed"][0], parsed["volume"][0]
    )
    table = fusion.build_feature_table(cfg, fused)
    out_path = _features_path(args.out, cfg.target_kind)
    fusion.write_feature_csv(table, out_path, core.config_digest(cfg))
    print(f"wrote {out_path} ({table.n_rows} rows, "
          f"schema {table.schema_hash[:12]})")
    _write_manifest(
        args.out, "fuse", "fuse", cfg, list(paths.values()),
        [out_path, f"{out_path}.meta.json"], started,
    )
    return 0


def _require_table(args, cfg):
    path = _features_path(args.out, cfg.target_kind)
    if not os.path.exists(path):
        raise DataFormatError(
            f"missing feature table {path}; run `tollcast fuse` first"
        )
    table = fusion.read_feature_csv(path)
    expected = fusion.schema_hash(
        fusion.feature_columns(cfg.calendar_features), cfg.target_kind
    )
    if table.schema_hash != expected:
        raise DataFormatError(
            f"feature table schema {table.schema_hash[:12]} does not match "
            f"the configuration's {expected[:12]}; re-run fuse"
        )
    return path, table


def _cmd_train(args, cfg) -> int:
    started = time.time()
    if args.horizon == "all":
        horizons = list(core.HORIZONS)
    else:
        try:
            horizons = [int(args.horizon)]
        except ValueError:
            raise _UsageError(f"bad --horizon {args.horizon!r}") from None
        if horizons[0] not in core.HORIZONS:
            raise _UsageError("--horizon must be 1..5 or `all`")
    table_path, table = _require_table(args, cfg)
    split = make_split(
        set(table.dates()), cfg.seed, cfg.split.validation_days,
        cfg.split.test_days_per_month,
    )
    outputs = []
    for h in horizons:
        artifact = train_model(table, split, args.algo, h, cfg)
        path = _model_path(args.out, args.algo, cfg.target_kind, h)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_model(artifact, path)
        outputs.append(path)
        print(f"trained {args.algo} h={h} -> {path}")
    _write_manifest(
        args.out, f"train_{args.algo}_{cfg.target_kind}", "train", cfg,
        [table_path], outputs, started,
    )
    return 0


def _available_artifacts(args, cfg):
    artifacts = []
    for algo in ALGORITHMS:
        paths = [
            _model_path(args.out, algo, cfg.target_kind, h)
            for h in core.HORIZONS
        ]
        if all(os.path.exists(p) for p in paths):
            artifacts.extend(load_model(p) for p in paths)
    return artifacts


def _cmd_evaluate(args, cfg) -> int:
    started = time.time()
    table_path, table = _require_table(args, cfg)
    split = make_split(
        set(table.dates()), cfg.seed, cfg.split.validation_days,
        cfg.split.test_days_per_month,
    )
    artifacts = _available_artifacts(args, cfg)
    if not artifacts:
        raise DataFormatError(
            "no complete artifact sets found; run `tollcast train` first"
        )
    report = evaluate_suite(
        artifacts, table, split, args.out, cfg, splits=("test",),
        svg=args.svg,
    )
    for path in report.files:
        print(f"wrote {path}")
    inputs = [table_path] + [
        _model_path(args.out, a.algorithm, cfg.target_kind, a.horizon)
        for a in artifacts
    ]
    _write_manifest(args.out, "evaluate", "evaluate", cfg, inputs,
                    list(report.files), started)
    return 0


def _cmd_predict(args, cfg) -> int:
    try:
        at = datetime.fromisoformat(args.at)
    except ValueError:
        raise _UsageError(f"bad --at timestamp {args.at!r}") from None
    _, table = _require_table(args, cfg)
    if not core.is_tolling(at, cfg.direction, cfg.windows):
        raise DataFormatError(
            f"{format_timestamp(at)} is outside the {cfg.direction} tolling "
            f"window: no toll is defined there"
        )
    interval = cfg.grid.interval_of(at)
    rows = (table.interval == interval).nonzero()[0]
    if len(rows) == 0:
        raise DataFormatError(
            f"no feature row at {format_timestamp(at)} (data missing or "
            f"row dropped during fusion)"
        )
    row = int(rows[0])
    unit = "$" if cfg.target_kind == "toll" else "min"

    def fmt(v) -> str:
        if v != v:
            return "n/a"
        return f"${v / 100:.2f}" if unit == "$" else f"{v:+.2f} min"

    current = float(table.current_value()[row])
    print(f"at {format_timestamp(at)} ({cfg.target_kind}, {cfg.direction}): "
          f"current = {fmt(current)}")
    algos = []
    preds = {}
    for algo in ALGORITHMS:
        if algo == "persistence":
            continue
        paths = [
            _model_path(args.out, algo, cfg.target_kind, h)
            for h in core.HORIZONS
        ]
        if all(os.path.exists(p) for p in paths):
            algos.append(algo)
            for h, p in zip(core.HORIZONS, paths):
                artifact = load_model(p)
                preds[(algo, h)] = float(
                    predict_rows(artifact, table, [row])[0]
                )
    header = "  lead    persistence" + "".join(f"  {a:>10}" for a in algos)
    print(header)
    for h in core.HORIZONS:
        cells = "".join(
            f"  {fmt(preds[(a, h)]):>10}" for a in algos
        )
        print(f"  +{6 * h:2d} min  {fmt(current):>11}{cells}")
    return 0


def _read_csv_dicts(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        return [dict(zip(header, line.strip().split(",")))
                for line in fh if line.strip()]


def _cmd_report(args, cfg) -> int:
    metrics_path = os.path.join(args.out, "metrics.csv")
    box_path = os.path.join(args.out, "errors_boxstats.csv")
    for path in (metrics_path, box_path):
        if not os.path.exists(path):
            raise DataFormatError(
                f"missing {path}; run `tollcast evaluate` first"
            )
    unit = "$" if cfg.target_kind == "toll" else "min"
    scale = 100.0 if unit == "$" else 1.0
    rows = _read_csv_dicts(metrics_path)
    print(f"target: {cfg.target_kind}   (MAE in {unit}, MAPE as fraction)")
    print(f"{'algorithm':<12}{'horizon':>8}{'mae':>12}{'mape':>10}{'r2':>10}")
    for r in rows:
        mae = float(r["mae"]) / scale
        print(
            f"{r['algorithm']:<12}{r['horizon_min']+' min':>8}"
            f"{mae:>12.3f}{float(r['mape']):>10.3f}{float(r['r2']):>10.3f}"
        )
    print()
    print(f"{'algorithm':<12}{'horizon':>8}{'median':>10}{'IQR':>14}"
          f"{'whiskers':>20}{'outliers':>9}")
    for r in _read_csv_dicts(box_path):
        med = float(r["median"]) / scale
        q1, q3 = float(r["q1"]) / scale, float(r["q3"]) / scale
        lo, hi = float(r["whisker_low"]) / scale, float(r["whisker_high"]) / scale
        print(
            f"{r['algorithm']:<12}{r['horizon_min']+' min':>8}{med:>10.3f}"
            f"{f'[{q1:.2f}, {q3:.2f}]':>14}{f'[{lo:.2f}, {hi:.2f}]':>20}"
            f"{r['outliers']:>9}"
        )
    if args.svg:
        print("SVG charts are emitted by `tollcast evaluate --svg`.")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "validate": _cmd_validate,
    "fuse": _cmd_fuse,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise _UsageError("a command is required (see --help)")
        cfg = _load_cfg(args)
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](args, cfg)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except TollcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
