import io

import numpy as np
import pytest

from tollcast.errors import DataFormatError, SchemaMismatchError
from tollcast.evaluate import SplitAssignment
from tollcast.models import (
    load_model,
    predict_rows,
    save_model,
    train_model,
)
from tollcast.models.artifact import FORMAT_VERSION, ModelArtifact


def _tiny_artifact():
    return ModelArtifact(
        algorithm="rf",
        target_kind="toll",
        horizon=2,
        schema_hash="abc123",
        seed=7,
        arrays={
            "a": np.arange(6, dtype=np.float64).reshape(2, 3),
            "b": np.array([1, 2, 3], dtype=np.int64),
        },
        meta={"n": 3, "tag": "x"},
    )


class TestContainerFormat:
    def test_roundtrip_preserves_everything(self):
        art = _tiny_artifact()
        buf = io.BytesIO()
        save_model(art, buf)
        buf.seek(0)
        again = load_model(buf)
        assert again.algorithm == art.algorithm
        assert again.horizon == art.horizon
        assert again.schema_hash == art.schema_hash
        assert again.meta == art.meta
        for k in art.arrays:
            assert np.array_equal(again.arrays[k], art.arrays[k])
            assert again.arrays[k].dtype == art.arrays[k].dtype

    def test_save_is_byte_deterministic(self):
        a, b = io.BytesIO(), io.BytesIO()
        save_model(_tiny_artifact(), a)
        save_model(_tiny_artifact(), b)
        assert a.getvalue() == b.getvalue()

    def test_truncated_file_fails_checksum(self, tmp_path):
        path = tmp_path / "m.tcm"
        save_model(_tiny_artifact(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-7])
        with pytest.raises(DataFormatError):
            load_model(path)

    def test_corrupted_payload_fails_checksum(self, tmp_path):
        path = tmp_path / "m.tcm"
        save_model(_tiny_artifact(), path)
        blob = bytearray(path.read_bytes())
        blob[60] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError, match="checksum"):
            load_model(path)

    def test_bad_magic_rejected(self):
        blob = b"NOPE" + b"\x00" * 60
        with pytest.raises(DataFormatError, match="magic"):
            load_model(io.BytesIO(blob))

    def test_version_mismatch_names_expected(self, tmp_path):
        path = tmp_path / "m.tcm"
        save_model(_tiny_artifact(), path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99  # bump the little-endian version field
        # keep the checksum consistent so the version check is what trips
        import hashlib

        body = bytes(blob[:-32])
        blob[-32:] = hashlib.sha256(body).digest()
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError, match=str(FORMAT_VERSION)):
            load_model(path)

    def test_schema_guard(self):
        art = _tiny_artifact()
        with pytest.raises(SchemaMismatchError):
            art.require_schema("something-else")


@pytest.fixture(scope="module")
def split(small_table):
    days = sorted(set(small_table.dates()))
    return SplitAssignment(
        train_days=frozenset(days[:-2]),
        validation_days=frozenset(days[-2:-1]),
        test_days=frozenset(days[-1:]),
        seed=3,
    )


class TestTrainedRoundTrips:
    @pytest.mark.parametrize("algorithm", ["persistence", "rf", "mlp", "lstm"])
    def test_predictions_bitwise_after_roundtrip(
        self, small_cfg, small_table, split, algorithm, tmp_path
    ):
        cfg = _fast_cfg(small_cfg)
        art = train_model(small_table, split, algorithm, 1, cfg)
        path = tmp_path / f"{algorithm}.tcm"
        save_model(art, path)
        again = load_model(path)
        rng = np.random.default_rng(0)
        rows = rng.integers(0, small_table.n_rows, 100)
        a = predict_rows(art, small_table, rows)
        b = predict_rows(again, small_table, rows)
        assert np.array_equal(a, b, equal_nan=True)

    def test_mismatched_schema_refused_at_predict(
        self, small_cfg, small_table, split
    ):
        import dataclasses

        art = train_model(small_table, split, "persistence", 1,
                          _fast_cfg(small_cfg))
        other = dataclasses.replace(art, schema_hash="f" * 64)
        with pytest.raises(SchemaMismatchError):
            predict_rows(other, small_table)


def _fast_cfg(cfg):
    from conftest import tiny_config

    return tiny_config(
        seed=cfg.seed, days=5,
        **{
            "rf.trees": 5, "rf.max_depth": 5,
            "mlp.hidden": "8,8,8,8", "mlp.epochs": 2, "mlp.patience": 2,
            "lstm.lookback": 4, "lstm.hidden": 6, "lstm.dense": "6,5,4",
            "lstm.epochs": 2, "lstm.patience": 2,
        },
    )
