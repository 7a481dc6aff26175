"""Versioned, checksummed binary container for trained models.

Layout: 4 magic bytes, u32 format version, u64 header length, a UTF-8
JSON header (identity fields plus array manifest), the raw little-endian
array payload in manifest order, and a trailing SHA-256 over everything
before it. Loading a saved artifact reproduces predictions bit for bit
because parameters travel as raw float64/int64 bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DataFormatError, SchemaMismatchError

MAGIC = b"TLCM"
FORMAT_VERSION = 1

_DTYPES = {"float64": "<f8", "int64": "<i8"}


@dataclass(frozen=True)
class ModelArtifact:
    """A trained, serializable predictor bound to one target and horizon."""

    algorithm: str  # persistence | rf | mlp | lstm
    target_kind: str  # toll | ttdiff
    horizon: int  # 1..5
    schema_hash: str
    seed: int
    arrays: dict  # name -> float64/int64 ndarray
    meta: dict  # JSON-able scalars/strings/lists
    version: int = FORMAT_VERSION

    def require_schema(self, schema_hash: str) -> None:
        if schema_hash != self.schema_hash:
            raise SchemaMismatchError(
                f"artifact schema {self.schema_hash[:12]}... does not match "
                f"table schema {schema_hash[:12]}..."
            )


def _canonical_dtype(arr: np.ndarray) -> str:
    if arr.dtype == np.float64:
        return "float64"
    if arr.dtype == np.int64:
        return "int64"
    raise DataFormatError(f"unsupported artifact dtype {arr.dtype}")


def save_model(artifact: ModelArtifact, sink) -> None:
    """Write the artifact to a path or binary file object."""
    manifest = []
    payload = io.BytesIO()
    for name in sorted(artifact.arrays):
        arr = np.ascontiguousarray(artifact.arrays[name])
        dtype = _canonical_dtype(arr)
        manifest.append({
            "name": name,
            "dtype": dtype,
            "shape": list(arr.shape),
        })
        payload.write(arr.astype(_DTYPES[dtype], copy=False).tobytes())
    header = {
        "algorithm": artifact.algorithm,
        "target_kind": artifact.target_kind,
        "horizon": artifact.horizon,
        "schema_hash": artifact.schema_hash,
        "seed": artifact.seed,
        "meta": artifact.meta,
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = (
        MAGIC
        + struct.pack("<I", FORMAT_VERSION)
        + struct.pack("<Q", len(header_bytes))
        + header_bytes
        + payload.getvalue()
    )
    checksum = hashlib.sha256(body).digest()
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(body + checksum)
    else:
        sink.write(body + checksum)


def load_model(source) -> ModelArtifact:
    """Read an artifact; verifies magic, version, and checksum."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            blob = fh.read()
    else:
        blob = source.read()
    if len(blob) < len(MAGIC) + 12 + 32:
        raise DataFormatError("artifact truncated: shorter than fixed header")
    if blob[:4] != MAGIC:
        raise DataFormatError(
            f"bad magic bytes {blob[:4]!r}; expected {MAGIC!r}"
        )
    body, checksum = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise DataFormatError("artifact checksum mismatch (file corrupt?)")
    version = struct.unpack("<I", body[4:8])[0]
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"artifact format version {version}; expected {FORMAT_VERSION}"
        )
    header_len = struct.unpack("<Q", body[8:16])[0]
    header_end = 16 + header_len
    if header_end > len(body):
        raise DataFormatError("artifact truncated inside header")
    try:
        header = json.loads(body[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"unreadable artifact header: {exc}") from exc
    arrays = {}
    offset = header_end
    for entry in header["arrays"]:
        dtype = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        raw = body[offset:offset + nbytes]
        if len(raw) != nbytes:
            raise DataFormatError(
                f"artifact truncated inside array {entry['name']!r}"
            )
        arrays[entry["name"]] = (
            np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        )
        offset += nbytes
    if offset != len(body):
        raise DataFormatError("artifact has trailing bytes after arrays")
    return ModelArtifact(
        algorithm=header["algorithm"],
        target_kind=header["target_kind"],
        horizon=header["horizon"],
        schema_hash=header["schema_hash"],
        seed=header["seed"],
        arrays=arrays,
        meta=header["meta"],
        version=version,
    )
