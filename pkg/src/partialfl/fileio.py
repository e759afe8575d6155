"""Binary dataset (``FDS1``) and model snapshot (``FMD1``) formats, plus CSV ingestion.

All integers are little-endian u32 and all reals little-endian float32.

FDS1: magic, n, dim, classes, features (n x dim, row-major), labels (n).
FMD1: magic, connection count, then per connection rows, cols, the weight
matrix row-major and the bias vector (rows).
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .data import Dataset
from .model import ParamStore

DATASET_MAGIC = b"FDS1"
MODEL_MAGIC = b"FMD1"


def _atomic_write(path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(path, ds: Dataset) -> None:
    n, d = ds.features.shape
    blob = (
        DATASET_MAGIC
        + struct.pack("<III", n, d, ds.num_classes)
        + ds.features.astype("<f4").tobytes()
        + ds.labels.astype("<u4").tobytes()
    )
    _atomic_write(path, blob)


def read_dataset(path) -> Dataset:
    blob = Path(path).read_bytes()
    if blob[:4] != DATASET_MAGIC:
        raise ValueError(f"{path}: not an FDS1 dataset (bad magic)")
    if len(blob) < 16:
        raise ValueError(f"{path}: truncated header")
    n, d, c = struct.unpack_from("<III", blob, 4)
    expected = 16 + 4 * n * d + 4 * n
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(blob)}")
    feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=16).reshape(n, d)
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=16 + 4 * n * d)
    return Dataset(feats.astype(np.float64), labels.astype(np.int64), c)


def read_csv_dataset(path, num_classes: int | None = None) -> Dataset:
    """Header row, numeric feature columns, integer label in the last column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: need a header row and at least one feature column")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    labels = arr[:, -1]
    if not np.all(labels == np.round(labels)) or labels.min() < 0:
        raise ValueError(f"{path}: labels must be non-negative integers")
    labels = labels.astype(np.int64)
    return Dataset(arr[:, :-1], labels, num_classes or int(labels.max()) + 1)


def load_dataset(path) -> Dataset:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == DATASET_MAGIC:
        return read_dataset(path)
    return read_csv_dataset(path)


def model_to_bytes(params: ParamStore) -> bytes:
    parts = [MODEL_MAGIC, struct.pack("<I", len(params.weights))]
    for w, b in zip(params.weights, params.biases):
        parts.append(struct.pack("<II", *w.shape))
        parts.append(w.astype("<f4").tobytes())
        parts.append(b.astype("<f4").tobytes())
    return b"".join(parts)


def model_from_bytes(blob: bytes) -> ParamStore:
    if blob[:4] != MODEL_MAGIC:
        raise ValueError("not an FMD1 model snapshot (bad magic)")
    try:
        return _parse_model(blob)
    except (struct.error, ValueError) as err:
        raise ValueError(f"corrupt model snapshot: {err}") from None


def _parse_model(blob: bytes) -> ParamStore:
    (count,) = struct.unpack_from("<I", blob, 4)
    off = 8
    weights, biases = [], []
    for _ in range(count):
        rows, cols = struct.unpack_from("<II", blob, off)
        off += 8
        w = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=off).reshape(rows, cols)
        off += 4 * rows * cols
        b = np.frombuffer(blob, dtype="<f4", count=rows, offset=off)
        off += 4 * rows
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(blob):
        raise ValueError(f"trailing bytes in model snapshot ({len(blob) - off})")
    return ParamStore(weights, biases)


def write_model(path, params: ParamStore) -> None:
    _atomic_write(path, model_to_bytes(params))


def read_model(path) -> ParamStore:
    return model_from_bytes(Path(path).read_bytes())
