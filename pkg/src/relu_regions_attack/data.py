"""Dataset loading for the command-line tools.

Two on-disk formats are supported:

* CSV, one point per row: ``label,x_1,...,x_d`` with an integer label and
  float features. No header row.
* IDX image/label file pairs (the MNIST container format): a big-endian
  magic of 0x0000<type><ndim>, ndim big-endian uint32 dimensions, then raw
  data. Unsigned-byte images are flattened and scaled to [0, 1] by /255.

Features are validated against the declared box and rejected, not clamped,
when they fall outside.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DataFormatError",
    "Dataset",
    "load_dataset",
]

_IDX_UBYTE = 0x08


class DataFormatError(ValueError):
    """Raised when a dataset file cannot be parsed or validated."""


@dataclass(frozen=True)
class Dataset:
    """Points with labels plus the feature box they were validated against."""

    points: np.ndarray  # shape (n, d)
    labels: np.ndarray  # shape (n,), integer
    feature_lower: np.ndarray  # shape (d,)
    feature_upper: np.ndarray  # shape (d,)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _validate_box(points: np.ndarray, lo: float, hi: float, source: str):
    below = points < lo
    above = points > hi
    if below.any() or above.any():
        bad = below | above
        row, col = map(int, np.argwhere(bad)[0])
        raise DataFormatError(
            f"{source}: row {row}, column {col}: feature {points[row, col]!r} "
            f"outside the declared range [{lo}, {hi}]"
        )


def _load_csv(path: Path, lo: float, hi: float) -> Dataset:
    labels = []
    rows = []
    width = None
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DataFormatError(
                        f"{path}: row {line_no}: need a label and at least one feature"
                    )
            elif len(row) != width:
                raise DataFormatError(
                    f"{path}: row {line_no}: expected {width} fields, got {len(row)}"
                )
            try:
                labels.append(int(row[0]))
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}: row {line_no}: label {row[0]!r} is not an integer"
                ) from exc
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}: row {line_no}: non-numeric feature"
                ) from exc
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    points = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        row, col = map(int, np.argwhere(~np.isfinite(points))[0])
        raise DataFormatError(f"{path}: row {row}, column {col}: non-finite feature")
    label_arr = np.asarray(labels, dtype=np.int64)
    if np.any(label_arr < 0):
        raise DataFormatError(f"{path}: labels must be nonnegative")
    _validate_box(points, lo, hi, str(path))
    d = points.shape[1]
    return Dataset(points, label_arr, np.full(d, lo), np.full(d, hi))


def _read_idx(path: Path, expected_ndim: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated IDX header")
    zero, dtype, ndim = struct.unpack_from(">HBB", raw, 0)
    if zero != 0:
        raise DataFormatError(f"{path}: bad IDX magic {raw[:4]!r}")
    if dtype != _IDX_UBYTE:
        raise DataFormatError(
            f"{path}: unsupported IDX element type 0x{dtype:02x}, only unsigned "
            "byte (0x08) is supported"
        )
    if ndim != expected_ndim:
        raise DataFormatError(
            f"{path}: expected {expected_ndim}-dimensional IDX data, got {ndim}"
        )
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise DataFormatError(f"{path}: truncated IDX dimension list")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    body = raw[header_len:]
    if len(body) != count:
        raise DataFormatError(
            f"{path}: IDX payload has {len(body)} bytes, dimensions imply {count}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def _load_idx(images_path: Path, labels_path: Path, lo: float, hi: float) -> Dataset:
    images = _read_idx(images_path, 3)
    labels = _read_idx(labels_path, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} "
            f"holds {labels.shape[0]} labels"
        )
    n = images.shape[0]
    points = images.reshape(n, -1).astype(np.float64) / 255.0
    _validate_box(points, lo, hi, str(images_path))
    d = points.shape[1]
    return Dataset(points, labels.astype(np.int64), np.full(d, lo), np.full(d, hi))


def load_dataset(
    path,
    labels_path=None,
    feature_range: tuple = (0.0, 1.0),
) -> Dataset:
    """Load a CSV dataset, or an IDX pair when labels_path is given.

    feature_range is the (lo, hi) box every feature must lie in.
    """
    lo, hi = float(feature_range[0]), float(feature_range[1])
    if lo > hi:
        raise ValueError("feature_range lower bound exceeds the upper bound")
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"{path}: no such file")
    if labels_path is not None:
        labels_path = Path(labels_path)
        if not labels_path.exists():
            raise DataFormatError(f"{labels_path}: no such file")
        return _load_idx(path, labels_path, lo, hi)
    return _load_csv(path, lo, hi)
