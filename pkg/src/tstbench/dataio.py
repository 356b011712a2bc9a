"""Finite datasets: loading, standardization and split-half resampling.

Two on-disk encodings are supported:

* ``csv`` -- header row of feature names, then one comma-separated row per
  point with ``.`` as decimal separator;
* ``raw`` -- ``b"TSB1"``, ``n`` and ``d`` as little-endian uint32, then
  ``n*d`` little-endian float64 values in row-major order.
"""

from __future__ import annotations

import csv
import hashlib
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream, as_generator
from .errors import ConstantFeature, NarrowFeatureWarning, NonFiniteValue, ParseError, TooFewPoints

RAW_MAGIC = b"TSB1"
_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True, eq=False)
class Dataset:
    matrix: np.ndarray
    feature_names: tuple[str, ...]
    source_path: str = ""
    content_hash: str = ""

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class ScaleInfo:
    means: np.ndarray
    stds: np.ndarray


def values_hash(matrix: np.ndarray) -> str:
    """128-bit digest of the shape and little-endian float64 values."""
    arr = np.ascontiguousarray(matrix, dtype="<f8")
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<II", *arr.shape))
    h.update(arr.tobytes())
    return h.hexdigest()


def make_dataset(matrix, feature_names=None, source_path: str = "") -> Dataset:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ParseError("dataset must be two-dimensional")
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(matrix.shape[1])]
    names = tuple(str(f) for f in feature_names)
    if len(names) != matrix.shape[1]:
        raise ParseError(f"{len(names)} feature names for {matrix.shape[1]} columns")
    bad = np.argwhere(~np.isfinite(matrix))
    if bad.size:
        r, c = bad[0]
        raise NonFiniteValue("non-finite value", row=int(r), column=int(c))
    return Dataset(matrix, names, str(source_path), values_hash(matrix))


def _warn_narrow(ds: Dataset) -> None:
    if ds.n < 2:
        return
    std = ds.matrix.std(axis=0)
    # std is at least ptp/sqrt(2n), so compare against the magnitude of the values instead
    scale = np.max(np.abs(ds.matrix), axis=0)
    narrow = np.nonzero((std > 0) & (std < 1e-6 * scale))[0]
    if narrow.size:
        warnings.warn(
            f"features {narrow.tolist()} are nearly delta-distributed; epsilon scans may not converge",
            NarrowFeatureWarning,
            stacklevel=3,
        )


def _load_csv(path: Path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty csv file") from None
        rows = []
        for r, line in enumerate(reader, start=2):
            if not line:
                continue
            if len(line) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(line)}", row=r)
            vals = []
            for c, cell in enumerate(line, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"cannot parse {cell!r} as a number", row=r, column=c) from None
                if not np.isfinite(v):
                    raise NonFiniteValue("non-finite value", row=r, column=c)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ParseError("csv file has no data rows")
    return make_dataset(np.array(rows, dtype=np.float64), header, str(path))


def _load_raw(path: Path) -> Dataset:
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ParseError("raw file shorter than its header")
    magic, n, d = _HEADER.unpack_from(blob)
    if magic != RAW_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {RAW_MAGIC!r}")
    expected = _HEADER.size + 8 * n * d
    if len(blob) != expected:
        raise ParseError(f"raw file has {len(blob)} bytes, expected {expected}")
    values = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64).reshape(n, d)
    return make_dataset(values, None, str(path))


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "raw" if path.suffix.lower() in {".raw", ".bin", ".tsb"} else "csv"


def load_dataset(path, format: str | None = None) -> Dataset:
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        ds = _load_csv(path)
    elif fmt == "raw":
        ds = _load_raw(path)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    _warn_narrow(ds)
    return ds


def save_dataset(ds: Dataset, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(ds.feature_names)
            for row in ds.matrix:
                w.writerow([repr(float(v)) for v in row])
    elif fmt == "raw":
        arr = np.ascontiguousarray(ds.matrix, dtype="<f8")
        path.write_bytes(_HEADER.pack(RAW_MAGIC, arr.shape[0], arr.shape[1]) + arr.tobytes())
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")


def standardize(ds: Dataset) -> tuple[Dataset, ScaleInfo]:
    means = ds.matrix.mean(axis=0)
    stds = ds.matrix.std(axis=0)
    for i, s in enumerate(stds):
        if not s > 0:
            raise ConstantFeature(i)
    z = (ds.matrix - means) / stds
    return make_dataset(z, ds.feature_names, ds.source_path), ScaleInfo(means, stds)


def destandardize(matrix: np.ndarray, scale: ScaleInfo) -> np.ndarray:
    return np.asarray(matrix) * scale.stds + scale.means


def split_half(data, stream: RngStream | np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform shuffle, then the first ``floor(n/2)`` rows versus the rest."""
    matrix = data.matrix if isinstance(data, Dataset) else np.asarray(data)
    n = matrix.shape[0]
    if n < 2:
        raise TooFewPoints("split_half needs at least two rows")
    perm = as_generator(stream).permutation(n)
    h = n // 2
    return matrix[perm[:h]], matrix[perm[h:]]


def bootstrap_draw(
    half: np.ndarray,
    n: int,
    stream: RngStream | np.random.Generator,
    with_replacement: bool = True,
) -> np.ndarray:
    rows = half.shape[0]
    rng = as_generator(stream)
    if with_replacement:
        if rows < 1:
            raise TooFewPoints("cannot resample an empty half")
        return half[rng.integers(0, rows, size=n)]
    if n > rows:
        raise TooFewPoints(f"cannot draw {n} rows without replacement from {rows}")
    return half[rng.permutation(rows)[:n]]
