"""Seeded random streams, empirical CDFs and unit-sphere directions.

Every random draw in the harness goes through an :class:`RngStream`. A stream
is a pure value ``(master_seed, label, index)``; the generator it produces
depends on nothing else, so work can be fanned out over threads in any order
and still reproduce bit-for-bit.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .errors import DimensionMismatch

_MASK64 = (1 << 64) - 1

T = TypeVar("T")


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """Deterministic, splittable source of randomness.

    Streams with different ``(label, index)`` pairs are statistically
    independent; identical triples always produce the same sequence.
    """

    master_seed: int
    label: str
    index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed & _MASK64,
            spawn_key=(_label_key(self.label), self.index & _MASK64),
        )
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, label: str, index: int = 0) -> "RngStream":
        """Derive an independent sub-stream (e.g. one per iteration)."""
        return RngStream(self.master_seed, f"{self.label}#{self.index}/{label}", index)

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "label": self.label, "index": self.index}

    @classmethod
    def from_dict(cls, data: dict) -> "RngStream":
        return cls(int(data["master_seed"]), str(data["label"]), int(data["index"]))


def make_stream(master_seed: int, label: str, index: int = 0) -> RngStream:
    return RngStream(int(master_seed), str(label), int(index))


def as_generator(stream: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    return stream.generator()


def as_data_matrix(values, name: str = "X") -> np.ndarray:
    """Validate and return an ``(n, d)`` float64 array of finite values.

    One-dimensional input is treated as a single feature column.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def sorted_sample(values) -> np.ndarray:
    return np.sort(np.asarray(values, dtype=np.float64).ravel())


def ecdf_eval(s: np.ndarray, u):
    """Right-continuous eCDF of the sorted sample ``s`` at ``u``.

    Ties are consumed entirely, i.e. the value is ``#(s <= u) / n``.
    """
    s = np.asarray(s)
    if s.size == 0:
        raise ValueError("empty sample")
    out = np.searchsorted(s, u, side="right") / s.size
    return float(out) if np.ndim(out) == 0 else out


def sample_unit_directions(d: int, K: int, stream: RngStream | np.random.Generator) -> np.ndarray:
    """Draw ``K`` directions uniformly on the unit sphere in ``R^d``.

    Returns a ``(K, d)`` array whose rows have unit Euclidean norm.
    """
    if d < 1 or K < 1:
        raise ValueError("d and K must be positive")
    rng = as_generator(stream)
    dirs = rng.standard_normal((K, d))
    norms = np.linalg.norm(dirs, axis=1)
    while np.any(norms == 0.0):
        bad = norms == 0.0
        dirs[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(dirs, axis=1)
    return dirs / norms[:, None]


def default_threads() -> int:
    env = os.environ.get("TSTBENCH_THREADS")
    if env:
        return max(1, int(env))
    return 1


def parallel_map(fn: Callable[[int], T], indices: Iterable[int], threads: int | None = None) -> list[T]:
    """Ordered map over task indices; results do not depend on ``threads``."""
    indices = list(indices)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(indices) <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, indices))


def check_same_dim(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")


def stable_digest(parts: Sequence[object]) -> str:
    h = hashlib.blake2b(digest_size=16)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()
