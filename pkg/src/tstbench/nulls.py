"""Null distributions of the test statistics, thresholds, p-values and Z-scores."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .core import RngStream, as_data_matrix, parallel_map
from .dataio import bootstrap_draw, split_half
from .deformations import Deformation
from .errors import DomainError, InsufficientTailWarning, NotInvertible
from .models import ModelSpec, sample
from .teststats import MetricConfig, MetricKind, compute_statistic, llr

Z_SENTINEL = -38.0


@dataclass(eq=False)
class NullDistribution:
    values: np.ndarray
    metric: MetricKind
    n: int
    m: int
    source: str  # "generator" or "bootstrap"
    epsilon: Optional[float] = None
    elapsed_seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.sort(np.asarray(self.values, dtype=np.float64))
        self.metric = MetricKind(self.metric)

    @property
    def iterations(self) -> int:
        return int(self.values.size)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def metadata(self) -> dict:
        return {
            "metric": self.metric.value,
            "n": self.n,
            "m": self.m,
            "source": self.source,
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "elapsed_seconds": self.elapsed_seconds,
            **self.meta,
        }


@dataclass(frozen=True)
class CLThreshold:
    alpha: float
    t_alpha: float


def _generator_iteration(model, metric, cfg, n, stream, i):
    s = stream.child("iter", i)
    X = sample(model, n, s.child("x"))
    Y = sample(model, n, s.child("y"))
    return compute_statistic(metric, X, Y, cfg, s.child("stat"))


def estimate_null_generator(
    model: ModelSpec,
    metric: MetricKind | str,
    cfg: MetricConfig,
    n: int,
    iters: int,
    stream: RngStream,
    threads: int | None = None,
) -> NullDistribution:
    """Draw ``iters`` independent reference pairs and evaluate the statistic on each."""
    metric = MetricKind(metric)
    if metric is MetricKind.LLR:
        raise ValueError("the LLR null depends on epsilon; use estimate_null_llr")
    if n < 2:
        raise ValueError("n must be >= 2")
    start = time.perf_counter()
    vals = parallel_map(
        lambda i: _generator_iteration(model, metric, cfg, n, stream, i), range(iters), threads
    )
    return NullDistribution(
        values=np.array(vals),
        metric=metric,
        n=n,
        m=n,
        source="generator",
        elapsed_seconds=time.perf_counter() - start,
    )


def estimate_null_bootstrap(
    dataset,
    metric: MetricKind | str,
    cfg: MetricConfig,
    n: int,
    iters: int,
    stream: RngStream,
    with_replacement: bool = True,
    threads: int | None = None,
) -> NullDistribution:
    """Split-half bootstrap: reshuffle, halve, resample ``n`` rows from each half."""
    metric = MetricKind(metric)
    if metric is MetricKind.LLR:
        raise NotInvertible("LLR needs an analytic reference density")
    data = as_data_matrix(dataset, "dataset")
    if data.shape[0] < 2:
        raise ValueError("dataset needs at least two rows")

    def one(i):
        s = stream.child("iter", i)
        A, B = split_half(data, s.child("split"))
        X = bootstrap_draw(A, n, s.child("x"), with_replacement)
        Y = bootstrap_draw(B, n, s.child("y"), with_replacement)
        return compute_statistic(metric, X, Y, cfg, s.child("stat"))

    start = time.perf_counter()
    vals = parallel_map(one, range(iters), threads)
    return NullDistribution(
        values=np.array(vals),
        metric=metric,
        n=n,
        m=n,
        source="bootstrap",
        elapsed_seconds=time.perf_counter() - start,
        meta={"with_replacement": with_replacement},
    )


def estimate_null_llr(
    model: ModelSpec,
    defo: Deformation,
    m: int,
    iters: int,
    stream: RngStream,
    threads: int | None = None,
) -> NullDistribution:
    """LLR values on reference-distributed samples for one fixed epsilon."""
    if not defo.bijective:
        raise NotInvertible(f"{defo.kind.value} has no closed-form density")
    start = time.perf_counter()
    vals = parallel_map(
        lambda i: llr(model, defo, sample(model, m, stream.child("iter", i))), range(iters), threads
    )
    return NullDistribution(
        values=np.array(vals),
        metric=MetricKind.LLR,
        n=m,
        m=m,
        source="generator",
        epsilon=defo.epsilon,
        elapsed_seconds=time.perf_counter() - start,
    )


def _count_at_least(values: np.ndarray, t: float) -> int:
    return int(values.size - np.searchsorted(values, t, side="left"))


def threshold(null: NullDistribution, alpha: float) -> CLThreshold:
    """Smallest null value ``t`` with ``#(values >= t) / N <= alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    v = null.values
    N = v.size
    if N * alpha < 10:
        warnings.warn(
            f"only {N * alpha:.1f} expected null values beyond the alpha={alpha} threshold",
            InsufficientTailWarning,
            stacklevel=2,
        )
    allowed = math.floor(alpha * N + 1e-9)
    k = N - allowed
    if k >= N:
        warnings.warn("null too small for this alpha; using its maximum", InsufficientTailWarning, stacklevel=2)
        return CLThreshold(alpha, float(v[-1]))
    t = v[k]
    if _count_at_least(v, t) > allowed:
        # tied values straddle the cut: move to the next distinct value
        j = int(np.searchsorted(v, t, side="right"))
        if j >= N:
            warnings.warn("ties at the null maximum; using it", InsufficientTailWarning, stacklevel=2)
            return CLThreshold(alpha, float(v[-1]))
        t = v[j]
    return CLThreshold(alpha, float(t))


def p_value(null: NullDistribution, t_obs: float) -> float:
    """Add-one smoothed upper-tail p-value, always strictly positive."""
    return (1 + _count_at_least(null.values, t_obs)) / (1 + null.iterations)


def z_score(p: float) -> float:
    """``Phi^{-1}(1 - p)``; ``p = 1`` maps to the sentinel -38."""
    if not p > 0.0 or p > 1.0:
        raise DomainError("p must lie in (0, 1]")
    if p == 1.0:
        return Z_SENTINEL
    # -ndtri(p) avoids the cancellation in 1 - p for small p
    return max(float(-ndtri(p)), Z_SENTINEL)


# --------------------------------------------------------------------------
# persistence


def save_null(null: NullDistribution, csv_path: Path | str) -> None:
    """Write ``iteration,value`` rows plus a ``.json`` metadata sidecar."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "value"])
        for i, val in enumerate(null.values):
            w.writerow([i, repr(float(val))])
    csv_path.with_suffix(".json").write_text(json.dumps(null.metadata(), indent=2, sort_keys=True))


def load_null(csv_path: Path | str) -> NullDistribution:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["iteration", "value"]:
        raise ValueError(f"{csv_path} is not a null-distribution file")
    try:
        values = np.array([float(r[1]) for r in rows[1:]], dtype=np.float64)
    except (IndexError, ValueError):
        raise ValueError(f"{csv_path} has malformed rows") from None
    if values.size != int(meta["iterations"]) or not np.all(np.isfinite(values)):
        raise ValueError(f"{csv_path} is truncated or corrupted")
    extra = {
        k: v
        for k, v in meta.items()
        if k not in {"metric", "n", "m", "source", "epsilon", "iterations", "elapsed_seconds"}
    }
    return NullDistribution(
        values=values,
        metric=meta["metric"],
        n=int(meta["n"]),
        m=int(meta["m"]),
        source=meta["source"],
        epsilon=meta.get("epsilon"),
        elapsed_seconds=float(meta.get("elapsed_seconds", 0.0)),
        meta=extra,
    )
