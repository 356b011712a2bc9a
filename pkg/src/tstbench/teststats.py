"""The six two-sample test statistics and the Kolmogorov distribution.

Statistics take ``(n, d)`` float arrays. Randomized statistics (the sliced
ones and the extrapolated Frechet distance) take a stream so that their
internal randomness is replayable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import (
    RngStream,
    as_data_matrix,
    as_generator,
    check_same_dim,
    sample_unit_directions,
)
from .deformations import Deformation, deformed_log_density
from .errors import FactorizationFailure, TooFewPoints, UnequalSizes
from .models import ModelSpec, log_density


class MetricKind(str, enum.Enum):
    SW = "SW"
    MEAN_KS = "MeanKS"
    SLICED_KS = "SlicedKS"
    MMD = "MMD"
    FGD = "FGD"
    LLR = "LLR"


@dataclass(frozen=True)
class MetricConfig:
    K: int = 100
    fgd_fit_fractions: tuple[float, ...] = (1.0, 1.25, 1.5, 1.75, 2.0)
    fgd_draws_per_size: int = 5

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        fr = tuple(float(f) for f in self.fgd_fit_fractions)
        if len(set(fr)) != len(fr) or 1.0 not in fr or min(fr) < 1.0:
            raise ValueError("fgd_fit_fractions must be distinct, >= 1 and include 1.0")
        object.__setattr__(self, "fgd_fit_fractions", fr)
        if self.fgd_draws_per_size < 1:
            raise ValueError("fgd_draws_per_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "fgd_fit_fractions": list(self.fgd_fit_fractions),
            "fgd_draws_per_size": self.fgd_draws_per_size,
        }


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray = field(repr=False)


# --------------------------------------------------------------------------
# one-dimensional building blocks


def wasserstein_1d_sorted(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size != ys.size or xs.size == 0:
        raise UnequalSizes(f"sorted-pairing W1 needs equal nonzero sizes, got {xs.size} and {ys.size}")
    return float(np.mean(np.abs(xs - ys)))


@numba.njit(cache=True, nogil=True)
def _ks_merge_count(xs, ys):
    # max |m * #(x <= u) - n * #(y <= u)| over u, exact in integers
    n = xs.shape[0]
    m = ys.shape[0]
    i = 0
    j = 0
    best = 0
    while i < n or j < m:
        if j >= m or (i < n and xs[i] <= ys[j]):
            u = xs[i]
        else:
            u = ys[j]
        while i < n and xs[i] == u:
            i += 1
        while j < m and ys[j] == u:
            j += 1
        diff = m * i - n * j
        if diff < 0:
            diff = -diff
        if diff > best:
            best = diff
    return best


@numba.njit(cache=True, nogil=True)
def _ks_merge_rows(XS, YS, out):
    for r in range(XS.shape[0]):
        out[r] = _ks_merge_count(XS[r], YS[r])


def _ks_scale(n: int, m: int) -> float:
    return math.sqrt(n * m / (n + m)) / (n * m)


def ks_1d(xs, ys) -> float:
    """Scaled two-sample KS statistic ``sqrt(nm/(n+m)) sup|F_n - G_m|``.

    Both inputs must already be sorted ascending.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    if xs.size == 0 or ys.size == 0:
        raise TooFewPoints("KS needs nonempty samples")
    return _ks_merge_count(xs, ys) * _ks_scale(xs.size, ys.size)


def _ks_sorted_rows(XS: np.ndarray, YS: np.ndarray) -> np.ndarray:
    """KS statistic for each row pair of two row-sorted ``(r, n)``/``(r, m)`` arrays."""
    out = np.empty(XS.shape[0], dtype=np.int64)
    _ks_merge_rows(np.ascontiguousarray(XS), np.ascontiguousarray(YS), out)
    return out * _ks_scale(XS.shape[1], YS.shape[1])


def _projections(X: np.ndarray, Y: np.ndarray, K: int, stream) -> tuple[np.ndarray, np.ndarray]:
    dirs = sample_unit_directions(X.shape[1], K, stream)
    PX = np.sort(dirs @ X.T, axis=1)
    PY = np.sort(dirs @ Y.T, axis=1)
    return PX, PY


# --------------------------------------------------------------------------
# sliced / marginal statistics


def sliced_wasserstein(X, Y, cfg: MetricConfig, stream: RngStream | np.random.Generator) -> float:
    X = as_data_matrix(X, "X")
    Y = as_data_matrix(Y, "Y")
    check_same_dim(X, Y)
    if X.shape[0] != Y.shape[0]:
        raise UnequalSizes(f"sliced Wasserstein needs n == m, got {X.shape[0]} and {Y.shape[0]}")
    PX, PY = _projections(X, Y, cfg.K, stream)
    return float(np.mean(np.abs(PX - PY)))


def mean_ks(X, Y) -> float:
    X = as_data_matrix(X, "X")
    Y = as_data_matrix(Y, "Y")
    check_same_dim(X, Y)
    XS = np.sort(X.T, axis=1)
    YS = np.sort(Y.T, axis=1)
    return float(np.mean(_ks_sorted_rows(XS, YS)))


def sliced_ks(X, Y, cfg: MetricConfig, stream: RngStream | np.random.Generator) -> float:
    X = as_data_matrix(X, "X")
    Y = as_data_matrix(Y, "Y")
    check_same_dim(X, Y)
    PX, PY = _projections(X, Y, cfg.K, stream)
    return float(np.mean(_ks_sorted_rows(PX, PY)))


# --------------------------------------------------------------------------
# maximum mean discrepancy

_MMD_BLOCK = 2048


def poly_kernel(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    check_same_dim(x[None, :], y[None, :])
    return float((x @ y / x.size + 1.0) ** 4)


def _kernel_sum(A: np.ndarray, B: np.ndarray, exclude_diagonal: bool) -> float:
    """Sum of the quartic kernel over all pairs, blocked over rows of ``A``."""
    d = A.shape[1]
    partial = []
    for start in range(0, A.shape[0], _MMD_BLOCK):
        block = A[start : start + _MMD_BLOCK]
        k = block @ B.T
        k /= d
        k += 1.0
        np.square(k, out=k)
        np.square(k, out=k)
        s = float(np.sum(k))
        if exclude_diagonal:
            rows = np.arange(block.shape[0])
            s -= float(np.sum(k[rows, start + rows]))
        partial.append(s)
    return math.fsum(partial)


def mmd_unbiased(X, Y) -> float:
    """Unbiased quadratic-time MMD^2 estimate with the quartic polynomial kernel.

    Can be negative when the two samples come from the same law.
    """
    X = as_data_matrix(X, "X")
    Y = as_data_matrix(Y, "Y")
    check_same_dim(X, Y)
    n, m = X.shape[0], Y.shape[0]
    if n < 2 or m < 2:
        raise TooFewPoints("MMD needs at least two points per sample")
    kxx = _kernel_sum(X, X, exclude_diagonal=True) / (n * (n - 1))
    kyy = _kernel_sum(Y, Y, exclude_diagonal=True) / (m * (m - 1))
    kxy = _kernel_sum(X, Y, exclude_diagonal=False) / (n * m)
    return kxx + kyy - 2.0 * kxy


# --------------------------------------------------------------------------
# Frechet Gaussian distance


def gaussian_summary(X) -> GaussianSummary:
    X = as_data_matrix(X)
    if X.shape[0] < 2:
        raise TooFewPoints("covariance needs at least two points")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    return GaussianSummary(mean=mean, covariance=0.5 * (cov + cov.T))


def _psd_sqrt(A: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (A + A.T))
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


def trace_sqrt_product(A, B) -> float:
    """``tr sqrt(A^{1/2} B A^{1/2})``, which equals ``tr sqrt(A B)`` for PSD A, B."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    try:
        ra = _psd_sqrt(A)
        M = ra @ B @ ra
        w = np.linalg.eigvalsh(0.5 * (M + M.T))
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise FactorizationFailure("non-finite eigenvalues in covariance product")
    return float(np.sum(np.sqrt(np.maximum(w, 0.0))))


def frechet_from_summaries(a: GaussianSummary, b: GaussianSummary) -> float:
    diff = a.mean - b.mean
    tr = np.trace(a.covariance) + np.trace(b.covariance)
    return float(diff @ diff + tr - 2.0 * trace_sqrt_product(a.covariance, b.covariance))


def fgd_finite(X, Y) -> float:
    X = as_data_matrix(X, "X")
    Y = as_data_matrix(Y, "Y")
    check_same_dim(X, Y)
    return frechet_from_summaries(gaussian_summary(X), gaussian_summary(Y))


def fgd_inf(X, Y, cfg: MetricConfig, stream: RngStream | np.random.Generator) -> float:
    """Frechet distance extrapolated to infinite sample size.

    FGD is averaged over random subsamples at sizes ``n / f`` for each fit
    fraction ``f``; a least-squares line in ``1/size`` is fitted and its
    intercept returned.
    """
    X = as_data_matrix(X, "X")
    Y = as_data_matrix(Y, "Y")
    check_same_dim(X, Y)
    n, m = X.shape[0], Y.shape[0]
    d = X.shape[1]
    fmax = max(cfg.fgd_fit_fractions)
    if min(n, m) // fmax < d + 2 or int(min(n, m) / fmax) < d + 2:
        raise TooFewPoints(f"smallest FGD subsample must have at least d+2={d + 2} points")
    rng = as_generator(stream)
    inv_sizes = []
    values = []
    for f in cfg.fgd_fit_fractions:
        nx = int(n / f)
        my = int(m / f)
        if nx == n and my == m:
            # a full-size draw without replacement is a permutation: no randomness to average
            val = fgd_finite(X, Y)
        else:
            draws = []
            for _ in range(cfg.fgd_draws_per_size):
                xi = rng.choice(n, size=nx, replace=False)
                yi = rng.choice(m, size=my, replace=False)
                draws.append(fgd_finite(X[xi], Y[yi]))
            val = float(np.mean(draws))
        inv_sizes.append(1.0 / nx)
        values.append(val)
    if len(set(inv_sizes)) == 1:
        # a single subsample size leaves no slope to fit
        return float(np.mean(values))
    slope_design = np.column_stack([np.ones(len(values)), inv_sizes])
    coef, *_ = np.linalg.lstsq(slope_design, np.asarray(values), rcond=None)
    return float(coef[0])


# --------------------------------------------------------------------------
# likelihood ratio


def _safe_deformed_logq(model: ModelSpec, defo: Deformation, Y: np.ndarray) -> np.ndarray:
    if defo.kind.value.startswith("pow") and np.any(Y == 0.0):
        Y = np.where(Y == 0.0, 1e-300, Y)
    return deformed_log_density(model, defo, Y)


def llr(model: ModelSpec, defo: Deformation, Y) -> float:
    """``-2 sum_y [log p(y) - log q_eps(y)]``; independent of the reference sample."""
    Y = as_data_matrix(Y, "Y")
    if defo.epsilon == 0.0:
        return 0.0
    logq = _safe_deformed_logq(model, defo, Y)
    logp = log_density(model, Y)
    return float(-2.0 * np.sum(logp - logq))


# --------------------------------------------------------------------------
# Kolmogorov distribution


def _kolmogorov_series(x: float, pdf: bool) -> float:
    total = 0.0
    for k in range(1, 201):
        e = math.exp(-2.0 * k * k * x * x)
        term = (k * k * e) if pdf else e
        total += term if k % 2 == 1 else -term
        if term < 1e-12:
            break
    return 8.0 * x * total if pdf else 1.0 - 2.0 * total


def _kolmogorov_small_x(x: float, pdf: bool) -> float:
    # theta-function form of the same series; converges fast where the alternating one does not
    c = math.pi * math.pi / (8.0 * x * x)
    total = 0.0
    for k in range(1, 201):
        j = (2 * k - 1) ** 2
        e = math.exp(-j * c)
        # d/dx of e/x is e * (2 j c - 1) / x^2
        total += e * (2.0 * j * c - 1.0) / (x * x) if pdf else e / x
        if e < 1e-17:
            break
    return math.sqrt(2.0 * math.pi) * total


def kolmogorov_cdf(x: float) -> float:
    x = float(x)
    if x <= 0.0:
        return 0.0
    if x < 0.8:
        return _kolmogorov_small_x(x, pdf=False)
    return _kolmogorov_series(x, pdf=False)


def kolmogorov_pdf(x: float) -> float:
    x = float(x)
    if x <= 0.0:
        return 0.0
    if x < 0.8:
        return _kolmogorov_small_x(x, pdf=True)
    return _kolmogorov_series(x, pdf=True)


# --------------------------------------------------------------------------
# dispatch


def compute_statistic(
    metric: MetricKind | str,
    X: np.ndarray,
    Y: np.ndarray,
    cfg: MetricConfig,
    stream: RngStream | np.random.Generator,
) -> float:
    """Evaluate any non-LLR statistic on a sample pair."""
    metric = MetricKind(metric)
    if metric is MetricKind.SW:
        return sliced_wasserstein(X, Y, cfg, stream)
    if metric is MetricKind.MEAN_KS:
        return mean_ks(X, Y)
    if metric is MetricKind.SLICED_KS:
        return sliced_ks(X, Y, cfg, stream)
    if metric is MetricKind.MMD:
        return mmd_unbiased(X, Y)
    if metric is MetricKind.FGD:
        return fgd_inf(X, Y, cfg, stream)
    raise ValueError("LLR depends on the model and deformation; use llr()")
