"""Analytic reference distributions: Gaussian mixtures and correlated Gaussians."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .core import RngStream, as_generator
from .errors import DimensionMismatch, FactorizationFailure

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class MoGSpec:
    """Mixture of ``q`` diagonal Gaussians in ``d`` dimensions."""

    means: np.ndarray  # (q, d)
    stds: np.ndarray  # (q, d)
    weights: np.ndarray  # (q,)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def q(self) -> int:
        return self.means.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        """Exact mixture covariance from the component moments."""
        mu = self.mean()
        second = np.einsum("k,ki,kj->ij", self.weights, self.means, self.means)
        second += np.diag(self.weights @ self.stds**2)
        cov = second - np.outer(mu, mu)
        return 0.5 * (cov + cov.T)

    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance()))

    def to_dict(self) -> dict:
        return {
            "kind": "mog",
            "d": self.d,
            "q": self.q,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "weights": self.weights.tolist(),
        }


@dataclass(frozen=True, eq=False)
class CGSpec:
    """Multivariate normal with full covariance."""

    mean_vec: np.ndarray  # (d,)
    covariance_matrix: np.ndarray  # (d, d)
    cholesky_factor: np.ndarray  # lower triangular (d, d)

    @property
    def d(self) -> int:
        return self.mean_vec.shape[0]

    def mean(self) -> np.ndarray:
        return self.mean_vec

    def covariance(self) -> np.ndarray:
        return self.covariance_matrix

    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance_matrix))

    def correlation(self) -> np.ndarray:
        sd = self.std()
        return self.covariance_matrix / np.outer(sd, sd)

    def to_dict(self) -> dict:
        return {
            "kind": "cg",
            "d": self.d,
            "mean": self.mean_vec.tolist(),
            "covariance": self.covariance_matrix.tolist(),
            "cholesky_factor": self.cholesky_factor.tolist(),
        }


ModelSpec = Union[MoGSpec, CGSpec]


def default_components(d: int) -> int:
    """Mixture size used for a given dimension (3 for d<=5, 5 for d<=20, else 10)."""
    if d <= 5:
        return 3
    if d <= 20:
        return 5
    return 10


def build_mog(d: int, q: int, stream: RngStream) -> MoGSpec:
    if d < 1 or q < 1:
        raise ValueError("d and q must be positive")
    rng = as_generator(stream)
    means = rng.uniform(-5.0, 5.0, size=(q, d))
    # 1 - U[0,1) lies in (0, 1]: a zero standard deviation is never produced
    stds = 1.0 - rng.random((q, d))
    raw = 1.0 - rng.random(q)
    weights = raw / raw.sum()
    return MoGSpec(means=means, stds=stds, weights=weights)


def _spd_cholesky(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sym = 0.5 * (matrix + matrix.T)
    w, v = np.linalg.eigh(sym)
    if w[-1] <= 0 or not np.all(np.isfinite(w)):
        raise FactorizationFailure("matrix has no positive eigenvalues")
    floor = 1e-10 * w[-1]
    if w[0] < floor:
        sym = (v * np.maximum(w, floor)) @ v.T
        sym = 0.5 * (sym + sym.T)
    try:
        chol = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(str(exc)) from exc
    return sym, chol


CG_COVARIANCES = ("mixture", "correlation")


def build_cg(d: int, stream: RngStream, q: int | None = None, covariance: str = "mixture") -> CGSpec:
    """Correlated Gaussian built from the same-seed mixture model of dimension ``d``.

    Its correlation matrix is always the mixture's analytic correlation matrix.
    With ``covariance="mixture"`` (default) the feature variances are the
    mixture's as well; ``"correlation"`` uses unit variances instead.
    """
    if d < 1:
        raise ValueError("d must be positive")
    if covariance not in CG_COVARIANCES:
        raise ValueError(f"covariance must be one of {CG_COVARIANCES}")
    q = default_components(d) if q is None else q
    mog = build_mog(d, q, stream)
    cov = mog.covariance()
    if covariance == "correlation":
        sd = np.sqrt(np.diag(cov))
        cov = cov / np.outer(sd, sd)
        np.fill_diagonal(cov, 1.0)
    cov, chol = _spd_cholesky(cov)
    mean = as_generator(stream.child("cg-mean")).uniform(-5.0, 5.0, size=d)
    return CGSpec(mean_vec=mean, covariance_matrix=cov, cholesky_factor=chol)


def cg_from_moments(mean, covariance) -> CGSpec:
    mean = np.asarray(mean, dtype=np.float64)
    cov, chol = _spd_cholesky(np.asarray(covariance, dtype=np.float64))
    if cov.shape != (mean.size, mean.size):
        raise DimensionMismatch("covariance shape does not match mean")
    return CGSpec(mean_vec=mean, covariance_matrix=cov, cholesky_factor=chol)


def sample(model: ModelSpec, n: int, stream: RngStream | np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    rng = as_generator(stream)
    if isinstance(model, CGSpec):
        z = rng.standard_normal((n, model.d))
        return model.mean_vec + z @ model.cholesky_factor.T
    comp = rng.choice(model.q, size=n, p=model.weights)
    z = rng.standard_normal((n, model.d))
    return model.means[comp] + model.stds[comp] * z


def log_density(model: ModelSpec, points) -> np.ndarray | float:
    """Exact log-pdf at one point (``(d,)``) or many (``(n, d)``)."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != model.d:
        raise DimensionMismatch(f"point dimension {pts.shape[1]} != model dimension {model.d}")
    if isinstance(model, CGSpec):
        L = model.cholesky_factor
        z = solve_triangular(L, (pts - model.mean_vec).T, lower=True)
        logdet = np.sum(np.log(np.diag(L)))
        out = -0.5 * np.sum(z * z, axis=0) - logdet - 0.5 * model.d * _LOG_2PI
    else:
        # (n, q) per-component log densities, then log-sum-exp over components
        diff = (pts[:, None, :] - model.means[None, :, :]) / model.stds[None, :, :]
        comp = -0.5 * np.sum(diff * diff, axis=2) - np.sum(np.log(model.stds), axis=1)[None, :]
        comp += np.log(model.weights)[None, :] - 0.5 * model.d * _LOG_2PI
        out = logsumexp(comp, axis=1)
    return float(out[0]) if single else out


def model_from_dict(data: dict) -> ModelSpec:
    kind = data.get("kind")
    if kind == "mog":
        spec = MoGSpec(
            means=np.asarray(data["means"], dtype=np.float64),
            stds=np.asarray(data["stds"], dtype=np.float64),
            weights=np.asarray(data["weights"], dtype=np.float64),
        )
        if abs(spec.weights.sum() - 1.0) > 1e-12 or np.any(spec.stds <= 0):
            raise ValueError("invalid mixture: weights must sum to 1 and stds be positive")
        return spec
    if kind == "cg":
        mean = np.asarray(data["mean"], dtype=np.float64)
        cov = np.asarray(data["covariance"], dtype=np.float64)
        if "cholesky_factor" in data:
            chol = np.asarray(data["cholesky_factor"], dtype=np.float64)
            return CGSpec(mean_vec=mean, covariance_matrix=cov, cholesky_factor=chol)
        return cg_from_moments(mean, cov)
    raise ValueError(f"unknown model kind {kind!r}")


def model_to_json(model: ModelSpec) -> str:
    return json.dumps(model.to_dict(), sort_keys=True)


def model_from_json(text: str) -> ModelSpec:
    return model_from_dict(json.loads(text))
