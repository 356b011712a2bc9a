"""Epsilon-parameterized transforms that turn the reference law into alternatives.

A :class:`Deformation` freezes every random choice that must stay fixed while
epsilon varies (the mean-shift and scale directions), so that for a given
scan the family ``g(.; eps)`` is nested. Per-sample randomness (shuffles and
additive noise) is drawn from ``(stream, iteration)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import RngStream, as_data_matrix
from .errors import DimensionMismatch, NotInvertible, SingularPoint
from .models import ModelSpec, log_density


class DeformKind(str, enum.Enum):
    MU = "mu"
    SIGMA_DIAG = "sigma_diag"
    SIGMA_OFFDIAG = "sigma_offdiag"
    POW_PLUS = "pow_plus"
    POW_MINUS = "pow_minus"
    NOISE_NORMAL = "noise_normal"
    NOISE_UNIFORM = "noise_uniform"

    @property
    def bijective(self) -> bool:
        return self in _BIJECTIVE


_BIJECTIVE = {DeformKind.MU, DeformKind.SIGMA_DIAG, DeformKind.POW_PLUS, DeformKind.POW_MINUS}


@dataclass(frozen=True, eq=False)
class Deformation:
    kind: DeformKind
    epsilon: float
    d: int
    stream: RngStream
    mu_dirs: Optional[np.ndarray] = None
    sigma_dirs: Optional[np.ndarray] = None
    model_mean: Optional[np.ndarray] = None
    model_std: Optional[np.ndarray] = None

    @property
    def bijective(self) -> bool:
        if self.kind is DeformKind.POW_MINUS:
            return self.epsilon < 1.0
        return self.kind.bijective

    def with_epsilon(self, epsilon: float) -> "Deformation":
        if epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        return replace(self, epsilon=float(epsilon))

    def delta_mu(self) -> np.ndarray:
        return self.epsilon * self.mu_dirs

    def delta_sigma(self, epsilon: float | None = None) -> np.ndarray:
        eps = self.epsilon if epsilon is None else epsilon
        return 1.0 + eps * self.sigma_dirs

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else a.tolist()

        return {
            "kind": self.kind.value,
            "epsilon": self.epsilon,
            "d": self.d,
            "stream": self.stream.to_dict(),
            "mu_dirs": arr(self.mu_dirs),
            "sigma_dirs": arr(self.sigma_dirs),
            "model_mean": arr(self.model_mean),
            "model_std": arr(self.model_std),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Deformation":
        def arr(a):
            return None if a is None else np.asarray(a, dtype=np.float64)

        return cls(
            kind=DeformKind(data["kind"]),
            epsilon=float(data["epsilon"]),
            d=int(data["d"]),
            stream=RngStream.from_dict(data["stream"]),
            mu_dirs=arr(data.get("mu_dirs")),
            sigma_dirs=arr(data.get("sigma_dirs")),
            model_mean=arr(data.get("model_mean")),
            model_std=arr(data.get("model_std")),
        )


def make_deformation(
    kind: DeformKind | str,
    epsilon: float,
    d: int,
    stream: RngStream,
    model_mean=None,
    model_std=None,
) -> Deformation:
    """Freeze a deformation.

    The frozen directions depend only on ``stream``, never on ``epsilon``, so
    ``make_deformation(k, e1, ...)`` and ``make_deformation(k, e2, ...)`` with
    the same stream belong to one nested family.
    """
    kind = DeformKind(kind)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    mu_dirs = sigma_dirs = None
    if kind is DeformKind.MU:
        mu_dirs = stream.child("mu-dirs").generator().uniform(-1.0, 1.0, size=d)
    elif kind in (DeformKind.SIGMA_DIAG, DeformKind.SIGMA_OFFDIAG):
        # off-diagonal needs them too: beyond eps=1 it continues as a diagonal rescaling
        sigma_dirs = stream.child("sigma-dirs").generator().uniform(0.0, 1.0, size=d)
    mean = None if model_mean is None else np.asarray(model_mean, dtype=np.float64)
    std = None if model_std is None else np.asarray(model_std, dtype=np.float64)
    return Deformation(
        kind=kind,
        epsilon=float(epsilon),
        d=int(d),
        stream=stream,
        mu_dirs=mu_dirs,
        sigma_dirs=sigma_dirs,
        model_mean=mean,
        model_std=std,
    )


def _center(defo: Deformation, X: np.ndarray) -> np.ndarray:
    if defo.model_mean is not None:
        return defo.model_mean
    return X.mean(axis=0)


def _scale_about(X: np.ndarray, center: np.ndarray, dsig: np.ndarray) -> np.ndarray:
    # x + (dsig - 1)(x - c) is exactly x when dsig == 1
    return X + (dsig - 1.0) * (X - center)


def _signed_pow(x: np.ndarray, power: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** power


def apply(defo: Deformation, X, iteration: int = 0) -> np.ndarray:
    """Return ``g(X; eps)``; per-sample randomness comes from ``(stream, iteration)``."""
    X = as_data_matrix(X)
    if X.shape[1] != defo.d:
        raise DimensionMismatch(f"data dimension {X.shape[1]} != deformation dimension {defo.d}")
    eps = defo.epsilon
    if eps == 0.0:
        return X.copy()
    kind = defo.kind
    if kind is DeformKind.MU:
        return X + defo.delta_mu()
    if kind is DeformKind.SIGMA_DIAG:
        return _scale_about(X, _center(defo, X), defo.delta_sigma())
    if kind is DeformKind.POW_PLUS:
        return _signed_pow(X, 1.0 + eps)
    if kind is DeformKind.POW_MINUS:
        return _signed_pow(X, 1.0 - eps)

    rng = defo.stream.child("apply", iteration).generator()
    n, d = X.shape
    if kind is DeformKind.NOISE_NORMAL:
        return X + eps * rng.standard_normal((n, d))
    if kind is DeformKind.NOISE_UNIFORM:
        return X + eps * rng.uniform(-1.0, 1.0, size=(n, d))

    # SIGMA_OFFDIAG: independent partial shuffle of each column
    Y = X.copy()
    frac = min(eps, 1.0)
    k = int(np.floor(frac * n))
    for j in range(d):
        order = rng.permutation(n)
        idx = order[:k]
        if k > 1:
            Y[idx, j] = X[idx[rng.permutation(k)], j]
    if eps > 1.0:
        Y = _scale_about(Y, _center(defo, X), defo.delta_sigma(eps - 1.0))
    return Y


def _require_bijective(defo: Deformation) -> None:
    if not defo.bijective:
        raise NotInvertible(f"{defo.kind.value} deformation at eps={defo.epsilon} has no inverse")


def inverse(defo: Deformation, Y) -> np.ndarray:
    _require_bijective(defo)
    Y = np.asarray(Y, dtype=np.float64)
    eps = defo.epsilon
    if eps == 0.0:
        return Y.copy()
    kind = defo.kind
    if kind is DeformKind.MU:
        return Y - defo.delta_mu()
    if kind is DeformKind.SIGMA_DIAG:
        if defo.model_mean is None:
            raise NotInvertible("sigma_diag inverse needs a fixed model mean")
        return defo.model_mean + (Y - defo.model_mean) / defo.delta_sigma()
    if kind is DeformKind.POW_PLUS:
        return _signed_pow(Y, 1.0 / (1.0 + eps))
    return _signed_pow(Y, 1.0 / (1.0 - eps))


def log_abs_det_jacobian(defo: Deformation, X) -> np.ndarray | float:
    """``log|det dg/dx|`` at one point ``(d,)`` or each row of ``(n, d)``."""
    _require_bijective(defo)
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    eps = defo.epsilon
    kind = defo.kind
    if kind is DeformKind.MU or eps == 0.0:
        out = np.zeros(X2.shape[0])
    elif kind is DeformKind.SIGMA_DIAG:
        out = np.full(X2.shape[0], np.sum(np.log(defo.delta_sigma())))
    else:
        if np.any(X2 == 0.0):
            raise SingularPoint("power deformation Jacobian is singular at zero")
        sign = 1.0 if kind is DeformKind.POW_PLUS else -1.0
        power = 1.0 + sign * eps
        out = X2.shape[1] * np.log(power) + sign * eps * np.sum(np.log(np.abs(X2)), axis=1)
    return float(out[0]) if single else out


def deformed_log_density(model: ModelSpec, defo: Deformation, Y) -> np.ndarray | float:
    """``log q_eps(y) = log p(g^-1(y)) - log|det J_g|(g^-1(y))``."""
    X = inverse(defo, Y)
    return log_density(model, X) - log_abs_det_jacobian(defo, X)
