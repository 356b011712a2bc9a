"""Slow, independent reference implementations used to cross-check the fast paths."""

import math

import numpy as np


def mmd_naive(X, Y):
    """Unbiased quartic-kernel MMD by explicit loops."""
    n, d = X.shape
    m = Y.shape[0]

    def k(a, b):
        return (sum(a[i] * b[i] for i in range(d)) / d + 1.0) ** 4

    kxx = math.fsum(k(X[i], X[j]) for i in range(n) for j in range(n) if i != j)
    kyy = math.fsum(k(Y[i], Y[j]) for i in range(m) for j in range(m) if i != j)
    kxy = math.fsum(k(X[i], Y[j]) for i in range(n) for j in range(m))
    return kxx / (n * (n - 1)) + kyy / (m * (m - 1)) - 2.0 * kxy / (n * m)


def ecdf_linear(values, u):
    return sum(1 for v in values if v <= u) / len(values)


def ks_grid(xs, ys):
    """Scaled KS: sup of |F - G| over every pooled sample point."""
    n, m = len(xs), len(ys)
    sup = max(abs(ecdf_linear(xs, u) - ecdf_linear(ys, u)) for u in list(xs) + list(ys))
    return math.sqrt(n * m / (n + m)) * sup


def w1_ecdf_integral(xs, ys):
    """W1 as the integral of |F - G|, exact on the piecewise-constant pooled grid."""
    grid = np.sort(np.concatenate([xs, ys]))
    total = []
    for a, b in zip(grid[:-1], grid[1:]):
        if b > a:
            total.append(abs(ecdf_linear(xs, a) - ecdf_linear(ys, a)) * (b - a))
    return math.fsum(total)


def trace_sqrt_eig(A, B):
    """tr sqrt(AB) from the eigenvalues of the nonsymmetric product."""
    ev = np.linalg.eigvals(A @ B)
    return float(np.sum(np.sqrt(np.clip(ev.real, 0.0, None))))


def random_spd(rng, d):
    M = rng.standard_normal((d, d))
    return M @ M.T + 0.1 * np.eye(d)


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)
