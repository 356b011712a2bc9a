import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from tstbench.core import make_stream
from tstbench.models import (
    CGSpec,
    MoGSpec,
    build_cg,
    build_mog,
    cg_from_moments,
    default_components,
    log_density,
    model_from_json,
    model_to_json,
    sample,
)


def test_build_mog_ranges():
    m = build_mog(5, 3, make_stream(11, "model"))
    assert np.all((m.means >= -5) & (m.means <= 5))
    assert np.all((m.stds > 0) & (m.stds <= 1))
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_build_mog_single_component():
    m = build_mog(1, 1, make_stream(3, "model"))
    assert m.weights.tolist() == [1.0]


def test_build_pure_function_of_seed():
    a = build_mog(4, 3, make_stream(5, "model"))
    b = build_mog(4, 3, make_stream(5, "model"))
    assert model_to_json(a) == model_to_json(b)
    c1 = build_cg(6, make_stream(5, "model"))
    c2 = build_cg(6, make_stream(5, "model"))
    assert model_to_json(c1) == model_to_json(c2)


def test_cg_1d_unit_covariance():
    cg = build_cg(1, make_stream(9, "model"), covariance="correlation")
    assert cg.covariance().tolist() == [[1.0]]


def test_cg_mixture_covariance_matches_mog():
    stream = make_stream(9, "model")
    mog = build_mog(4, default_components(4), stream)
    cg = build_cg(4, stream)
    assert np.allclose(cg.covariance(), mog.covariance(), rtol=1e-12, atol=1e-12)
    corr = build_cg(4, stream, covariance="correlation")
    assert np.allclose(cg.correlation(), corr.covariance(), atol=1e-12)
    assert np.array_equal(cg.mean(), corr.mean())


@pytest.mark.parametrize("covariance", ["mixture", "correlation"])
def test_cg_correlation_structure(covariance):
    cg = build_cg(5, make_stream(9, "model"), covariance=covariance)
    C = cg.correlation()
    assert np.allclose(np.diag(C), 1.0, atol=1e-12)
    off = C[~np.eye(5, dtype=bool)]
    assert np.all(np.abs(off) <= 1.0)
    # order-one off-diagonal structure
    assert np.max(np.abs(off)) > 0.1
    assert np.all(np.linalg.eigvalsh(C) > 0)


def test_cg_matches_sampled_mog_correlation():
    stream = make_stream(21, "model")
    d = 5
    mog = build_mog(d, default_components(d), stream)
    cg = build_cg(d, stream)
    X = sample(mog, 1_000_000, make_stream(21, "mc"))
    assert np.max(np.abs(np.corrcoef(X.T) - cg.correlation())) < 5e-3


def test_mog_covariance_analytic_vs_samples():
    mog = build_mog(3, 3, make_stream(2, "model"))
    X = sample(mog, 400_000, make_stream(2, "mc"))
    cov = mog.covariance()
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / X.shape[0])
    assert np.all(np.abs(np.cov(X.T) - cov) < 5 * se)


def test_cg_sample_mean_clt():
    cg = cg_from_moments([1.0, -2.0], [[1.0, 0.6], [0.6, 2.0]])
    n = 1_000_000
    X = sample(cg, n, make_stream(4, "s"))
    assert np.all(np.abs(X.mean(axis=0) - cg.mean()) < 4 * cg.std() / np.sqrt(n))


def test_cg_sample_covariance():
    cg = build_cg(4, make_stream(8, "model"))
    n = 1_000_000
    X = sample(cg, n, make_stream(8, "s"))
    C = cg.covariance()
    se = np.sqrt((np.outer(np.diag(C), np.diag(C)) + C**2) / n)
    assert np.all(np.abs(np.cov(X.T) - C) < 5 * se)


def test_mog_single_component_is_diagonal_gaussian():
    mog = MoGSpec(np.array([[1.0, -1.0]]), np.array([[0.5, 2.0]]), np.array([1.0]))
    X = sample(mog, 200_000, make_stream(1, "s"))
    assert np.allclose(X.mean(axis=0), [1.0, -1.0], atol=0.02)
    assert np.allclose(X.std(axis=0), [0.5, 2.0], rtol=0.01)
    pts = np.array([[0.3, 0.2], [1.0, -1.0]])
    want = stats.norm.logpdf(pts, [1.0, -1.0], [0.5, 2.0]).sum(axis=1)
    assert np.allclose(log_density(mog, pts), want, rtol=1e-12)


def test_sample_single_row():
    assert sample(build_cg(3, make_stream(1, "m")), 1, make_stream(1, "s")).shape == (1, 3)


def test_cg_log_density_standard_normal_mode():
    cg = cg_from_moments([0.0], [[1.0]])
    assert log_density(cg, np.array([0.0])) == pytest.approx(-0.5 * np.log(2 * np.pi), rel=1e-15)


def test_cg_log_density_matches_scipy():
    cg = build_cg(4, make_stream(3, "m"))
    pts = np.random.default_rng(0).standard_normal((10, 4))
    want = stats.multivariate_normal(cg.mean(), cg.covariance()).logpdf(pts)
    assert np.allclose(log_density(cg, pts), want, rtol=1e-10)


@pytest.mark.parametrize("a", [0.5, 1.0, 3.0])
def test_symmetric_mixture_at_origin(a):
    mog = MoGSpec(np.array([[a], [-a]]), np.ones((2, 1)), np.array([0.5, 0.5]))
    want = np.log(np.exp(-a * a / 2) / np.sqrt(2 * np.pi))
    assert log_density(mog, np.array([0.0])) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("which", ["cg", "mog"])
def test_density_integrates_to_one(which):
    stream = make_stream(5, "m")
    model = build_cg(1, stream) if which == "cg" else build_mog(1, 3, stream)
    val, _ = integrate.quad(lambda x: np.exp(log_density(model, np.array([x]))), -40, 40, limit=400, points=[0.0])
    assert val == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=25)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31))
def test_mog_log_density_finite(d, q, seed):
    mog = build_mog(d, q, make_stream(seed, "m"))
    pts = np.random.default_rng(seed).uniform(-50, 50, size=(20, d))
    assert np.all(np.isfinite(log_density(mog, pts)))


@pytest.mark.parametrize("which", ["cg", "mog"])
def test_json_roundtrip(which):
    stream = make_stream(5, "m")
    model = build_cg(3, stream) if which == "cg" else build_mog(3, 2, stream)
    back = model_from_json(model_to_json(model))
    assert type(back) is type(model)
    pts = np.random.default_rng(1).standard_normal((5, 3))
    assert np.array_equal(log_density(back, pts), log_density(model, pts))


def test_cg_spec_is_cg():
    assert isinstance(build_cg(2, make_stream(1, "m")), CGSpec)
