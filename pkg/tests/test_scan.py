import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tstbench.core import make_stream
from tstbench.dataio import make_dataset, standardize
from tstbench.deformations import DeformKind
from tstbench.errors import InsufficientTailWarning, NonMonotoneWarning, NotInvertible
from tstbench.models import build_cg, sample
from tstbench.nulls import estimate_null_generator, p_value, threshold
from tstbench.scan import (
    AltEvaluation,
    AlternativeSampler,
    ScanProblem,
    _check_monotone,
    bisect_crossing,
    bisect_epsilon,
    bisect_epsilon_llr,
    evaluate_alternative,
    scan_problem,
)
from tstbench.teststats import MetricConfig, MetricKind

pytestmark = pytest.mark.filterwarnings("ignore::tstbench.errors.InsufficientTailWarning")


@pytest.fixture(scope="module")
def cg5():
    return build_cg(5, make_stream(3, "model"))


@pytest.fixture(scope="module")
def sw_null(cg5):
    return estimate_null_generator(cg5, MetricKind.SW, MetricConfig(), 500, 300, make_stream(3, "null"))


def test_linear_crossing_exact():
    c = bisect_crossing(lambda e: (e, 0.25), eps_max=1.0, tolerance=1e-2)
    assert c.converged
    assert c.eps == pytest.approx(0.25, rel=1e-2)


@settings(max_examples=40)
@given(st.floats(0.01, 15.0), st.floats(0.5, 3.0))
def test_crossing_of_monotone_curves(target, power):
    c = bisect_crossing(lambda e: (e**power, target**power), eps_max=2.0, tolerance=1e-3)
    if target <= 16.0:
        assert c.converged
        assert c.eps == pytest.approx(target, rel=1e-2)


def test_crossing_unreachable():
    c = bisect_crossing(lambda e: (0.0, 1.0), eps_max=2.0)
    assert not c.converged and c.eps == 16.0


def test_crossing_first_step_moves_right():
    probes = []

    def fn(e):
        probes.append(e)
        return e, 0.3

    bisect_crossing(fn, eps_max=2.0)
    assert probes[0] == 2.0 and probes[1] == 1.0
    # t(0) = t0(0): zero is never accepted as the crossing
    assert min(probes) > 0.0


def test_zero_epsilon_matches_null(cg5, sw_null):
    p = ScanProblem(MetricKind.SW, DeformKind.MU, 500, model=cg5, reps=40)
    ev = evaluate_alternative(p, 0.0, make_stream(9, "scan"))
    assert abs(ev.mean - sw_null.mean()) < 3 * ev.std / np.sqrt(ev.reps) + 3 * sw_null.values.std() / np.sqrt(300)


def test_large_epsilon_separates(cg5, sw_null):
    p = ScanProblem(MetricKind.SW, DeformKind.MU, 500, model=cg5, reps=10)
    ev = evaluate_alternative(p, 5.0, make_stream(9, "scan"))
    # the alternative sits several of its own std devs beyond the largest null draw
    assert ev.mean - 5 * ev.std > sw_null.values.max()


def test_evaluation_deterministic_and_cached(cg5):
    p = ScanProblem(MetricKind.SW, DeformKind.SIGMA_DIAG, 200, model=cg5, reps=5)
    a = evaluate_alternative(p, 0.3, make_stream(1, "scan"))
    b = evaluate_alternative(p, 0.3, make_stream(1, "scan"))
    assert a == b
    s = AlternativeSampler(p, make_stream(1, "scan"))
    assert s.evaluate(0.3) is s.evaluate(0.3)


def test_threads_do_not_change_results(cg5):
    kw = dict(model=cg5, reps=6)
    a = evaluate_alternative(ScanProblem(MetricKind.SLICED_KS, DeformKind.NOISE_NORMAL, 200, threads=1, **kw), 0.2, make_stream(1, "s"))
    b = evaluate_alternative(ScanProblem(MetricKind.SLICED_KS, DeformKind.NOISE_NORMAL, 200, threads=4, **kw), 0.2, make_stream(1, "s"))
    assert a == b


def test_bisect_epsilon_ordering_and_nesting(cg5, sw_null):
    p = ScanProblem(MetricKind.SW, DeformKind.MU, 500, model=cg5, reps=20)
    b95, b99 = scan_problem(p, [0.05, 0.01], make_stream(5, "scan"), sw_null)
    for b in (b95, b99):
        assert b.converged
        assert b.eps_low <= b.eps <= b.eps_up
    assert b95.eps <= b99.eps
    assert b95.t_alpha == threshold(sw_null, 0.05).t_alpha


def test_bisect_epsilon_rejects_mismatched_null(cg5, sw_null):
    p = ScanProblem(MetricKind.MEAN_KS, DeformKind.MU, 500, model=cg5, reps=5)
    with pytest.raises(ValueError):
        bisect_epsilon(p, sw_null, 0.05, make_stream(1, "s"))


def test_llr_scan_beats_sw(cg5, sw_null):
    stream = make_stream(5, "scan")
    sw = bisect_epsilon(ScanProblem(MetricKind.SW, DeformKind.MU, 500, model=cg5, reps=20), sw_null, 0.05, stream)
    lp = ScanProblem(MetricKind.LLR, DeformKind.MU, 500, model=cg5, reps=20, llr_null_iterations=300)
    lr = bisect_epsilon_llr(lp, 0.05, stream)
    assert lr.converged and sw.converged
    assert lr.eps < sw.eps
    assert lr.eps_low <= lr.eps <= lr.eps_up


def test_llr_requires_bijective(cg5):
    p = ScanProblem(MetricKind.LLR, DeformKind.NOISE_UNIFORM, 100, model=cg5, reps=5)
    with pytest.raises(NotInvertible):
        AlternativeSampler(p, make_stream(1, "s"))


def test_zero_epsilon_rarely_rejected(cg5, sw_null):
    rejected = 0
    seeds = 20
    for seed in range(seeds):
        p = ScanProblem(MetricKind.SW, DeformKind.MU, 500, model=cg5, reps=5)
        ev = evaluate_alternative(p, 0.0, make_stream(seed, "zero"))
        rejected += p_value(sw_null, ev.mean) <= 0.05
    assert rejected <= 0.1 * seeds


def test_non_monotone_warning():
    evals = [AltEvaluation(0.1, 5.0, 0.1, 10), AltEvaluation(0.2, 1.0, 0.1, 10)]
    with pytest.warns(NonMonotoneWarning):
        assert not _check_monotone(evals)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert _check_monotone(list(reversed(evals)))


def test_dataset_mode_scan():
    cg = build_cg(3, make_stream(2, "model"))
    data = sample(cg, 6000, make_stream(2, "data")) * [1.0, 10.0, 0.1] + [0.0, 5.0, -1.0]
    ds = make_dataset(data)
    _, scale = standardize(ds)
    from tstbench.nulls import estimate_null_bootstrap

    null = estimate_null_bootstrap(data, MetricKind.MEAN_KS, MetricConfig(), 1000, 200, make_stream(2, "null"))
    p = ScanProblem(MetricKind.MEAN_KS, DeformKind.MU, 1000, dataset=data, scale=scale, reps=20)
    b = bisect_epsilon(p, null, 0.05, make_stream(2, "scan"))
    assert b.converged and 0 < b.eps < 2


def test_problem_validation(cg5):
    with pytest.raises(ValueError):
        ScanProblem(MetricKind.SW, DeformKind.MU, 10)
    with pytest.raises(ValueError):
        ScanProblem(MetricKind.SW, DeformKind.MU, 10, model=cg5, reps=1)
    with pytest.raises(ValueError):
        ScanProblem(MetricKind.SW, DeformKind.MU, 10, dataset=np.zeros((4, 5)))
