"""Bisection search for the smallest deformation rejected at a confidence level.

For a deformation family ``q_eps`` the alternative is tested ``reps`` times
at each probed epsilon, giving the mean ``mu(eps)`` and standard deviation
``sigma(eps)`` of the statistic. Three crossings are located against the null
threshold ``t_alpha``: ``mu = t_alpha`` (the reported epsilon), ``mu + sigma =
t_alpha`` (lower one-sigma companion) and ``mu - sigma = t_alpha`` (upper).

Replication ``r`` always uses the same reference and pre-deformation samples
whatever the epsilon (common random numbers), so ``mu(eps)`` is a smooth
function of epsilon and repeated probes of one epsilon are identical.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import RngStream, parallel_map
from .dataio import ScaleInfo, bootstrap_draw, destandardize, split_half
from .deformations import DeformKind, Deformation, apply, make_deformation
from .errors import NonMonotoneWarning, NotInvertible
from .models import ModelSpec, sample
from .nulls import NullDistribution, estimate_null_llr, threshold
from .teststats import MetricConfig, MetricKind, compute_statistic, llr

_TINY = 1e-300


@dataclass(frozen=True)
class AltEvaluation:
    epsilon: float
    mean: float
    std: float
    reps: int

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "mean": self.mean, "std": self.std, "reps": self.reps}


@dataclass
class EpsilonBound:
    alpha: float
    eps: float
    eps_low: float
    eps_up: float
    converged: bool
    t_alpha: Optional[float] = None
    evaluations: list[AltEvaluation] = field(default_factory=list)
    elapsed_seconds: float = 0.0
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "eps": self.eps,
            "eps_low": self.eps_low,
            "eps_up": self.eps_up,
            "converged": self.converged,
            "t_alpha": self.t_alpha,
            "elapsed_seconds": self.elapsed_seconds,
            "flags": self.flags,
            "evaluations": [e.to_dict() for e in self.evaluations],
        }


@dataclass
class ScanProblem:
    """Everything that defines one epsilon scan.

    Exactly one of ``model`` (generator mode) or ``dataset`` (finite-data
    mode, with its full-dataset ``scale``) must be given.
    """

    metric: MetricKind
    kind: DeformKind
    n: int
    model: Optional[ModelSpec] = None
    dataset: Optional[np.ndarray] = None
    scale: Optional[ScaleInfo] = None
    cfg: MetricConfig = field(default_factory=MetricConfig)
    reps: int = 100
    eps_max: float = 2.0
    tolerance: float = 1e-2
    noisy_tolerance: float = 5e-2
    scale_features: bool = False
    with_replacement: bool = True
    llr_null_iterations: int = 1000
    max_doublings: int = 3
    max_steps: int = 60
    threads: Optional[int] = None

    def __post_init__(self):
        self.metric = MetricKind(self.metric)
        self.kind = DeformKind(self.kind)
        if (self.model is None) == (self.dataset is None):
            raise ValueError("give exactly one of model or dataset")
        if self.eps_max <= 0 or self.tolerance <= 0:
            raise ValueError("eps_max and tolerance must be positive")
        if self.reps < 2:
            raise ValueError("reps must be >= 2")
        if self.dataset is not None and self.scale is None:
            raise ValueError("dataset mode needs the full-dataset ScaleInfo")

    @property
    def d(self) -> int:
        return self.model.d if self.model is not None else self.dataset.shape[1]

    def settings(self) -> dict:
        return {
            "metric": self.metric.value,
            "deformation": self.kind.value,
            "n": self.n,
            "reps": self.reps,
            "eps_max": self.eps_max,
            "tolerance": self.tolerance,
            "noisy_tolerance": self.noisy_tolerance,
            "tolerance_mode": "relative",
            "common_random_numbers": True,
            "frozen_directions": True,
            "scale_features": self.scale_features,
            "with_replacement": self.with_replacement,
            "llr_null_iterations": self.llr_null_iterations,
            "cfg": self.cfg.to_dict(),
        }


class AlternativeSampler:
    """Evaluates ``mu(eps), sigma(eps)`` for one problem, caching by epsilon."""

    def __init__(self, problem: ScanProblem, stream: RngStream):
        self.problem = problem
        self.stream = stream
        p = problem
        if p.metric is MetricKind.LLR:
            if p.model is None:
                raise NotInvertible("LLR needs an analytic reference model")
            if not p.kind.bijective:
                raise NotInvertible(f"LLR is undefined for the {p.kind.value} deformation")
        dstream = stream.child("deformation")
        if p.model is not None:
            self.base = make_deformation(p.kind, 0.0, p.d, dstream, p.model.mean(), p.model.std())
            self._data = None
        else:
            # deformations act in standardized space, where the dataset mean is zero
            self.base = make_deformation(p.kind, 0.0, p.d, dstream, np.zeros(p.d), np.ones(p.d))
            if p.scale_features:
                self._data = (p.dataset - p.scale.means) / p.scale.stds
            else:
                self._data = p.dataset
        self.cache: dict[float, AltEvaluation] = {}
        self.llr_nulls: dict[float, NullDistribution] = {}

    def deformation(self, eps: float) -> Deformation:
        return self.base.with_epsilon(eps)

    def _deform(self, defo: Deformation, Y0: np.ndarray, rep: int) -> np.ndarray:
        p = self.problem
        if p.model is not None or p.scale_features:
            return apply(defo, Y0, rep)
        z = (Y0 - p.scale.means) / p.scale.stds
        return destandardize(apply(defo, z, rep), p.scale)

    def _one_rep(self, defo: Deformation, rep: int) -> float:
        p = self.problem
        s = self.stream.child("rep", rep)
        if p.model is not None:
            X = sample(p.model, p.n, s.child("x"))
            Y0 = sample(p.model, p.n, s.child("y"))
        else:
            A, B = split_half(self._data, s.child("split"))
            X = bootstrap_draw(A, p.n, s.child("x"), p.with_replacement)
            Y0 = bootstrap_draw(B, p.n, s.child("y"), p.with_replacement)
        Y = self._deform(defo, Y0, rep)
        if p.metric is MetricKind.LLR:
            return llr(p.model, defo, Y)
        return compute_statistic(p.metric, X, Y, p.cfg, s.child("stat"))

    def evaluate(self, eps: float) -> AltEvaluation:
        eps = float(eps)
        hit = self.cache.get(eps)
        if hit is not None:
            return hit
        defo = self.deformation(eps)
        vals = np.array(parallel_map(lambda r: self._one_rep(defo, r), range(self.problem.reps), self.problem.threads))
        ev = AltEvaluation(eps, float(vals.mean()), float(vals.std(ddof=1)), int(vals.size))
        self.cache[eps] = ev
        return ev

    def llr_null(self, eps: float) -> NullDistribution:
        eps = float(eps)
        hit = self.llr_nulls.get(eps)
        if hit is None:
            p = self.problem
            hit = estimate_null_llr(
                p.model, self.deformation(eps), p.n, p.llr_null_iterations, self.stream.child("llr-null"), p.threads
            )
            self.llr_nulls[eps] = hit
        return hit

    def evaluations(self) -> list[AltEvaluation]:
        return [self.cache[k] for k in sorted(self.cache)]


def evaluate_alternative(problem: ScanProblem, epsilon: float, stream: RngStream) -> AltEvaluation:
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return AlternativeSampler(problem, stream).evaluate(epsilon)


@dataclass(frozen=True)
class Crossing:
    eps: float
    converged: bool
    steps: int
    gap: float
    relaxed: bool = False


def bisect_crossing(
    fn: Callable[[float], tuple[float, float]],
    eps_max: float,
    tolerance: float = 1e-2,
    noisy_tolerance: float = 5e-2,
    max_doublings: int = 3,
    max_steps: int = 60,
) -> Crossing:
    """Locate where an increasing ``value(eps)`` crosses ``threshold(eps)``.

    ``fn(eps)`` returns ``(value, threshold)``. A probe whose value exceeds the
    threshold moves the upper end of the bracket down, otherwise the lower end
    moves up. Converges once the relative bracket width and the relative gap
    ``|value - threshold| / |threshold|`` are both within ``tolerance``; if the
    width shrinks a further thousandfold without the gap closing, the gap test
    is retried at ``noisy_tolerance``.
    """
    lo, hi = 0.0, float(eps_max)
    value, thr = fn(hi)
    doublings = 0
    while value <= thr and doublings < max_doublings:
        lo, hi = hi, 2.0 * hi
        value, thr = fn(hi)
        doublings += 1
    if value <= thr:
        return Crossing(hi, False, 0, abs(value - thr) / max(abs(thr), _TINY))

    best_eps, best_gap = hi, abs(value - thr) / max(abs(thr), _TINY)
    for step in range(1, max_steps + 1):
        mid = 0.5 * (lo + hi)
        value, thr = fn(mid)
        gap = abs(value - thr) / max(abs(thr), _TINY)
        if gap < best_gap:
            best_eps, best_gap = mid, gap
        if value > thr:
            hi = mid
        else:
            lo = mid
        width = (hi - lo) / mid
        if width <= tolerance and gap <= tolerance:
            return Crossing(mid, True, step, gap)
        if width <= 1e-3 * tolerance and gap <= noisy_tolerance:
            return Crossing(mid, True, step, gap, relaxed=True)
        if width <= 1e-12:
            break
    return Crossing(best_eps, best_gap <= noisy_tolerance, max_steps, best_gap, relaxed=True)


def _check_monotone(evals: list[AltEvaluation]) -> bool:
    ok = True
    for i, a in enumerate(evals):
        for b in evals[i + 1 :]:
            if a.mean > b.mean + 2.0 * max(a.std, b.std):
                ok = False
    if not ok:
        warnings.warn("alternative means are not monotone in epsilon; continuing on means", NonMonotoneWarning, stacklevel=3)
    return ok


def _three_crossings(problem, sampler, alpha, value_threshold, t_alpha, start) -> EpsilonBound:
    results = {}
    for name, sign in (("eps", 0.0), ("eps_low", 1.0), ("eps_up", -1.0)):

        def fn(eps, sign=sign):
            ev = sampler.evaluate(eps)
            return ev.mean + sign * ev.std, value_threshold(eps)

        results[name] = bisect_crossing(
            fn, problem.eps_max, problem.tolerance, problem.noisy_tolerance, problem.max_doublings, problem.max_steps
        )
    evals = sampler.evaluations()
    monotone = _check_monotone(evals)
    eps = results["eps"].eps
    # each crossing is only located to within tolerance, so tiny sigmas can invert the order
    eps_low = min(results["eps_low"].eps, eps)
    eps_up = max(results["eps_up"].eps, eps)
    return EpsilonBound(
        alpha=alpha,
        eps=eps,
        eps_low=eps_low,
        eps_up=eps_up,
        converged=all(c.converged for c in results.values()),
        t_alpha=t_alpha,
        evaluations=evals,
        elapsed_seconds=time.perf_counter() - start,
        flags={
            "monotone": monotone,
            "relaxed_tolerance": any(c.relaxed for c in results.values()),
            "order_clamped": eps_low != results["eps_low"].eps or eps_up != results["eps_up"].eps,
            "steps": {k: c.steps for k, c in results.items()},
        },
    )


def bisect_epsilon(
    problem: ScanProblem,
    null: NullDistribution,
    alpha: float,
    stream: RngStream,
    sampler: AlternativeSampler | None = None,
) -> EpsilonBound:
    """Scan a non-parametric statistic against a fixed null threshold.

    Pass the same ``sampler`` to scans at several ``alpha`` to share probes.
    """
    if problem.metric is MetricKind.LLR:
        raise ValueError("use bisect_epsilon_llr for the likelihood ratio")
    if null.metric is not problem.metric or null.n != problem.n:
        raise ValueError("null distribution does not match the scan's metric and sample size")
    start = time.perf_counter()
    sampler = sampler or AlternativeSampler(problem, stream)
    t_alpha = threshold(null, alpha).t_alpha
    return _three_crossings(problem, sampler, alpha, lambda eps: t_alpha, t_alpha, start)


def bisect_epsilon_llr(
    problem: ScanProblem,
    alpha: float,
    stream: RngStream,
    sampler: AlternativeSampler | None = None,
) -> EpsilonBound:
    """Likelihood-ratio scan; the null threshold is recomputed at every probed epsilon."""
    if problem.metric is not MetricKind.LLR:
        raise ValueError("bisect_epsilon_llr needs metric LLR")
    start = time.perf_counter()
    sampler = sampler or AlternativeSampler(problem, stream)

    def thr(eps):
        return threshold(sampler.llr_null(eps), alpha).t_alpha

    bound = _three_crossings(problem, sampler, alpha, thr, None, start)
    bound.t_alpha = thr(bound.eps)
    return bound


def scan_problem(problem: ScanProblem, alphas, stream: RngStream, null: NullDistribution | None = None) -> list[EpsilonBound]:
    """Run one scan per ``alpha`` sharing a single alternative sampler."""
    sampler = AlternativeSampler(problem, stream)
    out = []
    for a in alphas:
        if problem.metric is MetricKind.LLR:
            out.append(bisect_epsilon_llr(problem, a, stream, sampler))
        else:
            if null is None:
                raise ValueError("non-parametric scans need a null distribution")
            out.append(bisect_epsilon(problem, null, a, stream, sampler))
    return out
