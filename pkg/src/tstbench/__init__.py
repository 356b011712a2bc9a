"""Benchmark harness for non-parametric two-sample tests on deformed reference distributions."""

__version__ = "0.1.0"

from .core import RngStream, make_stream
from .deformations import DeformKind, Deformation, apply, make_deformation
from .models import CGSpec, MoGSpec, build_cg, build_mog, log_density, sample
from .nulls import NullDistribution, p_value, threshold, z_score
from .scan import EpsilonBound, ScanProblem, bisect_epsilon, bisect_epsilon_llr, scan_problem
from .teststats import MetricConfig, MetricKind, compute_statistic

__all__ = [
    "CGSpec",
    "DeformKind",
    "Deformation",
    "EpsilonBound",
    "MetricConfig",
    "MetricKind",
    "MoGSpec",
    "NullDistribution",
    "RngStream",
    "ScanProblem",
    "apply",
    "bisect_epsilon",
    "bisect_epsilon_llr",
    "build_cg",
    "build_mog",
    "compute_statistic",
    "log_density",
    "make_deformation",
    "make_stream",
    "p_value",
    "sample",
    "scan_problem",
    "threshold",
    "z_score",
]
