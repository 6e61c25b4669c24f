"""Coverage of parametric bootstrap percentile intervals near a parameter boundary.

Exact finite-sample coverage for discrete exponential families, Monte Carlo
coverage for any supported family, and the local-asymptotic limits, for a
mean restricted to ``theta >= d`` and for two ordered means.
"""

from .asymptotics import (
    LocalFrameOne,
    LocalFrameTwo,
    asym_coverage_delta,
    asym_coverage_one_sample,
    asym_coverage_theta1,
    asym_coverage_theta2,
    exact_normal_coverage,
)
from .bootstrap_mc import CIConfig, mc_coverage, percentile_ci_one_sample, percentile_ci_two_sample
from .estimators import OneSampleConstraint, TwoSampleDesign, mle_one_sample, mle_two_sample
from .exact_enum import ExactConfig, exact_coverage_one_sample, exact_coverage_two_sample
from .nef import Binomial, NormalKnownVar, Poisson, make_family
from .numerics import DomainError, bvn_cdf, std_normal_cdf, std_normal_quantile

__version__ = "0.1.0"
