"""Closed-form constrained MLEs for the boundary and ordering problems.

Both estimators take sample means, not raw data, so exact enumeration can
feed sufficient-statistic values straight in.  Ties resolve through the
max/min formulas themselves; there is no epsilon fuzzing.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .numerics import DomainError


@dataclass(frozen=True)
class OneSampleConstraint:
    """Lower boundary ``theta >= d``."""

    d: float


@dataclass(frozen=True)
class TwoSampleDesign:
    """Sample sizes of the two groups; ``omega = n1 / (n1 + n2)``."""

    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise DomainError(f"sample sizes must be positive, got n1={self.n1}, n2={self.n2}")

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def omega(self) -> float:
        return self.n1 / (self.n1 + self.n2)

    @property
    def omega_exact(self) -> Fraction:
        return Fraction(self.n1, self.n1 + self.n2)


@dataclass(frozen=True)
class TwoSampleEstimate:
    theta1_hat: float
    theta2_hat: float
    delta_hat: float


def mle_one_sample(xbar, constraint: OneSampleConstraint):
    """max(xbar, d); works elementwise on arrays."""
    if np.ndim(xbar) == 0:
        return max(float(xbar), constraint.d)
    return np.maximum(np.asarray(xbar, dtype=float), constraint.d)


def pooled_mean(xbar1, xbar2, design: TwoSampleDesign):
    # n1*xbar1 + n2*xbar2 over n is the same number as omega*xbar1 + (1-omega)*xbar2
    # but rounds once less
    return (design.n1 * xbar1 + design.n2 * xbar2) / design.n


def mle_two_sample(xbar1: float, xbar2: float, design: TwoSampleDesign) -> TwoSampleEstimate:
    """Order-restricted MLEs of (theta1, theta2) under theta1 <= theta2, and of the gap.

    When the sample means already respect the ordering they are returned
    unchanged; otherwise both collapse to the pooled mean.  Input number
    types are preserved, so :class:`fractions.Fraction` means give exact
    results.  Arrays of means are handled elementwise.
    """
    if np.ndim(xbar1) or np.ndim(xbar2):
        x1, x2 = np.asarray(xbar1, dtype=float), np.asarray(xbar2, dtype=float)
        pooled = pooled_mean(x1, x2, design)
        return TwoSampleEstimate(np.minimum(x1, pooled), np.maximum(x2, pooled), np.maximum(x2 - x1, 0.0))
    if xbar1 <= xbar2:
        return TwoSampleEstimate(xbar1, xbar2, xbar2 - xbar1)
    pooled = pooled_mean(xbar1, xbar2, design)
    return TwoSampleEstimate(pooled, pooled, 0 * pooled)


def projection_check(xbar1, xbar2, design: TwoSampleDesign, candidate: TwoSampleEstimate,
                     step: float = 1e-3, tol: float = 1e-9) -> bool:
    """Grid oracle: does ``candidate`` minimise the weighted least-squares
    objective n1 (xbar1 - t1)^2 + n2 (xbar2 - t2)^2 over ordered pairs?

    Intended for tests.  The grid is centred on the sample means and every
    ordered pair on it is scored, together with the candidate itself.
    """
    if candidate.theta1_hat > candidate.theta2_hat:
        return False

    def objective(t1, t2):
        return design.n1 * (xbar1 - t1) ** 2 + design.n2 * (xbar2 - t2) ** 2

    lo = min(xbar1, xbar2) - 0.25
    hi = max(xbar1, xbar2) + 0.25
    grid = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    t1, t2 = np.meshgrid(grid, grid, indexing="ij")
    feasible = t1 <= t2
    best = objective(t1[feasible], t2[feasible]).min()
    cand = objective(candidate.theta1_hat, candidate.theta2_hat)
    return bool(cand <= best + tol)
