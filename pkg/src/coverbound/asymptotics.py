"""Local-asymptotic coverage of bootstrap percentile intervals.

One sample: the truth drifts to the boundary as d + tau / sqrt(n).  Two
samples: the pooled mean is held at eta0 and the gap drifts as
delta / sqrt(n).  The families enter only through sigma0, the standard
deviation at the boundary (or at eta0), which callers supply.

The theta1/theta2 limits are expectations over the joint limit law F12 of
the standardised constrained estimators.  F12 is the image of two
independent standard normals under :func:`transform_f12`, so the integrals
are computed as scrambled-Sobol averages in (z1, z2) space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .numerics import DomainError, QmcSpec, bvn_cdf, qmc_normal_pairs, std_normal_quantile

KNIFE_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class LocalFrameOne:
    tau: float
    sigma0: float = 1.0

    def __post_init__(self):
        if self.tau < 0:
            raise DomainError(f"tau must be non-negative, got {self.tau}")
        if not self.sigma0 > 0:
            raise DomainError(f"sigma0 must be positive, got {self.sigma0}")


@dataclass(frozen=True)
class LocalFrameTwo:
    delta: float
    omega: float
    sigma0: float = 1.0
    eta0: float | None = None

    def __post_init__(self):
        if self.delta < 0:
            raise DomainError(f"delta must be non-negative, got {self.delta}")
        if not 0.0 < self.omega < 1.0:
            raise DomainError(f"omega must lie in (0, 1), got {self.omega}")
        if not self.sigma0 > 0:
            raise DomainError(f"sigma0 must be positive, got {self.sigma0}")


@dataclass(frozen=True)
class StepCoverage:
    """A piecewise-constant limit; ``at_boundary`` marks the undefined jump point."""

    value: float
    at_boundary: bool = False


@dataclass(frozen=True)
class QmcCoverage:
    value: float
    error: float
    replicates: tuple = ()


def _check_alphas(alpha1, alpha2):
    for name, a in (("alpha1", alpha1), ("alpha2", alpha2)):
        if not 0.0 < a < 0.5:
            raise DomainError(f"{name} must lie in (0, 0.5), got {a}")


def exact_normal_coverage(n: int, theta0: float, alpha1: float = 0.05, alpha2: float = 0.05) -> float:
    """Finite-n coverage for a unit-variance normal mean restricted to theta >= 0.

    Piecewise constant in theta0: 1 - alpha1 up to and including
    sqrt(n) * theta0 = z_{1-alpha2}, and 1 - alpha1 - alpha2 beyond.
    """
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if theta0 < 0:
        raise DomainError(f"theta0 must be non-negative, got {theta0}")
    _check_alphas(alpha1, alpha2)
    if math.sqrt(n) * theta0 > std_normal_quantile(1.0 - alpha2):
        return 1.0 - (alpha1 + alpha2)
    return 1.0 - alpha1


def normal_step_location(n: int, alpha2: float = 0.05) -> float:
    """theta0 at which :func:`exact_normal_coverage` drops."""
    return std_normal_quantile(1.0 - alpha2) / math.sqrt(n)


def _step(x: float, threshold: float, alpha1: float, alpha2: float) -> StepCoverage:
    if abs(x - threshold) <= KNIFE_EDGE_TOL:
        return StepCoverage(1.0 - alpha1, True)
    if x > threshold:
        return StepCoverage(1.0 - (alpha1 + alpha2))
    return StepCoverage(1.0 - alpha1)


def one_sample_threshold(sigma0: float, alpha2: float) -> float:
    return std_normal_quantile(1.0 - alpha2) * sigma0


def asym_coverage_one_sample(frame: LocalFrameOne, alpha1: float = 0.05, alpha2: float = 0.05) -> StepCoverage:
    _check_alphas(alpha1, alpha2)
    return _step(frame.tau, one_sample_threshold(frame.sigma0, alpha2), alpha1, alpha2)


def delta_threshold(omega: float, sigma0: float, alpha2: float) -> float:
    return std_normal_quantile(1.0 - alpha2) * sigma0 / math.sqrt(omega * (1.0 - omega))


def asym_coverage_delta(frame: LocalFrameTwo, alpha1: float = 0.05, alpha2: float = 0.05) -> StepCoverage:
    _check_alphas(alpha1, alpha2)
    return _step(frame.delta, delta_threshold(frame.omega, frame.sigma0, alpha2), alpha1, alpha2)


def transform_f12(z1, z2, frame: LocalFrameTwo):
    """Map independent standard normals to a draw from F12.

    Returns ``(x, y)``, the limits of sqrt(n)(theta1_hat - theta10)/sigma0
    and sqrt(n)(theta2_hat - theta20)/sigma0.  Works on arrays.
    """
    w = frame.omega
    shift = frame.delta / frame.sigma0
    pooled = math.sqrt(w) * np.asarray(z1) + math.sqrt(1.0 - w) * np.asarray(z2)
    x = np.minimum(np.asarray(z1) / math.sqrt(w), pooled + (1.0 - w) * shift)
    y = np.maximum(np.asarray(z2) / math.sqrt(1.0 - w), pooled - w * shift)
    if np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def g1(x, y, frame: LocalFrameTwo):
    """Limiting bootstrap CDF of theta1_hat* evaluated at theta10."""
    w = frame.omega
    c11 = math.sqrt(w) * np.asarray(x, dtype=float)
    c12 = w * np.asarray(x, dtype=float) + (1.0 - w) * np.asarray(y, dtype=float) \
        + (1.0 - w) * frame.delta / frame.sigma0
    out = ndtr(-c11) + ndtr(-c12) - bvn_cdf(-c11, -c12, math.sqrt(w))
    return np.clip(out, 0.0, 1.0) if np.ndim(out) else min(max(float(out), 0.0), 1.0)


def g2(x, y, frame: LocalFrameTwo):
    """Limiting bootstrap CDF of theta2_hat* evaluated at theta20."""
    w = frame.omega
    c21 = math.sqrt(1.0 - w) * np.asarray(y, dtype=float)
    c22 = w * np.asarray(x, dtype=float) + (1.0 - w) * np.asarray(y, dtype=float) \
        - w * frame.delta / frame.sigma0
    return bvn_cdf(-c21, -c22, math.sqrt(1.0 - w))


DEFAULT_POINTS = 2**20
DEFAULT_SCRAMBLES = 8
_CHUNK = 2**16


def _indicator_mean(g, frame, alpha1, alpha2, spec: QmcSpec) -> float:
    hits = 0
    for start in range(0, spec.point_count, _CHUNK):
        count = min(_CHUNK, spec.point_count - start)
        z = qmc_normal_pairs(spec, start, count)
        x, y = transform_f12(z[:, 0], z[:, 1], frame)
        v = g(x, y, frame)
        hits += int(np.count_nonzero((v >= alpha1) & (v <= 1.0 - alpha2)))
    return hits / spec.point_count


def _qmc_coverage(g, frame, alpha1, alpha2, point_count, scrambles, seed) -> QmcCoverage:
    _check_alphas(alpha1, alpha2)
    if scrambles < 2:
        raise DomainError(f"need at least 2 scrambles for an error estimate, got {scrambles}")
    # independent scramble per replicate, derived from the one seed
    seeds = np.random.SeedSequence(seed).generate_state(scrambles, dtype=np.uint64)
    reps = [
        _indicator_mean(g, frame, alpha1, alpha2, QmcSpec(point_count, int(s), True))
        for s in seeds
    ]
    return QmcCoverage(float(np.mean(reps)), 0.5 * (max(reps) - min(reps)), tuple(reps))


def asym_coverage_theta1(frame: LocalFrameTwo, alpha1: float = 0.05, alpha2: float = 0.05,
                         point_count: int = DEFAULT_POINTS, scrambles: int = DEFAULT_SCRAMBLES,
                         seed: int = 0) -> QmcCoverage:
    """Limit coverage for theta1: P(alpha1 <= g1(X, Y) <= 1 - alpha2) under F12.

    The estimate averages ``scrambles`` independently scrambled Sobol sets of
    ``point_count`` points; ``error`` is half the spread (max - min) of the
    replicate values.
    """
    return _qmc_coverage(g1, frame, alpha1, alpha2, point_count, scrambles, seed)


def asym_coverage_theta2(frame: LocalFrameTwo, alpha1: float = 0.05, alpha2: float = 0.05,
                         point_count: int = DEFAULT_POINTS, scrambles: int = DEFAULT_SCRAMBLES,
                         seed: int = 0) -> QmcCoverage:
    """As :func:`asym_coverage_theta1`, for theta2 with g2."""
    return _qmc_coverage(g2, frame, alpha1, alpha2, point_count, scrambles, seed)
