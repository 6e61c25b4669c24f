"""Monte Carlo parametric bootstrap percentile intervals and their coverage.

This is the only route for the continuous (normal) family and an
independent cross-check of :mod:`coverbound.exact_enum` for the discrete
ones.  Bootstrap means are drawn through the sufficient statistic (the sum
of a bootstrap sample has a known law), which is distributionally the same
as resampling ``n`` observations and averaging.

Randomness: every call takes a seed.  Replicate ``r`` of a coverage study
uses the stream ``SeedSequence(seed, spawn_key=(r,))`` on a Philox
(counter-based) generator, so results do not depend on how replicates are
split across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimators import OneSampleConstraint, TwoSampleDesign, mle_one_sample, pooled_mean
from .nef import Family, sample_sum, variance_at_mean
from .numerics import DomainError, std_normal_cdf


@dataclass(frozen=True)
class CIConfig:
    """Tail levels and bootstrap size; quantiles use the ceil(B * alpha) rule."""

    alpha1: float = 0.05
    alpha2: float = 0.05
    B: int = 1999

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            a = getattr(self, name)
            if not 0.0 < a < 0.5:
                raise DomainError(f"{name} must lie in (0, 0.5), got {a}")
        if self.B < 100:
            raise DomainError(f"B must be at least 100, got {self.B}")


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class CoverageEstimate:
    estimate: float
    replications: int

    @property
    def mc_std_error(self) -> float:
        p = self.estimate
        return math.sqrt(p * (1.0 - p) / self.replications)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replicate ``index`` of a study seeded by ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def quantile_rank(B: int, alpha: float) -> int:
    """1-based rank ceil(B * alpha), clipped to [1, B]."""
    # guard against B * alpha landing a hair above an integer
    return min(B, max(1, math.ceil(B * alpha - 1e-9)))


def empirical_quantile(sorted_values: np.ndarray, alpha: float) -> float:
    """Left-continuous inverse of the empirical CDF of a sorted sample."""
    return float(sorted_values[quantile_rank(len(sorted_values), alpha) - 1])


def _percentile(values: np.ndarray, cfg: CIConfig) -> Interval:
    B = len(values)
    lo_rank = quantile_rank(B, cfg.alpha1) - 1
    hi_rank = quantile_rank(B, 1.0 - cfg.alpha2) - 1
    part = np.partition(values, (lo_rank, hi_rank))
    return Interval(float(part[lo_rank]), float(part[hi_rank]))


def _bootstrap_means(family: Family, theta: float, n: int, B: int, rng) -> np.ndarray:
    return sample_sum(family, theta, n, rng, size=B) / n


def _clip_to_domain(family: Family, xbar: float) -> float:
    # guards against a sample mean a rounding error outside [0, m]
    lo, hi = family.domain()
    return min(max(xbar, lo), hi)


def percentile_ci_one_sample(sample, family: Family, constraint: OneSampleConstraint | None,
                             cfg: CIConfig, seed: int | np.random.Generator) -> Interval:
    """Parametric bootstrap percentile interval for the boundary-constrained mean.

    Pass ``constraint=None`` for the unconstrained interval.
    """
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise DomainError("sample must be non-empty")
    rng = seed if isinstance(seed, np.random.Generator) else replicate_rng(seed, 0)
    return _one_sample_from_mean(float(x.mean()), len(x), family, constraint, cfg, rng)


def _one_sample_from_mean(xbar, n, family, constraint, cfg, rng) -> Interval:
    xbar = _clip_to_domain(family, xbar)
    theta_hat = xbar if constraint is None else mle_one_sample(xbar, constraint)
    means = _bootstrap_means(family, theta_hat, n, cfg.B, rng)
    ci = _percentile(means, cfg)
    if constraint is None:
        return ci
    return Interval(max(ci.lower, constraint.d), max(ci.upper, constraint.d))


def _two_sample_stat(m1, m2, design: TwoSampleDesign, target: str, constrained: bool):
    if not constrained:
        return {"theta1": m1, "theta2": m2, "delta": m2 - m1}[target]
    pooled = pooled_mean(m1, m2, design)
    if target == "theta1":
        return np.minimum(m1, pooled)
    if target == "theta2":
        return np.maximum(m2, pooled)
    return np.maximum(m2 - m1, 0.0)


def _two_sample_from_means(xbar1, xbar2, family, design, cfg, rng, target, constrained) -> Interval:
    xbar1 = _clip_to_domain(family, xbar1)
    xbar2 = _clip_to_domain(family, xbar2)
    if constrained and xbar1 > xbar2:
        t1 = t2 = float(pooled_mean(xbar1, xbar2, design))
        t1 = t2 = _clip_to_domain(family, t1)
    else:
        t1, t2 = xbar1, xbar2
    m1 = _bootstrap_means(family, t1, design.n1, cfg.B, rng)
    m2 = _bootstrap_means(family, t2, design.n2, cfg.B, rng)
    return _percentile(_two_sample_stat(m1, m2, design, target, constrained), cfg)


def percentile_ci_two_sample(sample1, sample2, family: Family, design: TwoSampleDesign, cfg: CIConfig,
                             seed: int | np.random.Generator, target: str = "delta",
                             constrained: bool = True) -> Interval:
    """Parametric bootstrap percentile interval for theta1, theta2 or their gap.

    Bootstrap samples are drawn independently from the fitted laws of the
    two groups and the order-restricted estimators recomputed on each.
    """
    x1 = np.asarray(sample1, dtype=float)
    x2 = np.asarray(sample2, dtype=float)
    if x1.size == 0 or x2.size == 0:
        raise DomainError("both samples must be non-empty")
    if (x1.size, x2.size) != (design.n1, design.n2):
        raise DomainError(f"sample sizes {(x1.size, x2.size)} do not match design {(design.n1, design.n2)}")
    if target not in ("theta1", "theta2", "delta"):
        raise DomainError(f"unknown target {target!r}")
    rng = seed if isinstance(seed, np.random.Generator) else replicate_rng(seed, 0)
    return _two_sample_from_means(float(x1.mean()), float(x2.mean()), family, design, cfg, rng,
                                  target, constrained)


def _run_replicates(fn, R: int, workers: int) -> int:
    if workers <= 1:
        return sum(fn(r) for r in range(R))
    chunks = [range(i, R, workers) for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(lambda ch: sum(fn(r) for r in ch), chunks))


def mc_coverage(family: Family, truth, cfg: CIConfig, replications: int, seed: int, *,
                constraint: OneSampleConstraint | None = None, n: int | None = None,
                design: TwoSampleDesign | None = None, target: str = "theta",
                constrained: bool = True, workers: int = 1) -> CoverageEstimate:
    """Fraction of simulated datasets whose percentile interval covers the truth.

    One sample: ``truth`` is theta0, give ``n`` and ``constraint``.
    Two samples: ``truth`` is (theta10, theta20), give ``design`` and a
    ``target`` among theta1/theta2/delta.
    """
    if replications < 100:
        raise DomainError(f"need at least 100 replications, got {replications}")
    if design is None:
        if n is None or n < 1:
            raise DomainError("one-sample coverage needs a positive n")
        theta0 = family.check_mean(truth)
        active = constraint if constrained else None
        if active is not None and theta0 < active.d:
            raise DomainError(f"true mean {theta0} violates theta >= {active.d}")

        def one(r):
            rng = replicate_rng(seed, r)
            xbar = sample_sum(family, theta0, n, rng) / n
            ci = _one_sample_from_mean(xbar, n, family, active, cfg, rng)
            return int(ci.covers(theta0))
    else:
        theta10, theta20 = (family.check_mean(t) for t in truth)
        if constrained and theta10 > theta20:
            raise DomainError(f"true means ({theta10}, {theta20}) violate theta1 <= theta2")
        if target not in ("theta1", "theta2", "delta"):
            raise DomainError(f"unknown two-sample target {target!r}")
        true_value = {"theta1": theta10, "theta2": theta20, "delta": theta20 - theta10}[target]

        def one(r):
            rng = replicate_rng(seed, r)
            xbar1 = sample_sum(family, theta10, design.n1, rng) / design.n1
            xbar2 = sample_sum(family, theta20, design.n2, rng) / design.n2
            ci = _two_sample_from_means(xbar1, xbar2, family, design, cfg, rng, target, constrained)
            return int(ci.covers(true_value))

    hits = _run_replicates(one, replications, workers)
    return CoverageEstimate(hits / replications, replications)


def bootstrap_cdf_diagnostic(family: Family, theta_hat: float, n: int, probe_points, B: int = 100_000,
                             seed: int = 0, sigma0: float | None = None) -> list[tuple[float, float]]:
    """|H*(x) - Phi(x)| at each probe, H* the bootstrap CDF of sqrt(n)(mean* - theta_hat)/sigma0.

    ``sigma0`` defaults to the family standard deviation at ``theta_hat``.
    """
    probes = np.asarray(probe_points, dtype=float)
    if not np.all(np.isfinite(probes)):
        raise DomainError("probe points must be finite")
    if sigma0 is None:
        sigma0 = math.sqrt(variance_at_mean(family, theta_hat))
    if sigma0 <= 0:
        raise DomainError("degenerate estimate: the standardised bootstrap law is undefined")
    rng = replicate_rng(seed, 0)
    z = np.sort(math.sqrt(n) * (_bootstrap_means(family, theta_hat, n, B, rng) - theta_hat) / sigma0)
    emp = np.searchsorted(z, probes, side="right") / B
    dev = np.abs(emp - std_normal_cdf(probes))
    return list(zip(probes.tolist(), dev.tolist()))

