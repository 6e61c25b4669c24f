"""Natural exponential families indexed by their mean.

Three members are supported: normal with known variance, Poisson, and
binomial with a known number of trials ``m`` (mean ``theta = m * p``).
Estimates may sit on a closed endpoint of the mean domain (an all-zero
Bernoulli sample, say); such points are degenerate point masses rather
than errors, because the bootstrap has to run from every realisable
estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .numerics import DomainError


class Family:
    """Base class for the supported families."""

    discrete = True
    name = ""

    def domain(self) -> tuple[float, float]:
        """Closed mean domain (endpoints may be infinite)."""
        raise NotImplementedError

    def is_degenerate(self, theta: float) -> bool:
        lo, hi = self.domain()
        return theta == lo or theta == hi

    def check_mean(self, theta: float) -> float:
        theta = float(theta)
        lo, hi = self.domain()
        if not (lo <= theta <= hi) or math.isnan(theta) or math.isinf(theta):
            raise DomainError(f"mean {theta!r} outside the {self.name} mean domain [{lo}, {hi}]")
        return theta


@dataclass(frozen=True)
class NormalKnownVar(Family):
    variance: float = 1.0

    discrete = False
    name = "normal"

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"normal variance must be positive, got {self.variance}")

    def domain(self):
        return (-math.inf, math.inf)

    def is_degenerate(self, theta):
        return False


@dataclass(frozen=True)
class Poisson(Family):
    name = "poisson"

    def domain(self):
        return (0.0, math.inf)


@dataclass(frozen=True)
class Binomial(Family):
    m: int = 1

    name = "binomial"

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"binomial trial count must be a positive integer, got {self.m}")

    def domain(self):
        return (0.0, float(self.m))


def natural_param(family: Family, theta: float) -> float:
    """Natural parameter psi with b'(psi) = theta, for theta inside the domain."""
    theta = family.check_mean(theta)
    if family.is_degenerate(theta):
        raise DomainError(f"no natural parameter at the endpoint theta={theta}")
    if isinstance(family, NormalKnownVar):
        return theta / family.variance
    if isinstance(family, Poisson):
        return math.log(theta)
    p = theta / family.m
    return math.log(p) - math.log1p(-p)


def mean_from_natural(family: Family, psi: float) -> float:
    """b'(psi), the inverse of :func:`natural_param`."""
    if isinstance(family, NormalKnownVar):
        return psi * family.variance
    if isinstance(family, Poisson):
        return math.exp(psi)
    return family.m * float(special.expit(psi))


def variance_at_mean(family: Family, theta: float) -> float:
    """Variance function b''(b'^{-1}(theta)); zero at degenerate endpoints."""
    theta = family.check_mean(theta)
    if isinstance(family, NormalKnownVar):
        return family.variance
    if isinstance(family, Poisson):
        return theta
    return theta * (1.0 - theta / family.m)


def sample(family: Family, theta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. draws from the family at mean ``theta``."""
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    theta = family.check_mean(theta)
    if isinstance(family, NormalKnownVar):
        return rng.normal(theta, math.sqrt(family.variance), size=n)
    if isinstance(family, Poisson):
        return rng.poisson(theta, size=n).astype(float)
    return rng.binomial(family.m, theta / family.m, size=n).astype(float)


def sample_sum(family: Family, theta: float, n: int, rng: np.random.Generator, size=None):
    """Draws of the sufficient statistic sum(X_1..X_n) at mean ``theta``.

    Same law as summing :func:`sample`, at a fraction of the cost.
    """
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    theta = family.check_mean(theta)
    if isinstance(family, NormalKnownVar):
        return rng.normal(n * theta, math.sqrt(n * family.variance), size=size)
    if isinstance(family, Poisson):
        return rng.poisson(n * theta, size=size)
    return rng.binomial(n * family.m, theta / family.m, size=size)


@dataclass(frozen=True)
class SumDistribution:
    """Law of sum(X_1..X_n).

    Discrete families carry a pmf table over ``offset, offset + 1, ...``;
    the normal family carries ``mean`` and ``variance`` only.
    """

    family: Family
    n: int
    offset: int = 0
    pmf: np.ndarray | None = None
    mean: float = 0.0
    variance: float = 0.0

    @property
    def support(self) -> np.ndarray:
        if self.pmf is None:
            raise DomainError("continuous sum distribution has no support table")
        return np.arange(self.offset, self.offset + len(self.pmf))

    def table_mean(self) -> float:
        return math.fsum(self.support * self.pmf)


def poisson_window(mu: float, tail_eps: float) -> tuple[int, int]:
    """Smallest ``[lo, hi]`` with each Poisson(mu) tail outside it at most ``tail_eps``."""
    if mu == 0.0:
        return 0, 0
    # Cornish-Fisher start, then walk to the exact cut
    z = -stats.norm.ppf(tail_eps)
    skew = 1.0 / math.sqrt(mu)
    zc = z + (z * z - 1.0) * skew / 6.0
    lo = max(0, int(math.floor(mu - zc * math.sqrt(mu))))
    hi = int(math.ceil(mu + zc * math.sqrt(mu))) + 1
    while lo > 0 and stats.poisson.cdf(lo - 1, mu) > tail_eps:
        lo -= 1
    while stats.poisson.cdf(lo, mu) <= tail_eps:
        lo += 1
    while stats.poisson.sf(hi, mu) > tail_eps:
        hi += 1
    while hi > lo and stats.poisson.sf(hi - 1, mu) <= tail_eps:
        hi -= 1
    return lo, hi


def sum_distribution(family: Family, theta: float, n: int, tail_eps: float = 1e-12) -> SumDistribution:
    """Exact law of the sufficient statistic at mean ``theta``.

    Poisson tables are truncated so that each omitted tail holds at most
    ``tail_eps``; binomial tables are complete.
    """
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    if not 0.0 < tail_eps <= 1e-6:
        raise DomainError(f"tail_eps must lie in (0, 1e-6], got {tail_eps}")
    theta = family.check_mean(theta)
    if isinstance(family, NormalKnownVar):
        return SumDistribution(family, n, mean=n * theta, variance=n * family.variance)
    if isinstance(family, Poisson):
        mu = n * theta
        lo, hi = poisson_window(mu, tail_eps)
        if mu == 0.0:
            pmf = np.array([1.0])
        else:
            pmf = stats.poisson.pmf(np.arange(lo, hi + 1), mu)
        return SumDistribution(family, n, offset=lo, pmf=pmf, mean=mu, variance=mu)
    trials = n * family.m
    p = theta / family.m
    pmf = stats.binom.pmf(np.arange(trials + 1), trials, p)
    return SumDistribution(family, n, offset=0, pmf=pmf, mean=trials * p, variance=trials * p * (1 - p))


def make_family(kind: str, m: int = 1, variance: float = 1.0) -> Family:
    """Family from its CLI name."""
    if kind == "normal":
        return NormalKnownVar(variance)
    if kind == "poisson":
        return Poisson()
    if kind == "binomial":
        return Binomial(m)
    raise DomainError(f"unknown family {kind!r}")
