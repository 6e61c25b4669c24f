"""Exact finite-sample coverage of bootstrap percentile intervals.

For discrete families the whole procedure is a finite computation: the data
enter only through the sufficient statistics, and for every value of those
the bootstrap law of the estimator is itself an explicit discrete law.  The
percentile interval attached to a sufficient-statistic cell does not depend
on the true parameter, so each cell's interval is computed once and coverage
at any truth is a weighted sum of cell indicators.

Estimator values are rationals; they are carried as integer numerators over
a common denominator so that ties between atoms are exact.  Comparisons of
an interval endpoint with a (floating) true value treat anything within
``TIE_TOL`` as equal -- distinct atoms are at least ``1/denominator`` apart,
far above that tolerance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .estimators import OneSampleConstraint, TwoSampleDesign
from .nef import Binomial, Family, sum_distribution
from .numerics import DomainError

CUM_TOL = 1e-14
TIE_TOL = 1e-10

TARGETS = ("theta1", "theta2", "delta")


class UnsupportedFamilyError(DomainError):
    """Exact enumeration was asked for a continuous family."""


@dataclass(frozen=True)
class ExactConfig:
    alpha1: float = 0.05
    alpha2: float = 0.05
    tail_eps: float = 1e-12
    use_constraint: bool = True

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            a = getattr(self, name)
            if not 0.0 < a < 0.5:
                raise DomainError(f"{name} must lie in (0, 0.5), got {a}")
        if not 0.0 < self.tail_eps <= 1e-6:
            raise DomainError(f"tail_eps must lie in (0, 1e-6], got {self.tail_eps}")


@dataclass(frozen=True)
class ValueDist:
    """A finite discrete law: strictly increasing ``values`` with ``probs``."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or len(v) == 0:
            raise DomainError("values and probs must be matching non-empty vectors")
        if np.any(np.diff(v) <= 0):
            raise DomainError("values must be strictly increasing")
        if np.any(p < 0):
            raise DomainError("probabilities must be non-negative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_atoms(cls, values, probs) -> ValueDist:
        """Merge possibly repeated, unsorted atoms into a ValueDist."""
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        uniq, inv = np.unique(values, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, probs)
        return cls(uniq, merged)


def _quantile_index(cum: np.ndarray, alpha: float) -> int:
    # first index whose cumulative probability reaches alpha
    i = int(np.searchsorted(cum, alpha - CUM_TOL, side="left"))
    return min(i, len(cum) - 1)


def exact_bootstrap_quantile(dist: ValueDist, alpha: float) -> float:
    """Generalised inverse inf{x : G(x) >= alpha} of a discrete law."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {alpha}")
    return float(dist.values[_quantile_index(np.cumsum(dist.probs), alpha)])


def _require_discrete(family: Family):
    if not family.discrete:
        raise UnsupportedFamilyError(
            f"exact enumeration needs a discrete family, got {family.name}; use Monte Carlo"
        )


def _outer_window(family: Family, theta: float, n: int, tail_eps: float) -> tuple[int, np.ndarray]:
    """Sufficient-statistic pmf at a true mean, tails beyond ``tail_eps`` dropped."""
    law = sum_distribution(family, theta, n, tail_eps)
    pmf = law.pmf
    if isinstance(family, Binomial) and len(pmf) > 1:
        cdf = np.cumsum(pmf)
        sf = np.cumsum(pmf[::-1])[::-1]
        lo = int(np.searchsorted(cdf, tail_eps, side="right"))
        hi = len(pmf) - 1 - int(np.searchsorted(sf[::-1], tail_eps, side="right"))
        lo = min(lo, hi)
        return law.offset + lo, pmf[lo:hi + 1]
    return law.offset, pmf


def _coverage_sum(weights: np.ndarray, covered: np.ndarray) -> float:
    return math.fsum(weights[covered])


# ---------------------------------------------------------------------------
# one sample


class OneSampleEnumerator:
    """Percentile intervals per sufficient-statistic value for one sample.

    Intervals are memoised, so evaluating coverage along a grid of true
    values costs one bootstrap law per distinct estimate.
    """

    def __init__(self, family: Family, constraint: OneSampleConstraint | None, n: int, cfg: ExactConfig):
        _require_discrete(family)
        if n < 1:
            raise DomainError(f"sample size must be >= 1, got {n}")
        self.family = family
        self.d = None if (constraint is None or not cfg.use_constraint) else float(constraint.d)
        self.n = n
        self.cfg = cfg
        self._by_estimate: dict[float, tuple[float, float]] = {}
        self._by_sum: dict[int, tuple[float, float]] = {}

    def estimate(self, s: int) -> float:
        xbar = s / self.n
        return xbar if self.d is None else max(xbar, self.d)

    def _interval_from_estimate(self, theta_hat: float) -> tuple[float, float]:
        hit = self._by_estimate.get(theta_hat)
        if hit is not None:
            return hit
        law = sum_distribution(self.family, theta_hat, self.n, self.cfg.tail_eps)
        cum = np.cumsum(law.pmf)
        q_lo = (law.offset + _quantile_index(cum, self.cfg.alpha1)) / self.n
        q_hi = (law.offset + _quantile_index(cum, 1.0 - self.cfg.alpha2)) / self.n
        # max(., d) is monotone, so it commutes with the generalised inverse
        if self.d is not None:
            q_lo, q_hi = max(q_lo, self.d), max(q_hi, self.d)
        self._by_estimate[theta_hat] = (q_lo, q_hi)
        return q_lo, q_hi

    def interval(self, s: int) -> tuple[float, float]:
        """Bootstrap percentile interval when the observed sum is ``s``."""
        hit = self._by_sum.get(s)
        if hit is None:
            hit = self._by_sum[s] = self._interval_from_estimate(self.estimate(s))
        return hit

    def bootstrap_law(self, s: int) -> ValueDist:
        """Exact law of the bootstrap estimator when the observed sum is ``s``."""
        law = sum_distribution(self.family, self.estimate(s), self.n, self.cfg.tail_eps)
        vals = law.support / self.n
        if self.d is not None:
            vals = np.maximum(vals, self.d)
        return ValueDist.from_atoms(vals, law.pmf)

    def coverage(self, theta0: float) -> float:
        theta0 = self.family.check_mean(theta0)
        if self.d is not None and theta0 < self.d - TIE_TOL:
            raise DomainError(f"true mean {theta0} violates the constraint theta >= {self.d}")
        offset, w = _outer_window(self.family, theta0, self.n, self.cfg.tail_eps)
        covered = np.empty(len(w), dtype=bool)
        for i in range(len(w)):
            lo, hi = self.interval(offset + i)
            covered[i] = lo <= theta0 + TIE_TOL and hi >= theta0 - TIE_TOL
        return _coverage_sum(w, covered)


@lru_cache(maxsize=32)
def _one_sample_enumerator(family, d, n, cfg):
    return OneSampleEnumerator(family, None if d is None else OneSampleConstraint(d), n, cfg)


def exact_coverage_one_sample(family: Family, constraint: OneSampleConstraint | None, n: int,
                              theta0: float, cfg: ExactConfig) -> float:
    """Exact coverage probability of the one-sample percentile interval at ``theta0``.

    With ``cfg.use_constraint`` false (or no constraint) the estimator is
    the plain sample mean.
    """
    d = None if constraint is None else float(constraint.d)
    return _one_sample_enumerator(family, d, n, cfg).coverage(theta0)


# ---------------------------------------------------------------------------
# two samples


@dataclass
class _Lattice:
    """Sorted estimator values over a rectangle of bootstrap sums."""

    lo1: int
    lo2: int
    k1: int
    k2: int
    order: np.ndarray
    group_ends: np.ndarray
    group_values: np.ndarray  # integer numerators


class TwoSampleEnumerator:
    """Percentile intervals per cell (s1, s2) of observed sums, for one target."""

    def __init__(self, family: Family, design: TwoSampleDesign, cfg: ExactConfig, target: str):
        _require_discrete(family)
        if target not in TARGETS:
            raise DomainError(f"target must be one of {TARGETS}, got {target!r}")
        self.family = family
        self.design = design
        self.cfg = cfg
        self.target = target
        n1, n2 = design.n1, design.n2
        self.denom = math.lcm(n1, n2, n1 + n2)
        self._c1 = self.denom // n1
        self._c2 = self.denom // n2
        self._cp = self.denom // (n1 + n2)
        self._lattices: dict[tuple[int, int, int, int], _Lattice] = {}
        self._rows: dict[tuple[int, int], tuple[int, np.ndarray]] = {}
        self._by_estimate: dict[tuple[int, int], tuple[int, int]] = {}

    # estimator values as integer numerators over self.denom
    def _target_numerators(self, s1, s2):
        m1 = s1 * self._c1
        m2 = s2 * self._c2
        if not self.cfg.use_constraint:
            if self.target == "theta1":
                return m1
            if self.target == "theta2":
                return m2
            return m2 - m1
        pooled = (s1 + s2) * self._cp
        if self.target == "theta1":
            return np.minimum(m1, pooled)
        if self.target == "theta2":
            return np.maximum(m2, pooled)
        return np.maximum(m2 - m1, 0)

    def estimates(self, s1: int, s2: int) -> tuple[int, int]:
        """Numerators of (theta1_hat, theta2_hat) for observed sums."""
        m1 = s1 * self._c1
        m2 = s2 * self._c2
        if self.cfg.use_constraint and m1 > m2:
            pooled = (s1 + s2) * self._cp
            return pooled, pooled
        return m1, m2

    def _row(self, which: int, num: int) -> tuple[int, np.ndarray]:
        key = (which, num)
        hit = self._rows.get(key)
        if hit is None:
            n = self.design.n1 if which == 1 else self.design.n2
            law = sum_distribution(self.family, num / self.denom, n, self.cfg.tail_eps)
            hit = self._rows[key] = (law.offset, law.pmf)
        return hit

    def _lattice(self, lo1, k1, lo2, k2) -> _Lattice:
        key = (lo1, k1, lo2, k2)
        lat = self._lattices.get(key)
        if lat is None:
            s1 = np.arange(lo1, lo1 + k1)[:, None]
            s2 = np.arange(lo2, lo2 + k2)[None, :]
            vals = np.broadcast_to(self._target_numerators(s1, s2), (k1, k2)).ravel()
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            ends = np.append(np.flatnonzero(np.diff(sv)), len(sv) - 1)
            lat = _Lattice(lo1, lo2, k1, k2, order, ends, sv[ends])
            if len(self._lattices) > 64:
                self._lattices.clear()
            self._lattices[key] = lat
        return lat

    def _bootstrap_cdf(self, e1: int, e2: int):
        off1, p1 = self._row(1, e1)
        off2, p2 = self._row(2, e2)
        lat = self._lattice(off1, len(p1), off2, len(p2))
        joint = np.multiply.outer(p1, p2).ravel()[lat.order]
        cum = np.cumsum(joint)[lat.group_ends]
        return lat.group_values, cum

    def bootstrap_law(self, s1: int, s2: int) -> ValueDist:
        """Exact law of the bootstrap target statistic for observed sums."""
        vals, cum = self._bootstrap_cdf(*self.estimates(s1, s2))
        probs = np.diff(np.concatenate([[0.0], cum]))
        return ValueDist(vals / self.denom, probs)

    def _interval_num(self, e1: int, e2: int) -> tuple[int, int]:
        key = (e1, e2)
        hit = self._by_estimate.get(key)
        if hit is None:
            vals, cum = self._bootstrap_cdf(e1, e2)
            hit = (int(vals[_quantile_index(cum, self.cfg.alpha1)]),
                   int(vals[_quantile_index(cum, 1.0 - self.cfg.alpha2)]))
            self._by_estimate[key] = hit
        return hit

    def interval(self, s1: int, s2: int) -> tuple[float, float]:
        lo, hi = self._interval_num(*self.estimates(s1, s2))
        return lo / self.denom, hi / self.denom

    def prepare(self, cells, workers: int = 1):
        """Fill the interval memo for an iterable of (s1, s2) cells."""
        keys = sorted({self.estimates(s1, s2) for s1, s2 in cells} - self._by_estimate.keys())
        if workers <= 1 or len(keys) < 2 * workers:
            for k in keys:
                self._interval_num(*k)
            return
        for k in {k[0] for k in keys}:
            self._row(1, k)
        for k in {k[1] for k in keys}:
            self._row(2, k)
        chunks = [keys[i::workers] for i in range(workers)]

        def run(chunk):
            return [(k, self._interval_num_nomemo(*k)) for k in chunk]

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(run, chunks):
                self._by_estimate.update(part)

    def _interval_num_nomemo(self, e1, e2):
        vals, cum = self._bootstrap_cdf(e1, e2)
        return (int(vals[_quantile_index(cum, self.cfg.alpha1)]),
                int(vals[_quantile_index(cum, 1.0 - self.cfg.alpha2)]))

    def truth_value(self, theta10: float, theta20: float) -> float:
        if self.target == "theta1":
            return theta10
        if self.target == "theta2":
            return theta20
        return theta20 - theta10

    def coverage(self, theta10: float, theta20: float, workers: int = 1) -> float:
        theta10 = self.family.check_mean(theta10)
        theta20 = self.family.check_mean(theta20)
        if self.cfg.use_constraint and theta10 > theta20 + TIE_TOL:
            raise DomainError(f"true means ({theta10}, {theta20}) violate theta1 <= theta2")
        off1, w1 = _outer_window(self.family, theta10, self.design.n1, self.cfg.tail_eps)
        off2, w2 = _outer_window(self.family, theta20, self.design.n2, self.cfg.tail_eps)
        s1 = np.arange(off1, off1 + len(w1))
        s2 = np.arange(off2, off2 + len(w2))
        self.prepare(((a, b) for a in s1.tolist() for b in s2.tolist()), workers)
        truth = self.truth_value(theta10, theta20) * self.denom
        tol = TIE_TOL * self.denom
        covered = np.empty((len(w1), len(w2)), dtype=bool)
        for i, a in enumerate(s1.tolist()):
            for j, b in enumerate(s2.tolist()):
                lo, hi = self._by_estimate[self.estimates(a, b)]
                covered[i, j] = lo <= truth + tol and hi >= truth - tol
        weights = np.multiply.outer(w1, w2)
        return _coverage_sum(weights, covered)


@lru_cache(maxsize=32)
def _two_sample_enumerator(family, design, cfg, target):
    return TwoSampleEnumerator(family, design, cfg, target)


def exact_coverage_two_sample(family: Family, design: TwoSampleDesign, theta10: float, theta20: float,
                              cfg: ExactConfig, target: str, workers: int = 1) -> float:
    """Exact coverage of the two-sample percentile interval for ``target``.

    ``target`` is ``"theta1"``, ``"theta2"`` or ``"delta"`` (= theta2 - theta1).
    """
    enum = _two_sample_enumerator(family, design, cfg, target)
    return enum.coverage(theta10, theta20, workers)


def covered_cdf_form(law: ValueDist, truth: float, alpha1: float, alpha2: float) -> bool:
    """Coverage decision from two CDF evaluations of the bootstrap law.

    ``P(T <= truth) >= alpha1`` and ``P(T < truth) <= 1 - alpha2``.  Agrees
    with the quantile-interval decision except when ``P(T < truth)`` sits
    exactly on ``1 - alpha2``; the quantile form is the reference there.
    """
    at_or_below = math.fsum(law.probs[law.values <= truth + TIE_TOL])
    below = math.fsum(law.probs[law.values < truth - TIE_TOL])
    return at_or_below >= alpha1 - CUM_TOL and below <= 1.0 - alpha2


def covered_quantile_form(law: ValueDist, truth: float, alpha1: float, alpha2: float) -> bool:
    lo = exact_bootstrap_quantile(law, alpha1)
    hi = exact_bootstrap_quantile(law, 1.0 - alpha2)
    return lo <= truth + TIE_TOL and hi >= truth - TIE_TOL


# ---------------------------------------------------------------------------
# curves


@dataclass
class CoverageCurve:
    """Coverage along a grid of true-parameter values."""

    param_name: str
    param_values: np.ndarray
    coverage: np.ndarray
    method: str
    target: str
    error_estimate: np.ndarray | None = None
    flags: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


class GridPointError(RuntimeError):
    def __init__(self, index, value, cause):
        super().__init__(f"grid point {index} ({value!r}): {cause}")
        self.index = index
        self.value = value
        self.cause = cause


def coverage_curve(grid, evaluate, *, param_name: str, method: str, target: str,
                   on_error=None, meta=None) -> CoverageCurve:
    """Evaluate ``evaluate(value)`` along ``grid`` in order.

    A failing point raises :class:`GridPointError` carrying its index, or,
    if ``on_error`` is given, is reported there and stored as NaN.
    """
    grid = np.asarray(list(grid), dtype=float)
    out = np.empty(len(grid))
    for i, v in enumerate(grid):
        try:
            out[i] = evaluate(float(v))
        except Exception as exc:  # noqa: BLE001 - wrapped with the grid index
            err = GridPointError(i, float(v), exc)
            if on_error is None:
                raise err from exc
            on_error(err)
            out[i] = np.nan
    return CoverageCurve(param_name, grid, out, method, target, meta=dict(meta or {}))


def one_sample_curve(family: Family, constraint: OneSampleConstraint | None, n: int, grid,
                     cfg: ExactConfig, on_error=None) -> CoverageCurve:
    enum = _one_sample_enumerator(family, None if constraint is None else float(constraint.d), n, cfg)
    return coverage_curve(grid, enum.coverage, param_name="theta0",
                          method="exact" if cfg.use_constraint else "exact_unconstrained",
                          target="theta", on_error=on_error)


def two_sample_curve(family: Family, design: TwoSampleDesign, eta0: float, grid, cfg: ExactConfig,
                     target: str, workers: int = 1, on_error=None) -> CoverageCurve:
    """Coverage against the true gap Delta0, holding the pooled mean at ``eta0``.

    The truths are theta10 = eta0 - (1 - omega) Delta0 and
    theta20 = eta0 + omega Delta0.
    """
    enum = _two_sample_enumerator(family, design, cfg, target)
    w = design.omega

    def at(delta0):
        return enum.coverage(eta0 - (1.0 - w) * delta0, eta0 + w * delta0, workers)

    return coverage_curve(grid, at, param_name="delta0",
                          method="exact" if cfg.use_constraint else "exact_unconstrained",
                          target=target, on_error=on_error)


def clear_caches():
    _one_sample_enumerator.cache_clear()
    _two_sample_enumerator.cache_clear()
