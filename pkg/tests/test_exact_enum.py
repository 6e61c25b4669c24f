import math
from fractions import Fraction

import numpy as np
import pytest

from coverbound.estimators import OneSampleConstraint, TwoSampleDesign
from coverbound.exact_enum import (
    ExactConfig,
    GridPointError,
    OneSampleEnumerator,
    TwoSampleEnumerator,
    UnsupportedFamilyError,
    ValueDist,
    coverage_curve,
    covered_cdf_form,
    covered_quantile_form,
    exact_bootstrap_quantile,
    exact_coverage_one_sample,
    exact_coverage_two_sample,
    one_sample_curve,
    two_sample_curve,
)
from coverbound.nef import Binomial, NormalKnownVar, Poisson
from coverbound.numerics import DomainError

CFG = ExactConfig()


# ---------------------------------------------------------------- independent oracles


def _binom_pmf(k, n, p):
    return math.comb(n, k) * p**k * (1 - p) ** (n - k)


def _quantile(atoms: dict, alpha: float):
    cum = 0.0
    for v in sorted(atoms):
        cum += atoms[v]
        if cum >= alpha - 1e-14:
            return v
    return max(atoms)


def brute_one_sample(m, d, n, theta0, a1, a2, constrained=True):
    """Binomial(m) one-sample coverage from nested loops over exact rationals."""
    N = n * m
    d = Fraction(d)
    total = 0.0
    for s in range(N + 1):
        est = Fraction(s, n)
        if constrained:
            est = max(est, d)
        atoms: dict = {}
        for t in range(N + 1):
            v = Fraction(t, n)
            if constrained:
                v = max(v, d)
            atoms[v] = atoms.get(v, 0.0) + _binom_pmf(t, N, float(est) / m)
        lo, hi = _quantile(atoms, a1), _quantile(atoms, 1 - a2)
        if float(lo) <= theta0 + 1e-10 and float(hi) >= theta0 - 1e-10:
            total += _binom_pmf(s, N, theta0 / m)
    return total


def brute_two_sample(n1, n2, theta10, theta20, target, a1, a2, constrained=True):
    """Bernoulli two-sample coverage by explicit enumeration of all four sums."""
    def stat(s1, s2):
        x1, x2 = Fraction(s1, n1), Fraction(s2, n2)
        if not constrained:
            return {"theta1": x1, "theta2": x2, "delta": x2 - x1}[target]
        pooled = (n1 * x1 + n2 * x2) / (n1 + n2)
        return {"theta1": min(x1, pooled), "theta2": max(x2, pooled), "delta": max(x2 - x1, 0)}[target]

    truth = {"theta1": theta10, "theta2": theta20, "delta": theta20 - theta10}[target]
    total = 0.0
    for s1 in range(n1 + 1):
        for s2 in range(n2 + 1):
            x1, x2 = Fraction(s1, n1), Fraction(s2, n2)
            if constrained and x1 > x2:
                x1 = x2 = (s1 + s2) / Fraction(n1 + n2)
            atoms: dict = {}
            for t1 in range(n1 + 1):
                for t2 in range(n2 + 1):
                    v = stat(t1, t2)
                    atoms[v] = atoms.get(v, 0.0) + _binom_pmf(t1, n1, float(x1)) * _binom_pmf(t2, n2, float(x2))
            lo, hi = _quantile(atoms, a1), _quantile(atoms, 1 - a2)
            if float(lo) <= truth + 1e-10 and float(hi) >= truth - 1e-10:
                total += _binom_pmf(s1, n1, theta10) * _binom_pmf(s2, n2, theta20)
    return total


# ---------------------------------------------------------------- quantiles


def test_quantile_examples():
    point = ValueDist(np.array([3.0]), np.array([1.0]))
    assert exact_bootstrap_quantile(point, 0.01) == 3.0
    assert exact_bootstrap_quantile(point, 0.99) == 3.0
    law = ValueDist(np.array([0.0, 1.0, 2.0]), np.array([0.25, 0.5, 0.25]))
    assert exact_bootstrap_quantile(law, 0.05) == 0.0
    assert exact_bootstrap_quantile(law, 0.5) == 1.0
    assert exact_bootstrap_quantile(law, 0.95) == 2.0
    # a level hit exactly belongs to the atom that reaches it
    assert exact_bootstrap_quantile(law, 0.25) == 0.0
    assert exact_bootstrap_quantile(law, 0.75) == 1.0


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.3])
def test_quantile_domain(alpha):
    with pytest.raises(DomainError):
        exact_bootstrap_quantile(ValueDist(np.array([0.0]), np.array([1.0])), alpha)


def test_valuedist_validation():
    with pytest.raises(DomainError):
        ValueDist(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        ValueDist(np.array([0.0, 1.0]), np.array([1.5, -0.5]))
    merged = ValueDist.from_atoms([2.0, 1.0, 2.0], [0.25, 0.5, 0.25])
    np.testing.assert_array_equal(merged.values, [1.0, 2.0])
    np.testing.assert_array_equal(merged.probs, [0.5, 0.5])


def test_clamp_commutes_with_quantile():
    rng = np.random.default_rng(1)
    for _ in range(50):
        vals = np.sort(rng.choice(40, size=12, replace=False)) / 10.0
        probs = rng.dirichlet(np.ones(12))
        d = rng.uniform(0, 4)
        clamped = ValueDist.from_atoms(np.maximum(vals, d), probs)
        for a in (0.05, 0.3, 0.5, 0.95):
            assert exact_bootstrap_quantile(clamped, a) == max(exact_bootstrap_quantile(ValueDist(vals, probs), a), d)


# ---------------------------------------------------------------- one sample


def test_single_bernoulli_never_covers():
    assert exact_coverage_one_sample(Binomial(1), OneSampleConstraint(0.0), 1, 0.5, CFG) == 0.0


def test_poisson_plateau_value():
    cov = exact_coverage_one_sample(Poisson(), OneSampleConstraint(2.0), 400, 2.0, CFG)
    assert 0.90 <= cov <= 1.0 and abs(cov - 0.95) <= 0.02


def test_unconstrained_bernoulli_oscillates_about_nominal():
    cov = exact_coverage_one_sample(Binomial(1), OneSampleConstraint(0.5), 100, 0.5,
                                    ExactConfig(use_constraint=False))
    assert 0.85 <= cov <= 0.95


@pytest.mark.parametrize("m,d,n,theta0,a1,a2", [
    (1, 0.5, 12, 0.55, 0.05, 0.05), (1, 0.3, 20, 0.3, 0.05, 0.05), (1, 0.0, 7, 0.41, 0.1, 0.025),
    (3, 1.0, 9, 1.7, 0.05, 0.05), (2, 0.25, 15, 0.9, 0.2, 0.1), (1, 0.5, 31, 0.74, 0.05, 0.05),
])
def test_one_sample_matches_brute_force(m, d, n, theta0, a1, a2):
    cfg = ExactConfig(a1, a2)
    got = exact_coverage_one_sample(Binomial(m), OneSampleConstraint(d), n, theta0, cfg)
    assert abs(got - brute_one_sample(m, d, n, theta0, a1, a2)) <= 1e-13
    ucfg = ExactConfig(a1, a2, use_constraint=False)
    got = exact_coverage_one_sample(Binomial(m), OneSampleConstraint(d), n, theta0, ucfg)
    assert abs(got - brute_one_sample(m, d, n, theta0, a1, a2, constrained=False)) <= 1e-13


def test_vacuous_boundary_equals_unconstrained():
    for n, theta in [(10, 0.3), (57, 0.71), (200, 0.05)]:
        a = exact_coverage_one_sample(Binomial(1), OneSampleConstraint(0.0), n, theta, CFG)
        b = exact_coverage_one_sample(Binomial(1), None, n, theta, CFG)
        c = exact_coverage_one_sample(Binomial(1), OneSampleConstraint(0.0), n, theta,
                                      ExactConfig(use_constraint=False))
        assert a == b == c


@pytest.mark.parametrize("theta0", [2.0, 2.05, 2.2, 2.41])
def test_poisson_truncation_is_negligible(theta0):
    a = exact_coverage_one_sample(Poisson(), OneSampleConstraint(2.0), 400, theta0, ExactConfig(tail_eps=1e-12))
    b = exact_coverage_one_sample(Poisson(), OneSampleConstraint(2.0), 400, theta0, ExactConfig(tail_eps=5e-13))
    assert abs(a - b) < 1e-9


def test_interval_lower_bound_respects_boundary():
    en = OneSampleEnumerator(Poisson(), OneSampleConstraint(2.0), 50, CFG)
    for s in range(0, 300):
        lo, hi = en.interval(s)
        assert 2.0 <= lo <= hi


def test_one_sample_errors():
    with pytest.raises(UnsupportedFamilyError):
        exact_coverage_one_sample(NormalKnownVar(1.0), OneSampleConstraint(0.0), 10, 0.1, CFG)
    with pytest.raises(DomainError):
        exact_coverage_one_sample(Poisson(), OneSampleConstraint(2.0), 10, 1.5, CFG)
    with pytest.raises(DomainError):
        ExactConfig(alpha1=0.6)
    with pytest.raises(DomainError):
        ExactConfig(tail_eps=1e-3)


# ---------------------------------------------------------------- two samples


def _sixteen_cases(theta10, theta20, target, a1, a2):
    """n1 = n2 = 1 Bernoulli, written out case by case."""
    truth = {"theta1": theta10, "theta2": theta20, "delta": theta20 - theta10}[target]

    def est(x1, x2):
        return (x1, x2) if x1 <= x2 else ((x1 + x2) / 2, (x1 + x2) / 2)

    def stat(y1, y2):
        pooled = (y1 + y2) / 2
        return {"theta1": min(y1, pooled), "theta2": max(y2, pooled), "delta": max(y2 - y1, 0)}[target]

    total = 0.0
    for x1 in (0, 1):
        for x2 in (0, 1):
            p1, p2 = est(x1, x2)
            law = {}
            for y1 in (0, 1):
                for y2 in (0, 1):
                    w = (p1 if y1 else 1 - p1) * (p2 if y2 else 1 - p2)
                    law[stat(y1, y2)] = law.get(stat(y1, y2), 0.0) + w
            if _quantile(law, a1) <= truth + 1e-12 and _quantile(law, 1 - a2) >= truth - 1e-12:
                total += (theta10 if x1 else 1 - theta10) * (theta20 if x2 else 1 - theta20)
    return total


def test_sixteen_case_example():
    cov = exact_coverage_two_sample(Binomial(1), TwoSampleDesign(1, 1), 0.5, 0.5, CFG, "delta")
    assert abs(cov - _sixteen_cases(0.5, 0.5, "delta", 0.05, 0.05)) <= 1e-14


@pytest.mark.parametrize("n1,n2,theta10,theta20,target,a1,a2", [
    (2, 3, 0.4, 0.6, "theta1", 0.05, 0.05), (3, 3, 0.5, 0.5, "theta2", 0.05, 0.05),
    (4, 2, 0.2, 0.7, "delta", 0.1, 0.05), (5, 6, 0.45, 0.5, "delta", 0.05, 0.05),
    (6, 4, 0.3, 0.35, "theta1", 0.025, 0.1), (3, 7, 0.6, 0.9, "theta2", 0.05, 0.2),
])
def test_two_sample_matches_brute_force(n1, n2, theta10, theta20, target, a1, a2):
    design = TwoSampleDesign(n1, n2)
    for constrained in (True, False):
        cfg = ExactConfig(a1, a2, use_constraint=constrained)
        got = exact_coverage_two_sample(Binomial(1), design, theta10, theta20, cfg, target)
        want = brute_two_sample(n1, n2, theta10, theta20, target, a1, a2, constrained)
        assert abs(got - want) <= 1e-13


def test_relabelling_symmetry():
    # reflecting x -> 1 - x swaps the groups' roles: theta1 coverage at theta equals theta2 coverage at 1 - theta
    for n, theta in [(5, 0.5), (30, 0.5), (5, 0.3), (30, 0.3), (17, 0.82)]:
        design = TwoSampleDesign(n, n)
        c1 = exact_coverage_two_sample(Binomial(1), design, theta, theta, CFG, "theta1")
        c2 = exact_coverage_two_sample(Binomial(1), design, 1 - theta, 1 - theta, CFG, "theta2")
        assert abs(c1 - c2) <= 1e-14
    design = TwoSampleDesign(12, 12)
    a = exact_coverage_two_sample(Binomial(1), design, 0.5, 0.5, CFG, "theta1")
    b = exact_coverage_two_sample(Binomial(1), design, 0.5, 0.5, CFG, "theta2")
    assert abs(a - b) <= 1e-14


def test_cdf_form_agrees_with_quantile_form():
    rng = np.random.default_rng(99)
    checked = ties = 0
    for _ in range(200):
        n1, n2 = (int(v) for v in rng.integers(1, 9, 2))
        target = ["theta1", "theta2", "delta"][int(rng.integers(3))]
        a1, a2 = rng.choice([0.025, 0.05, 0.1, 0.2], 2)
        enum = TwoSampleEnumerator(Binomial(1), TwoSampleDesign(n1, n2), ExactConfig(a1, a2), target)
        t10 = rng.uniform(0.05, 0.9)
        t20 = rng.uniform(t10, 0.95)
        truth = enum.truth_value(t10, t20)
        for s1 in range(n1 + 1):
            for s2 in range(n2 + 1):
                law = enum.bootstrap_law(s1, s2)
                q = covered_quantile_form(law, truth, a1, a2)
                lo, hi = enum.interval(s1, s2)
                assert q == (lo <= truth + 1e-10 and hi >= truth - 1e-10)
                c = covered_cdf_form(law, truth, a1, a2)
                checked += 1
                if c != q:
                    # only allowed where the CDF is flat exactly at 1 - alpha2 below the truth
                    below = math.fsum(law.probs[law.values < truth - 1e-10])
                    assert abs(below - (1 - a2)) <= 1e-12
                    ties += 1
    assert checked > 2000 and ties <= checked // 100


def test_delta_plateau_near_zero():
    cov = exact_coverage_two_sample(Binomial(1), TwoSampleDesign(100, 300), 0.5, 0.5, CFG, "delta")
    assert abs(cov - 0.95) <= 0.02


def test_delta_tail_oscillates_about_nominal():
    grid = np.arange(0.2, 0.3, 0.01)
    curve = two_sample_curve(Binomial(1), TwoSampleDesign(100, 300), 0.5, grid, CFG, "delta")
    assert abs(curve.coverage.mean() - 0.90) <= 0.03


def test_two_sample_workers_do_not_change_result():
    design = TwoSampleDesign(20, 30)
    a = TwoSampleEnumerator(Binomial(1), design, CFG, "theta2").coverage(0.4, 0.45, workers=1)
    b = TwoSampleEnumerator(Binomial(1), design, CFG, "theta2").coverage(0.4, 0.45, workers=3)
    assert a == b


def test_two_sample_errors():
    design = TwoSampleDesign(3, 3)
    with pytest.raises(DomainError):
        exact_coverage_two_sample(Binomial(1), design, 0.6, 0.4, CFG, "delta")
    with pytest.raises(DomainError):
        exact_coverage_two_sample(Binomial(1), design, 0.3, 0.4, CFG, "theta")
    with pytest.raises(UnsupportedFamilyError):
        exact_coverage_two_sample(NormalKnownVar(1.0), design, 0.3, 0.4, CFG, "delta")


# ---------------------------------------------------------------- curves


def test_curve_basics():
    empty = one_sample_curve(Poisson(), OneSampleConstraint(2.0), 100, [], CFG)
    assert len(empty.coverage) == 0
    one = one_sample_curve(Poisson(), OneSampleConstraint(2.0), 100, [2.13], CFG)
    assert one.coverage[0] == exact_coverage_one_sample(Poisson(), OneSampleConstraint(2.0), 100, 2.13, CFG)
    assert one.method == "exact" and one.target == "theta"
    u = one_sample_curve(Poisson(), OneSampleConstraint(2.0), 100, [2.13], ExactConfig(use_constraint=False))
    assert u.method == "exact_unconstrained"


def test_curve_errors_carry_grid_index():
    grid = [2.0, 2.1, 1.0, 2.2]
    with pytest.raises(GridPointError) as info:
        one_sample_curve(Poisson(), OneSampleConstraint(2.0), 50, grid, CFG)
    assert info.value.index == 2
    seen = []
    curve = one_sample_curve(Poisson(), OneSampleConstraint(2.0), 50, grid, CFG, on_error=seen.append)
    assert [e.index for e in seen] == [2]
    assert np.isnan(curve.coverage[2]) and not np.isnan(curve.coverage[[0, 1, 3]]).any()


def test_generic_curve_preserves_order():
    curve = coverage_curve([3, 1, 2], lambda v: v / 10, param_name="x", method="exact", target="theta")
    np.testing.assert_array_equal(curve.coverage, [0.3, 0.1, 0.2])
