import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from coverbound.nef import (
    Binomial,
    NormalKnownVar,
    Poisson,
    make_family,
    mean_from_natural,
    natural_param,
    sample,
    sample_sum,
    sum_distribution,
    variance_at_mean,
)
from coverbound.numerics import DomainError


def test_natural_param_examples():
    assert natural_param(Poisson(), 1.0) == 0.0
    assert natural_param(Binomial(1), 0.5) == 0.0
    assert natural_param(NormalKnownVar(1.0), 2.5) == 2.5


@pytest.mark.parametrize("family,lo,hi", [
    (Poisson(), 1e-6, 50.0), (Binomial(1), 1e-6, 1 - 1e-6), (Binomial(7), 1e-5, 7 - 1e-5),
    (NormalKnownVar(2.5), -30.0, 30.0),
])
def test_natural_param_round_trip(family, lo, hi):
    for theta in np.linspace(lo, hi, 97):
        back = mean_from_natural(family, natural_param(family, theta))
        assert abs(back - theta) <= 1e-12 * max(1.0, abs(theta))


@pytest.mark.parametrize("family,theta", [(Poisson(), 0.0), (Binomial(1), 0.0), (Binomial(1), 1.0),
                                          (Binomial(3), 3.0)])
def test_natural_param_rejects_endpoints(family, theta):
    with pytest.raises(DomainError):
        natural_param(family, theta)


def test_variance_function():
    assert variance_at_mean(Poisson(), 2.0) == 2.0
    assert variance_at_mean(Binomial(1), 0.5) == 0.25
    assert variance_at_mean(Binomial(4), 1.0) == 0.75
    assert variance_at_mean(NormalKnownVar(1.0), -12.0) == 1.0
    assert variance_at_mean(Poisson(), 0.0) == 0.0
    assert variance_at_mean(Binomial(1), 1.0) == 0.0


@given(st.floats(1e-9, 1 - 1e-9))
def test_variance_positive_inside(p):
    assert variance_at_mean(Binomial(1), p) > 0
    assert variance_at_mean(Poisson(), p * 40) > 0


@pytest.mark.parametrize("family,theta", [(Poisson(), -0.1), (Binomial(1), 1.2), (Binomial(2), -1e-9),
                                          (Poisson(), math.inf), (Poisson(), math.nan)])
def test_mean_outside_domain(family, theta):
    with pytest.raises(DomainError):
        variance_at_mean(family, theta)


def test_family_validation():
    with pytest.raises(DomainError):
        Binomial(0)
    with pytest.raises(DomainError):
        NormalKnownVar(0.0)
    with pytest.raises(DomainError):
        make_family("gamma")
    assert make_family("binomial", m=3) == Binomial(3)


def test_sum_distribution_examples():
    law = sum_distribution(Binomial(1), 0.5, 2)
    assert law.offset == 0
    np.testing.assert_allclose(law.pmf, [0.25, 0.5, 0.25], rtol=0, atol=1e-15)
    law = sum_distribution(Poisson(), 2.0, 400)
    assert law.pmf.sum() >= 1 - 2e-12
    assert abs(law.table_mean() - 800.0) <= 1e-9 * 400
    law = sum_distribution(Poisson(), 2.0, 1)
    assert law.offset == 0
    assert law.pmf[0] == pytest.approx(math.exp(-2.0), rel=1e-14)


@pytest.mark.parametrize("theta,n", [(0.01, 3), (0.7, 50), (2.0, 100), (5.3, 400), (40.0, 200)])
def test_poisson_truncation_contract(theta, n):
    eps = 1e-12
    law = sum_distribution(Poisson(), theta, n, eps)
    mu = n * theta
    lo, hi = law.offset, law.offset + len(law.pmf) - 1
    assert stats.poisson.cdf(lo - 1, mu) <= eps if lo > 0 else True
    assert stats.poisson.sf(hi, mu) <= eps
    # the window is the tightest one: widening is not needed, shrinking breaks the contract
    assert lo == 0 or stats.poisson.cdf(lo, mu) > eps
    assert stats.poisson.sf(hi - 1, mu) > eps
    assert abs(law.table_mean() - mu) <= 1e-9 * n


def test_degenerate_sum_laws():
    for family, theta, n, at in [(Binomial(1), 0.0, 5, 0), (Binomial(1), 1.0, 5, 5), (Binomial(3), 3.0, 2, 6),
                                 (Poisson(), 0.0, 7, 0)]:
        law = sum_distribution(family, theta, n)
        assert law.pmf[at - law.offset] == 1.0
        assert law.pmf.sum() == 1.0


def test_normal_sum_record():
    law = sum_distribution(NormalKnownVar(2.0), 1.5, 10)
    assert law.pmf is None and law.mean == 15.0 and law.variance == 20.0
    with pytest.raises(DomainError):
        law.support


def test_sample_examples():
    rng = np.random.default_rng(0)
    assert np.array_equal(sample(Binomial(1), 0.0, 10, rng), np.zeros(10))
    x = sample(Poisson(), 3.0, 10**6, np.random.default_rng(1))
    assert abs(x.mean() - 3.0) <= 4 * math.sqrt(3.0 / 1e6)
    z = sample(NormalKnownVar(1.0), 0.0, 10**6, np.random.default_rng(2))
    assert abs(z.var() - 1.0) <= 0.01
    with pytest.raises(DomainError):
        sample(Poisson(), 1.0, 0, rng)


def test_sample_deterministic_given_state():
    a = sample(Binomial(4), 1.3, 50, np.random.default_rng(8))
    b = sample(Binomial(4), 1.3, 50, np.random.default_rng(8))
    assert np.array_equal(a, b)


@pytest.mark.slow
@pytest.mark.parametrize("family,theta,n", [(Poisson(), 2.0, 1), (Binomial(5), 2.0, 1), (Poisson(), 0.4, 6),
                                            (Binomial(1), 0.3, 9)])
def test_sampling_matches_sum_law(family, theta, n):
    rng = np.random.default_rng(2024)
    draws = np.array([sample(family, theta, n, rng).sum() for _ in range(10**5 // max(1, n // 3))])
    _chi_square_ok(draws, sum_distribution(family, theta, n))
    sums = sample_sum(family, theta, n, np.random.default_rng(7), size=10**5)
    _chi_square_ok(sums, sum_distribution(family, theta, n))


def _chi_square_ok(draws, law):
    support = law.support
    expected = law.pmf * len(draws)
    observed = np.array([(draws == s).sum() for s in support], dtype=float)
    # pool sparse cells into their neighbours
    keep = expected >= 5
    obs = np.append(observed[keep], observed[~keep].sum() + (len(draws) - observed.sum()))
    exp = np.append(expected[keep], expected[~keep].sum() + len(draws) * (1 - law.pmf.sum()))
    if exp[-1] < 5:
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    exp *= obs.sum() / exp.sum()
    assert stats.chisquare(obs, exp).pvalue > 1e-3
