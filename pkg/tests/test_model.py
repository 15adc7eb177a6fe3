import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from downturn_lgd import ModelParams, PortfolioSpec
from downturn_lgd.errors import DegenerateInputError, DomainError
from downturn_lgd.model import (
    conditional_default_prob,
    conditional_expected_loss,
    limiting_loss,
    limiting_quantile,
    std_normal_cdf,
    std_normal_quantile,
)

from conftest import REFERENCE

mpmath.mp.dps = 40


def mp_cdf(x):
    return float(mpmath.ncdf(mpmath.mpf(x)))


def mp_quantile(q):
    q = mpmath.mpf(q)
    start = -mpmath.sqrt(-2 * mpmath.log(q)) if q < 0.01 else mpmath.sqrt(2) * mpmath.erfinv(2 * q - 1)
    return float(mpmath.findroot(lambda z: mpmath.log(mpmath.ncdf(z)) - mpmath.log(q), start, tol=1e-35))


@pytest.mark.parametrize("x", [-37.0, -20.0, -8.5, -3.09, -1.0, 0.0, 0.3, 2.5, 7.0])
def test_cdf_matches_high_precision(x):
    want = mp_cdf(x)
    # float64 ndtr keeps ~13 digits down to the subnormal range
    assert std_normal_cdf(x) == pytest.approx(want, rel=5e-13, abs=0.0)


@pytest.mark.parametrize("q", [1e-300, 1e-15, 1e-3, 0.0167, 0.5, 0.999, 1 - 1e-12])
def test_quantile_matches_high_precision(q):
    assert std_normal_quantile(q) == pytest.approx(mp_quantile(q), rel=1e-12)


@pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_rejects_outside_unit_interval(q):
    with pytest.raises(DomainError):
        std_normal_quantile(q)


def test_conditional_default_prob_definition(reference):
    x = np.linspace(-4, 4, 17)
    thr = stats.norm.ppf(reference.p)
    want = stats.norm.cdf((thr - math.sqrt(reference.rho) * x) / math.sqrt(1 - reference.rho))
    np.testing.assert_allclose(conditional_default_prob(reference, x), want, rtol=1e-13)
    # averaging over the factor gives back p
    avg = integrate.quad(lambda z: conditional_default_prob(reference, z) * stats.norm.pdf(z), -12, 12)[0]
    assert avg == pytest.approx(reference.p, rel=1e-10)


@pytest.mark.parametrize("x", [-3.09, -1.0, 0.0, 2.0])
def test_exact_loss_is_capped_expectation(reference, x):
    # E[max(1 - R, 0)] with R | x normal, by direct integration
    m = reference.mu + reference.sigma1 * x
    s = reference.sigma2
    oracle = integrate.quad(lambda r: (1 - r) * stats.norm.pdf(r, m, s), -np.inf, 1.0, epsabs=1e-13)[0]
    assert conditional_expected_loss(reference, x, "exact") == pytest.approx(oracle, rel=1e-9)


def test_linear_loss_and_ordering(reference):
    x = np.linspace(-5, 5, 41)
    lin = conditional_expected_loss(reference, x, "linear")
    np.testing.assert_allclose(lin, 1 - reference.mu - reference.sigma * math.sqrt(reference.omega) * x, rtol=1e-15)
    ex = conditional_expected_loss(reference, x, "exact")
    assert np.all(ex >= np.maximum(lin, 0.0))


def test_exact_mode_needs_idiosyncratic_recovery_noise():
    params = ModelParams(p=0.02, rho=0.1, mu=0.4, sigma=0.5, omega=1.0)
    with pytest.raises(DegenerateInputError):
        conditional_expected_loss(params, 0.0, "exact")
    assert conditional_expected_loss(params, 0.0, "linear") == pytest.approx(0.6)


def test_unknown_mode(reference):
    with pytest.raises(DomainError):
        conditional_expected_loss(reference, 0.0, "cubic")


def test_limiting_quantile_is_loss_at_adverse_factor(reference):
    res = limiting_quantile(reference, 0.999, "exact")
    x_star = stats.norm.ppf(0.001)
    assert res.ec == pytest.approx(float(limiting_loss(reference, x_star, "exact")), rel=1e-14)
    assert res.ec == pytest.approx(res.stressed_pd * res.stressed_lgd, rel=1e-14)
    # the limiting loss is decreasing in x, so P(L <= ec) is exactly q
    assert stats.norm.sf(x_star) == pytest.approx(0.999)


def test_limiting_quantile_frozen_values(reference):
    # frozen from a 40-digit mpmath evaluation of the closed form
    lin = limiting_quantile(reference, 0.999, "linear")
    ex = limiting_quantile(reference, 0.999, "exact")
    assert lin.stressed_pd == pytest.approx(0.0817347946196, rel=1e-11)
    assert lin.stressed_lgd == pytest.approx(0.80266937931, rel=1e-11)
    assert lin.ec == pytest.approx(0.0656060168653, rel=1e-11)
    assert ex.stressed_lgd == pytest.approx(0.813515108289, rel=1e-11)
    assert ex.ec == pytest.approx(0.0664924902959, rel=1e-11)


@pytest.mark.parametrize("q", [0.0, 1.0, 1.2])
def test_limiting_quantile_rejects_bad_level(reference, q):
    with pytest.raises(DomainError):
        limiting_quantile(reference, q)


@pytest.mark.parametrize(
    "bad",
    [dict(p=0.0), dict(p=1.0), dict(rho=0.0), dict(rho=1.0), dict(mu=0.0), dict(mu=1.0),
     dict(sigma=0.01), dict(sigma=1.0), dict(omega=-0.1), dict(omega=1.1), dict(p=float("nan"))],
)
def test_params_validate(bad):
    with pytest.raises(DomainError):
        ModelParams(**{**REFERENCE, **bad})


def test_params_roundtrip(reference):
    assert ModelParams.from_dict(reference.as_dict()) == reference
    assert reference.sigma1 ** 2 + reference.sigma2 ** 2 == pytest.approx(reference.sigma ** 2)
    assert reference.default_threshold == pytest.approx(stats.norm.ppf(reference.p))


def test_portfolio_specs():
    lim = PortfolioSpec.limiting()
    assert lim.is_limiting and lim.label() == "inf"
    hom = PortfolioSpec.homogeneous(50)
    assert hom.is_homogeneous and hom.label() == "50"
    amt = PortfolioSpec.from_amounts([1.0, 3.0])
    np.testing.assert_allclose(amt.weights, [0.25, 0.75])
    assert not amt.is_homogeneous
    with pytest.raises(DomainError):
        PortfolioSpec.from_weights([0.5, 0.6])
    with pytest.raises(DomainError):
        PortfolioSpec.homogeneous(0)
    with pytest.raises(DomainError):
        PortfolioSpec.from_amounts([1.0, -1.0])
