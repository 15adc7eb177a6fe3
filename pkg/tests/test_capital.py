import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from downturn_lgd import ModelParams, PortfolioSpec
from downturn_lgd.capital import (
    CHUNK,
    _losses_homogeneous,
    _losses_weighted,
    capital_report,
    draw_portfolio,
    empirical_quantile,
    format_capital_table,
    predictive_quantile,
    quantile_given_params,
    quantile_posterior,
    quantile_standard_error,
    simulate_loss,
    simulate_losses,
    uncertainty_loading,
)
from downturn_lgd.errors import DomainError
from downturn_lgd.mcmc import ChainOutput
from downturn_lgd.model import limiting_loss, limiting_quantile


def test_rank_rule_on_one_to_hundred():
    v = np.arange(1.0, 101.0)
    rng = np.random.default_rng(0)
    shuffled = rng.permutation(v)
    assert empirical_quantile(shuffled, 0.5) == 50.5
    assert empirical_quantile(shuffled, 0.25) == pytest.approx(25.25)
    assert empirical_quantile(shuffled, 0.99) == pytest.approx(99.99)
    assert empirical_quantile(shuffled, 0.999) == 100.0  # rank clamped to n
    assert empirical_quantile(shuffled, 0.001) == 1.0  # rank clamped to 1
    with pytest.raises(DomainError):
        empirical_quantile(shuffled, 1.0)
    with pytest.raises(DomainError):
        empirical_quantile([], 0.5)


@pytest.mark.parametrize("q", [0.01, 0.3, 0.9, 0.999])
def test_rank_rule_matches_weibull_plotting_position(q):
    v = np.random.default_rng(1).standard_normal(1234)
    assert empirical_quantile(v, q) == pytest.approx(np.quantile(v, q, method="weibull"), rel=1e-14)


def test_quantile_standard_error_matches_asymptotic_formula():
    q, n = 0.99, 200_000
    v = np.random.default_rng(2).standard_normal(n)
    asym = math.sqrt(q * (1 - q) / n) / stats.norm.pdf(stats.norm.ppf(q))
    assert quantile_standard_error(v, q) == pytest.approx(asym, rel=0.15)


def test_results_do_not_depend_on_thread_count(reference):
    port = PortfolioSpec.homogeneous(200)
    n = 2 * CHUNK + 123
    a = simulate_losses(reference, port, n, 42, threads=1)
    b = simulate_losses(reference, port, n, 42, threads=3)
    assert a.shape == (n,) and np.array_equal(a, b)
    assert not np.array_equal(a, simulate_losses(reference, port, n, 43))
    g = simulate_losses(reference, port, 100, np.random.default_rng(5))
    h = simulate_losses(reference, port, 100, np.random.default_rng(5))
    assert np.array_equal(g, h)
    with pytest.raises(DomainError):
        simulate_losses(reference, port, 10, None)


def test_binomial_fast_path_matches_loan_level_simulation():
    params = ModelParams(p=0.05, rho=0.2, mu=0.5, sigma=0.4, omega=0.2)
    J = 25
    thr, rho, mu, s1, s2 = params.default_threshold, params.rho, params.mu, params.sigma1, params.sigma2
    fast = _losses_homogeneous(np.random.default_rng(1), 40_000, J, thr, rho, mu, s1, s2)
    slow = _losses_weighted(np.random.default_rng(2), 40_000, np.full(J, 1 / J), thr, rho, mu, s1, s2)
    assert stats.ks_2samp(fast, slow).pvalue > 0.001
    rng = np.random.default_rng(3)
    literal = np.array([draw_portfolio(params, PortfolioSpec.homogeneous(J), rng).loss for _ in range(3000)])
    assert stats.ks_2samp(fast, literal).pvalue > 0.001
    # mean loss: E[Lambda(X) S(X)] by quadrature
    want = integrate.quad(lambda x: limiting_loss(params, x) * stats.norm.pdf(x), -10, 10)[0]
    assert abs(fast.mean() - want) < 4 * fast.std() / math.sqrt(fast.size)


def test_draw_portfolio_records_everything(reference):
    port = PortfolioSpec.from_amounts(np.arange(1.0, 501.0))
    d = draw_portfolio(ModelParams(0.2, 0.3, 0.4, 0.5, 0.2), port, np.random.default_rng(4))
    hit = d.indicators.astype(bool)
    assert hit.any() and (~hit).any()
    assert np.all(np.isnan(d.recoveries[~hit])) and np.all(np.isfinite(d.recoveries[hit]))
    assert d.loss == pytest.approx(np.sum(port.weights[hit] * np.maximum(1 - d.recoveries[hit], 0)))
    with pytest.raises(DomainError):
        draw_portfolio(reference, PortfolioSpec.limiting(), np.random.default_rng(0))
    assert 0.0 <= simulate_loss(reference, PortfolioSpec.homogeneous(10), np.random.default_rng(1)) <= 1.0
    assert simulate_loss(reference, PortfolioSpec.limiting(), np.random.default_rng(1)) > 0.0


def test_limiting_portfolio_uses_closed_form(reference):
    est = quantile_given_params(reference, PortfolioSpec.limiting(), 0.999, 10, 0)
    assert est.value == limiting_quantile(reference, 0.999).ec and est.n_draws == 0
    losses = simulate_losses(reference, PortfolioSpec.limiting(), 200_000, 3)
    mc = empirical_quantile(losses, 0.99)
    assert abs(mc - limiting_quantile(reference, 0.99).ec) < 4 * quantile_standard_error(losses, 0.99)


def test_weighted_portfolio_quantile_runs(reference):
    port = PortfolioSpec.from_weights(np.full(40, 1 / 40))
    est = quantile_given_params(reference, port, 0.99, 20_000, 8)
    hom = quantile_given_params(reference, PortfolioSpec.homogeneous(40), 0.99, 20_000, 8)
    assert abs(est.value - hom.value) < 4 * math.hypot(est.std_error, hom.std_error) + 1e-9


def test_small_run_warns(reference):
    est = quantile_given_params(reference, PortfolioSpec.homogeneous(50), 0.999, 5000, 0)
    assert est.warning and "1e5" in est.warning
    assert quantile_given_params(reference, PortfolioSpec.homogeneous(50), 0.99, 5000, 0).warning is None


def _mixture_quantile(rows, q):
    def cdf(loss):
        total = 0.0
        for params in rows:
            # L(x) decreases in x, so P(L <= loss) = P(X >= x(loss))
            f = lambda x: float(limiting_loss(params, x)) - loss  # noqa: E731
            if f(-40) <= 0:
                total += 1.0
            elif f(40) >= 0:
                total += 0.0
            else:
                total += stats.norm.sf(optimize.brentq(f, -40, 40, xtol=1e-14))
        return total / len(rows)

    return optimize.brentq(lambda loss: cdf(loss) - q, 1e-6, 0.999, xtol=1e-14)


def test_predictive_quantile_matches_mixture_cdf():
    rows = [ModelParams(0.01, 0.05, 0.45, 0.45, 0.05), ModelParams(0.03, 0.12, 0.35, 0.5, 0.03)]
    chain = ChainOutput.from_params(rows)
    want = _mixture_quantile(rows, 0.99)
    est = predictive_quantile(chain, PortfolioSpec.limiting(), 0.99, 200_000, 17)
    assert abs(est.value - want) < 4 * est.std_error
    # with one row the predictive quantile is the parameter-conditional one
    one = ChainOutput.from_params(rows[:1])
    assert _mixture_quantile(rows[:1], 0.99) == pytest.approx(limiting_quantile(rows[0], 0.99).ec, rel=1e-10)
    est1 = predictive_quantile(one, PortfolioSpec.limiting(), 0.99, 100_000, 1)
    assert abs(est1.value - limiting_quantile(rows[0], 0.99).ec) < 4 * est1.std_error


def test_quantile_posterior_rows(reference):
    rows = [reference, ModelParams(0.02, 0.08, 0.4, 0.5, 0.02), ModelParams(0.015, 0.05, 0.42, 0.48, 0.01)]
    chain = ChainOutput.from_params(rows)
    post = quantile_posterior(chain, 0.999)
    np.testing.assert_allclose(post.samples, [limiting_quantile(r, 0.999).ec for r in rows], rtol=1e-13)
    np.testing.assert_allclose(post.stressed_pd * post.stressed_lgd, post.samples)
    assert set(post.decomposition_summary()) == {"PD", "LGD", "EC"}
    fin = quantile_posterior(chain, 0.99, PortfolioSpec.homogeneous(5000), stride=2, n_draws=20_000, rng=3)
    assert fin.samples.size == 2 and fin.stride == 2
    lim = [limiting_quantile(rows[i], 0.99).ec for i in (0, 2)]
    np.testing.assert_allclose(fin.samples, lim, rtol=0.05)


def test_capital_report(reference):
    rows = [reference, ModelParams(0.02, 0.08, 0.4, 0.5, 0.02)]
    chain = ChainOutput.from_params(rows)
    with pytest.warns(RuntimeWarning):
        rep = capital_report(chain, 0.999, portfolio_sizes=(50, None), n_draws=20_000, seed=1, mle_params=reference)
    assert set(rep.predictive_quantile) == {"50", "inf"}
    assert rep.uncertainty_loading == pytest.approx(
        uncertainty_loading(rep.predictive_quantile["inf"].value, rep.posterior.summary.mean))
    doc = rep.as_dict()
    assert doc["mle_ec"]["ec"] == pytest.approx(limiting_quantile(reference, 0.999).ec)
    text = format_capital_table(rep)
    assert "EC" in text and "J=50" in text
    mle_only = capital_report(None, 0.999, mle_params=reference, mode="linear")
    assert mle_only.posterior is None and mle_only.mle_ec.ec == pytest.approx(0.0656060168653, rel=1e-10)
