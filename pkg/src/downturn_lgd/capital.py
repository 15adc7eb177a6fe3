"""
Economic capital: loss quantiles given parameters, the quantile of the
full predictive loss distribution (parameters drawn from a posterior chain),
the posterior distribution of the parameter-conditional quantile, and the
extra loading attributable to parameter uncertainty.

Monte Carlo draws are produced in fixed-size chunks, each with its own
random stream derived from a master seed and the chunk index.  Results
therefore depend on the seed only, not on the number of worker threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError
from .mcmc import ChainOutput, ColumnSummary, summarize
from .model import (
    ModelParams,
    PortfolioSpec,
    SMode,
    StressedDecomposition,
    _lambda,
    _s,
    limiting_quantile,
    std_normal_quantile,
)

CHUNK = 1 << 15


@dataclass(frozen=True)
class PortfolioDraw:
    """One realisation of the portfolio (recoveries only for defaulted loans)."""

    x: float
    indicators: np.ndarray
    latent: np.ndarray
    recoveries: np.ndarray
    loss: float


@dataclass(frozen=True)
class QuantileEstimate:
    value: float
    q: float
    n_draws: int
    std_error: float
    warning: str | None = None

    def __float__(self):
        return self.value

    def as_dict(self):
        return {"value": self.value, "q": self.q, "n_draws": self.n_draws, "std_error": self.std_error, "warning": self.warning}


def _check_q(q):
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {q!r}")


def empirical_quantile(samples, q: float) -> float:
    """Order-statistic quantile at rank ``q*(n+1)`` with linear interpolation.

    The rank is clamped to ``[1, n]`` (1-based order statistics).
    """
    _check_q(q)
    v = np.asarray(samples, dtype=float).ravel()
    n = v.size
    if n == 0:
        raise DomainError("no samples")
    h = min(max(q * (n + 1), 1.0), float(n))
    lo = int(math.floor(h))
    frac = h - lo
    hi = min(lo + 1, n)
    part = np.partition(v, [lo - 1, hi - 1]) if hi != lo else np.partition(v, lo - 1)
    a = part[lo - 1]
    b = part[hi - 1]
    return float(a + frac * (b - a))


def quantile_standard_error(samples, q: float, z: float = 1.0) -> float:
    """Distribution-free standard error of the ``q``-quantile estimate.

    Half the distance between the order statistics at ranks
    ``n*q -/+ z*sqrt(n*q*(1-q))``, divided by ``z``.
    """
    v = np.sort(np.asarray(samples, dtype=float).ravel())
    n = v.size
    half = z * math.sqrt(n * q * (1.0 - q))
    lo = int(min(max(math.floor(n * q - half), 1), n)) - 1
    hi = int(min(max(math.ceil(n * q + half), 1), n)) - 1
    return float((v[hi] - v[lo]) / (2.0 * z))


def _master_seed(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    if rng is None:
        raise DomainError("a seed or Generator is required for reproducible simulation")
    return int(rng)


def _sub_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0] >> 1)


def _chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _run_chunks(fn, n_draws: int, seed: int, threads: int = 1) -> np.ndarray:
    sizes = [CHUNK] * (n_draws // CHUNK)
    if n_draws % CHUNK:
        sizes.append(n_draws % CHUNK)
    jobs = [(i, m) for i, m in enumerate(sizes)]

    def work(job):
        i, m = job
        return fn(_chunk_rng(seed, i), m)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    return np.concatenate(parts) if parts else np.empty(0)


# -- vectorised loss kernels -------------------------------------------------------
# Parameter arguments are scalars or arrays of length m (one set per draw).

def _losses_limiting(rng, m, thr, rho, mu, s1, s2, mode):
    x = rng.standard_normal(m)
    return _lambda(thr, rho, x) * _s(mu, s1, s2, x, mode)


def _losses_homogeneous(rng, m, size, thr, rho, mu, s1, s2):
    # In a homogeneous portfolio only the number of defaults matters, and given
    # x it is Binomial(J, Lambda(x)); recoveries are drawn for defaulters only.
    x = rng.standard_normal(m)
    n_def = rng.binomial(size, _lambda(thr, rho, x))
    owner = np.repeat(np.arange(m), n_def)
    z = rng.standard_normal(owner.size)
    pick = (lambda a: a[owner]) if np.ndim(mu) else (lambda a: a)
    r = pick(mu) + pick(s1) * x[owner] + pick(s2) * z
    return np.bincount(owner, weights=np.maximum(1.0 - r, 0.0), minlength=m) / size


def _losses_weighted(rng, m, weights, thr, rho, mu, s1, s2):
    out = np.empty(m)
    J = weights.size
    step = max(1, (1 << 22) // J)
    col = lambda a, sl: a[sl, None] if np.ndim(a) else a  # noqa: E731
    for start in range(0, m, step):
        sl = slice(start, min(start + step, m))
        k = sl.stop - sl.start
        x = rng.standard_normal(k)[:, None]
        c = np.sqrt(col(rho, sl)) * x + np.sqrt(1.0 - col(rho, sl)) * rng.standard_normal((k, J))
        hit = c < col(thr, sl)
        rows, cols = np.nonzero(hit)
        z = rng.standard_normal(rows.size)
        pick = (lambda a: a[sl][rows]) if np.ndim(mu) else (lambda a: a)
        r = pick(mu) + pick(s1) * x[rows, 0] + pick(s2) * z
        out[sl] = np.bincount(rows, weights=weights[cols] * np.maximum(1.0 - r, 0.0), minlength=k)
    return out


def _raw(params: ModelParams):
    return params.default_threshold, params.rho, params.mu, params.sigma1, params.sigma2


def _loss_kernel(portfolio: PortfolioSpec, thr, rho, mu, s1, s2, mode):
    if portfolio.is_limiting:
        return lambda rng, m: _losses_limiting(rng, m, thr, rho, mu, s1, s2, mode)
    if portfolio.is_homogeneous:
        return lambda rng, m: _losses_homogeneous(rng, m, portfolio.size, thr, rho, mu, s1, s2)
    return lambda rng, m: _losses_weighted(rng, m, portfolio.weights, thr, rho, mu, s1, s2)


# -- single draws (literal per-loan simulation) ----------------------------------------

def draw_portfolio(params: ModelParams, portfolio: PortfolioSpec, rng: np.random.Generator) -> PortfolioDraw:
    """Simulate one period loan by loan: factor, latent conditions, defaults, recoveries."""
    if portfolio.is_limiting:
        raise DomainError("a limiting portfolio has no individual loans")
    J = portfolio.size
    w = portfolio.weights if portfolio.weights is not None else np.full(J, 1.0 / J)
    x = float(rng.standard_normal())
    c = math.sqrt(params.rho) * x + math.sqrt(1.0 - params.rho) * rng.standard_normal(J)
    hit = c < params.default_threshold
    r = np.full(J, np.nan)
    r[hit] = params.mu + params.sigma1 * x + params.sigma2 * rng.standard_normal(int(hit.sum()))
    loss = float(np.sum(w[hit] * np.maximum(1.0 - r[hit], 0.0)))
    return PortfolioDraw(x=x, indicators=hit.astype(np.int8), latent=c, recoveries=r, loss=loss)


def simulate_loss(params: ModelParams, portfolio: PortfolioSpec, rng: np.random.Generator, mode: SMode = "exact") -> float:
    """One draw of the portfolio loss rate."""
    if portfolio.is_limiting:
        thr, rho, mu, s1, s2 = _raw(params)
        return float(_losses_limiting(rng, 1, thr, rho, mu, s1, s2, mode)[0])
    return draw_portfolio(params, portfolio, rng).loss


def simulate_losses(params: ModelParams, portfolio: PortfolioSpec, n_draws: int, rng, mode: SMode = "exact", threads: int = 1) -> np.ndarray:
    """``n_draws`` independent portfolio loss rates (chunked, reproducible per seed)."""
    kernel = _loss_kernel(portfolio, *_raw(params), mode)
    return _run_chunks(kernel, int(n_draws), _master_seed(rng), threads)


def _estimate(losses, q, n_draws):
    warning = None
    if q >= 0.999 and n_draws < 100_000:
        warning = f"only {n_draws} draws for q={q}; at least 1e5 are recommended"
    return QuantileEstimate(
        value=empirical_quantile(losses, q),
        q=q,
        n_draws=n_draws,
        std_error=quantile_standard_error(losses, q),
        warning=warning,
    )


def quantile_given_params(params: ModelParams, portfolio: PortfolioSpec, q: float, n_draws: int, rng, mode: SMode = "exact", threads: int = 1) -> QuantileEstimate:
    """Monte Carlo ``q``-quantile of the loss for fixed parameters."""
    _check_q(q)
    if portfolio.is_limiting:
        ec = limiting_quantile(params, q, mode).ec
        return QuantileEstimate(value=ec, q=q, n_draws=0, std_error=0.0)
    return _estimate(simulate_losses(params, portfolio, n_draws, rng, mode, threads), q, int(n_draws))


# -- posterior-based capital ------------------------------------------------------------

def _chain_arrays(chain: ChainOutput):
    if chain.n_draws == 0:
        raise DomainError("chain has no draws")
    th = chain.theta_columns()
    sigma, omega = th["sigma"], th["omega"]
    thr = chain.column("probit_p")
    return thr, th["rho"], th["mu"], sigma * np.sqrt(omega), sigma * np.sqrt(1.0 - omega)


def predictive_losses(chain: ChainOutput, portfolio: PortfolioSpec, n_draws: int, rng, mode: SMode = "exact", threads: int = 1) -> np.ndarray:
    """Losses from the full predictive distribution.

    For every draw a chain row is picked uniformly (with replacement) and a
    fresh factor and idiosyncratic shocks are simulated; the chain's factor
    path is not used.
    """
    thr, rho, mu, s1, s2 = _chain_arrays(chain)
    n_rows = thr.size

    def fn(rng_, m):
        rows = rng_.integers(0, n_rows, size=m)
        kernel = _loss_kernel(portfolio, thr[rows], rho[rows], mu[rows], s1[rows], s2[rows], mode)
        return kernel(rng_, m)

    return _run_chunks(fn, int(n_draws), _master_seed(rng), threads)


def predictive_quantile(chain: ChainOutput, portfolio: PortfolioSpec, q: float, n_draws: int, rng, mode: SMode = "exact", threads: int = 1) -> QuantileEstimate:
    """Quantile of the full predictive loss distribution (accounts for parameter uncertainty)."""
    _check_q(q)
    return _estimate(predictive_losses(chain, portfolio, n_draws, rng, mode, threads), q, int(n_draws))


@dataclass(frozen=True)
class QuantilePosterior:
    """Posterior sample of ``Q_q(theta)``, one value per (strided) chain row.

    ``stressed_pd``/``stressed_lgd`` are filled for the limiting portfolio only.
    """

    q: float
    portfolio: str
    samples: np.ndarray = field(repr=False)
    summary: ColumnSummary | None
    stressed_pd: np.ndarray | None = field(default=None, repr=False)
    stressed_lgd: np.ndarray | None = field(default=None, repr=False)
    stride: int = 1

    def decomposition_summary(self) -> dict:
        out = {}
        if self.stressed_pd is not None and self.stressed_pd.size:
            out["PD"] = summarize(self.stressed_pd)
            out["LGD"] = summarize(self.stressed_lgd)
        out["EC"] = self.summary
        return out


def quantile_posterior(
    chain: ChainOutput,
    q: float,
    portfolio: PortfolioSpec | None = None,
    mode: SMode = "exact",
    stride: int | None = None,
    n_draws: int = 100_000,
    rng=None,
    threads: int = 1,
) -> QuantilePosterior:
    """``Q_q(theta)`` for each chain row.

    The limiting portfolio uses the closed form on every row; finite
    portfolios run loan-level simulation on every ``stride``-th row
    (default 10).
    """
    _check_q(q)
    portfolio = portfolio or PortfolioSpec.limiting()
    if chain.n_draws == 0:
        return QuantilePosterior(q=q, portfolio=portfolio.label(), samples=np.empty(0), summary=None)
    if portfolio.is_limiting:
        thr, rho, mu, s1, s2 = _chain_arrays(chain)
        stride = stride or 1
        sl = slice(None, None, stride)
        x_star = std_normal_quantile(1.0 - q)
        pd_ = _lambda(thr[sl], rho[sl], x_star)
        lgd = _s(mu[sl], s1[sl], s2[sl], x_star, mode)
        ec = pd_ * lgd
        return QuantilePosterior(q=q, portfolio="inf", samples=ec, summary=summarize(ec), stressed_pd=pd_, stressed_lgd=lgd, stride=stride)

    stride = stride or 10
    rows = np.arange(0, chain.n_draws, stride)
    seed = _master_seed(rng)
    values = np.empty(rows.size)
    for i, row in enumerate(rows):
        params = chain.params_at(int(row))
        losses = _run_chunks(_loss_kernel(portfolio, *_raw(params), mode), int(n_draws), _sub_seed(seed, i), threads)
        values[i] = empirical_quantile(losses, q)
    return QuantilePosterior(q=q, portfolio=portfolio.label(), samples=values, summary=summarize(values), stride=stride)


def uncertainty_loading(predictive_q: float, q_posterior_mean: float) -> float:
    """Extra capital for parameter uncertainty (signed)."""
    return float(predictive_q) - float(q_posterior_mean)


# -- report -------------------------------------------------------------------------

@dataclass
class CapitalReport:
    q: float
    s_mode: str
    mle_ec: StressedDecomposition | None
    posterior: QuantilePosterior | None
    predictive_quantile: dict
    uncertainty_loading: float | None
    include_samples: bool = False

    @property
    def posterior_q_samples(self):
        return None if self.posterior is None else self.posterior.samples

    @property
    def posterior_q_summary(self):
        return None if self.posterior is None else self.posterior.summary

    def as_dict(self):
        post = None
        if self.posterior is not None:
            post = {
                "portfolio": self.posterior.portfolio,
                "n_samples": int(self.posterior.samples.size),
                "summary": self.posterior.summary.as_dict() if self.posterior.summary else None,
                "decomposition": {
                    k: (v.as_dict() if v is not None else None) for k, v in self.posterior.decomposition_summary().items()
                } if self.posterior.summary else None,
            }
            if self.include_samples:
                post["samples"] = self.posterior.samples.tolist()
        return {
            "q": self.q,
            "s_mode": self.s_mode,
            "mle_ec": self.mle_ec.as_dict() if self.mle_ec else None,
            "posterior_q": post,
            "predictive_quantile": {k: v.as_dict() for k, v in self.predictive_quantile.items()},
            "uncertainty_loading": self.uncertainty_loading,
        }


def capital_report(
    chain: ChainOutput | None,
    q: float = 0.999,
    portfolio_sizes=(50, 500, 5000, None),
    n_draws: int = 100_000,
    mode: SMode = "exact",
    seed: int = 0,
    mle_params: ModelParams | None = None,
    threads: int = 1,
    include_samples: bool = False,
    stride: int = 1,
) -> CapitalReport:
    """Closed-form MLE capital plus, given a chain, the posterior and predictive quantities.

    The quantile posterior uses the limiting closed form on every
    ``stride``-th chain row; the loading is ``Q^P`` of the limiting portfolio
    minus its posterior mean.
    """
    _check_q(q)
    mle_ec = limiting_quantile(mle_params, q, mode) if mle_params is not None else None
    if chain is None:
        return CapitalReport(q=q, s_mode=mode, mle_ec=mle_ec, posterior=None, predictive_quantile={}, uncertainty_loading=None)
    post = quantile_posterior(chain, q, PortfolioSpec.limiting(), mode, stride=stride)
    pq = {}
    for i, size in enumerate(portfolio_sizes):
        port = PortfolioSpec.limiting() if size is None else PortfolioSpec.homogeneous(size)
        pq[port.label()] = predictive_quantile(chain, port, q, n_draws, _sub_seed(seed, i), mode, threads)
    loading = None
    if "inf" in pq and post.summary is not None:
        loading = uncertainty_loading(pq["inf"].value, post.summary.mean)
    for est in pq.values():
        if est.warning:
            warnings.warn(est.warning, RuntimeWarning, stacklevel=2)
    return CapitalReport(q=q, s_mode=mode, mle_ec=mle_ec, posterior=post, predictive_quantile=pq, uncertainty_loading=loading, include_samples=include_samples)


def format_capital_table(report: CapitalReport) -> str:
    """Stressed PD/LGD/EC block: MLE alongside posterior statistics."""
    head = f"{'item':<6}{'MLE':>10}{'Mean':>10}{'Stdev':>10}{'0.25Q':>10}{'0.5Q':>10}{'0.75Q':>10}{'CV':>10}"
    lines = [head, "-" * len(head)]
    mle = report.mle_ec
    mle_vals = {"PD": mle.stressed_pd, "LGD": mle.stressed_lgd, "EC": mle.ec} if mle else {}
    dec = report.posterior.decomposition_summary() if report.posterior and report.posterior.summary else {}
    fmt = lambda v: f"{v:>10.4g}" if v is not None else f"{'-':>10}"  # noqa: E731
    for item in ("PD", "LGD", "EC"):
        s = dec.get(item)
        cells = [mle_vals.get(item)]
        cells += [s.mean, s.stdev, s.q25, s.q50, s.q75, s.cv] if s else [None] * 6
        lines.append(f"{item:<6}" + "".join(fmt(c) for c in cells))
    if report.predictive_quantile:
        lines.append("")
        lines.append(f"full predictive Q^P_{report.q:g} by portfolio size:")
        for label, est in report.predictive_quantile.items():
            lines.append(f"  J={label:<8}{est.value:>10.4g}  (s.e. {est.std_error:.2g})")
    if report.uncertainty_loading is not None:
        lines.append(f"uncertainty loading (J=inf): {report.uncertainty_loading:.4g}")
    return "\n".join(lines) + "\n"
