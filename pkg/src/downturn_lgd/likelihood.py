"""
Likelihoods of annual default counts and average recoveries.

Three flavours are provided:

* the likelihood conditional on the latent factor path (used by the sampler),
* the large-portfolio density of observed default *rates* (used by the
  closed-form MLE),
* the exact marginal likelihood with the factor integrated out numerically
  by Gauss-Hermite quadrature (a validation oracle; too slow and too
  inaccurate for routine use when ``J`` is large).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import special

from .errors import DataValidationError, DegenerateInputError, DomainError
from .model import ModelParams, std_normal_logpdf

CountMode = Literal["binomial", "normal"]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ObservationSeries:
    """Annual default and recovery observations.

    ``avg_recovery`` holds NaN for years without defaults.
    """

    years: np.ndarray
    firms: np.ndarray
    defaults: np.ndarray
    avg_recovery: np.ndarray

    def __post_init__(self):
        years = np.asarray(self.years, dtype=np.int64)
        firms = np.asarray(self.firms, dtype=np.int64)
        defaults = np.asarray(self.defaults, dtype=np.int64)
        rec = np.asarray(self.avg_recovery, dtype=float)
        n = years.size
        if not (years.ndim == firms.ndim == defaults.ndim == rec.ndim == 1):
            raise DataValidationError("observation columns must be one-dimensional")
        if not (firms.size == defaults.size == rec.size == n):
            raise DataValidationError("observation columns have different lengths")
        if n < 2:
            raise DataValidationError(f"need at least 2 years of data, got {n}")
        if np.any(np.diff(years) <= 0):
            raise DataValidationError("years must be strictly increasing")
        if np.any(firms < 1):
            raise DataValidationError("firm counts must be positive")
        if np.any(defaults < 0) or np.any(defaults > firms):
            bad = int(years[np.argmax((defaults < 0) | (defaults > firms))])
            raise DataValidationError(f"year {bad}: defaults must lie in [0, firms]")
        has = defaults > 0
        if np.any(has & ~np.isfinite(rec)):
            bad = int(years[np.argmax(has & ~np.isfinite(rec))])
            raise DataValidationError(f"year {bad}: avg_recovery missing although defaults > 0")
        rec = np.where(has, rec, np.nan)
        for name, arr in (("years", years), ("firms", firms), ("defaults", defaults), ("avg_recovery", rec)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_years(self) -> int:
        return int(self.years.size)

    @property
    def default_rate(self) -> np.ndarray:
        return self.defaults / self.firms

    @property
    def has_recovery(self) -> np.ndarray:
        return self.defaults > 0

    def take(self, index) -> "ObservationSeries":
        """Rows at ``index``; years are relabelled 1..n if the order changes."""
        index = np.asarray(index)
        years = self.years[index]
        if np.any(np.diff(years) <= 0):
            years = np.arange(1, years.size + 1)
        return ObservationSeries(years, self.firms[index], self.defaults[index], self.avg_recovery[index])


@dataclass(frozen=True)
class LatentPath:
    """Systematic factor realisations ``x_1..x_T`` for the observed years."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or not np.isfinite(v).all():
            raise DomainError("latent path must be a finite 1-d array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _check_path(path, data: ObservationSeries) -> np.ndarray:
    x = path.values if isinstance(path, LatentPath) else np.asarray(path, dtype=float)
    if x.shape != (data.n_years,):
        raise DomainError(f"latent path has length {x.size}, data has {data.n_years} years")
    return x


# -- default counts ----------------------------------------------------------------

def log_binomial_coefficient(d, n):
    # betaln keeps full relative precision for n up to ~1e15, unlike gammaln differences
    d = np.asarray(d, dtype=float)
    n = np.asarray(n, dtype=float)
    out = -np.log1p(n) - special.betaln(d + 1.0, n - d + 1.0)
    return np.where((d == 0) | (d == n), 0.0, out)


def _binomial_from_arg(d, n, arg, log_coef):
    """Binomial log-pmf with success probability ``Phi(arg)``.

    Works on the probit scale so that tiny and near-one probabilities keep
    full precision.
    """
    with np.errstate(invalid="ignore"):
        hit = np.where(d > 0, d * special.log_ndtr(arg), 0.0)
        miss = np.where(n > d, (n - d) * special.log_ndtr(-arg), 0.0)
    return log_coef + hit + miss


def _normal_count(d, n, lam):
    mean = n * lam
    var = n * lam * (1.0 - lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -0.5 * (_LOG_2PI + np.log(var)) - 0.5 * (d - mean) ** 2 / var
    return np.where(var > 0, out, np.where(d == mean, 0.0, -np.inf))


def log_default_count_likelihood(d: int, J: int, lam: float, mode: CountMode = "binomial") -> float:
    """Log-probability of ``d`` defaults among ``J`` firms given default prob ``lam``.

    Impossible outcomes (``lam == 0`` with ``d > 0`` and the like) give ``-inf``.
    """
    if not 0 <= d <= J:
        raise DomainError(f"need 0 <= d <= J, got d={d}, J={J}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"default probability {lam!r} outside [0, 1]")
    if mode == "binomial":
        return float(log_binomial_coefficient(d, J) + special.xlogy(d, lam) + special.xlog1py(J - d, -lam))
    if mode == "normal":
        return float(_normal_count(float(d), float(J), float(lam)))
    raise DomainError(f"unknown count mode {mode!r}")


# -- average recoveries ---------------------------------------------------------

def _recovery_terms(rbar, d, x, mu, sigma1, sigma2):
    var = sigma2 * sigma2 / d
    return -0.5 * (_LOG_2PI + np.log(var)) - 0.5 * (rbar - mu - sigma1 * x) ** 2 / var


def log_avg_recovery_likelihood(rbar: float, d: int, x: float, params: ModelParams) -> float:
    """Normal log-density of the average recovery of ``d`` defaulted loans.

    Years without defaults have no average recovery; they must be skipped by
    the caller, so ``d < 1`` is rejected here.
    """
    if d < 1:
        raise DomainError("average recovery is undefined for d = 0; skip the year")
    if params.sigma2 <= 0.0:
        raise DegenerateInputError("omega = 1 leaves the average recovery with zero variance")
    return float(_recovery_terms(rbar, d, x, params.mu, params.sigma1, params.sigma2))


# -- conditional joint (given the factor path) ------------------------------------

def conditional_year_terms(params: ModelParams, x, data: ObservationSeries, count_mode: CountMode = "binomial"):
    """Per-year log-likelihood contributions ``(default_terms, recovery_terms)``."""
    x = _check_path(x, data)
    n = data.firms.astype(float)
    d = data.defaults.astype(float)
    arg = (params.default_threshold - math.sqrt(params.rho) * x) / math.sqrt(1.0 - params.rho)
    if count_mode == "binomial":
        dflt = _binomial_from_arg(d, n, arg, log_binomial_coefficient(d, n))
    elif count_mode == "normal":
        dflt = _normal_count(d, n, special.ndtr(arg))
    else:
        raise DomainError(f"unknown count mode {count_mode!r}")
    has = data.has_recovery
    rec = np.zeros_like(x)
    if has.any():
        if params.sigma2 <= 0.0:
            raise DegenerateInputError("omega = 1 leaves the average recovery with zero variance")
        rec[has] = _recovery_terms(
            data.avg_recovery[has], d[has], x[has], params.mu, params.sigma1, params.sigma2
        )
    return dflt, rec


def log_conditional_joint(params: ModelParams, path, data: ObservationSeries, count_mode: CountMode = "binomial") -> float:
    """Log-likelihood of all years given the factor path.

    Years with no defaults contribute only their default-count term.
    """
    dflt, rec = conditional_year_terms(params, path, data, count_mode)
    return float(np.sum(dflt + rec))


# -- default-rate density (large-portfolio approximation) ------------------------

def log_default_rate_density(psi, p: float, rho: float):
    """Log-density of the default rate of an infinitely granular portfolio.

    With ``delta = Phi^{-1}(psi)`` the factor value that produces this rate is
    ``x = (Phi^{-1}(p) - sqrt(1-rho)*delta) / sqrt(rho)``.  Changing variables
    ``psi -> delta -> x``:

        |dx/d delta| = sqrt((1-rho)/rho),   |d delta/d psi| = 1/phi(delta),

    so ``log f(psi) = log phi(x) + 0.5*log((1-rho)/rho) - log phi(delta)``.
    """
    psi_a = np.asarray(psi, dtype=float)
    if np.any(~((psi_a > 0.0) & (psi_a < 1.0))):
        raise DomainError("default rates must lie strictly inside (0, 1)")
    if not (0.0 < rho < 1.0 and 0.0 < p < 1.0):
        raise DomainError(f"need p, rho in (0, 1), got p={p!r}, rho={rho!r}")
    delta = special.ndtri(psi_a)
    x = (special.ndtri(p) - math.sqrt(1.0 - rho) * delta) / math.sqrt(rho)
    out = std_normal_logpdf(x) + 0.5 * math.log((1.0 - rho) / rho) - std_normal_logpdf(delta)
    return float(out) if out.ndim == 0 else out


def log_default_rate_series_likelihood(psi, p: float, rho: float) -> float:
    return float(np.sum(log_default_rate_density(np.asarray(psi, dtype=float), p, rho)))


# -- marginal likelihood by quadrature -------------------------------------------

@lru_cache(maxsize=16)
def _gauss_hermite(nodes: int):
    t, w = np.polynomial.hermite.hermgauss(nodes)
    with np.errstate(divide="ignore"):
        logw = np.log(w) - 0.5 * math.log(math.pi)
    return math.sqrt(2.0) * t, logw


@dataclass(frozen=True)
class MarginalLikelihood:
    value: float
    nodes: int
    doubling_delta: float
    converged: bool
    per_year: np.ndarray = field(repr=False)


def _marginal_per_year(params, data, nodes, count_mode):
    x, logw = _gauss_hermite(nodes)
    n = data.firms.astype(float)[:, None]
    d = data.defaults.astype(float)[:, None]
    arg = (params.default_threshold - math.sqrt(params.rho) * x[None, :]) / math.sqrt(1.0 - params.rho)
    if count_mode == "binomial":
        g = _binomial_from_arg(d, n, arg, log_binomial_coefficient(d, n))
    elif count_mode == "normal":
        g = _normal_count(d, n, special.ndtr(arg))
    else:
        raise DomainError(f"unknown count mode {count_mode!r}")
    has = data.has_recovery
    if has.any():
        if params.sigma2 <= 0.0:
            raise DegenerateInputError("omega = 1 leaves the average recovery with zero variance")
        g[has] += _recovery_terms(
            data.avg_recovery[has, None], d[has], x[None, :], params.mu, params.sigma1, params.sigma2
        )
    return special.logsumexp(g + logw[None, :], axis=1)


def log_marginal_joint_quadrature(
    params: ModelParams,
    data: ObservationSeries,
    nodes: int = 128,
    count_mode: CountMode = "binomial",
) -> MarginalLikelihood:
    """Exact log-likelihood with each year's factor integrated out.

    Each year's integral against the standard normal density is computed by
    ``nodes``-point Gauss-Hermite quadrature and repeated with twice as many
    nodes; a difference above 1e-4 flags the result as not converged (this
    happens when ``J`` is large and the integrand is sharply peaked).
    """
    if nodes < 16:
        raise DomainError("use at least 16 quadrature nodes")
    per_year = _marginal_per_year(params, data, nodes, count_mode)
    fine = _marginal_per_year(params, data, 2 * nodes, count_mode)
    value = float(np.sum(per_year))
    delta = abs(float(np.sum(fine)) - value)
    converged = delta <= 1e-4
    if not converged:
        warnings.warn(
            f"quadrature with {nodes} nodes not converged (node-doubling change {delta:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return MarginalLikelihood(value=value, nodes=nodes, doubling_delta=delta, converged=converged, per_year=per_year)
