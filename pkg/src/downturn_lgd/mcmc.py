"""
Component-wise Metropolis-Hastings for the joint posterior of the model
parameters and the latent factor path.

State vector layout: ``(probit_p, rho, mu, sigma, omega, x_1, ..., x_T)``
where ``probit_p = Phi^{-1}(p)``.  The five parameters carry uniform priors
on bounded intervals and are proposed from Gaussians truncated to those
intervals; the factors carry standard normal priors and untruncated
Gaussian proposals.  Proposal scales adapt during burn-in only.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from scipy import special, stats

from .data_io import _jsonable
from .errors import DataValidationError, DomainError
from .likelihood import ObservationSeries, log_conditional_joint
from .model import SIGMA_BOUNDS, ModelParams, std_normal_logpdf

PARAM_NAMES = ("probit_p", "rho", "mu", "sigma", "omega")
LATENT_SCALE_MAX = 10.0
SCALE_MIN = 1e-6
_BLOCK = 512


@dataclass(frozen=True)
class PriorSpec:
    """Uniform prior bounds for the five parameters (latent factors are N(0, 1))."""

    probit_p: tuple[float, float] = (-10.0, 10.0)
    rho: tuple[float, float] = (0.0, 1.0)
    mu: tuple[float, float] = (0.0, 1.0)
    sigma: tuple[float, float] = SIGMA_BOUNDS
    omega: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        support = {"rho": (0.0, 1.0), "mu": (0.0, 1.0), "sigma": SIGMA_BOUNDS, "omega": (0.0, 1.0)}
        for name in PARAM_NAMES:
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise DomainError(f"prior bounds for {name} must satisfy lower < upper, got ({lo}, {hi})")
            if name in support and (lo < support[name][0] or hi > support[name][1]):
                raise DomainError(f"prior bounds for {name} must lie within the model support {support[name]}")
            object.__setattr__(self, name, (lo, hi))

    @property
    def lower(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in PARAM_NAMES])

    @property
    def upper(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in PARAM_NAMES])

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all((theta > self.lower) & (theta < self.upper)))

    def as_dict(self):
        return {n: list(getattr(self, n)) for n in PARAM_NAMES}


@dataclass(frozen=True)
class SamplerConfig:
    burn_in: int = 20_000
    samples: int = 100_000
    target_acceptance: float = 0.234
    tuning_window: int = 200
    adapt_rate: float = 1.0
    seed: int = 0
    count_mode: Literal["binomial", "normal"] = "binomial"
    ridge_moves: bool = True

    def __post_init__(self):
        if self.burn_in < 0 or self.samples < 1 or self.tuning_window < 1:
            raise DomainError("need burn_in >= 0, samples >= 1, tuning_window >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise DomainError("target acceptance must lie in (0, 1)")
        if self.count_mode not in ("binomial", "normal"):
            raise DomainError(f"unknown count mode {self.count_mode!r}")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ChainOutput:
    """Retained draws, one row per sweep.

    Columns are ``names``: the five sampled parameters, one factor per year,
    and the derived default probability ``p`` last.
    """

    draws: np.ndarray = field(repr=False)
    names: tuple
    years: tuple
    acceptance: dict
    scales: dict
    config: SamplerConfig
    prior: PriorSpec
    tuning_converged: bool
    extra: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def theta_columns(self) -> dict:
        """Model parameters ``p, rho, mu, sigma, omega`` as arrays."""
        return {n: self.column(n) for n in ("p", "rho", "mu", "sigma", "omega")}

    def params_at(self, row: int) -> ModelParams:
        return ModelParams(**{k: float(v[row]) for k, v in self.theta_columns().items()})

    @classmethod
    def from_params(cls, rows, prior: PriorSpec | None = None) -> "ChainOutput":
        """Chain holding the given parameter sets as rows (no factor columns)."""
        rows = [r if isinstance(r, ModelParams) else ModelParams.from_dict(r) for r in rows]
        theta = np.array([[special.ndtri(r.p), r.rho, r.mu, r.sigma, r.omega, r.p] for r in rows], dtype=float)
        return cls(
            draws=theta.reshape(-1, 6),
            names=PARAM_NAMES + ("p",),
            years=(),
            acceptance={},
            scales={},
            config=SamplerConfig(burn_in=0, samples=max(len(rows), 1)),
            prior=prior or PriorSpec(),
            tuning_converged=True,
        )

    def metadata(self) -> dict:
        return {
            "names": list(self.names),
            "years": [int(y) for y in self.years],
            "n_draws": self.n_draws,
            "seed": self.config.seed,
            "config": self.config.as_dict(),
            "prior": self.prior.as_dict(),
            "acceptance": self.acceptance,
            "scales": self.scales,
            "tuning_converged": self.tuning_converged,
            "extra": self.extra,
        }


# -- target density -------------------------------------------------------------

class _Target:
    """Per-year likelihood pieces, without additive constants."""

    def __init__(self, data: ObservationSeries | None, count_mode: str, use_likelihood: bool = True):
        self.active = use_likelihood and data is not None
        self.count_mode = count_mode
        if data is None:
            return
        self.n = data.firms.astype(float)
        self.d = data.defaults.astype(float)
        self.miss = self.n - self.d
        self.has = data.has_recovery
        self.rec_idx = np.flatnonzero(self.has)
        self.r = np.where(self.has, data.avg_recovery, 0.0)
        self.half_log_d = 0.5 * np.log(np.where(self.has, self.d, 1.0))

    def default_terms(self, probit_p, rho, x):
        if not self.active:
            return np.zeros_like(x)
        arg = (probit_p - math.sqrt(rho) * x) / math.sqrt(1.0 - rho)
        if self.count_mode == "binomial":
            return self.d * special.log_ndtr(arg) + self.miss * special.log_ndtr(-arg)
        lam = special.ndtr(arg)
        var = self.n * lam * (1.0 - lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -0.5 * np.log(var) - 0.5 * (self.d - self.n * lam) ** 2 / var
        return np.where(var > 0, out, -np.inf)

    def recovery_terms(self, mu, sigma, omega, x):
        if not self.active:
            return np.zeros_like(x)
        s1 = sigma * math.sqrt(omega)
        s2sq = sigma * sigma * (1.0 - omega)
        e = self.r - mu - s1 * x
        out = self.half_log_d - 0.5 * math.log(s2sq) - 0.5 * self.d * e * e / s2sq
        return np.where(self.has, out, 0.0)


def log_posterior(state, data: ObservationSeries, prior: PriorSpec | None = None, count_mode: str = "binomial") -> float:
    """Unnormalised log posterior of ``(probit_p, rho, mu, sigma, omega, x_1..x_T)``.

    Conditional likelihood plus the standard normal log-prior of each factor;
    the uniform priors only contribute their support.  Out of bounds gives
    ``-inf``.
    """
    prior = prior or PriorSpec()
    state = np.asarray(state, dtype=float)
    if state.shape != (5 + data.n_years,):
        raise DomainError(f"state must have {5 + data.n_years} entries")
    theta, x = state[:5], state[5:]
    if not prior.contains(theta) or not np.isfinite(x).all():
        return -math.inf
    params = ModelParams(p=float(special.ndtr(theta[0])), rho=theta[1], mu=theta[2], sigma=theta[3], omega=theta[4])
    return log_conditional_joint(params, x, data, count_mode) + float(np.sum(std_normal_logpdf(x)))


def init_state(prior: PriorSpec, n_latent: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw inside each parameter's bounds, standard normal factors."""
    lo, hi = prior.lower, prior.upper
    theta = lo + (hi - lo) * rng.random(5)
    # guard the open interval against rounding onto a bound
    theta = np.where(theta <= lo, np.nextafter(lo, hi), theta)
    return np.concatenate([theta, rng.standard_normal(n_latent)])


# -- proposal helpers (shared by the LGD sampler and the generic driver) ----------

def truncated_normal_mass(center, scale, lower, upper):
    return special.ndtr((upper - center) / scale) - special.ndtr((lower - center) / scale)


def propose_truncated(center: float, scale: float, lower: float, upper: float, u: float):
    """Inverse-cdf draw from N(center, scale^2) truncated to (lower, upper).

    Returns ``(proposal, log_mass_at_center)``.
    """
    lo = special.ndtr((lower - center) / scale)
    hi = special.ndtr((upper - center) / scale)
    prop = center + scale * special.ndtri(lo + u * (hi - lo))
    return float(prop), math.log(hi - lo)


def hastings_log_correction(current: float, proposal: float, scale: float, lower: float, upper: float) -> float:
    """``log q(current | proposal) - log q(proposal | current)`` for truncated proposals.

    The Gaussian kernels cancel, leaving ``log Z(current) - log Z(proposal)``
    with ``Z(c)`` the in-bounds mass of N(c, scale^2).
    """
    return math.log(truncated_normal_mass(current, scale, lower, upper)) - math.log(
        truncated_normal_mass(proposal, scale, lower, upper)
    )


def adapt_scale(scale, acceptance, target: float = 0.234, rate: float = 1.0, lower=SCALE_MIN, upper=np.inf):
    """``s * exp(rate * (acceptance - target))`` clamped to ``[lower, upper]``."""
    return np.clip(np.asarray(scale) * np.exp(rate * (np.asarray(acceptance) - target)), lower, upper)


# -- the LGD posterior sampler ----------------------------------------------------

class _Sampler:
    def __init__(self, data, prior, config, initial_state, frozen, use_likelihood):
        self.data = data
        self.prior = prior
        self.config = config
        self.T = data.n_years if data is not None else len(initial_state) - 5
        self.target = _Target(data, config.count_mode, use_likelihood)
        self.lo, self.hi = prior.lower, prior.upper
        self.rng = np.random.default_rng(config.seed)
        if initial_state is None:
            state = init_state(prior, self.T, self.rng)
        else:
            state = np.array(initial_state, dtype=float)
            if state.shape != (5 + self.T,):
                raise DomainError(f"initial state must have {5 + self.T} entries")
            if not prior.contains(state[:5]):
                raise DomainError("initial state outside prior bounds")
        self.theta = state[:5].copy()
        self.x = state[5:].copy()
        self.free = np.array([n not in frozen for n in PARAM_NAMES])
        self.x_free = "x" not in frozen
        # start small: the adaptation grows a scale faster (x2.15 per window) than it shrinks it (x0.79)
        self.scales = np.concatenate([1e-3 * (self.hi - self.lo), np.full(self.T, 0.05)])
        self.scale_cap = np.concatenate([self.hi - self.lo, np.full(self.T, LATENT_SCALE_MAX)])
        self.n_ridge = 2 if (config.ridge_moves and self.x_free and self.free[:3].all()) else 0
        self.ridge_scales = np.array([0.005, 0.005])[: self.n_ridge]
        self._refresh()

    def _refresh(self):
        a, rho, mu, sigma, omega = self.theta
        self.dterm = self.target.default_terms(a, rho, self.x)
        self.rterm = self.target.recovery_terms(mu, sigma, omega, self.x)

    def state(self):
        return np.concatenate([self.theta, self.x])

    def run(self, n_sweeps, adapt, keep):
        cfg = self.config
        T = self.T
        n_comp = 5 + T
        accepted = np.zeros(n_comp)
        ridge_acc = np.zeros(self.n_ridge)
        window_acc = np.zeros(n_comp)
        window_ridge = np.zeros(self.n_ridge)
        out = np.empty((n_sweeps, 5 + T)) if keep else None
        done = 0
        while done < n_sweeps:
            m = min(_BLOCK, n_sweeps - done)
            u_theta = self.rng.random((m, 5, 2))
            z_x = self.rng.standard_normal((m, T))
            u_x = self.rng.random((m, T))
            ridge = self.rng.random((m, self.n_ridge, 2)) if self.n_ridge else None
            for i in range(m):
                acc = self._sweep_theta(u_theta[i])
                window_acc[:5] += acc
                if self.x_free:
                    window_acc[5:] += self._sweep_latent(z_x[i], u_x[i])
                if self.n_ridge:
                    window_ridge += self._ridge(ridge[i])
                if keep:
                    out[done + i, :5] = self.theta
                    out[done + i, 5:] = self.x
                if adapt and (done + i + 1) % cfg.tuning_window == 0:
                    rate = window_acc / cfg.tuning_window
                    self.scales = adapt_scale(self.scales, rate, cfg.target_acceptance, cfg.adapt_rate, SCALE_MIN, self.scale_cap)
                    if self.n_ridge:
                        self.ridge_scales = adapt_scale(
                            self.ridge_scales, window_ridge / cfg.tuning_window, cfg.target_acceptance, cfg.adapt_rate, SCALE_MIN, 1.0
                        )
                    accepted += window_acc
                    ridge_acc += window_ridge
                    window_acc[:] = 0.0
                    window_ridge[:] = 0.0
            done += m
        accepted += window_acc
        ridge_acc += window_ridge
        return out, accepted / max(n_sweeps, 1), ridge_acc / max(n_sweeps, 1)

    def _sweep_theta(self, u):
        acc = np.zeros(5)
        tg = self.target
        for k in range(5):
            if not self.free[k]:
                continue
            cur = self.theta[k]
            s = self.scales[k]
            lo, hi = self.lo[k], self.hi[k]
            prop, log_z_cur = propose_truncated(cur, s, lo, hi, u[k, 0])
            if not lo < prop < hi:
                continue
            log_z_prop = math.log(truncated_normal_mass(prop, s, lo, hi))
            trial = self.theta.copy()
            trial[k] = prop
            if k < 2:
                new = tg.default_terms(trial[0], trial[1], self.x)
                log_alpha = np.sum(new) - np.sum(self.dterm)
            else:
                new = tg.recovery_terms(trial[2], trial[3], trial[4], self.x)
                log_alpha = np.sum(new) - np.sum(self.rterm)
            log_alpha += log_z_cur - log_z_prop
            if math.log(u[k, 1]) < log_alpha:
                self.theta[k] = prop
                if k < 2:
                    self.dterm = new
                else:
                    self.rterm = new
                acc[k] = 1.0
        return acc

    def _sweep_latent(self, z, u):
        # Each x_t enters only its own year's terms, so updating all of them at
        # once is the same kernel as a sequential scan over t.
        a, rho, mu, sigma, omega = self.theta
        tg = self.target
        prop = self.x + self.scales[5:] * z
        new_d = tg.default_terms(a, rho, prop)
        new_r = tg.recovery_terms(mu, sigma, omega, prop)
        log_alpha = (new_d + new_r - 0.5 * prop * prop) - (self.dterm + self.rterm - 0.5 * self.x * self.x)
        with np.errstate(invalid="ignore"):
            ok = np.log(u) < log_alpha
        self.x = np.where(ok, prop, self.x)
        self.dterm = np.where(ok, new_d, self.dterm)
        self.rterm = np.where(ok, new_r, self.rterm)
        return ok.astype(float)

    def _ridge(self, u):
        """Joint moves along directions the likelihood cannot see.

        Both moves change parameters and every factor together so that each
        year's conditional default probability and conditional mean recovery
        stay fixed; the likelihood is then unchanged and only the factor prior,
        the bounds and the Jacobian enter the acceptance ratio.

        0. shift:  probit_p += e,  x += e/sqrt(rho),  mu -= sigma1*e/sqrt(rho)
        1. scale:  rho -> rho + e with probit default rates delta_t held fixed,
                   x -> A + B*x,  sigma1 -> sigma1/B,  mu -> mu - sigma1*A/B,
                   sigma2 unchanged.
        """
        acc = np.zeros(self.n_ridge)
        a, rho, mu, sigma, omega = self.theta
        s1 = sigma * math.sqrt(omega)
        s2 = sigma * math.sqrt(1.0 - omega)
        x = self.x

        e = self.ridge_scales[0] * special.ndtri(u[0, 0])
        sr = math.sqrt(rho)
        shift = e / sr
        new = np.array([a + e, rho, mu - s1 * shift, sigma, omega])
        x_new = x + shift
        if self.prior.contains(new):
            log_alpha = -0.5 * (np.dot(x_new, x_new) - np.dot(x, x))
            if math.log(u[0, 1]) < log_alpha:
                self.theta, self.x = new, x_new
                acc[0] = 1.0

        a, rho, mu, sigma, omega = self.theta
        s1 = sigma * math.sqrt(omega)
        x = self.x
        e = self.ridge_scales[1] * special.ndtri(u[1, 0])
        rho_new = rho + e
        if 0.0 < rho_new < 1.0 and omega > 0.0:
            c = math.sqrt((1.0 - rho_new) / (1.0 - rho))
            b = c * math.sqrt(rho / rho_new)
            shift = a * (1.0 - c) / math.sqrt(rho_new)
            s1_new = s1 / b
            sigma_new = math.sqrt(s1_new * s1_new + s2 * s2)
            omega_new = s1_new * s1_new / (sigma_new * sigma_new)
            new = np.array([a, rho_new, mu - s1_new * shift, sigma_new, omega_new])
            if self.prior.contains(new):
                x_new = shift + b * x
                # Jacobian: T factors scale by b, (mu, sigma1) map has det 1/b,
                # and (sigma, omega) <-> (sigma1, sigma2) has |J| = sigma/(2 sqrt(omega(1-omega))).
                log_jac = (self.T - 1) * math.log(b) + (
                    math.log(sigma) - 0.5 * math.log(omega * (1.0 - omega))
                ) - (math.log(sigma_new) - 0.5 * math.log(omega_new * (1.0 - omega_new)))
                log_alpha = -0.5 * (np.dot(x_new, x_new) - np.dot(x, x)) + log_jac
                if math.log(u[1, 1]) < log_alpha:
                    self.theta, self.x = new, x_new
                    acc[1] = 1.0
        if acc.any():
            self._refresh()
        return acc


def _chain_names(years):
    return PARAM_NAMES + tuple(f"x_{y}" for y in years) + ("p",)


def tune_proposals(data: ObservationSeries, prior: PriorSpec, config: SamplerConfig, initial_state=None, frozen=(), use_likelihood=True):
    """Run the burn-in phase and return ``(sampler_state, scales, acceptance)``.

    Every ``tuning_window`` sweeps each component's scale is multiplied by
    ``exp(adapt_rate * (acceptance - target))``; scales are frozen afterwards.
    """
    sampler = _Sampler(data, prior, config, initial_state, frozen, use_likelihood)
    _, acc, _ = sampler.run(config.burn_in, adapt=True, keep=False)
    return sampler.state(), sampler.scales.copy(), acc


def run_chain(
    data: ObservationSeries,
    prior: PriorSpec | None = None,
    config: SamplerConfig | None = None,
    *,
    initial_state=None,
    frozen=(),
    use_likelihood: bool = True,
) -> ChainOutput:
    """Sample the joint posterior of parameters and factor path.

    Each sweep updates ``probit_p, rho, mu, sigma, omega`` in that order and
    then every factor; with ``config.ridge_moves`` two joint moves follow
    (see :meth:`_Sampler._ridge`).  ``frozen`` names components (parameter
    names or ``"x"`` for the whole path) held at their initial values.
    ``use_likelihood=False`` samples the prior.
    """
    prior = prior or PriorSpec()
    config = config or SamplerConfig()
    if data is None and initial_state is None:
        raise DomainError("need data or an initial state to size the chain")
    frozen = tuple(frozen)
    unknown = set(frozen) - set(PARAM_NAMES) - {"x"}
    if unknown:
        raise DomainError(f"unknown components to freeze: {sorted(unknown)}")
    sampler = _Sampler(data, prior, config, initial_state, frozen, use_likelihood)
    _, burn_acc, _ = sampler.run(config.burn_in, adapt=True, keep=False)
    draws, acc, ridge_acc = sampler.run(config.samples, adapt=False, keep=True)

    T = sampler.T
    years = tuple(int(y) for y in data.years) if data is not None else tuple(range(1, T + 1))
    names = _chain_names(years)
    draws = np.column_stack([draws, special.ndtr(draws[:, 0])])
    draws.setflags(write=False)
    free = [n for n, f in zip(PARAM_NAMES, sampler.free) if f]
    if sampler.x_free:
        free += list(names[5 : 5 + T])
    acceptance = {n: float(a) for n, a in zip(names[: 5 + T], acc) if n in free}
    for i, a in enumerate(ridge_acc):
        acceptance[f"ridge_{('shift', 'scale')[i]}"] = float(a)
    scales = {n: float(s) for n, s in zip(names[: 5 + T], sampler.scales)}
    for i, s in enumerate(sampler.ridge_scales):
        scales[f"ridge_{('shift', 'scale')[i]}"] = float(s)
    converged = all(0.1 <= a <= 0.5 for a in acceptance.values())
    return ChainOutput(
        draws=draws,
        names=names,
        years=years,
        acceptance=acceptance,
        scales=scales,
        config=config,
        prior=prior,
        tuning_converged=converged,
        extra={"frozen": list(frozen), "use_likelihood": use_likelihood},
    )


# -- generic driver (used for toy targets) --------------------------------------------

def componentwise_metropolis(
    log_density: Callable[[np.ndarray], float],
    initial,
    lower,
    upper,
    scales,
    n_samples: int,
    rng: np.random.Generator,
    burn_in: int = 0,
    tuning_window: int = 200,
    target_acceptance: float = 0.234,
):
    """Single-site Metropolis-Hastings on an arbitrary density.

    Components with infinite bounds get plain Gaussian proposals.  Returns
    ``(draws, acceptance_rates, scales)``.
    """
    x = np.array(initial, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), x.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), x.shape)
    scales = np.array(scales, dtype=float)
    cap = np.where(np.isfinite(upper - lower), upper - lower, LATENT_SCALE_MAX)
    cur = log_density(x)
    out = np.empty((n_samples, x.size))
    acc = np.zeros(x.size)
    window = np.zeros(x.size)
    for it in range(burn_in + n_samples):
        u = rng.random((x.size, 2))
        for k in range(x.size):
            prop, log_z = propose_truncated(x[k], scales[k], lower[k], upper[k], u[k, 0])
            if not lower[k] < prop < upper[k]:
                continue
            trial = x.copy()
            trial[k] = prop
            new = log_density(trial)
            log_alpha = new - cur + log_z - math.log(truncated_normal_mass(prop, scales[k], lower[k], upper[k]))
            if math.log(u[k, 1]) < log_alpha:
                x, cur = trial, new
                window[k] += 1
        if it < burn_in:
            if (it + 1) % tuning_window == 0:
                scales = adapt_scale(scales, window / tuning_window, target_acceptance, 1.0, SCALE_MIN, cap)
                window[:] = 0
            if it + 1 == burn_in:
                window[:] = 0
        else:
            out[it - burn_in] = x
    acc = window / n_samples
    return out, acc, scales


# -- summaries ----------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnSummary:
    mean: float
    mode: float
    stdev: float
    skewness: float | None
    kurtosis: float | None
    cv: float | None
    q25: float
    q50: float
    q75: float

    def as_dict(self):
        return asdict(self)


def histogram_mode(values) -> float:
    """Midpoint of the tallest Freedman-Diaconis histogram bin."""
    v = np.asarray(values, dtype=float)
    if v.min() == v.max():
        return float(v[0])
    iqr = np.subtract(*np.percentile(v, [75, 25]))
    width = 2.0 * iqr / np.cbrt(v.size)
    span = v.max() - v.min()
    n_bins = 1 if width <= 0 else int(min(max(math.ceil(span / width), 1), 100_000))
    counts, edges = np.histogram(v, bins=n_bins)
    i = int(np.argmax(counts))
    return float(0.5 * (edges[i] + edges[i + 1]))


def summarize(values) -> ColumnSummary:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("cannot summarise an empty sample")
    mean = float(np.mean(v))
    sd = float(np.std(v))
    q25, q50, q75 = (float(q) for q in np.quantile(v, [0.25, 0.5, 0.75]))
    if v.min() == v.max():
        return ColumnSummary(float(v[0]), float(v[0]), 0.0, None, None, 0.0, q25, q50, q75)
    return ColumnSummary(
        mean=mean,
        mode=histogram_mode(v),
        stdev=sd,
        skewness=float(stats.skew(v)),
        kurtosis=float(stats.kurtosis(v, fisher=False)),
        cv=sd / mean if mean != 0.0 else None,
        q25=q25,
        q50=q50,
        q75=q75,
    )


def posterior_summary(chain: ChainOutput, columns=None) -> dict:
    """Per-column posterior statistics (kurtosis is the raw fourth moment, 3 for a normal)."""
    columns = columns or chain.names
    return {name: summarize(chain.column(name)) for name in columns}


# -- persistence ----------------------------------------------------------------------

def save_chain(chain: ChainOutput, path) -> tuple[Path, Path]:
    """Write draws as CSV and metadata as ``<stem>.json`` next to it."""
    path = Path(path)
    meta_path = path.with_suffix(".json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(chain.names) + "\n")
        np.savetxt(fh, chain.draws, delimiter=",", fmt="%.17g")
    meta_path.write_text(json.dumps(_jsonable(chain.metadata()), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path, meta_path


def load_chain(path) -> ChainOutput:
    path = Path(path)
    meta_path = path.with_suffix(".json")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        draws = np.loadtxt(fh, delimiter=",", ndmin=2)
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    if "p" not in header or any(n not in header for n in PARAM_NAMES):
        raise DataValidationError(f"{path}: chain header lacks parameter columns")
    if draws.shape[1] != len(header):
        raise DataValidationError(f"{path}: {draws.shape[1]} columns but {len(header)} names")
    cfg = SamplerConfig(**meta["config"]) if "config" in meta else SamplerConfig(burn_in=0, samples=max(len(draws), 1))
    prior = PriorSpec(**{k: tuple(v) for k, v in meta["prior"].items()}) if "prior" in meta else PriorSpec()
    draws.setflags(write=False)
    return ChainOutput(
        draws=draws,
        names=tuple(header),
        years=tuple(meta.get("years", ())),
        acceptance=meta.get("acceptance", {}),
        scales=meta.get("scales", {}),
        config=cfg,
        prior=prior,
        tuning_converged=meta.get("tuning_converged", True),
        extra=meta.get("extra", {}),
    )
