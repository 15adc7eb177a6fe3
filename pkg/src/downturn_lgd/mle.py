"""
Two-stage closed-form maximum likelihood.

Stage one fits ``(p, rho)`` to the probit-transformed default rates of a
large portfolio and maps each year's rate back to a factor estimate.  Stage
two regresses average recoveries on those factor estimates with weights
``d_t``; re-parameterising ``sigma1 = sigma*sqrt(omega)``,
``sigma2 = sigma*sqrt(1-omega)`` turns the recovery likelihood into a
weighted least-squares problem with an explicit solution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DegenerateInputError, DomainError
from .likelihood import LatentPath, ObservationSeries
from .model import SIGMA_BOUNDS, ModelParams


@dataclass(frozen=True)
class DefaultFit:
    p: float
    rho: float
    delta: np.ndarray = field(repr=False)
    delta_mean: float
    delta_var: float
    degenerate: bool = False


@dataclass(frozen=True)
class RecoveryFit:
    mu: float
    sigma: float
    omega: float
    sigma1: float
    sigma2: float
    degenerate: bool = False


@dataclass(frozen=True)
class MleFit:
    params: ModelParams
    path: LatentPath
    default: DefaultFit
    recovery: RecoveryFit
    notes: tuple = ()

    def as_dict(self, years=None) -> dict:
        out = {
            "params": self.params.as_dict(),
            "path": self.path.values.tolist(),
            "intermediates": {
                "delta": self.default.delta.tolist(),
                "delta_mean": self.default.delta_mean,
                "delta_var": self.default.delta_var,
                "sigma1": self.recovery.sigma1,
                "sigma2": self.recovery.sigma2,
            },
            "degenerate": self.default.degenerate or self.recovery.degenerate,
            "notes": list(self.notes),
        }
        if years is not None:
            out["years"] = [int(y) for y in years]
        return out


def fit_default_mle(psi, years=None) -> DefaultFit:
    """MLE of ``(p, rho)`` from observed default rates.

    Uses the population (divide-by-T) variance of ``delta_t = Phi^{-1}(psi_t)``:

        rho = var / (1 + var),   p = Phi(mean / sqrt(1 + var))

    A constant series returns ``rho = 0`` flagged as degenerate.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 1 or psi.size < 2:
        raise DomainError("need at least two default rates")
    bad = ~((psi > 0.0) & (psi < 1.0))
    if bad.any():
        i = int(np.argmax(bad))
        label = years[i] if years is not None else i
        raise DomainError(
            f"default rate {float(psi[i])!r} in year {label} is not strictly inside (0, 1); "
            "the rate-based MLE is undefined (the MCMC fit handles such years)"
        )
    delta = special.ndtri(psi)
    mean = float(np.mean(delta))
    var = float(np.mean((delta - mean) ** 2))
    rho = var / (1.0 + var)
    p = float(special.ndtr(mean / math.sqrt(1.0 + var)))
    delta.setflags(write=False)
    return DefaultFit(p=p, rho=rho, delta=delta, delta_mean=mean, delta_var=var, degenerate=var == 0.0)


def estimate_latent_path(psi, p: float, rho: float) -> LatentPath:
    """Factor value that reproduces each year's default rate exactly."""
    if not 0.0 < rho < 1.0:
        raise DegenerateInputError(f"factor path needs rho in (0, 1), got {rho!r}")
    psi = np.asarray(psi, dtype=float)
    if np.any(~((psi > 0.0) & (psi < 1.0))):
        raise DomainError("default rates must lie strictly inside (0, 1)")
    delta = special.ndtri(psi)
    return LatentPath((special.ndtri(p) - math.sqrt(1.0 - rho) * delta) / math.sqrt(rho))


def _wls_line(r, d, x):
    """Solve the d-weighted normal equations for intercept and slope."""
    sw = d.sum()
    sx = (d * x).sum()
    sxx = (d * x * x).sum()
    sr = (d * r).sum()
    sxr = (d * x * r).sum()
    det = sxx * sw - sx * sx
    if det <= 1e-12 * sxx * sw:
        raise DegenerateInputError("all factor values are equal; recovery regression is singular")
    slope = (sxr * sw - sr * sx) / det
    intercept = (sr * sxx - sx * sxr) / det
    return intercept, slope


def quotient_recovery_estimates(rbar, d, x):
    """Recovery MLEs evaluated with the literal quotient formulas.

    The intercept divides by ``sum(d*x)``, so this is undefined for balanced
    factor paths; :func:`fit_recovery_mle` avoids that by solving the normal
    equations instead.  Kept for cross-checking.
    """
    r, d, x = (np.asarray(a, dtype=float) for a in (rbar, d, x))
    sw, sx, sxx = d.sum(), (d * x).sum(), (d * x * x).sum()
    sr, sxr = (d * r).sum(), (d * x * r).sum()
    s1 = (sxr * sw - sr * sx) / (sxx * sw - sx * sx)
    mu = (sxr - sxx * s1) / sx
    s2 = math.sqrt(np.sum(d * (r - mu - s1 * x) ** 2) / r.size)
    return mu, s1, s2


def fit_recovery_mle(rbar, d, path) -> RecoveryFit:
    """Recovery MLEs ``(mu, sigma, omega)`` given factor values.

    Years with ``d == 0`` are dropped.  ``sigma1`` keeps its sign; a negative
    value means recoveries fall when the factor improves, which the model
    cannot represent, and a warning is issued.
    """
    x = path.values if isinstance(path, LatentPath) else np.asarray(path, dtype=float)
    r = np.asarray(rbar, dtype=float)
    d = np.asarray(d, dtype=float)
    if not (r.shape == d.shape == x.shape):
        raise DomainError("recoveries, default counts and factor path differ in length")
    keep = d > 0
    r, d, x = r[keep], d[keep], x[keep]
    if r.size < 3:
        raise DegenerateInputError("need at least 3 years with defaults to fit recoveries")
    if not np.isfinite(r).all():
        raise DomainError("average recoveries must be finite where defaults occurred")

    mu, s1 = _wls_line(r, d, x)
    resid = r - mu - s1 * x
    s2 = math.sqrt(np.sum(d * resid * resid) / r.size)
    degenerate = s2 <= 1e-10 * max(abs(mu), abs(s1), 1e-300)
    if degenerate:
        s2 = 0.0
    if s1 < 0:
        warnings.warn(
            f"negative systematic recovery loading ({s1:.4g}); sign is dropped in omega",
            RuntimeWarning,
            stacklevel=2,
        )
    total = s1 * s1 + s2 * s2
    omega = 1.0 if degenerate else s1 * s1 / total
    return RecoveryFit(mu=mu, sigma=math.sqrt(total), omega=omega, sigma1=s1, sigma2=s2, degenerate=degenerate)


def fit_mle(data: ObservationSeries) -> MleFit:
    """Closed-form fit of all five parameters plus the factor path.

    Raises :class:`DegenerateInputError` (with the partial fit attached) when
    the default rates are constant or the estimates leave the parameter
    support.
    """
    psi = data.default_rate
    dfit = fit_default_mle(psi, years=data.years)
    if dfit.degenerate:
        raise DegenerateInputError(
            "default rates are constant: rho = 0 and the factor path cannot be estimated",
            partial=dfit,
        )
    path = estimate_latent_path(psi, dfit.p, dfit.rho)
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rfit = fit_recovery_mle(data.avg_recovery, data.defaults, path)
    for w in caught:
        notes.append(str(w.message))
        warnings.warn(w.message, w.category, stacklevel=2)
    if rfit.degenerate:
        notes.append("perfect recovery fit: omega = 1 (exact S-mode and MCMC unusable)")
    if not SIGMA_BOUNDS[0] < rfit.sigma < SIGMA_BOUNDS[1] or not 0.0 < rfit.mu < 1.0:
        raise DegenerateInputError(
            f"recovery estimates outside support (mu={rfit.mu:.4g}, sigma={rfit.sigma:.4g})",
            partial=(dfit, rfit),
        )
    params = ModelParams(p=dfit.p, rho=dfit.rho, mu=rfit.mu, sigma=rfit.sigma, omega=rfit.omega)
    return MleFit(params=params, path=path, default=dfit, recovery=rfit, notes=tuple(notes))
