"""
Single-factor default/recovery model.

Firm ``j`` defaults when its latent financial condition

    C_j = sqrt(rho) * X + sqrt(1 - rho) * Zc_j

falls below ``Phi^{-1}(p)``; the recovery on a defaulted loan is

    R_j = mu + sigma * sqrt(omega) * X + sigma * sqrt(1 - omega) * Z_j

and the loan loses ``max(1 - R_j, 0)``.  Conditional on the systematic
factor ``X`` the portfolio loss of an infinitely granular portfolio is
``L_inf(X) = Lambda(X) * S(X)``, which is decreasing in ``X``; its
``q``-quantile is therefore ``L_inf(Phi^{-1}(1 - q))``.

All functions here are pure and broadcast over numpy arrays where noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

from .errors import DegenerateInputError, DomainError

SMode = Literal["exact", "linear"]

SIGMA_BOUNDS = (0.01, 1.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def std_normal_cdf(x):
    """Standard normal distribution function (broadcasts)."""
    return special.ndtr(x)


def std_normal_quantile(q):
    """Inverse of :func:`std_normal_cdf`; ``q`` must lie strictly in (0, 1)."""
    qa = np.asarray(q, dtype=float)
    if np.any(~((qa > 0.0) & (qa < 1.0))):
        raise DomainError(f"normal quantile needs q in (0, 1), got {q!r}")
    out = special.ndtri(qa)
    return float(out) if out.ndim == 0 else out


def std_normal_logpdf(x):
    return -0.5 * np.square(x) - 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelParams:
    """The five model parameters ``(p, rho, mu, sigma, omega)``."""

    p: float
    rho: float
    mu: float
    sigma: float
    omega: float

    def __post_init__(self):
        checks = (
            ("p", self.p, 0.0 < self.p < 1.0, "(0, 1)"),
            ("rho", self.rho, 0.0 < self.rho < 1.0, "(0, 1)"),
            ("mu", self.mu, 0.0 < self.mu < 1.0, "(0, 1)"),
            ("sigma", self.sigma, SIGMA_BOUNDS[0] < self.sigma < SIGMA_BOUNDS[1], "(0.01, 1.0)"),
            ("omega", self.omega, 0.0 <= self.omega <= 1.0, "[0, 1]"),
        )
        for name, value, ok, bounds in checks:
            if not (isinstance(value, (int, float, np.floating)) and ok):
                raise DomainError(f"{name}={value!r} outside {bounds}")

    @property
    def sigma1(self) -> float:
        """Systematic recovery loading ``sigma * sqrt(omega)``."""
        return self.sigma * math.sqrt(self.omega)

    @property
    def sigma2(self) -> float:
        """Idiosyncratic recovery volatility ``sigma * sqrt(1 - omega)``."""
        return self.sigma * math.sqrt(1.0 - self.omega)

    @property
    def default_threshold(self) -> float:
        return float(special.ndtri(self.p))

    def as_dict(self) -> dict:
        return {"p": self.p, "rho": self.rho, "mu": self.mu, "sigma": self.sigma, "omega": self.omega}

    @classmethod
    def from_dict(cls, d) -> "ModelParams":
        return cls(**{k: float(d[k]) for k in ("p", "rho", "mu", "sigma", "omega")})


@dataclass(frozen=True)
class PortfolioSpec:
    """Loan weights of a portfolio.

    ``size`` is ``None`` for the limiting (infinitely granular) portfolio.
    ``weights`` is ``None`` for a homogeneous portfolio with ``w_j = 1/J``.
    """

    size: int | None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or w.size == 0:
                raise DomainError("weights must be a non-empty 1-d array")
            if np.any(w < 0) or not np.isfinite(w).all():
                raise DomainError("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise DomainError(f"weights sum to {w.sum()!r}, not 1")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "size", int(w.size))
        elif self.size is not None and (int(self.size) != self.size or self.size < 1):
            raise DomainError(f"portfolio size must be a positive integer, got {self.size!r}")

    @classmethod
    def homogeneous(cls, size: int) -> "PortfolioSpec":
        return cls(size=int(size))

    @classmethod
    def limiting(cls) -> "PortfolioSpec":
        return cls(size=None)

    @classmethod
    def from_weights(cls, weights) -> "PortfolioSpec":
        return cls(size=None, weights=np.asarray(weights, dtype=float))

    @classmethod
    def from_amounts(cls, amounts) -> "PortfolioSpec":
        a = np.asarray(amounts, dtype=float)
        if a.ndim != 1 or a.size == 0 or np.any(~(a > 0.0)) or not np.all(np.isfinite(a)):
            raise DomainError("exposure amounts must be a non-empty vector of positive finite numbers")
        return cls.from_weights(a / a.sum())

    @property
    def is_limiting(self) -> bool:
        return self.size is None

    @property
    def is_homogeneous(self) -> bool:
        return self.weights is None

    def label(self) -> str:
        return "inf" if self.is_limiting else str(self.size)


@dataclass(frozen=True)
class StressedDecomposition:
    """Stressed PD and LGD at the factor value matching quantile level ``q``."""

    stressed_pd: float
    stressed_lgd: float
    ec: float
    q: float

    def as_dict(self) -> dict:
        return {"q": self.q, "stressed_pd": self.stressed_pd, "stressed_lgd": self.stressed_lgd, "ec": self.ec}


# -- vectorised kernels --------------------------------------------------------
# These take raw arrays so that capital/mcmc can evaluate many parameter sets
# at once.  No validation.

def _lambda(threshold, rho, x):
    return special.ndtr((threshold - np.sqrt(rho) * x) / np.sqrt(1.0 - rho))


def _s_linear(mu, sigma1, x):
    return 1.0 - mu - sigma1 * x


def _s_exact(mu, sigma1, sigma2, x):
    m = 1.0 - mu - sigma1 * x
    zc = m / sigma2
    return m * special.ndtr(zc) + sigma2 * np.exp(-0.5 * zc * zc) / _SQRT_2PI


def _s(mu, sigma1, sigma2, x, mode: SMode):
    if mode == "linear":
        return _s_linear(mu, sigma1, x)
    if mode == "exact":
        if np.any(np.asarray(sigma2) <= 0.0):
            raise DegenerateInputError(
                "exact conditional loss needs omega < 1 (sigma*sqrt(1-omega) > 0); use mode='linear'"
            )
        return _s_exact(mu, sigma1, sigma2, x)
    raise DomainError(f"unknown S mode {mode!r}; expected 'exact' or 'linear'")


# -- public operations ---------------------------------------------------------

def conditional_default_prob(params: ModelParams, x):
    """Conditional default probability ``Lambda(x)``; broadcasts over ``x``."""
    return _lambda(params.default_threshold, params.rho, x)


def conditional_expected_loss(params: ModelParams, x, mode: SMode = "exact"):
    """Conditional expected loss per defaulted loan ``S(x) = E[max(1-R, 0) | x]``.

    ``mode='linear'`` returns ``E[1 - R | x] = 1 - mu - sigma*sqrt(omega)*x``,
    which ignores the cap at zero loss.  The exact form is never below it.
    """
    return _s(params.mu, params.sigma1, params.sigma2, x, mode)


def limiting_loss(params: ModelParams, x, mode: SMode = "exact"):
    """Loss rate of the infinitely granular portfolio given factor ``x``."""
    return conditional_default_prob(params, x) * conditional_expected_loss(params, x, mode)


def limiting_quantile(params: ModelParams, q: float, mode: SMode = "exact") -> StressedDecomposition:
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {q!r}")
    x_star = std_normal_quantile(1.0 - q)
    pd_ = float(conditional_default_prob(params, x_star))
    lgd = float(conditional_expected_loss(params, x_star, mode))
    return StressedDecomposition(stressed_pd=pd_, stressed_lgd=lgd, ec=pd_ * lgd, q=q)
