"""One-factor default and recovery model for downturn LGD and economic capital."""

from .capital import (
    CapitalReport,
    QuantileEstimate,
    QuantilePosterior,
    capital_report,
    draw_portfolio,
    empirical_quantile,
    predictive_quantile,
    quantile_given_params,
    quantile_posterior,
    simulate_losses,
    uncertainty_loading,
)
from .data_io import generate_synthetic, load_observations, write_observations
from .errors import DataValidationError, DegenerateInputError, DomainError, LgdError
from .likelihood import LatentPath, ObservationSeries, log_marginal_joint_quadrature
from .mcmc import ChainOutput, PriorSpec, SamplerConfig, load_chain, posterior_summary, run_chain, save_chain
from .mle import fit_default_mle, fit_mle, fit_recovery_mle
from .model import (
    ModelParams,
    PortfolioSpec,
    conditional_default_prob,
    conditional_expected_loss,
    limiting_loss,
    limiting_quantile,
)

__version__ = "0.1.0"

__all__ = [
    "CapitalReport", "ChainOutput", "DataValidationError", "DegenerateInputError", "DomainError",
    "LatentPath", "LgdError", "ModelParams", "ObservationSeries", "PortfolioSpec", "PriorSpec",
    "QuantileEstimate", "QuantilePosterior", "SamplerConfig", "capital_report", "conditional_default_prob",
    "conditional_expected_loss", "draw_portfolio", "empirical_quantile", "fit_default_mle", "fit_mle",
    "fit_recovery_mle", "generate_synthetic", "limiting_loss", "limiting_quantile", "load_chain",
    "load_observations", "log_marginal_joint_quadrature", "posterior_summary", "predictive_quantile",
    "quantile_given_params", "quantile_posterior", "run_chain", "save_chain", "simulate_losses",
    "uncertainty_loading", "write_observations",
]
