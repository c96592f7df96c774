"""Bayesian inference for spatio-temporal ordinal data on a regular lattice.

A latent Gaussian AR(1) process with fixed ordinal cutoffs links covariates
to ordered outcomes at every lattice cell; intrinsic autoregressive priors
couple the cell-level parameters across space.  Fitting is two-stage: fast,
embarrassingly parallel per-site chains first, then a spatial resampling
pass whose Metropolis acceptance re-imposes the cross-site dependence.  A
direct single-stage sampler is included as a desk-scale correctness oracle,
along with a seasonal-plus-VAR covariate model and posterior-predictive
forecasting.
"""

from .lattice import (
    GridSpec,
    LatticeGraph,
    build_queen_adjacency,
    icar_conditional,
    icar_log_density_unnormalized,
    make_grid,
)
from .model import (
    Cutoffs,
    HyperParams,
    SitePanel,
    SiteParams,
    Stage1Prior,
    ar1_log_density,
    inverse_logit,
    latent_bounds,
    logit,
    ordinal_from_latent,
    stage1_log_prior,
)
from .stage1 import ChainConfig, Reservoir, run_stage1_all, run_stage1_site
from .stage2 import AcceptanceStats, FullModelState, log_acceptance_ratio, run_stage2
from .single_stage import run_single_stage
from .diagnostics import effective_sample_size, summarize_store
from .forecast import ForecastDraws, forecast_drought, rmse, within_one_probability
from .storage import DrawStore, read_draw_store, read_reservoir, write_reservoir

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "LatticeGraph",
    "build_queen_adjacency",
    "icar_conditional",
    "icar_log_density_unnormalized",
    "make_grid",
    "Cutoffs",
    "HyperParams",
    "SitePanel",
    "SiteParams",
    "Stage1Prior",
    "ar1_log_density",
    "inverse_logit",
    "latent_bounds",
    "logit",
    "ordinal_from_latent",
    "stage1_log_prior",
    "ChainConfig",
    "Reservoir",
    "run_stage1_all",
    "run_stage1_site",
    "AcceptanceStats",
    "FullModelState",
    "log_acceptance_ratio",
    "run_stage2",
    "run_single_stage",
    "effective_sample_size",
    "summarize_store",
    "ForecastDraws",
    "forecast_drought",
    "rmse",
    "within_one_probability",
    "DrawStore",
    "read_draw_store",
    "read_reservoir",
    "write_reservoir",
]
