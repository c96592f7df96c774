"""Posterior-predictive simulation of future ordinal levels and its metrics.

For each retained joint posterior draw, the covariates are simulated forward
through the seasonal-plus-VAR model, the latent series is rolled forward
from its last sampled value through the AR(1) process, and the ordinal link
maps the path to levels.  The outcome and covariate posteriors factorize, so
draws are paired by index; counts must match.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariates import FourierFit
from .errors import DimensionMismatchError
from .model import Cutoffs, ordinal_from_latent
from .storage import DrawStore

__all__ = [
    "ForecastDraws",
    "forecast_drought",
    "within_one_probability",
    "rmse",
    "posterior_median_level",
    "posterior_median_levels",
]


@dataclass
class ForecastDraws:
    """Posterior-predictive paths: levels and latent values, per draw/site/step."""

    y: np.ndarray  # (M, I, L) int
    z: np.ndarray  # (M, I, L)
    horizon: int

    def validate(self, cutoffs: Cutoffs) -> None:
        if np.any(self.y != ordinal_from_latent(self.z, cutoffs)):
            raise ValueError("levels inconsistent with latent values")


def forecast_drought(
    drought_store: DrawStore,
    var_delta: np.ndarray,
    var_sigma: np.ndarray,
    fourier_fits: list[FourierFit],
    last_detrended: np.ndarray,
    last_x_row: np.ndarray,
    t_end: int,
    horizon: int,
    cutoffs: Cutoffs,
    rng: np.random.Generator,
) -> ForecastDraws:
    """Simulate levels for weeks t_end+1 .. t_end+horizon under each draw.

    Parameters
    ----------
    drought_store : DrawStore
        Outcome-model draws; must retain latent series (``z`` not None).
    var_delta, var_sigma : ndarray
        Covariate-model draws, shapes (M, I, P) and (M, I, P, P), paired
        with the outcome draws by index.
    fourier_fits : list of FourierFit
        Per-site seasonal fits, aligned with ``drought_store.site_ids``.
    last_detrended : ndarray (I, P)
        Detrended covariate vectors at week ``t_end``.
    last_x_row : ndarray (I, P+1)
        Design rows (intercept plus standardized covariates) at ``t_end``.
    """
    if horizon < 1:
        raise DimensionMismatchError("horizon must be >= 1")
    if drought_store.z is None:
        raise DimensionMismatchError("forecasting needs stored latent series")
    M = drought_store.n_draws
    if var_delta.shape[0] != M:
        raise DimensionMismatchError(
            f"outcome draws ({M}) and covariate draws ({var_delta.shape[0]}) differ"
        )
    I = drought_store.n_sites
    n_series = var_delta.shape[2]
    if last_detrended.shape != (I, n_series) or last_x_row.shape[0] != I:
        raise DimensionMismatchError("per-site forecast inputs misaligned")

    # deterministic trend extension past the end of the sample
    t_future = np.arange(t_end + 1, t_end + horizon + 1)
    trend = np.stack([fit.trend(t_future) for fit in fourier_fits])  # (I, L, P)

    expit = lambda g: 1.0 / (1.0 + np.exp(-g))
    y_out = np.empty((M, I, horizon), dtype=np.int64)
    z_out = np.empty((M, I, horizon))
    for m in range(M):
        chol = np.linalg.cholesky(var_sigma[m])  # (I, P, P)
        eps_x = rng.standard_normal((horizon, I, n_series))
        eps_z = rng.standard_normal((horizon, I))
        rho = expit(drought_store.gamma[m])
        sd = np.sqrt(drought_store.sigma2[m])
        beta = drought_store.beta[m]  # (I, P+1)

        x_prev = last_detrended
        z_prev = drought_store.z[m, :, -1]
        mu_prev = np.einsum("ij,ij->i", last_x_row, beta)
        for h in range(horizon):
            x_prev = var_delta[m] * x_prev + np.einsum(
                "ijk,ik->ij", chol, eps_x[h]
            )
            x_row = np.hstack([np.ones((I, 1)), trend[:, h, :] + x_prev])
            mu = np.einsum("ij,ij->i", x_row, beta)
            z_now = mu + rho * (z_prev - mu_prev) + sd * eps_z[h]
            z_out[m, :, h] = z_now
            z_prev, mu_prev = z_now, mu
        y_out[m] = ordinal_from_latent(z_out[m], cutoffs)
    return ForecastDraws(y=y_out, z=z_out, horizon=horizon)


def within_one_probability(
    draws: ForecastDraws, holdout: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of draws within one level of the observed holdout.

    Returns the (I, L) per-site matrix and its spatial mean per horizon.
    """
    holdout = np.asarray(holdout)
    if holdout.shape != draws.y.shape[1:]:
        raise DimensionMismatchError(
            f"holdout shape {holdout.shape} does not match draws {draws.y.shape[1:]}"
        )
    hits = np.abs(draws.y - holdout[None, :, :]) <= 1
    per_site = hits.mean(axis=0)
    return per_site, per_site.mean(axis=0)


def rmse(point_forecast: np.ndarray, holdout: np.ndarray) -> np.ndarray:
    """Root mean squared error over sites, one value per horizon step."""
    point_forecast = np.asarray(point_forecast, dtype=float)
    holdout = np.asarray(holdout, dtype=float)
    if point_forecast.shape != holdout.shape:
        raise DimensionMismatchError(
            f"forecast shape {point_forecast.shape} != holdout {holdout.shape}"
        )
    return np.sqrt(np.mean((point_forecast - holdout) ** 2, axis=0))


def posterior_median_level(draws: ForecastDraws, site: int, horizon: int) -> int:
    """Lower-median ordinal level at one site/horizon (ties break downward)."""
    y = draws.y[:, site, horizon]
    if y.size == 0:
        raise ValueError("no forecast draws")
    return int(np.sort(y)[(y.size - 1) // 2])


def posterior_median_levels(draws: ForecastDraws) -> np.ndarray:
    """Lower-median level for every site and horizon, shape (I, L)."""
    y = np.sort(draws.y, axis=0)
    return y[(y.shape[0] - 1) // 2]
