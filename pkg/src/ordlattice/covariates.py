"""Covariate process: per-site seasonal detrending and a spatial VAR.

Each covariate series is detrended by least squares on an annual Fourier
basis (intercept plus five sine/cosine harmonics of the 365/7-week year).
The detrended vectors then follow a lag-one VAR whose transition matrix is
diagonal (one autoregressive coefficient per covariate) with a full
innovation covariance coupling the covariates within a site.  The VAR is fit
with the same two-stage scheme as the outcome model: independent per-site
Gibbs chains first, then a spatial resampling pass that places ICAR priors
on each coefficient field.  The innovation covariance has the same inverse
Wishart prior in both stages, so it drops out of the resampling ratio.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import invwishart

from .errors import DimensionMismatchError, EmptyReservoirError, LowAcceptanceWarning
from .lattice import LatticeGraph, pairwise_diff_ss
from .stage1 import ChainConfig
from .storage import VarReservoir

__all__ = [
    "FOURIER_PERIOD",
    "N_FOURIER_TERMS",
    "FourierFit",
    "VarSiteParams",
    "VarStage2Result",
    "fourier_design",
    "fit_fourier_detrend",
    "var_stage1_site",
    "run_var_stage1_all",
    "var_log_likelihood",
    "var_log_acceptance_ratio",
    "var_stage2",
    "simulate_var_forward",
    "var_site_rng",
]

logger = logging.getLogger(__name__)

FOURIER_PERIOD = 365.0 / 7.0
_N_HARMONICS = 5
N_FOURIER_TERMS = 1 + 2 * _N_HARMONICS
_VAR_PRIOR_SD = 3.0
_SS_REFRESH_INTERVAL = 1024


@dataclass(frozen=True)
class FourierFit:
    """Per-site seasonal trend coefficients, one row per covariate series."""

    coef: np.ndarray  # (n_series, 11)
    period: float = FOURIER_PERIOD

    def trend(self, t: np.ndarray) -> np.ndarray:
        """Deterministic trend values at (1-based) week indices ``t``."""
        return fourier_design(np.asarray(t, dtype=float), self.period) @ self.coef.T


@dataclass
class VarSiteParams:
    """Diagonal-transition VAR block for one site."""

    delta: np.ndarray  # (n_series,)
    sigma: np.ndarray  # (n_series, n_series), symmetric positive definite

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if not np.allclose(self.sigma, self.sigma.T):
            raise ValueError("sigma must be symmetric")
        np.linalg.cholesky(self.sigma)  # raises if not positive definite


def fourier_design(t: np.ndarray, period: float = FOURIER_PERIOD) -> np.ndarray:
    """Design matrix (len(t) x 11): intercept, 5 sine and 5 cosine harmonics."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    angles = 2.0 * np.pi * np.outer(t, np.arange(1, _N_HARMONICS + 1)) / period
    return np.hstack([np.ones((t.size, 1)), np.sin(angles), np.cos(angles)])


def fit_fourier_detrend(series: np.ndarray) -> tuple[FourierFit, np.ndarray]:
    """Least-squares seasonal fit per covariate column; returns residuals.

    ``series`` is T x n_series with weeks indexed 1..T.  Residuals are
    orthogonal to every design column.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise ValueError("series must be T x n_series")
    T = series.shape[0]
    if T < N_FOURIER_TERMS + 1:
        raise ValueError(
            f"need at least {N_FOURIER_TERMS + 1} weeks to fit the seasonal basis"
        )
    design = fourier_design(np.arange(1, T + 1))
    coef, _, rank, _ = np.linalg.lstsq(design, series, rcond=None)
    if rank < N_FOURIER_TERMS:
        raise ValueError("seasonal design is rank deficient for this series")
    detrended = series - design @ coef
    return FourierFit(coef=coef.T), detrended


def var_site_rng(seed: int, site_id: int) -> np.random.Generator:
    """Per-site stream for the covariate chains, distinct from outcome streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(site_id, 1)))


def _draw_delta(
    x: np.ndarray, sigma: np.ndarray, prior_sd: float, rng: np.random.Generator
) -> np.ndarray:
    """Conditional normal draw of the diagonal transition coefficients."""
    J = x.shape[1]
    x_lag, x_cur = x[:-1], x[1:]
    sig_inv = np.linalg.inv(sigma)
    prec = sig_inv * (x_lag.T @ x_lag) + np.eye(J) / prior_sd**2
    lin = np.sum(x_lag * (x_cur @ sig_inv), axis=0)
    chol = np.linalg.cholesky(prec)
    mean = np.linalg.solve(prec, lin)
    return mean + np.linalg.solve(chol.T, rng.standard_normal(J))


def _var_residuals(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Innovations including the start-up term: r_1 = x_1, r_t = x_t - delta*x_{t-1}."""
    r = np.empty_like(x)
    r[0] = x[0]
    r[1:] = x[1:] - delta * x[:-1]
    return r


def _draw_sigma(
    x: np.ndarray, delta: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Conjugate inverse Wishart draw of the innovation covariance."""
    T, J = x.shape
    r = _var_residuals(x, delta)
    scale = np.eye(J) + r.T @ r
    np.linalg.cholesky(scale)  # scale must be positive definite
    return invwishart.rvs(df=J + T, scale=scale, random_state=rng)


def var_stage1_site(
    detrended: np.ndarray,
    config: ChainConfig,
    rng: np.random.Generator,
    site_id: int = 0,
    prior_sd: float = _VAR_PRIOR_SD,
) -> VarReservoir:
    """Per-site Gibbs chain for the VAR block under independence priors."""
    x = np.asarray(detrended, dtype=float)
    T, J = x.shape
    if T < J + 2:
        raise ValueError("series too short for the covariance update")
    delta = np.zeros(J)
    sigma = np.eye(J)
    n_keep = config.n_retained
    out_delta = np.empty((n_keep, J))
    out_sigma = np.empty((n_keep, J, J))
    k = 0
    for it in range(1, config.iterations + 1):
        delta = _draw_delta(x, sigma, prior_sd, rng)
        sigma = np.atleast_2d(_draw_sigma(x, delta, rng))
        if config.keeps(it):
            out_delta[k] = delta
            out_sigma[k] = sigma
            k += 1
    n_explosive = int(np.sum(np.any(np.abs(out_delta[:k]) >= 1.0, axis=1)))
    if n_explosive:
        # the transition coefficients carry no stationarity constraint
        logger.info(
            "site %d: %d of %d retained draws have |delta| >= 1", site_id, n_explosive, k
        )
    return VarReservoir(site_id=site_id, delta=out_delta[:k], sigma=out_sigma[:k])


def _var_stage1_task(args):
    site_id, detrended, config, prior_sd = args
    rng = var_site_rng(config.seed, site_id)
    try:
        res = var_stage1_site(detrended, config, rng, site_id=site_id, prior_sd=prior_sd)
        return site_id, res, None
    except ValueError as exc:
        return site_id, None, str(exc)


def run_var_stage1_all(
    detrended_by_site: dict[int, np.ndarray],
    config: ChainConfig,
    workers: int = 1,
    prior_sd: float = _VAR_PRIOR_SD,
) -> tuple[dict[int, VarReservoir], dict[int, str]]:
    """Run every site's VAR chain, optionally on a process pool."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    tasks = [
        (site_id, detrended_by_site[site_id], config, prior_sd)
        for site_id in sorted(detrended_by_site)
    ]
    if workers == 1 or len(tasks) <= 1:
        results = [_var_stage1_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_var_stage1_task, tasks, chunksize=1))
    reservoirs: dict[int, VarReservoir] = {}
    failures: dict[int, str] = {}
    for site_id, res, err in results:
        if err is None:
            reservoirs[site_id] = res
        else:
            failures[site_id] = err
    return reservoirs, failures


def var_log_likelihood(x: np.ndarray, delta: np.ndarray, sigma: np.ndarray) -> float:
    """Log density of a detrended series under the VAR block (start-up included)."""
    r = _var_residuals(np.asarray(x, dtype=float), delta)
    T, J = r.shape
    chol = np.linalg.cholesky(sigma)
    sol = np.linalg.solve(chol, r.T)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return float(
        -0.5 * T * (J * np.log(2.0 * np.pi) + logdet) - 0.5 * np.sum(sol**2)
    )


def var_log_acceptance_ratio(
    delta_new: np.ndarray,
    delta_old: np.ndarray,
    nbr_delta_mean: np.ndarray,
    degree: float,
    hyper_var: np.ndarray,
    prior_sd: float = _VAR_PRIOR_SD,
) -> float:
    """Resampling log ratio for one site's VAR block.

    Only the coefficient fields enter: the detrended-series likelihood and
    the (identical) covariance priors cancel between target and proposal.
    """
    r = -0.5 * degree * float(
        np.sum(((delta_new - nbr_delta_mean) ** 2 - (delta_old - nbr_delta_mean) ** 2) / hyper_var)
    )
    r += 0.5 * float(np.sum((delta_new**2 - delta_old**2) / prior_sd**2))
    return r


@dataclass
class VarStage2Result:
    site_ids: np.ndarray
    delta: np.ndarray  # (M, I, J)
    sigma: np.ndarray  # (M, I, J, J)
    hyper: np.ndarray  # (M, J)
    proposed: np.ndarray
    accepted: np.ndarray


def var_stage2(
    reservoirs: dict[int, VarReservoir],
    graph: LatticeGraph,
    config: ChainConfig,
    prior_sd: float = _VAR_PRIOR_SD,
    hyper_shape: float = 0.5,
    hyper_scale: float = 0.5,
) -> VarStage2Result:
    """Spatial resampling pass over the per-site VAR reservoirs."""
    site_ids = sorted(reservoirs)
    if len(site_ids) != graph.n_sites:
        raise DimensionMismatchError("need one VAR reservoir per lattice site")
    pools = [reservoirs[s] for s in site_ids]
    for pool in pools:
        if pool.n_draws < 1:
            raise EmptyReservoirError(f"site {pool.site_id} has an empty VAR reservoir")
    I = len(pools)
    J = pools[0].delta.shape[1]

    rng = np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=(0xFFFFFFFF, 3))
    )
    delta = np.stack([p.delta[-1] for p in pools])
    sigma = np.stack([p.sigma[-1] for p in pools])
    hyper = np.ones(J)
    ss = np.array([pairwise_diff_ss(delta[:, j], graph) for j in range(J)])
    a_hyper = hyper_shape + 0.5 * I

    n_keep = config.n_retained
    out_delta = np.empty((n_keep, I, J))
    out_sigma = np.empty((n_keep, I, J, J))
    out_hyper = np.empty((n_keep, J))
    proposed = np.zeros(I, dtype=np.int64)
    accepted = np.zeros(I, dtype=np.int64)
    post_proposed = np.zeros(I, dtype=np.int64)
    post_accepted = np.zeros(I, dtype=np.int64)

    k = 0
    for it in range(1, config.iterations + 1):
        if it % _SS_REFRESH_INTERVAL == 0:
            ss = np.array([pairwise_diff_ss(delta[:, j], graph) for j in range(J)])
        for j in range(J):
            hyper[j] = (hyper_scale + 0.5 * ss[j]) / rng.gamma(a_hyper)
        for i in range(I):
            pool = pools[i]
            m = int(rng.integers(pool.n_draws))
            nbrs = graph.neighbors[i]
            nbr_mean = delta[nbrs].mean(axis=0)
            logr = var_log_acceptance_ratio(
                pool.delta[m], delta[i], nbr_mean, float(graph.degree[i]), hyper, prior_sd
            )
            proposed[i] += 1
            post = it > config.burn_in
            if post:
                post_proposed[i] += 1
            if np.log(rng.random()) < logr:
                accepted[i] += 1
                if post:
                    post_accepted[i] += 1
                dn = delta[nbrs]
                ss += np.sum((pool.delta[m] - dn) ** 2, axis=0) - np.sum(
                    (delta[i] - dn) ** 2, axis=0
                )
                delta[i] = pool.delta[m]
                sigma[i] = pool.sigma[m]
        if config.keeps(it):
            out_delta[k] = delta
            out_sigma[k] = sigma
            out_hyper[k] = hyper
            k += 1

    rate = np.where(post_proposed > 0, post_accepted / np.maximum(post_proposed, 1), 1.0)
    low = np.flatnonzero((post_proposed > 0) & (rate < 0.01))
    if low.size:
        warnings.warn(
            f"VAR acceptance rate below 1% after burn-in at sites "
            f"{[site_ids[i] for i in low]}",
            LowAcceptanceWarning,
        )
    return VarStage2Result(
        site_ids=np.array(site_ids),
        delta=out_delta[:k],
        sigma=out_sigma[:k],
        hyper=out_hyper[:k],
        proposed=proposed,
        accepted=accepted,
    )


def simulate_var_forward(
    last: np.ndarray,
    params: VarSiteParams,
    horizon: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Simulate the detrended covariates ``horizon`` steps past the sample end."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    J = params.delta.size
    chol = np.linalg.cholesky(params.sigma)
    out = np.empty((horizon, J))
    prev = np.asarray(last, dtype=float)
    for h in range(horizon):
        prev = params.delta * prev + chol @ rng.standard_normal(J)
        out[h] = prev
    return out
