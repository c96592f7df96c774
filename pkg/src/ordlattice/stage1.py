"""Per-site Gibbs sampler for the independence model.

Each site is fit on its own: the latent series by single-element truncated
normal conditionals, the coefficients by a conjugate normal draw on the
quasi-differenced regression, the AR parameter by a truncated normal on
(0, 1), and the noise variance by its conjugate inverse gamma.  Sites share
nothing, so the fleet of chains runs embarrassingly parallel with one
deterministic RNG stream per site.  The retained draws form each site's
reservoir, later consumed as the proposal pool of the spatially coupled
resampler.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CollinearDesignError, OrdLatticeError, ShortChainWarning
from .model import (
    Cutoffs,
    SitePanel,
    SiteParams,
    Stage1Prior,
    ar1_residuals,
    latent_bounds_series,
    logit,
)
from .truncnorm import truncated_normal

__all__ = [
    "ChainConfig",
    "Reservoir",
    "Stage1Result",
    "initial_site_params",
    "latent_conditional_moments",
    "gibbs_update_z",
    "gibbs_update_beta",
    "gibbs_update_rho",
    "gibbs_update_sigma2",
    "rho_conditional_moments",
    "run_stage1_site",
    "run_stage1_all",
    "site_rng",
]

logger = logging.getLogger(__name__)

# keep gamma = logit(rho) finite when a truncated draw lands on the boundary
_RHO_EPS = 1e-12


@dataclass(frozen=True)
class ChainConfig:
    """MCMC chain length settings; retained draws = (iterations-burn_in)//thin."""

    iterations: int
    burn_in: int
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.thin <= 0:
            raise ValueError("iterations must be >= 0 and thin positive")
        if self.iterations == 0:
            if self.burn_in != 0:
                raise ValueError("zero-iteration config cannot have burn-in")
        elif not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.n_retained < 100:
            warnings.warn(
                f"only {self.n_retained} retained draws (< 100)", ShortChainWarning
            )

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def keeps(self, iteration: int) -> bool:
        """True if 1-based ``iteration`` is retained."""
        return iteration > self.burn_in and (iteration - self.burn_in) % self.thin == 0


@dataclass
class Reservoir:
    """Stored posterior draws for one site: the stage-two proposal pool."""

    site_id: int
    beta: np.ndarray  # (n_draws, P+1)
    gamma: np.ndarray  # (n_draws,)
    sigma2: np.ndarray  # (n_draws,)
    z: np.ndarray  # (n_draws, T)

    @property
    def n_draws(self) -> int:
        return self.gamma.size

    def record(self, k: int) -> SiteParams:
        return SiteParams(
            self.beta[k].copy(), float(self.gamma[k]), float(self.sigma2[k]), self.z[k].copy()
        )

    def validate_against(self, panel: SitePanel, cutoffs: Cutoffs) -> None:
        if self.n_draws < 1:
            raise ValueError("reservoir must hold at least one draw")
        lo, hi = latent_bounds_series(panel.y, cutoffs)
        if not (np.all(self.z > lo) and np.all(self.z <= hi)):
            raise ValueError("reservoir latent draws violate ordinal bounds")
        if np.any(self.sigma2 <= 0):
            raise ValueError("non-positive sigma2 draw in reservoir")


def site_rng(seed: int, site_id: int) -> np.random.Generator:
    """Deterministic per-site RNG stream derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(site_id,)))


def initial_site_params(panel: SitePanel, cutoffs: Cutoffs) -> SiteParams:
    """Deterministic valid start: beta 0, rho 0.5, sigma2 1, z mid-interval."""
    lo, hi = latent_bounds_series(panel.y, cutoffs)
    z = np.where(
        np.isfinite(lo) & np.isfinite(hi),
        0.5 * (lo + hi),
        np.where(np.isfinite(lo), lo + 0.5, hi - 0.5),
    )
    return SiteParams(
        beta=np.zeros(panel.P + 1), gamma=logit(0.5), sigma2=1.0, z=z.astype(float)
    )


def latent_conditional_moments(
    w: np.ndarray, rho: float, sigma2: float, idx: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Full-conditional mean/variance of centered latent values at ``idx``.

    ``w`` is the centered series z - x beta.  Each element's conditional
    combines its own innovation term with the next step's regression term:
    interior points get mean rho*(w[t-1]+w[t+1])/(1+rho^2) and variance
    sigma2/(1+rho^2); the endpoints drop the missing side.
    """
    T = w.size
    left = np.where(idx > 0, w[np.maximum(idx - 1, 0)], 0.0)
    has_right = idx < T - 1
    right = np.where(has_right, w[np.minimum(idx + 1, T - 1)], 0.0)
    prec_factor = np.where(has_right, 1.0 + rho * rho, 1.0)
    mean = rho * (left + right) / prec_factor
    var = sigma2 / prec_factor
    return mean, var


def gibbs_update_z(
    params: SiteParams,
    panel: SitePanel,
    cutoffs: Cutoffs,
    rng: np.random.Generator,
) -> np.ndarray:
    """One full sweep of single-element truncated normal updates of z.

    The sweep runs in checkerboard order (even time indices given odd, then
    odd given even): along the time chain, same-parity elements are
    conditionally independent, so each half-sweep is a block of exact
    single-element conditionals and vectorizes.
    """
    lo, hi = latent_bounds_series(panel.y, cutoffs)
    mu = panel.x @ params.beta
    rho = params.rho
    z = params.z.copy()
    w = z - mu
    T = z.size
    for half in (np.arange(0, T, 2), np.arange(1, T, 2)):
        if half.size == 0:
            continue
        mean_w, var = latent_conditional_moments(w, rho, params.sigma2, half)
        draw = truncated_normal(
            rng, mu[half] + mean_w, np.sqrt(var), lo[half], hi[half]
        )
        z[half] = draw
        w[half] = draw - mu[half]
    return z


def _whitened_regression(
    z: np.ndarray, x: np.ndarray, rho: float
) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-differenced design and response with iid N(0, sigma2) errors."""
    W = np.empty_like(x)
    W[0] = x[0]
    W[1:] = x[1:] - rho * x[:-1]
    r = np.empty_like(z)
    r[0] = z[0]
    r[1:] = z[1:] - rho * z[:-1]
    return W, r


def gibbs_update_beta(
    params: SiteParams,
    panel: SitePanel,
    prior: Stage1Prior,
    rng: np.random.Generator,
) -> np.ndarray:
    """Conjugate normal draw of the coefficients given (z, rho, sigma2)."""
    W, r = _whitened_regression(params.z, panel.x, params.rho)
    gram = W.T @ W
    _check_rank(gram)
    prec = gram / params.sigma2 + np.diag(prior.xi**-2.0)
    lin = W.T @ r / params.sigma2
    chol = np.linalg.cholesky(prec)
    mean = np.linalg.solve(prec, lin)
    # draw = mean + L^-T u gives covariance prec^-1
    u = rng.standard_normal(mean.size)
    return mean + np.linalg.solve(chol.T, u)


def _check_rank(gram: np.ndarray) -> None:
    vals = np.linalg.eigvalsh(gram)
    if vals[0] <= vals[-1] * 1e-12:
        vecs = np.linalg.eigh(gram)[1]
        cols = np.flatnonzero(np.abs(vecs[:, 0]) > 1e-8).tolist()
        raise CollinearDesignError(
            f"whitened design is rank deficient; columns {cols} are collinear",
            columns=cols,
        )


def rho_conditional_moments(
    z: np.ndarray, beta: np.ndarray, x: np.ndarray, sigma2: float
) -> tuple[float, float] | None:
    """Untruncated mean/variance of the AR coefficient's conditional.

    Returns None when the lagged residuals carry no information (all zero,
    or T == 1), in which case the conditional falls back to the prior.
    """
    d = z - x @ beta
    denom = float(np.dot(d[:-1], d[:-1]))
    if denom <= 0.0:
        return None
    m = float(np.dot(d[1:], d[:-1])) / denom
    v = sigma2 / denom
    return m, v


def gibbs_update_rho(
    params: SiteParams,
    panel: SitePanel,
    rng: np.random.Generator,
) -> float:
    """Draw rho from its truncated normal conditional; returns gamma = logit(rho).

    The flat prior on (0, 1) is exactly the truncation, so the update stays
    conjugate; the stored parameter is the logit because the spatial model
    places its prior on that scale.
    """
    moments = rho_conditional_moments(params.z, params.beta, panel.x, params.sigma2)
    if moments is None:
        logger.info("degenerate AR conditional at site update; prior draw used")
        rho = rng.uniform(0.0, 1.0)
    else:
        m, v = moments
        rho = truncated_normal(rng, m, np.sqrt(v), 0.0, 1.0)
    rho = min(max(float(rho), _RHO_EPS), 1.0 - _RHO_EPS)
    return logit(rho)


def gibbs_update_sigma2(
    params: SiteParams,
    panel: SitePanel,
    prior: Stage1Prior,
    rng: np.random.Generator,
) -> float:
    """Conjugate inverse gamma draw given the AR(1) innovations."""
    e = ar1_residuals(params.z, params.beta, params.gamma, panel.x)
    shape = prior.ig_shape + 0.5 * panel.T
    scale = prior.ig_scale + 0.5 * float(np.dot(e, e))
    return scale / rng.gamma(shape)


def run_stage1_site(
    panel: SitePanel,
    cutoffs: Cutoffs,
    prior: Stage1Prior,
    config: ChainConfig,
    rng: np.random.Generator | None = None,
) -> Reservoir:
    """Systematic-scan Gibbs chain (z sweep, beta, rho, sigma2) for one site."""
    if rng is None:
        rng = site_rng(config.seed, panel.site_id)
    params = initial_site_params(panel, cutoffs)
    n_keep = config.n_retained
    beta = np.empty((n_keep, panel.P + 1))
    gamma = np.empty(n_keep)
    sigma2 = np.empty(n_keep)
    z = np.empty((n_keep, panel.T))
    k = 0
    for it in range(1, config.iterations + 1):
        params.z = gibbs_update_z(params, panel, cutoffs, rng)
        params.beta = gibbs_update_beta(params, panel, prior, rng)
        params.gamma = gibbs_update_rho(params, panel, rng)
        params.sigma2 = gibbs_update_sigma2(params, panel, prior, rng)
        if config.keeps(it):
            beta[k] = params.beta
            gamma[k] = params.gamma
            sigma2[k] = params.sigma2
            z[k] = params.z
            k += 1
    return Reservoir(panel.site_id, beta[:k], gamma[:k], sigma2[:k], z[:k])


@dataclass
class Stage1Result:
    """Per-site reservoirs plus any per-site failures (site_id -> message)."""

    reservoirs: dict[int, Reservoir]
    failures: dict[int, str]


def _stage1_task(args) -> tuple[int, Reservoir | None, str | None]:
    panel, cutoffs, prior, config = args
    try:
        res = run_stage1_site(panel, cutoffs, prior, config)
        return panel.site_id, res, None
    except OrdLatticeError as exc:
        return panel.site_id, None, f"{exc.code}: {exc}"


def run_stage1_all(
    panels: list[SitePanel],
    cutoffs: Cutoffs,
    prior: Stage1Prior,
    config: ChainConfig,
    workers: int = 1,
) -> Stage1Result:
    """Run every site's chain, optionally on a process pool.

    Output is bit-identical for any worker count because each site consumes
    its own RNG stream.  Failures are collected per site and do not abort
    sibling chains.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    tasks = [(panel, cutoffs, prior, config) for panel in panels]
    if workers == 1 or len(panels) <= 1:
        results = [_stage1_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_stage1_task, tasks, chunksize=1))
    reservoirs: dict[int, Reservoir] = {}
    failures: dict[int, str] = {}
    for site_id, res, err in results:
        if err is None:
            reservoirs[site_id] = res
        else:
            failures[site_id] = err
    return Stage1Result(reservoirs=reservoirs, failures=failures)
