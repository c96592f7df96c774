"""Core model types and densities.

An ordinal observation is a censored view of a latent Gaussian AR(1) series:
the latent value's position between fixed cutoffs ``(-inf, 0, 1, ..., J-1,
+inf)`` determines the observed level.  This module holds the link and its
inverse, the AR(1) log density, and the independence-model prior used by the
per-site stage of the sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Cutoffs",
    "SitePanel",
    "SiteParams",
    "HyperParams",
    "Stage1Prior",
    "ordinal_from_latent",
    "latent_bounds",
    "latent_bounds_series",
    "ar1_log_density",
    "ar1_residuals",
    "stage1_log_prior",
    "logit",
    "inverse_logit",
    "norm_logpdf",
    "logistic_logpdf",
    "invgamma_logpdf",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Cutoffs:
    """Fixed latent-scale thresholds for J+1 ordered levels.

    ``alpha`` is ``(-inf, 0, 1, ..., J-1, +inf)``; levels run 0..J.
    """

    J: int

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("need at least one finite cutoff (J >= 1)")

    @property
    def alpha(self) -> np.ndarray:
        return np.concatenate(([-np.inf], np.arange(self.J, dtype=float), [np.inf]))

    @property
    def n_levels(self) -> int:
        return self.J + 1


@dataclass(frozen=True)
class SitePanel:
    """Observed series for one site: ordinal y (length T) and design x.

    ``x`` is T x (P+1) with a leading column of ones; covariates are assumed
    already standardized by ingestion.
    """

    site_id: int
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        x = np.asarray(self.x, dtype=float)
        if y.ndim != 1 or x.ndim != 2 or x.shape[0] != y.size:
            raise ValueError("y must be length T and x T x (P+1)")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite covariate values")
        if not np.allclose(x[:, 0], 1.0):
            raise ValueError("first design column must be constant 1")
        object.__setattr__(self, "y", np.asarray(y, dtype=np.int64))
        object.__setattr__(self, "x", x)

    @property
    def T(self) -> int:
        return self.y.size

    @property
    def P(self) -> int:
        return self.x.shape[1] - 1


@dataclass
class SiteParams:
    """Site-level parameter block: regression, AR, variance, latent series."""

    beta: np.ndarray
    gamma: float
    sigma2: float
    z: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def rho(self) -> float:
        return inverse_logit(self.gamma)

    def copy(self) -> "SiteParams":
        return SiteParams(self.beta.copy(), self.gamma, self.sigma2, self.z.copy())

    def validate_against(self, panel: SitePanel, cutoffs: Cutoffs) -> None:
        lo, hi = latent_bounds_series(panel.y, cutoffs)
        if not (np.all(self.z > lo) and np.all(self.z <= hi)):
            raise ValueError("latent values violate the ordinal bounds")
        if self.beta.shape != (panel.P + 1,):
            raise ValueError("beta dimension mismatch")
        if self.z.shape != (panel.T,):
            raise ValueError("z length mismatch")


@dataclass
class HyperParams:
    """Spatial-field variances: one for the AR field, one per coefficient."""

    sigma2_gamma: float
    sigma2_p: np.ndarray

    def __post_init__(self):
        self.sigma2_p = np.asarray(self.sigma2_p, dtype=float)
        if self.sigma2_gamma <= 0 or np.any(self.sigma2_p <= 0):
            raise ValueError("hyper variances must be strictly positive")


@dataclass(frozen=True)
class Stage1Prior:
    """Independence-model prior for the per-site stage.

    Coefficients get independent N(0, xi_p^2), the logit AR parameter a
    standard logistic (equivalently rho ~ U(0,1)), and the noise variance an
    inverse gamma with the given shape and scale.
    """

    xi: np.ndarray
    ig_shape: float = 0.5
    ig_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if np.any(self.xi <= 0) or self.ig_shape <= 0 or self.ig_scale <= 0:
            raise ValueError("prior scales must be strictly positive")

    @classmethod
    def default(cls, n_covariates: int) -> "Stage1Prior":
        # sd 3 keeps coefficients within a moderate range of the 0..J-1 cutoffs
        return cls(xi=np.full(n_covariates + 1, 3.0))


def ordinal_from_latent(z, cutoffs: Cutoffs):
    """Map latent value(s) to ordinal level(s): j with alpha_j < z <= alpha_{j+1}."""
    z = np.asarray(z, dtype=float)
    # intervals are open below / closed above, so search on the left edge
    lev = np.searchsorted(cutoffs.alpha[1:-1], z, side="left")
    return int(lev) if np.isscalar(lev) or lev.ndim == 0 else lev.astype(np.int64)


def latent_bounds(y: int, cutoffs: Cutoffs) -> tuple[float, float]:
    """Open-below / closed-above latent interval for level ``y``."""
    if not 0 <= y <= cutoffs.J:
        raise ValueError(f"level {y} outside 0..{cutoffs.J}")
    alpha = cutoffs.alpha
    return float(alpha[y]), float(alpha[y + 1])


def latent_bounds_series(y: np.ndarray, cutoffs: Cutoffs) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``latent_bounds`` over a level series."""
    y = np.asarray(y, dtype=np.int64)
    if np.any(y < 0) or np.any(y > cutoffs.J):
        raise ValueError("ordinal level outside 0..J")
    alpha = cutoffs.alpha
    return alpha[y], alpha[y + 1]


def ar1_residuals(
    z: np.ndarray, beta: np.ndarray, gamma: float, x: np.ndarray
) -> np.ndarray:
    """One-step innovations of the latent AR(1): e_1 = z_1 - mu_1, then
    e_t = (z_t - mu_t) - rho (z_{t-1} - mu_{t-1})."""
    rho = inverse_logit(gamma)
    w = z - x @ beta
    e = np.empty_like(w)
    e[0] = w[0]
    e[1:] = w[1:] - rho * w[:-1]
    return e


def ar1_log_density(
    z: np.ndarray,
    beta: np.ndarray,
    gamma: float,
    sigma2: float,
    x: np.ndarray,
) -> float:
    """Log density of the latent series under the covariate AR(1) process."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    e = ar1_residuals(z, beta, gamma, x)
    T = e.size
    return float(-0.5 * T * (_LOG_2PI + math.log(sigma2)) - 0.5 * np.dot(e, e) / sigma2)


def norm_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var


def logistic_logpdf(x):
    """Standard logistic log density, stable for large |x|."""
    ax = np.abs(x)
    return -ax - 2.0 * np.log1p(np.exp(-ax))


def invgamma_logpdf(x, shape, scale):
    """Inverse gamma log density with kernel x^-(shape+1) exp(-scale/x)."""
    return (
        shape * np.log(scale)
        - math.lgamma(shape)
        - (shape + 1.0) * np.log(x)
        - scale / x
    )


def stage1_log_prior(params: SiteParams, prior: Stage1Prior) -> float:
    """Log prior of one site's block under the independence model."""
    lp = float(np.sum(norm_logpdf(params.beta, 0.0, prior.xi**2)))
    lp += float(logistic_logpdf(params.gamma))
    lp += float(invgamma_logpdf(params.sigma2, prior.ig_shape, prior.ig_scale))
    return lp


def logit(rho: float) -> float:
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie strictly inside (0, 1)")
    return math.log(rho / (1.0 - rho))


def inverse_logit(gamma: float) -> float:
    # split on sign to avoid overflow in exp
    if gamma >= 0:
        return 1.0 / (1.0 + math.exp(-gamma))
    e = math.exp(gamma)
    return e / (1.0 + e)
