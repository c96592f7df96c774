"""Single-stage Metropolis-within-Gibbs sampler for the full spatial model.

This is the desk-scale correctness oracle: it targets the same posterior as
the two-stage pipeline by sweeping, each iteration, the latent series (same
truncated normal conditionals as the per-site stage), the coefficients
(conjugate normal with the spatial conditional as prior), the logit AR
parameter (random-walk Metropolis, no conjugacy under the spatial prior),
the noise variances (same inverse gamma update), and finally the field
variances.  Cost grows with I*T, so a size guard refuses large problems
unless forced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeGuardError
from .lattice import LatticeGraph
from .model import (
    Cutoffs,
    HyperParams,
    SitePanel,
    SiteParams,
    Stage1Prior,
    ar1_log_density,
    inverse_logit,
)
from .stage1 import ChainConfig, gibbs_update_sigma2, gibbs_update_z, initial_site_params
from .stage2 import FullModelState, gibbs_update_hypervariance
from .storage import DrawStore

__all__ = [
    "SingleStageResult",
    "gibbs_update_beta_icar",
    "mh_update_gamma_icar",
    "run_single_stage",
]

_SIZE_GUARD = 1_000_000
_ADAPT_WINDOW = 100
_TARGET_ACCEPT = 0.4


@dataclass
class SingleStageResult:
    store: DrawStore
    final_state: FullModelState
    step_sizes: np.ndarray
    mh_accept_rate: np.ndarray


def gibbs_update_beta_icar(
    i: int,
    state: FullModelState,
    panel: SitePanel,
    graph: LatticeGraph,
    rng: np.random.Generator,
) -> np.ndarray:
    """Conjugate coefficient draw with the spatial conditional as prior.

    Each coordinate's prior is normal around its neighbors' mean with
    variance sigma2_p / degree; the likelihood part is the same whitened
    regression as the independence-model update.
    """
    nbrs = graph.neighbors[i]
    deg = float(graph.degree[i])
    prior_mean = state.beta[nbrs].mean(axis=0)
    prior_prec = deg / state.hyper.sigma2_p

    rho = inverse_logit(float(state.gamma[i]))
    W = np.empty_like(panel.x)
    W[0] = panel.x[0]
    W[1:] = panel.x[1:] - rho * panel.x[:-1]
    r = np.empty(panel.T)
    r[0] = state.z[i][0]
    r[1:] = state.z[i][1:] - rho * state.z[i][:-1]

    sigma2 = float(state.sigma2[i])
    prec = W.T @ W / sigma2 + np.diag(prior_prec)
    lin = W.T @ r / sigma2 + prior_prec * prior_mean
    chol = np.linalg.cholesky(prec)
    mean = np.linalg.solve(prec, lin)
    u = rng.standard_normal(mean.size)
    return mean + np.linalg.solve(chol.T, u)


def mh_update_gamma_icar(
    i: int,
    state: FullModelState,
    panel: SitePanel,
    graph: LatticeGraph,
    step: float,
    rng: np.random.Generator,
) -> tuple[float, bool]:
    """Random-walk Metropolis step on the logit AR parameter of one site.

    Target: latent AR(1) likelihood times the spatial conditional normal.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    nbrs = graph.neighbors[i]
    nbr_mean = float(np.mean(state.gamma[nbrs]))
    prec = graph.degree[i] / state.hyper.sigma2_gamma
    z = state.z[i]
    beta = state.beta[i]
    sigma2 = float(state.sigma2[i])

    def log_target(g: float) -> float:
        return ar1_log_density(z, beta, g, sigma2, panel.x) - 0.5 * prec * (
            g - nbr_mean
        ) ** 2

    current = float(state.gamma[i])
    proposal = current + step * rng.standard_normal()
    accept = np.log(rng.random()) < log_target(proposal) - log_target(current)
    return (proposal, True) if accept else (current, False)


def run_single_stage(
    panels: list[SitePanel],
    cutoffs: Cutoffs,
    graph: LatticeGraph,
    config: ChainConfig,
    force: bool = False,
    keep_z: bool = True,
    initial_step: float = 0.5,
    sigma2_shape: float = 0.5,
    sigma2_scale: float = 0.5,
    hyper_shape: float = 0.5,
    hyper_scale: float = 0.5,
) -> SingleStageResult:
    """Sample the full spatial posterior directly; deterministic given seed."""
    I = len(panels)
    T = panels[0].T
    if I * T > _SIZE_GUARD and not force:
        raise SizeGuardError(
            f"problem size I*T = {I * T} exceeds the single-stage guard "
            f"({_SIZE_GUARD}); pass force to override"
        )
    rng = np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=(0xFFFFFFFF, 2))
    )
    n_coef = panels[0].P + 1
    # only the inverse gamma part of this prior is used by the sigma2 update
    sigma2_prior = Stage1Prior(np.ones(n_coef), sigma2_shape, sigma2_scale)

    init = [initial_site_params(p, cutoffs) for p in panels]
    state = FullModelState(
        beta=np.stack([s.beta for s in init]),
        gamma=np.array([s.gamma for s in init]),
        sigma2=np.array([s.sigma2 for s in init]),
        z=np.stack([s.z for s in init]),
        hyper=HyperParams(1.0, np.ones(n_coef)),
    )

    steps = np.full(I, float(initial_step))
    window_acc = np.zeros(I)
    total_acc = np.zeros(I)
    n_keep = config.n_retained
    out_beta = np.empty((n_keep, I, n_coef))
    out_gamma = np.empty((n_keep, I))
    out_sigma2 = np.empty((n_keep, I))
    out_z = np.empty((n_keep, I, T)) if keep_z else None
    out_h_gamma = np.empty(n_keep)
    out_h_p = np.empty((n_keep, n_coef))

    k = 0
    for it in range(1, config.iterations + 1):
        for i, panel in enumerate(panels):
            params = SiteParams(
                state.beta[i], float(state.gamma[i]), float(state.sigma2[i]), state.z[i]
            )
            state.z[i] = gibbs_update_z(params, panel, cutoffs, rng)
        for i, panel in enumerate(panels):
            state.beta[i] = gibbs_update_beta_icar(i, state, panel, graph, rng)
        for i, panel in enumerate(panels):
            g, acc = mh_update_gamma_icar(i, state, panel, graph, steps[i], rng)
            state.gamma[i] = g
            window_acc[i] += acc
            if it > config.burn_in:
                total_acc[i] += acc
        for i, panel in enumerate(panels):
            params = SiteParams(
                state.beta[i], float(state.gamma[i]), float(state.sigma2[i]), state.z[i]
            )
            state.sigma2[i] = gibbs_update_sigma2(params, panel, sigma2_prior, rng)
        state.hyper.sigma2_gamma = gibbs_update_hypervariance(
            state.gamma, graph, rng, hyper_shape, hyper_scale
        )
        for p in range(n_coef):
            state.hyper.sigma2_p[p] = gibbs_update_hypervariance(
                state.beta[:, p], graph, rng, hyper_shape, hyper_scale
            )

        # proposal-step adaptation only during burn-in, frozen afterwards
        if it <= config.burn_in and it % _ADAPT_WINDOW == 0:
            rates = window_acc / _ADAPT_WINDOW
            steps *= np.exp(np.clip(rates - _TARGET_ACCEPT, -0.5, 0.5))
            window_acc[:] = 0.0

        state.iteration = it
        if config.keeps(it):
            out_beta[k] = state.beta
            out_gamma[k] = state.gamma
            out_sigma2[k] = state.sigma2
            if keep_z:
                out_z[k] = state.z
            out_h_gamma[k] = state.hyper.sigma2_gamma
            out_h_p[k] = state.hyper.sigma2_p
            k += 1

    post_n = max(config.iterations - config.burn_in, 1)
    store = DrawStore(
        site_ids=np.array([p.site_id for p in panels]),
        beta=out_beta[:k],
        gamma=out_gamma[:k],
        sigma2=out_sigma2[:k],
        z=out_z[:k] if keep_z else None,
        hyper_sigma2_gamma=out_h_gamma[:k],
        hyper_sigma2_p=out_h_p[:k],
    )
    return SingleStageResult(
        store=store,
        final_state=state,
        step_sizes=steps,
        mh_accept_rate=total_acc / post_n,
    )
