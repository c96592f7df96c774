"""Spatially coupled resampling stage (Metropolis-within-Gibbs).

Each iteration first Gibbs-updates the spatial-field variances, then sweeps
the sites in order, proposing for each a complete record drawn uniformly
(with replacement) from that site's reservoir and accepting with the
independence-proposal Metropolis ratio.  Because proposals come from the
per-site posterior, the data likelihood and latent-series terms cancel in
the ratio, which therefore involves only the spatial (ICAR) conditionals and
the independence-model priors of the coefficient and AR parameters.  The
noise-variance prior is identical in both models and cancels as well.

During a sweep, a site's neighbors are evaluated at their freshest values:
already-visited sites at this iteration's value, the rest at the previous
iteration's.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyReservoirError, LowAcceptanceWarning
from .lattice import LatticeGraph, pairwise_diff_ss
from .model import HyperParams, SitePanel, SiteParams, Stage1Prior, logistic_logpdf
from .stage1 import ChainConfig, Reservoir
from .storage import DrawStore

__all__ = [
    "FullModelState",
    "AcceptanceStats",
    "Stage2Result",
    "gibbs_update_hypervariance",
    "log_acceptance_ratio",
    "mh_update_site",
    "run_stage2",
    "initial_stage2_state",
]

# refresh the incrementally tracked quadratic forms this often to cap drift
_SS_REFRESH_INTERVAL = 1024


@dataclass
class FullModelState:
    """Current values of every site block plus the field variances."""

    beta: np.ndarray  # (I, P+1)
    gamma: np.ndarray  # (I,)
    sigma2: np.ndarray  # (I,)
    z: np.ndarray  # (I, T)
    hyper: HyperParams
    iteration: int = 0

    def site_params(self, i: int) -> SiteParams:
        return SiteParams(
            self.beta[i].copy(), float(self.gamma[i]), float(self.sigma2[i]), self.z[i].copy()
        )


@dataclass
class AcceptanceStats:
    """Per-site proposal and acceptance counts over the whole run."""

    proposed: np.ndarray
    accepted: np.ndarray

    def rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.proposed > 0, self.accepted / self.proposed, np.nan)


@dataclass
class Stage2Result:
    store: DrawStore
    acceptance: AcceptanceStats
    final_state: FullModelState
    # worst discrepancy between the incrementally maintained ICAR quadratic
    # forms and a from-scratch recomputation at the end of the run
    ss_drift: float = 0.0


def gibbs_update_hypervariance(
    field: np.ndarray,
    graph: LatticeGraph,
    rng: np.random.Generator,
    shape: float = 0.5,
    scale: float = 0.5,
) -> float:
    """Conjugate inverse gamma draw of one spatial field's variance."""
    a = shape + 0.5 * graph.n_sites
    b = scale + 0.5 * pairwise_diff_ss(field, graph)
    return b / rng.gamma(a)


def _site_log_ratio(
    gamma_new: float,
    beta_new: np.ndarray,
    gamma_old: float,
    beta_old: np.ndarray,
    nbr_gamma_mean: float,
    nbr_beta_mean: np.ndarray,
    degree: float,
    hyper: HyperParams,
    prior: Stage1Prior,
) -> float:
    """Log acceptance ratio for one site given its neighbor field means."""
    r = (
        -0.5
        * degree
        / hyper.sigma2_gamma
        * ((gamma_new - nbr_gamma_mean) ** 2 - (gamma_old - nbr_gamma_mean) ** 2)
    )
    r += -0.5 * degree * float(
        np.sum(
            ((beta_new - nbr_beta_mean) ** 2 - (beta_old - nbr_beta_mean) ** 2)
            / hyper.sigma2_p
        )
    )
    r += float(logistic_logpdf(gamma_old) - logistic_logpdf(gamma_new))
    r += 0.5 * float(np.sum((beta_new**2 - beta_old**2) / prior.xi**2))
    return r


def log_acceptance_ratio(
    proposed: SiteParams,
    current: SiteParams,
    i: int,
    state: FullModelState,
    graph: LatticeGraph,
    prior: Stage1Prior,
) -> float:
    """Log of the resampling acceptance ratio for site ``i``.

    Independent of the latent series and of the data: only the spatial
    conditionals of (gamma, beta) and the independence priors survive the
    proposal/target cancellation.
    """
    nbrs = graph.neighbors[i]
    return _site_log_ratio(
        proposed.gamma,
        proposed.beta,
        current.gamma,
        current.beta,
        float(np.mean(state.gamma[nbrs])),
        state.beta[nbrs].mean(axis=0),
        float(graph.degree[i]),
        state.hyper,
        prior,
    )


def mh_update_site(
    i: int,
    state: FullModelState,
    reservoir: Reservoir,
    graph: LatticeGraph,
    prior: Stage1Prior,
    rng: np.random.Generator,
) -> tuple[SiteParams, bool]:
    """Propose a reservoir record for site ``i`` and accept/reject.

    On acceptance the whole record (z, beta, gamma, sigma2) swaps jointly
    and ``state`` is updated in place.  Returns the site's (possibly new)
    parameters and the acceptance flag.
    """
    if reservoir.n_draws < 1:
        raise EmptyReservoirError(f"site {reservoir.site_id} has an empty reservoir")
    k = int(rng.integers(reservoir.n_draws))
    proposed = reservoir.record(k)
    logr = log_acceptance_ratio(proposed, state.site_params(i), i, state, graph, prior)
    accepted = np.log(rng.random()) < logr
    if accepted:
        state.beta[i] = proposed.beta
        state.gamma[i] = proposed.gamma
        state.sigma2[i] = proposed.sigma2
        state.z[i] = proposed.z
    return state.site_params(i), bool(accepted)


def initial_stage2_state(reservoirs: list[Reservoir]) -> FullModelState:
    """Start every site at the last record of its reservoir, variances at 1."""
    beta = np.stack([r.beta[-1] for r in reservoirs])
    gamma = np.array([r.gamma[-1] for r in reservoirs])
    sigma2 = np.array([r.sigma2[-1] for r in reservoirs])
    z = np.stack([r.z[-1] for r in reservoirs])
    hyper = HyperParams(1.0, np.ones(beta.shape[1]))
    return FullModelState(beta, gamma, sigma2, z, hyper)


def run_stage2(
    panels: list[SitePanel],
    reservoirs: dict[int, Reservoir] | list[Reservoir],
    graph: LatticeGraph,
    config: ChainConfig,
    prior: Stage1Prior,
    keep_z: bool = True,
    randomize_scan: bool = False,
    hyper_shape: float = 0.5,
    hyper_scale: float = 0.5,
) -> Stage2Result:
    """Run the resampling stage over all sites.

    ``reservoirs`` must provide one nonempty pool per panel site.  Output is
    deterministic given ``config.seed``.
    """
    if isinstance(reservoirs, dict):
        try:
            pools = [reservoirs[p.site_id] for p in panels]
        except KeyError as exc:
            raise EmptyReservoirError(f"no reservoir for site {exc}") from exc
    else:
        pools = list(reservoirs)
    if len(pools) != len(panels):
        raise EmptyReservoirError("need exactly one reservoir per site")
    for pool in pools:
        if pool.n_draws < 1:
            raise EmptyReservoirError(f"site {pool.site_id} has an empty reservoir")

    # two-element spawn key so the stream can never collide with a per-site one
    rng = np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=(0xFFFFFFFF, 1))
    )
    I = len(panels)
    n_coef = pools[0].beta.shape[1]
    T = pools[0].z.shape[1]
    state = initial_stage2_state(pools)

    n_keep = config.n_retained
    out_beta = np.empty((n_keep, I, n_coef))
    out_gamma = np.empty((n_keep, I))
    out_sigma2 = np.empty((n_keep, I))
    out_z = np.empty((n_keep, I, T)) if keep_z else None
    out_h_gamma = np.empty(n_keep)
    out_h_p = np.empty((n_keep, n_coef))

    proposed = np.zeros(I, dtype=np.int64)
    accepted = np.zeros(I, dtype=np.int64)
    post_proposed = np.zeros(I, dtype=np.int64)
    post_accepted = np.zeros(I, dtype=np.int64)

    nbr_idx = graph.neighbors
    degree = graph.degree.astype(float)
    ss_gamma = pairwise_diff_ss(state.gamma, graph)
    ss_beta = np.array(
        [pairwise_diff_ss(state.beta[:, p], graph) for p in range(n_coef)]
    )

    a_hyper = hyper_shape + 0.5 * I
    k = 0
    for it in range(1, config.iterations + 1):
        if it % _SS_REFRESH_INTERVAL == 0:
            ss_gamma = pairwise_diff_ss(state.gamma, graph)
            ss_beta = np.array(
                [pairwise_diff_ss(state.beta[:, p], graph) for p in range(n_coef)]
            )
        state.hyper.sigma2_gamma = (hyper_scale + 0.5 * ss_gamma) / rng.gamma(a_hyper)
        for p in range(n_coef):
            state.hyper.sigma2_p[p] = (hyper_scale + 0.5 * ss_beta[p]) / rng.gamma(
                a_hyper
            )

        order = rng.permutation(I) if randomize_scan else range(I)
        for i in order:
            pool = pools[i]
            j = int(rng.integers(pool.n_draws))
            nbrs = nbr_idx[i]
            logr = _site_log_ratio(
                float(pool.gamma[j]),
                pool.beta[j],
                float(state.gamma[i]),
                state.beta[i],
                float(np.mean(state.gamma[nbrs])),
                state.beta[nbrs].mean(axis=0),
                degree[i],
                state.hyper,
                prior,
            )
            proposed[i] += 1
            post = it > config.burn_in
            if post:
                post_proposed[i] += 1
            if np.log(rng.random()) < logr:
                accepted[i] += 1
                if post:
                    post_accepted[i] += 1
                g_old = state.gamma[i]
                g_new = pool.gamma[j]
                gn = state.gamma[nbrs]
                ss_gamma += float(
                    np.sum((g_new - gn) ** 2) - np.sum((g_old - gn) ** 2)
                )
                bn = state.beta[nbrs]
                ss_beta += np.sum((pool.beta[j] - bn) ** 2, axis=0) - np.sum(
                    (state.beta[i] - bn) ** 2, axis=0
                )
                state.beta[i] = pool.beta[j]
                state.gamma[i] = g_new
                state.sigma2[i] = pool.sigma2[j]
                state.z[i] = pool.z[j]

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

    rate = np.where(post_proposed > 0, post_accepted / np.maximum(post_proposed, 1), 1.0)
    low = np.flatnonzero((post_proposed > 0) & (rate < 0.01))
    if low.size:
        ids = [panels[i].site_id for i in low]
        warnings.warn(
            f"acceptance rate below 1% after burn-in at sites {ids}",
            LowAcceptanceWarning,
        )

    drift = abs(ss_gamma - pairwise_diff_ss(state.gamma, graph))
    for p in range(n_coef):
        drift = max(drift, abs(ss_beta[p] - pairwise_diff_ss(state.beta[:, p], graph)))

    store = DrawStore(
        site_ids=np.array([p.site_id for p in panels]),
        beta=out_beta[:k],
        gamma=out_gamma[:k],
        sigma2=out_sigma2[:k],
        z=out_z[:k] if keep_z else None,
        hyper_sigma2_gamma=out_h_gamma[:k],
        hyper_sigma2_p=out_h_p[:k],
    )
    return Stage2Result(
        store=store,
        acceptance=AcceptanceStats(proposed=proposed, accepted=accepted),
        final_state=state,
        ss_drift=float(drift),
    )
