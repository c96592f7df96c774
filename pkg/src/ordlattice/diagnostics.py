"""Chain quality metrics: effective sample size and posterior summaries."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConstantChainWarning
from .storage import DrawStore

__all__ = [
    "ChainSummaryRow",
    "ChainSummary",
    "effective_sample_size",
    "occupancy_effective_size",
    "summarize_store",
    "compare_stores",
]


@dataclass(frozen=True)
class ChainSummaryRow:
    site_id: int
    parameter: str
    mean: float
    sd: float
    ess: float
    mcse: float


@dataclass
class ChainSummary:
    rows: list[ChainSummaryRow]
    wall_seconds: float | None = None

    def class_average_ess(self) -> dict[str, float]:
        """Cross-site average ESS per parameter class (Table-style summary)."""
        groups: dict[str, list[float]] = {}
        for row in self.rows:
            groups.setdefault(row.parameter, []).append(row.ess)
        return {name: float(np.mean(vals)) for name, vals in groups.items()}

    def ess_per_hour(self) -> dict[str, float] | None:
        if self.wall_seconds is None or self.wall_seconds <= 0:
            return None
        hours = self.wall_seconds / 3600.0
        return {k: v / hours for k, v in self.class_average_ess().items()}


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS via the initial-positive-sequence autocorrelation estimator.

    Computes N / (1 + 2 sum of sample autocorrelations), with the sum
    truncated where consecutive-lag-pair sums first turn nonpositive, and
    clips the result to (0, N].  A constant chain is defined to have zero
    autocorrelation (ESS = N) and triggers a warning.
    """
    x = np.asarray(chain, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise ValueError("need a 1-d chain of length >= 10")
    if not np.all(np.isfinite(x)):
        raise ValueError("chain contains non-finite values")
    n = x.size
    xc = x - x.mean()
    var0 = float(np.dot(xc, xc)) / n
    if var0 == 0.0:
        warnings.warn("constant chain; ESS defined as N", ConstantChainWarning)
        return float(n)

    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]

    n_pairs = n // 2
    pair_sums = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    nonpos = np.flatnonzero(pair_sums <= 0.0)
    cut = nonpos[0] if nonpos.size else n_pairs
    tau = -1.0 + 2.0 * float(np.sum(pair_sums[:cut]))
    tau = max(tau, 1e-12)
    return float(min(n / tau, n))


def occupancy_effective_size(chain: np.ndarray) -> float:
    """Effective number of distinct support points behind a swap-only chain.

    The resampling stage only revisits its finite proposal pool, so the
    information in its output is bounded by how evenly that pool is used:
    with visit counts n_k this returns (sum n_k)^2 / sum n_k^2.  The mean of
    such a chain carries an extra Monte Carlo error component of roughly
    sd^2 / occupancy_effective_size on top of the autocorrelation-based one,
    because the pool is itself a finite posterior sample.
    """
    _, counts = np.unique(np.asarray(chain), return_counts=True)
    total = counts.sum()
    return float(total * total / np.dot(counts, counts))


def summarize_store(store: DrawStore, wall_seconds: float | None = None) -> ChainSummary:
    """Per-site, per-parameter mean/sd/ESS/MCSE for a draw store."""
    if store.n_draws == 0:
        raise ValueError("empty draw store")
    n_coef = store.beta.shape[2]
    names = [f"beta_{p}" for p in range(n_coef)] + ["gamma", "sigma2"]
    rows: list[ChainSummaryRow] = []
    for k in range(store.n_sites):
        chains = [store.beta[:, k, p] for p in range(n_coef)]
        chains += [store.gamma[:, k], store.sigma2[:, k]]
        for name, chain in zip(names, chains):
            mean = float(np.mean(chain))
            sd = float(np.std(chain, ddof=1)) if chain.size > 1 else 0.0
            if chain.size >= 10:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConstantChainWarning)
                    ess = effective_sample_size(chain)
            else:
                warnings.warn(
                    "chain too short for ESS; reporting draw count",
                    ConstantChainWarning,
                )
                ess = float(chain.size)
            rows.append(
                ChainSummaryRow(
                    site_id=int(store.site_ids[k]),
                    parameter=name,
                    mean=mean,
                    sd=sd,
                    ess=ess,
                    mcse=sd * np.sqrt(1.0 / ess),
                )
            )
    return ChainSummary(rows=rows, wall_seconds=wall_seconds)


def compare_stores(a: ChainSummary, b: ChainSummary) -> list[dict]:
    """Join two summaries on (site, parameter) and contrast posterior means.

    Each entry reports the mean difference and the combined Monte Carlo
    standard error, the yardstick for sampler-equivalence checks.
    """
    index_b = {(r.site_id, r.parameter): r for r in b.rows}
    out = []
    for ra in a.rows:
        rb = index_b.get((ra.site_id, ra.parameter))
        if rb is None:
            continue
        combined = float(np.hypot(ra.mcse, rb.mcse))
        out.append(
            {
                "site_id": ra.site_id,
                "parameter": ra.parameter,
                "mean_a": ra.mean,
                "mean_b": rb.mean,
                "diff": ra.mean - rb.mean,
                "combined_mcse": combined,
            }
        )
    return out
