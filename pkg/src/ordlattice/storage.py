"""Posterior draw containers and their on-disk formats.

Reservoir binary (one file per site), little-endian throughout:

    magic   4 bytes  b"TSR1"
    version u32      currently 1
    site_id u32
    T       u32      latent series length per record
    P       u32      number of covariates (record holds P+1 coefficients)
    n_draws u32
    records n_draws * (P+3+T) f64: beta_0..beta_P, gamma, sigma2, z_1..z_T

VAR reservoir binary mirrors it with magic b"TVR1" and per-record layout
delta_1..delta_J followed by the lower triangle of Sigma in row-major order.

A full-model draw store on disk is a directory of per-site TSR1 files plus
``hyper.csv`` (iteration, sigma2_gamma, sigma2_p0..pP) and, when produced by
the resampling stage, ``acceptance.csv`` (site_id, proposed, accepted).
Floats in CSVs are written with shortest round-trip formatting so re-runs
with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StorageError
from .stage1 import Reservoir

__all__ = [
    "DrawStore",
    "VarReservoir",
    "write_reservoir",
    "read_reservoir",
    "reservoir_to_csv",
    "write_var_reservoir",
    "read_var_reservoir",
    "write_draw_store",
    "read_draw_store",
    "write_csv",
    "fmt_float",
]

_MAGIC = b"TSR1"
_VAR_MAGIC = b"TVR1"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")
_VAR_HEADER = struct.Struct("<4sIIII")


def fmt_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows, metadata: dict | None = None) -> None:
    """Write a CSV with optional ``# key=value`` metadata comment line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if metadata:
            items = " ".join(f"{k}={v}" for k, v in metadata.items())
            fh.write(f"# {items}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [fmt_float(v) if isinstance(v, float) else v for v in row]
            )


def write_reservoir(path: Path, res: Reservoir) -> None:
    n, width = res.beta.shape
    T = res.z.shape[1]
    records = np.empty((n, width + 2 + T), dtype="<f8")
    records[:, :width] = res.beta
    records[:, width] = res.gamma
    records[:, width + 1] = res.sigma2
    records[:, width + 2 :] = res.z
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, res.site_id, T, width - 1, n))
        fh.write(records.tobytes())


def read_reservoir(path: Path) -> Reservoir:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise StorageError(f"truncated reservoir header in {path}")
        magic, version, site_id, T, P, n = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise StorageError(f"bad magic {magic!r} in {path}")
        if version != _VERSION:
            raise StorageError(f"unsupported reservoir version {version}")
        width = P + 3 + T
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * width:
        raise StorageError(f"reservoir payload size mismatch in {path}")
    records = data.reshape(n, width)
    return Reservoir(
        site_id=site_id,
        beta=records[:, : P + 1].copy(),
        gamma=records[:, P + 1].copy(),
        sigma2=records[:, P + 2].copy(),
        z=records[:, P + 3 :].copy(),
    )


def reservoir_to_csv(path: Path, res: Reservoir) -> None:
    P = res.beta.shape[1] - 1
    T = res.z.shape[1]
    header = (
        [f"beta_{p}" for p in range(P + 1)]
        + ["gamma", "sigma2"]
        + [f"z_{t}" for t in range(1, T + 1)]
    )
    rows = (
        [float(v) for v in res.beta[k]]
        + [float(res.gamma[k]), float(res.sigma2[k])]
        + [float(v) for v in res.z[k]]
        for k in range(res.n_draws)
    )
    write_csv(path, header, rows)


@dataclass
class VarReservoir:
    """Stored draws of the covariate VAR parameters for one site."""

    site_id: int
    delta: np.ndarray  # (n_draws, J)
    sigma: np.ndarray  # (n_draws, J, J)

    @property
    def n_draws(self) -> int:
        return self.delta.shape[0]


def write_var_reservoir(path: Path, res: VarReservoir) -> None:
    n, J = res.delta.shape
    tril = np.tril_indices(J)
    records = np.empty((n, J + tril[0].size), dtype="<f8")
    records[:, :J] = res.delta
    records[:, J:] = res.sigma[:, tril[0], tril[1]]
    with open(path, "wb") as fh:
        fh.write(_VAR_HEADER.pack(_VAR_MAGIC, _VERSION, res.site_id, J, n))
        fh.write(records.tobytes())


def read_var_reservoir(path: Path) -> VarReservoir:
    with open(path, "rb") as fh:
        head = fh.read(_VAR_HEADER.size)
        if len(head) != _VAR_HEADER.size:
            raise StorageError(f"truncated VAR reservoir header in {path}")
        magic, version, site_id, J, n = _VAR_HEADER.unpack(head)
        if magic != _VAR_MAGIC:
            raise StorageError(f"bad magic {magic!r} in {path}")
        if version != _VERSION:
            raise StorageError(f"unsupported VAR reservoir version {version}")
        width = J + J * (J + 1) // 2
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * width:
        raise StorageError(f"VAR reservoir payload size mismatch in {path}")
    records = data.reshape(n, width)
    delta = records[:, :J].copy()
    sigma = np.zeros((n, J, J))
    tril = np.tril_indices(J)
    sigma[:, tril[0], tril[1]] = records[:, J:]
    upper = np.triu_indices(J, k=1)
    sigma[:, upper[0], upper[1]] = sigma[:, upper[1], upper[0]]
    return VarReservoir(site_id=site_id, delta=delta, sigma=sigma)


@dataclass
class DrawStore:
    """Retained draws of the full spatial model, all sites stacked.

    ``z`` is optional: memory-bound runs may retain only the parameter
    blocks.  Hyper draws are present for full-model samplers and None for
    per-site reservoir collections viewed as a store.
    """

    site_ids: np.ndarray  # (I,)
    beta: np.ndarray  # (M, I, P+1)
    gamma: np.ndarray  # (M, I)
    sigma2: np.ndarray  # (M, I)
    z: np.ndarray | None  # (M, I, T)
    hyper_sigma2_gamma: np.ndarray | None = None  # (M,)
    hyper_sigma2_p: np.ndarray | None = None  # (M, P+1)

    @property
    def n_draws(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_sites(self) -> int:
        return self.gamma.shape[1]

    def site_reservoir(self, k: int) -> Reservoir:
        """View site ``k`` (0-based position) as a Reservoir record block."""
        if self.z is None:
            z = np.zeros((self.n_draws, 0))
        else:
            z = self.z[:, k, :]
        return Reservoir(
            site_id=int(self.site_ids[k]),
            beta=self.beta[:, k, :],
            gamma=self.gamma[:, k],
            sigma2=self.sigma2[:, k],
            z=z,
        )


def write_draw_store(outdir: Path, store: DrawStore, metadata: dict | None = None) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for k in range(store.n_sites):
        write_reservoir(
            outdir / f"site_{int(store.site_ids[k]):05d}.tsr1", store.site_reservoir(k)
        )
    if store.hyper_sigma2_gamma is not None:
        n_p = store.hyper_sigma2_p.shape[1]
        header = ["iteration", "sigma2_gamma"] + [f"sigma2_p{p}" for p in range(n_p)]
        rows = (
            [m, float(store.hyper_sigma2_gamma[m])]
            + [float(v) for v in store.hyper_sigma2_p[m]]
            for m in range(store.n_draws)
        )
        write_csv(outdir / "hyper.csv", header, rows, metadata)


def read_draw_store(outdir: Path) -> DrawStore:
    outdir = Path(outdir)
    paths = sorted(outdir.glob("site_*.tsr1"))
    if not paths:
        raise StorageError(f"no site files found under {outdir}")
    reservoirs = [read_reservoir(p) for p in paths]
    n = {r.n_draws for r in reservoirs}
    if len(n) != 1:
        raise StorageError("sites disagree on the number of draws")
    beta = np.stack([r.beta for r in reservoirs], axis=1)
    gamma = np.stack([r.gamma for r in reservoirs], axis=1)
    sigma2 = np.stack([r.sigma2 for r in reservoirs], axis=1)
    z = np.stack([r.z for r in reservoirs], axis=1)
    if z.shape[2] == 0:
        z = None
    hyper_gamma = hyper_p = None
    hyper_path = outdir / "hyper.csv"
    if hyper_path.exists():
        with open(hyper_path, encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        body = np.array(rows[1:], dtype=float)
        hyper_gamma = body[:, 1]
        hyper_p = body[:, 2:]
    return DrawStore(
        site_ids=np.array([r.site_id for r in reservoirs]),
        beta=beta,
        gamma=gamma,
        sigma2=sigma2,
        z=z,
        hyper_sigma2_gamma=hyper_gamma,
        hyper_sigma2_p=hyper_p,
    )
