"""Panel CSV ingestion and emission.

Data schema (long format, header row required):
    site_id, week, y, x1..xP
Sites schema:
    site_id, row, col

Every (site, week) pair must appear exactly once with weeks contiguous
1..T; violations are rejected, never repaired.  Covariates are standardized
per column using training weeks only, and the constants are returned so
holdout rows can be mapped onto the same scale without leakage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IngestError
from .lattice import GridSpec
from .model import Cutoffs, SitePanel

__all__ = ["IngestResult", "ingest", "write_dataset_csv"]


@dataclass
class IngestResult:
    panels: list[SitePanel]  # training window, standardized design
    grid: list[GridSpec]
    x_mean: np.ndarray  # (P,)
    x_sd: np.ndarray  # (P,)
    y_full: np.ndarray  # (I, T) including holdout weeks
    x_std_full: np.ndarray  # (I, T, P+1) standardized design incl. holdout
    t_train: int

    @property
    def holdout_y(self) -> np.ndarray:
        return self.y_full[:, self.t_train :]


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, comment="#")
    except FileNotFoundError:
        raise IngestError(f"input file not found: {path}", code="INGEST_MISSING_FILE")
    except Exception as exc:  # malformed CSV
        raise IngestError(f"cannot parse {path}: {exc}") from exc


def ingest(
    data_csv: Path,
    sites_csv: Path,
    cutoffs: Cutoffs,
    t_train: int | None = None,
) -> IngestResult:
    """Load and validate the panel dataset; standardize covariates."""
    sites = _read_csv(sites_csv)
    for col in ("site_id", "row", "col"):
        if col not in sites.columns:
            raise IngestError(f"sites CSV missing column {col!r}")
    grid = [
        GridSpec(site_id=int(r.site_id), row=int(r.row), col=int(r.col))
        for r in sites.itertuples()
    ]
    grid.sort(key=lambda g: g.site_id)
    ids = [g.site_id for g in grid]
    if ids != list(range(1, len(grid) + 1)):
        raise IngestError("site_id values must be contiguous 1..I")

    data = _read_csv(data_csv)
    base_cols = ["site_id", "week", "y"]
    for col in base_cols:
        if col not in data.columns:
            raise IngestError(f"data CSV missing column {col!r}")
    x_cols = [c for c in data.columns if c not in base_cols]
    expected = [f"x{p}" for p in range(1, len(x_cols) + 1)]
    if x_cols != expected:
        raise IngestError(f"covariate columns must be x1..xP in order, got {x_cols}")
    P = len(x_cols)

    dup = data.duplicated(subset=["site_id", "week"])
    if dup.any():
        first = data.loc[dup, ["site_id", "week"]].iloc[0]
        raise IngestError(
            f"duplicate (site, week) row: site {int(first.site_id)} week {int(first.week)}",
            code="INGEST_DUPLICATE_ROW",
        )

    I = len(grid)
    weeks = np.sort(data["week"].unique())
    T = weeks.size
    if not np.array_equal(weeks, np.arange(1, T + 1)):
        raise IngestError(
            "weeks must be contiguous 1..T", code="INGEST_NONCONTIGUOUS_WEEKS"
        )
    if len(data) != I * T:
        raise IngestError(
            f"expected {I * T} rows (I*T), found {len(data)}; missing cells",
            code="INGEST_MISSING_CELL",
        )
    if set(data["site_id"].unique()) != set(ids):
        raise IngestError("data and sites files disagree on site ids")

    data = data.sort_values(["site_id", "week"], kind="mergesort")
    per_site = data.groupby("site_id", sort=True)["week"].count()
    if per_site.nunique() != 1:
        raise IngestError(
            "weeks must be contiguous 1..T per site", code="INGEST_NONCONTIGUOUS_WEEKS"
        )

    y = data["y"].to_numpy()
    if not np.all(np.equal(np.mod(y, 1), 0)):
        raise IngestError("y must be integer levels", code="INGEST_Y_RANGE")
    y = y.astype(np.int64).reshape(I, T)
    if y.min() < 0 or y.max() > cutoffs.J:
        raise IngestError(
            f"y outside 0..{cutoffs.J}: found range [{y.min()}, {y.max()}]",
            code="INGEST_Y_RANGE",
        )

    x_raw = data[x_cols].to_numpy(dtype=float).reshape(I, T, P)
    if not np.all(np.isfinite(x_raw)):
        raise IngestError("non-finite covariate values")

    t_train = T if t_train is None else t_train
    if not 1 <= t_train <= T:
        raise IngestError(f"t_train must lie in 1..{T}")

    if P:
        train = x_raw[:, :t_train, :].reshape(-1, P)
        x_mean = train.mean(axis=0)
        x_sd = train.std(axis=0, ddof=0)
        zero = np.flatnonzero(x_sd == 0)
        if zero.size:
            raise IngestError(
                f"zero-variance covariate column(s): {[x_cols[i] for i in zero]}",
                code="INGEST_ZERO_VARIANCE",
            )
        x_std = (x_raw - x_mean) / x_sd
    else:
        x_mean = np.zeros(0)
        x_sd = np.ones(0)
        x_std = x_raw

    design = np.concatenate([np.ones((I, T, 1)), x_std], axis=2)
    panels = [
        SitePanel(site_id=ids[i], y=y[i, :t_train], x=design[i, :t_train])
        for i in range(I)
    ]
    return IngestResult(
        panels=panels,
        grid=grid,
        x_mean=x_mean,
        x_sd=x_sd,
        y_full=y,
        x_std_full=design,
        t_train=t_train,
    )


def write_dataset_csv(
    data_path: Path,
    sites_path: Path,
    grid: list[GridSpec],
    y: np.ndarray,
    x_raw: np.ndarray,
) -> None:
    """Emit a dataset in the exact schema ``ingest`` accepts."""
    I, T = y.shape
    P = x_raw.shape[2]
    with open(sites_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["site_id", "row", "col"])
        for g in sorted(grid, key=lambda s: s.site_id):
            writer.writerow([g.site_id, g.row, g.col])
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["site_id", "week", "y"] + [f"x{p}" for p in range(1, P + 1)])
        for i in range(I):
            for t in range(T):
                writer.writerow(
                    [i + 1, t + 1, int(y[i, t])]
                    + [repr(float(v)) for v in x_raw[i, t]]
                )
