"""Command-line pipeline: simulate, fit, forecast, diagnose.

Every command accepts ``--config config.json`` for defaults with flags
winning on conflict, writes a ``run_manifest.json`` (command, seed, config
hash) next to its outputs, and records wall time in ``timing.json``; the
timing file is the only output that is not byte-reproducible.  Failures
exit nonzero after printing a single machine-parsable line::

    error code=<CODE> msg="<human message>"
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, config_hash, load_config_file
from .covariates import (
    FourierFit,
    N_FOURIER_TERMS,
    fit_fourier_detrend,
    run_var_stage1_all,
    var_stage2,
)
from .diagnostics import compare_stores, summarize_store
from .errors import IngestError, OrdLatticeError
from .forecast import (
    forecast_drought,
    posterior_median_levels,
    rmse,
    within_one_probability,
)
from .ingest import ingest, write_dataset_csv
from .lattice import build_queen_adjacency, make_grid
from .single_stage import run_single_stage
from .stage1 import run_stage1_all
from .stage2 import run_stage2
from .storage import (
    VarReservoir,
    read_draw_store,
    read_reservoir,
    read_var_reservoir,
    reservoir_to_csv,
    write_csv,
    write_draw_store,
    write_reservoir,
    write_var_reservoir,
)
from .synthetic import TruthSpec, simulate_dataset

__all__ = ["main"]


def _write_manifest(outdir: Path, command: str, cfg: RunConfig) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "config_hash": config_hash(cfg),
        "config": cfg.to_dict(),
    }
    with open(outdir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_timing(outdir: Path, seconds: float) -> None:
    with open(outdir / "timing.json", "w", encoding="utf-8") as fh:
        json.dump({"wall_seconds": seconds}, fh)
        fh.write("\n")


def _meta(cfg: RunConfig, seed: int) -> dict:
    return {"config_hash": config_hash(cfg), "seed": seed}


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config_file(getattr(args, "config", None))
    for key in ("data_csv", "sites_csv", "outdir", "j_cutoffs", "t_train", "workers", "horizon"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    chain_name = getattr(args, "chain_section", None)
    if chain_name:
        for flag, field in (
            ("iters", "iterations"),
            ("burnin", "burn_in"),
            ("thin", "thin"),
            ("seed", "seed"),
        ):
            value = getattr(args, flag, None)
            if value is not None:
                cfg.chains[chain_name][field] = value
    return cfg


def _load_reservoirs(path: Path) -> dict:
    files = sorted(Path(path).glob("site_*.tsr1"))
    if not files:
        raise IngestError(f"no reservoir files under {path}", code="EMPTY_RESERVOIR")
    pools = [read_reservoir(p) for p in files]
    return {r.site_id: r for r in pools}


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    grid = make_grid(args.rows, args.cols)
    graph = build_queen_adjacency(grid)
    rng = np.random.default_rng(args.seed)
    spec = TruthSpec.default(args.covariates)
    data = simulate_dataset(
        graph,
        args.weeks,
        args.covariates,
        cfg.cutoffs(),
        spec,
        rng,
        t_train=cfg.t_train,
    )
    write_dataset_csv(outdir / "data.csv", outdir / "sites.csv", grid, data.y, data.x_raw)
    data.truth.to_json(outdir / "truth.json")
    _write_manifest(outdir, "simulate", cfg)
    print(f"wrote synthetic dataset: {graph.n_sites} sites x {args.weeks} weeks")
    return 0


def _cmd_stage1(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    loaded = ingest(Path(cfg.data_csv), Path(cfg.sites_csv), cfg.cutoffs(), cfg.t_train)
    prior = cfg.stage1_prior(loaded.panels[0].P)
    chain = cfg.chain("stage1")
    start = time.perf_counter()
    result = run_stage1_all(loaded.panels, cfg.cutoffs(), prior, chain, cfg.workers)
    elapsed = time.perf_counter() - start
    for site_id, res in sorted(result.reservoirs.items()):
        write_reservoir(outdir / f"site_{site_id:05d}.tsr1", res)
        if args.csv:
            reservoir_to_csv(outdir / f"site_{site_id:05d}.csv", res)
    _write_manifest(outdir, "stage1", cfg)
    _write_timing(outdir, elapsed)
    if result.failures:
        with open(outdir / "failures.json", "w", encoding="utf-8") as fh:
            json.dump(result.failures, fh, sort_keys=True)
        print(
            f"error code=STAGE1_PARTIAL msg=\"{len(result.failures)} site(s) failed; "
            f"see failures.json\"",
            file=sys.stderr,
        )
        return 1
    print(f"stage one complete: {len(result.reservoirs)} reservoirs in {elapsed:.1f}s")
    return 0


def _cmd_stage2(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg.outdir)
    loaded = ingest(Path(cfg.data_csv), Path(cfg.sites_csv), cfg.cutoffs(), cfg.t_train)
    graph = build_queen_adjacency(loaded.grid)
    reservoirs = _load_reservoirs(Path(args.reservoirs))
    prior = cfg.stage1_prior(loaded.panels[0].P)
    chain = cfg.chain("stage2")
    start = time.perf_counter()
    result = run_stage2(loaded.panels, reservoirs, graph, chain, prior)
    elapsed = time.perf_counter() - start
    meta = _meta(cfg, chain.seed)
    write_draw_store(outdir, result.store, meta)
    write_csv(
        outdir / "acceptance.csv",
        ["site_id", "proposed", "accepted"],
        (
            [int(s), int(p), int(a)]
            for s, p, a in zip(
                result.store.site_ids, result.acceptance.proposed, result.acceptance.accepted
            )
        ),
        meta,
    )
    _write_manifest(outdir, "stage2", cfg)
    _write_timing(outdir, elapsed)
    rates = result.acceptance.rates()
    print(
        f"stage two complete: {result.store.n_draws} retained draws, "
        f"median acceptance {np.nanmedian(rates):.3f}, {elapsed:.1f}s"
    )
    return 0


def _cmd_single_stage(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg.outdir)
    loaded = ingest(Path(cfg.data_csv), Path(cfg.sites_csv), cfg.cutoffs(), cfg.t_train)
    graph = build_queen_adjacency(loaded.grid)
    chain = cfg.chain("single_stage")
    start = time.perf_counter()
    result = run_single_stage(
        loaded.panels, cfg.cutoffs(), graph, chain, force=args.force
    )
    elapsed = time.perf_counter() - start
    write_draw_store(outdir, result.store, _meta(cfg, chain.seed))
    _write_manifest(outdir, "single-stage", cfg)
    _write_timing(outdir, elapsed)
    print(
        f"single-stage run complete: {result.store.n_draws} retained draws in {elapsed:.1f}s"
    )
    return 0


def _cmd_covfit(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    loaded = ingest(Path(cfg.data_csv), Path(cfg.sites_csv), cfg.cutoffs(), cfg.t_train)
    graph = build_queen_adjacency(loaded.grid)
    if loaded.panels[0].P == 0:
        raise IngestError("covariate model needs at least one covariate column")

    start = time.perf_counter()
    fits: dict[int, FourierFit] = {}
    detrended: dict[int, np.ndarray] = {}
    for panel in loaded.panels:
        fit, resid = fit_fourier_detrend(panel.x[:, 1:])
        fits[panel.site_id] = fit
        detrended[panel.site_id] = resid
    var1 = cfg.chain("var_stage1")
    reservoirs, failures = run_var_stage1_all(detrended, var1, cfg.workers)
    if failures:
        raise IngestError(f"VAR stage one failed for sites {sorted(failures)}")
    var2 = cfg.chain("var_stage2")
    result = var_stage2(reservoirs, graph, var2)
    elapsed = time.perf_counter() - start

    meta = _meta(cfg, var2.seed)
    for k, site_id in enumerate(result.site_ids):
        write_var_reservoir(
            outdir / f"var_site_{int(site_id):05d}.tvr1",
            VarReservoir(
                site_id=int(site_id), delta=result.delta[:, k], sigma=result.sigma[:, k]
            ),
        )
    n_series = result.delta.shape[2]
    write_csv(
        outdir / "fourier.csv",
        ["site_id", "covariate"] + [f"zeta_{k}" for k in range(N_FOURIER_TERMS)],
        (
            [sid, j] + [float(v) for v in fits[sid].coef[j]]
            for sid in sorted(fits)
            for j in range(n_series)
        ),
        meta,
    )
    write_csv(
        outdir / "detrended_last.csv",
        ["site_id"] + [f"xtilde_{j}" for j in range(1, n_series + 1)],
        ([sid] + [float(v) for v in detrended[sid][-1]] for sid in sorted(detrended)),
        meta,
    )
    write_csv(
        outdir / "var_hyper.csv",
        ["iteration"] + [f"sigma2_delta{j}" for j in range(1, n_series + 1)],
        ([m] + [float(v) for v in result.hyper[m]] for m in range(result.hyper.shape[0])),
        meta,
    )
    write_csv(
        outdir / "var_acceptance.csv",
        ["site_id", "proposed", "accepted"],
        (
            [int(s), int(p), int(a)]
            for s, p, a in zip(result.site_ids, result.proposed, result.accepted)
        ),
        meta,
    )
    _write_manifest(outdir, "covfit", cfg)
    _write_timing(outdir, elapsed)
    print(f"covariate model fit: {result.delta.shape[0]} retained draws in {elapsed:.1f}s")
    return 0


def _read_fourier_csv(path: Path, n_series: int) -> dict[int, FourierFit]:
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    coefs: dict[int, np.ndarray] = {}
    for row in rows[1:]:
        sid, j = int(row[0]), int(row[1])
        coefs.setdefault(sid, np.zeros((n_series, N_FOURIER_TERMS)))
        coefs[sid][j] = [float(v) for v in row[2:]]
    return {sid: FourierFit(coef=c) for sid, c in coefs.items()}


def _cmd_forecast(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    loaded = ingest(Path(cfg.data_csv), Path(cfg.sites_csv), cfg.cutoffs(), cfg.t_train)
    store = read_draw_store(Path(args.stage2_dir))
    var_files = sorted(Path(args.covfit_dir).glob("var_site_*.tvr1"))
    if not var_files:
        raise IngestError(f"no VAR draws under {args.covfit_dir}")
    var_pools = [read_var_reservoir(p) for p in var_files]
    var_delta = np.stack([p.delta for p in var_pools], axis=1)
    var_sigma = np.stack([p.sigma for p in var_pools], axis=1)
    n_series = var_delta.shape[2]

    fits_by_id = _read_fourier_csv(Path(args.covfit_dir) / "fourier.csv", n_series)
    with open(Path(args.covfit_dir) / "detrended_last.csv", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    last_det = {int(r[0]): [float(v) for v in r[1:]] for r in rows[1:]}

    site_ids = [int(s) for s in store.site_ids]
    fits = [fits_by_id[s] for s in site_ids]
    last_detrended = np.array([last_det[s] for s in site_ids])
    pos = {g.site_id: k for k, g in enumerate(loaded.grid)}
    last_x_row = np.stack(
        [loaded.x_std_full[pos[s], loaded.t_train - 1, :] for s in site_ids]
    )

    rng = np.random.default_rng(args.seed)
    start = time.perf_counter()
    draws = forecast_drought(
        store,
        var_delta,
        var_sigma,
        fits,
        last_detrended,
        last_x_row,
        loaded.t_train,
        cfg.horizon,
        cfg.cutoffs(),
        rng,
    )
    elapsed = time.perf_counter() - start

    meta = _meta(cfg, args.seed)
    write_csv(
        outdir / "forecast.csv",
        ["draw", "site_id", "horizon", "z", "y"],
        (
            [m, site_ids[i], h + 1, float(draws.z[m, i, h]), int(draws.y[m, i, h])]
            for m in range(draws.y.shape[0])
            for i in range(draws.y.shape[1])
            for h in range(draws.horizon)
        ),
        meta,
    )

    holdout = loaded.holdout_y
    if holdout.shape[1] >= cfg.horizon:
        holdout = holdout[:, : cfg.horizon]
        per_site, mean_prob = within_one_probability(draws, holdout)
        medians = posterior_median_levels(draws)
        per_h_rmse = rmse(medians.astype(float), holdout.astype(float))
        write_csv(
            outdir / "metrics_site.csv",
            ["site_id", "horizon", "within_one_prob"],
            (
                [site_ids[i], h + 1, float(per_site[i, h])]
                for i in range(per_site.shape[0])
                for h in range(per_site.shape[1])
            ),
            meta,
        )
        write_csv(
            outdir / "metrics_horizon.csv",
            ["horizon", "mean_within_one_prob", "rmse"],
            (
                [h + 1, float(mean_prob[h]), float(per_h_rmse[h])]
                for h in range(cfg.horizon)
            ),
            meta,
        )
    _write_manifest(outdir, "forecast", cfg)
    _write_timing(outdir, elapsed)
    print(f"forecast complete: {draws.y.shape[0]} draws x horizon {draws.horizon}")
    return 0


def _cmd_diagnose(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    store = read_draw_store(Path(args.store))
    wall = args.wall_seconds
    timing = Path(args.store) / "timing.json"
    if wall is None and timing.exists():
        with open(timing, encoding="utf-8") as fh:
            wall = json.load(fh).get("wall_seconds")
    summary = summarize_store(store, wall_seconds=wall)
    write_csv(
        outdir / "summary.csv",
        ["site_id", "parameter", "mean", "sd", "ess", "mcse"],
        (
            [r.site_id, r.parameter, r.mean, r.sd, r.ess, r.mcse]
            for r in summary.rows
        ),
    )
    ess = summary.class_average_ess()
    per_hour = summary.ess_per_hour()
    write_csv(
        outdir / "ess_by_class.csv",
        ["parameter", "avg_ess", "ess_per_hour"],
        (
            [name, float(ess[name]), float(per_hour[name]) if per_hour else ""]
            for name in sorted(ess)
        ),
    )
    if args.compare is not None:
        other = summarize_store(read_draw_store(Path(args.compare)))
        rows = compare_stores(summary, other)
        write_csv(
            outdir / "compare.csv",
            ["site_id", "parameter", "mean_a", "mean_b", "diff", "combined_mcse"],
            (
                [r["site_id"], r["parameter"], r["mean_a"], r["mean_b"], r["diff"], r["combined_mcse"]]
                for r in rows
            ),
        )
        worst = max((abs(r["diff"]) for r in rows), default=0.0)
        print(f"comparison written; max |mean difference| = {worst:.6g}")
    print(f"diagnostics written to {outdir}")
    return 0


def _add_common(p: argparse.ArgumentParser, chain_section: str | None = None) -> None:
    p.add_argument("--config", type=Path, default=None, help="JSON config file")
    p.add_argument("--data", dest="data_csv", default=None, help="panel data CSV")
    p.add_argument("--sites", dest="sites_csv", default=None, help="sites CSV")
    p.add_argument("--outdir", default=None, help="output directory")
    p.add_argument("--levels", dest="j_cutoffs", type=int, default=None,
                   help="number of finite cutoffs J (J+1 ordinal levels)")
    p.add_argument("--t-train", dest="t_train", type=int, default=None,
                   help="training weeks (rest is holdout)")
    p.set_defaults(chain_section=chain_section)
    if chain_section is not None:
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--burnin", type=int, default=None)
        p.add_argument("--thin", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ordlattice",
        description="Two-stage MCMC for spatio-temporal ordinal lattice data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    _add_common(p)
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--weeks", type=int, default=120)
    p.add_argument("--covariates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("stage1", help="parallel per-site chains -> reservoirs")
    _add_common(p, "stage1")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--csv", action="store_true", help="also export reservoirs as CSV")
    p.set_defaults(func=_cmd_stage1)

    p = sub.add_parser("stage2", help="spatial resampling over reservoirs")
    _add_common(p, "stage2")
    p.add_argument("--reservoirs", required=True, help="stage one output directory")
    p.set_defaults(func=_cmd_stage2)

    p = sub.add_parser("single-stage", help="direct sampler (desk-scale oracle)")
    _add_common(p, "single_stage")
    p.add_argument("--force", action="store_true", help="override the size guard")
    p.set_defaults(func=_cmd_single_stage)

    p = sub.add_parser("covfit", help="seasonal detrend + spatial VAR fit")
    _add_common(p, "var_stage2")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_covfit)

    p = sub.add_parser("forecast", help="posterior-predictive level forecasts")
    _add_common(p)
    p.add_argument("--stage2-dir", required=True)
    p.add_argument("--covfit-dir", required=True)
    p.add_argument("--horizon", dest="horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("diagnose", help="chain summaries and store comparison")
    _add_common(p)
    p.add_argument("--store", required=True, help="draw store directory")
    p.add_argument("--compare", default=None, help="second store to compare against")
    p.add_argument("--wall-seconds", type=float, default=None)
    p.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OrdLatticeError as exc:
        print(f'error code={exc.code} msg="{exc}"', file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
