"""Run configuration: JSON file plus command-line overrides (flags win)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import Cutoffs, Stage1Prior
from .stage1 import ChainConfig

__all__ = ["RunConfig", "load_config_file", "config_hash"]

_DEFAULT_CHAINS = {
    "stage1": dict(iterations=20000, burn_in=4000, thin=8, seed=1),
    "stage2": dict(iterations=20000, burn_in=4000, thin=4, seed=2),
    "single_stage": dict(iterations=20000, burn_in=4000, thin=4, seed=3),
    "var_stage1": dict(iterations=4000, burn_in=1000, thin=3, seed=4),
    "var_stage2": dict(iterations=20000, burn_in=4000, thin=4, seed=5),
}


@dataclass
class RunConfig:
    """Resolved settings for one pipeline run."""

    data_csv: str = "data.csv"
    sites_csv: str = "sites.csv"
    outdir: str = "out"
    j_cutoffs: int = 5
    t_train: int | None = None
    workers: int = 1
    horizon: int = 13
    prior_xi: float = 3.0
    prior_ig_shape: float = 0.5
    prior_ig_scale: float = 0.5
    chains: dict = field(default_factory=lambda: json.loads(json.dumps(_DEFAULT_CHAINS)))

    def cutoffs(self) -> Cutoffs:
        return Cutoffs(self.j_cutoffs)

    def stage1_prior(self, n_covariates: int) -> Stage1Prior:
        return Stage1Prior(
            xi=np.full(n_covariates + 1, self.prior_xi),
            ig_shape=self.prior_ig_shape,
            ig_scale=self.prior_ig_scale,
        )

    def chain(self, name: str) -> ChainConfig:
        if name not in self.chains:
            raise ConfigError(f"no chain settings named {name!r}")
        c = self.chains[name]
        return ChainConfig(
            iterations=int(c["iterations"]),
            burn_in=int(c["burn_in"]),
            thin=int(c.get("thin", 1)),
            seed=int(c.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def load_config_file(path: Path | None) -> RunConfig:
    """Build a RunConfig from a JSON file; missing keys keep defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    for key, value in raw.items():
        if key == "chains":
            if not isinstance(value, dict):
                raise ConfigError("'chains' must be an object")
            for name, settings in value.items():
                if name not in cfg.chains:
                    raise ConfigError(f"unknown chain section {name!r}")
                cfg.chains[name].update(settings)
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return cfg


def config_hash(cfg: RunConfig) -> str:
    """Stable short hash of the statistical configuration.

    Filesystem paths are excluded so identical runs hash identically no
    matter where inputs and outputs live.
    """
    payload = {
        k: v
        for k, v in cfg.to_dict().items()
        if k not in ("data_csv", "sites_csv", "outdir")
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
