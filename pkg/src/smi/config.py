"""TOML run configuration for the command-line front end.

Layout (every table optional except where a model needs it)::

    model = "gaussian-biased"        # or "hpv", "custom"
    seed = 0
    threads = 1
    out = "out"
    replicates = 1

    [hyper]      # gaussian: sigma_z, sigma_y, sigma_phi ("inf" = flat), sigma_theta, sigma_theta_tilde
                 # hpv: theta_sd, phi_a, phi_b
    [truth]      # gaussian: phi_star, theta_star; hpv: theta1, theta2, phi = [...]
    [data]       # simulate = {n = 25, m = 50} | {T = [...], N = [...]}
                 # or z_csv + y_csv (gaussian), csv (hpv); custom models supply their own data
    [chain]      # n1, n2, burnin, thin, proposal_scales, stage2_scales, tune, stage2_mode
    [eta]        # grid = [...] or points = 21; smoothing = "none" | "moving-average"; window = 3
    [scorer]     # kind = "waic" | "exact"; target; sampler = "nested" | "closed-form"; n_draws; n_mc
    [custom]     # factory = "package.module:callable"; options = {...}
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from smi.errors import ConfigError
from smi.eval import TARGETS, default_grid
from smi.gaussian import GaussianHyper, TrueGenerative
from smi.mcmc import ChainConfig
from smi.model import check_eta
from smi.zoo import HpvParams, HpvPrior

MODELS = ("gaussian-biased", "hpv", "custom")
RNG_NAME = "numpy PCG64 (SeedSequence-derived streams)"
TOP_KEYS = {"model", "seed", "threads", "out", "replicates", "hyper", "truth", "data", "chain", "eta", "scorer", "custom"}


@dataclass
class ScorerConfig:
    kind: str = "exact"
    target: str = "pair"
    sampler: str = "closed-form"
    n_draws: int = 4000
    n_mc: int = 10_000


@dataclass
class RunConfig:
    model: str = "gaussian-biased"
    seed: int = 0
    threads: int = 1
    out: Path = Path("out")
    replicates: int = 1
    hyper: dict = field(default_factory=dict)
    truth: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    chain: ChainConfig = field(default_factory=ChainConfig)
    grid: list = field(default_factory=default_grid)
    smoothing: Optional[str] = None
    window: int = 3
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    custom: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def gaussian_hyper(self) -> GaussianHyper:
        values = {k: (math.inf if v == "inf" else v) for k, v in self.hyper.items()}
        return _build(GaussianHyper, values, "hyper")

    def gaussian_truth(self) -> TrueGenerative:
        return _build(TrueGenerative, self.truth, "truth")

    def hpv_prior(self) -> HpvPrior:
        return _build(HpvPrior, self.hyper, "hyper")

    def hpv_truth(self) -> HpvParams:
        values = dict(self.truth)
        if "phi" not in values:
            raise ConfigError("hpv truth needs theta1, theta2 and a phi list")
        return _build(HpvParams, values, "truth")

    def path(self, key: str) -> Path:
        p = Path(self.data[key])
        return p if p.is_absolute() else self.base_dir / p

    def effective(self) -> dict:
        """Fully resolved configuration, defaults included, as plain JSON-ready values."""
        chain = asdict(self.chain)
        chain["proposal_scales"] = list(chain["proposal_scales"])
        if chain["stage2_scales"] is not None:
            chain["stage2_scales"] = list(chain["stage2_scales"])
        doc = {
            "model": self.model,
            "seed": self.seed,
            "rng": RNG_NAME,
            "threads": self.threads,
            "replicates": self.replicates,
            "chain": chain,
            "eta": {"grid": list(self.grid), "smoothing": self.smoothing or "none", "window": self.window},
            "scorer": asdict(self.scorer),
            "data": dict(self.data),
        }
        if self.model == "gaussian-biased":
            hyper = asdict(self.gaussian_hyper())
            doc["hyper"] = {k: ("inf" if v == math.inf else v) for k, v in hyper.items()}
            doc["truth"] = asdict(self.gaussian_truth())
        elif self.model == "hpv":
            doc["hyper"] = asdict(self.hpv_prior())
            doc["truth"] = dict(self.truth)
        else:
            doc["custom"] = dict(self.custom)
        return doc


def _build(cls, values: dict, section: str):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _grid(section: dict) -> list:
    if "grid" in section and "points" in section:
        raise ConfigError("[eta] takes either grid or points, not both")
    if "grid" in section:
        try:
            grid = sorted(check_eta(e) for e in section["grid"])
        except ValueError as exc:
            raise ConfigError(f"[eta] grid: {exc}") from None
    else:
        points = int(section.get("points", 21))
        if points < 2:
            raise ConfigError("[eta] points must be at least 2")
        grid = default_grid(points)
    if len(set(grid)) != len(grid) or grid[0] != 0.0 or grid[-1] != 1.0:
        raise ConfigError("[eta] grid must be distinct values in [0, 1] including 0 and 1")
    return grid


def _check_data(cfg: RunConfig):
    data = cfg.data
    if cfg.model == "custom":
        if data:
            raise ConfigError("custom models supply their own data; remove the [data] table")
        if "factory" not in cfg.custom:
            raise ConfigError("[custom] needs a factory = 'module:callable' entry")
        return
    files = {"gaussian-biased": ("z_csv", "y_csv"), "hpv": ("csv",)}[cfg.model]
    has_sim = "simulate" in data
    has_files = any(k in data for k in files)
    if has_sim == has_files:
        raise ConfigError(f"[data] needs exactly one source: simulate or {' + '.join(files)}")
    unknown = set(data) - {"simulate", *files}
    if unknown:
        raise ConfigError(f"[data] has unknown keys {sorted(unknown)}")
    if has_files:
        for key in files:
            if key not in data:
                raise ConfigError(f"[data] is missing {key}")
            p = cfg.path(key)
            if not p.is_file():
                raise ConfigError(f"[data] {key}: cannot read {p}")


def parse_config(doc: dict, base_dir=".", seed=None, out=None, threads=None) -> RunConfig:
    """Validate a parsed TOML document; command-line overrides win over file values."""
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    model = doc.get("model", "gaussian-biased")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    seed = int(doc.get("seed", 0) if seed is None else seed)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    threads = int(doc.get("threads", 1) if threads is None else threads)
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    replicates = int(doc.get("replicates", 1))
    if replicates < 1:
        raise ConfigError("replicates must be at least 1")

    chain_doc = dict(doc.get("chain", {}))
    for key in ("proposal_scales", "stage2_scales"):
        if key in chain_doc:
            chain_doc[key] = tuple(float(v) for v in chain_doc[key])
    chain = _build(ChainConfig, {**chain_doc, "seed": seed}, "chain")

    eta = dict(doc.get("eta", {}))
    smoothing = eta.get("smoothing", "none")
    if smoothing not in ("none", "moving-average"):
        raise ConfigError("[eta] smoothing must be 'none' or 'moving-average'")
    window = int(eta.get("window", 3))
    if window < 1 or window % 2 == 0:
        raise ConfigError("[eta] window must be a positive odd integer")

    scorer = _build(ScorerConfig, dict(doc.get("scorer", {})), "scorer")
    if scorer.kind not in ("waic", "exact"):
        raise ConfigError("[scorer] kind must be 'waic' or 'exact'")
    if scorer.target not in TARGETS:
        raise ConfigError(f"[scorer] target must be one of {TARGETS}")
    if scorer.sampler not in ("nested", "closed-form"):
        raise ConfigError("[scorer] sampler must be 'nested' or 'closed-form'")
    if model != "gaussian-biased" and (scorer.kind == "exact" or scorer.sampler == "closed-form"):
        raise ConfigError("exact elpd and closed-form sampling exist only for the gaussian-biased model")

    cfg = RunConfig(
        model=model,
        seed=seed,
        threads=threads,
        out=Path(out if out is not None else doc.get("out", "out")),
        replicates=replicates,
        hyper=dict(doc.get("hyper", {})),
        truth=dict(doc.get("truth", {})),
        data=dict(doc.get("data", {})),
        chain=chain,
        grid=_grid(eta),
        smoothing=None if smoothing == "none" else smoothing,
        window=window,
        scorer=scorer,
        custom=dict(doc.get("custom", {})),
        base_dir=Path(base_dir),
    )
    _check_data(cfg)
    if model == "gaussian-biased":
        cfg.gaussian_hyper()
        cfg.gaussian_truth()
    elif model == "hpv":
        cfg.hpv_prior()
        if "simulate" in cfg.data:
            cfg.hpv_truth()
    return cfg


def load_config(path, seed=None, out=None, threads=None) -> RunConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(doc, path.parent, seed, out, threads)
