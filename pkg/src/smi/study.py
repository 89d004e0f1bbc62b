"""Replicate simulation study of eta selection on the biased-data Gaussian model.

Each replicate simulates a dataset, sweeps eta with the closed-form posterior
and exact elpd, picks eta*, and records posterior squared errors. Aggregates
in :class:`StudyReport` are recomputed from the per-replicate records only.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from smi.errors import ContractError
from smi.eval import ExactElpdScorer, default_grid, eta_sweep, select_eta
from smi.gaussian import GaussianHyper, TrueGenerative, gaussian_data, gaussian_model, simulate_dataset
from smi.gaussian import smi_posterior_moments, squared_errors
from smi.mcmc import ChainConfig

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12
REPLICATE_COLUMNS = ("replicate", "z_bar", "y_bar", "eta_star", "se_phi_cut", "se_phi_bayes", "se_phi_star", "status")
CURVE_COLUMNS = ("replicate", "eta", "neg_elpd", "se_phi", "se_theta", "se_theta_tilde")


@dataclass(frozen=True)
class StudyConfig:
    hyper: GaussianHyper = GaussianHyper()
    truth: TrueGenerative = TrueGenerative()
    n: int = 25
    m: int = 50
    grid: tuple = tuple(default_grid())
    replicates: int = 1000
    n_mc: int = 10_000
    seed: int = 0
    smoothing: Optional[str] = None
    window: int = 3

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ContractError("replicate count must be at least 1")


@dataclass
class ReplicateRecord:
    replicate: int
    z_bar: float
    y_bar: float
    eta_star: float
    se_phi_cut: float
    se_phi_bayes: float
    se_phi_star: float
    etas: np.ndarray
    neg_elpd: np.ndarray
    se: np.ndarray  # shape (J, 3): phi, theta, theta_tilde
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def replicate_seeds(master_seed: int, replicate: int):
    """(data seed, Monte Carlo seed) for one replicate, independent of scheduling."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replicate),))
    data_seed, mc_seed = seq.generate_state(2, np.uint64)
    return int(data_seed), int(mc_seed)


def run_replicate(cfg: StudyConfig, replicate: int) -> ReplicateRecord:
    data_seed, mc_seed = replicate_seeds(cfg.seed, replicate)
    z, y, stats = simulate_dataset(cfg.truth, cfg.hyper, cfg.n, cfg.m, data_seed)
    model = gaussian_model(cfg.hyper)
    scorer = ExactElpdScorer(stats, cfg.hyper, cfg.truth, cfg.n_mc, mc_seed)
    table = eta_sweep(model, gaussian_data(z, y), cfg.grid, ChainConfig(seed=data_seed), scorer)
    failed = [r for r in table.rows if not r.ok]
    if failed:
        raise RuntimeError(failed[0].status)
    eta_star, _ = select_eta(table, cfg.smoothing, cfg.window)
    errors = np.array([squared_errors(smi_posterior_moments(stats, cfg.hyper, e), cfg.truth) for e in table.etas])
    star = int(np.flatnonzero(table.etas == eta_star)[0])
    return ReplicateRecord(
        replicate=replicate,
        z_bar=stats.z_bar,
        y_bar=stats.y_bar,
        eta_star=eta_star,
        se_phi_cut=float(errors[0, 0]),
        se_phi_bayes=float(errors[-1, 0]),
        se_phi_star=float(errors[star, 0]),
        etas=table.etas,
        neg_elpd=-table.elpd,
        se=errors,
    )


def _safe_replicate(cfg, replicate):
    try:
        return run_replicate(cfg, replicate)
    except Exception as exc:  # excluded from aggregates, counted in the report
        logger.warning("replicate %d failed: %s", replicate, exc)
        nan = float("nan")
        return ReplicateRecord(replicate, nan, nan, nan, nan, nan, nan, np.array(cfg.grid, dtype=float),
                               np.full(len(cfg.grid), nan), np.full((len(cfg.grid), 3), nan),
                               f"failed: {type(exc).__name__}")


def _three_way(a, b):
    """Fractions of records where a < b, a == b and a > b, up to the tie tolerance."""
    a, b = np.asarray(a), np.asarray(b)
    win = int(np.sum(a < b - TIE_TOL))
    loss = int(np.sum(a > b + TIE_TOL))
    return {"win": win / a.size, "equal": (a.size - win - loss) / a.size, "loss": loss / a.size}


@dataclass
class StudyReport:
    records: list
    meta: dict = field(default_factory=dict)

    @property
    def good(self) -> list:
        return [r for r in self.records if r.ok]

    @property
    def n_failed(self) -> int:
        return len(self.records) - len(self.good)

    @property
    def etas(self) -> np.ndarray:
        return self.good[0].etas

    @property
    def eta_star(self) -> np.ndarray:
        return np.array([r.eta_star for r in self.good])

    @property
    def mean_neg_elpd(self) -> np.ndarray:
        return np.mean([r.neg_elpd for r in self.good], axis=0)

    @property
    def mse(self) -> np.ndarray:
        """Averaged squared errors per eta, shape (J, 3): phi, theta, theta_tilde."""
        return np.mean([r.se for r in self.good], axis=0)

    def fractions(self) -> dict:
        good = self.good
        if not good:
            raise ContractError("no successful replicates to summarise")
        stars = self.eta_star
        cut = [r.se_phi_cut for r in good]
        return {
            "interior": float(np.mean((stars > 0.0) & (stars < 1.0))),
            "smi_vs_cut": _three_way([r.se_phi_star for r in good], cut),
            "cut_vs_bayes": _three_way(cut, [r.se_phi_bayes for r in good]),
        }

    def summary(self) -> dict:
        return {
            "replicates": len(self.records),
            "failed": self.n_failed,
            "fractions": self.fractions(),
            **self.meta,
        }

    def write(self, out_dir) -> dict:
        """Write per-replicate records, averaged curves and the summary; return the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "replicates": out / "replicates.csv",
            "curves": out / "replicate_curves.csv",
            "averages": out / "study_curves.csv",
            "summary": out / "study_summary.json",
        }
        with paths["replicates"].open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPLICATE_COLUMNS)
            for r in self.records:
                writer.writerow([r.replicate, repr(r.z_bar), repr(r.y_bar), repr(r.eta_star), repr(r.se_phi_cut),
                                 repr(r.se_phi_bayes), repr(r.se_phi_star), r.status])
        with paths["curves"].open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CURVE_COLUMNS)
            for r in self.good:
                for eta, loss, se in zip(r.etas, r.neg_elpd, r.se):
                    writer.writerow([r.replicate, repr(float(eta)), repr(float(loss)), *(repr(float(v)) for v in se)])
        with paths["averages"].open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("eta", "mean_neg_elpd", "mse_phi", "mse_theta", "mse_theta_tilde"))
            for eta, loss, mse in zip(self.etas, self.mean_neg_elpd, self.mse):
                writer.writerow([repr(float(eta)), repr(float(loss)), *(repr(float(v)) for v in mse)])
        paths["summary"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return paths

    @classmethod
    def load(cls, out_dir) -> "StudyReport":
        """Rebuild a report from ``replicates.csv`` and ``replicate_curves.csv``."""
        out = Path(out_dir)
        curves = {}
        with (out / "replicate_curves.csv").open(newline="") as fh:
            for row in csv.DictReader(fh):
                curves.setdefault(int(row["replicate"]), []).append(
                    [float(row[c]) for c in CURVE_COLUMNS[1:]])
        records = []
        with (out / "replicates.csv").open(newline="") as fh:
            for row in csv.DictReader(fh):
                rep = int(row["replicate"])
                table = np.array(curves.get(rep, []), dtype=float).reshape(-1, 5)
                records.append(ReplicateRecord(
                    rep, float(row["z_bar"]), float(row["y_bar"]), float(row["eta_star"]),
                    float(row["se_phi_cut"]), float(row["se_phi_bayes"]), float(row["se_phi_star"]),
                    table[:, 0], table[:, 1], table[:, 2:], row["status"]))
        meta = {}
        if (out / "study_summary.json").exists():
            saved = json.loads((out / "study_summary.json").read_text())
            meta = {k: v for k, v in saved.items() if k not in ("replicates", "failed", "fractions")}
        return cls(records, meta)


def replicate_study(cfg: StudyConfig, workers: int = 1) -> StudyReport:
    """Run ``cfg.replicates`` independent replicates and aggregate them."""
    indices = range(int(cfg.replicates))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda r: _safe_replicate(cfg, r), indices))
    else:
        records = [_safe_replicate(cfg, r) for r in indices]
    report = StudyReport(records, {"master_seed": int(cfg.seed), "grid_size": len(cfg.grid), "n_mc": int(cfg.n_mc),
                                   "smoothing": cfg.smoothing or "none"})
    if not report.good:
        raise RuntimeError("every replicate failed")
    return report
