"""Predictive evaluation of SMI candidates: WAIC, eta sweeps and selection of eta*."""
from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from smi.diagnostics import MIN_DRAWS, diagnostics
from smi.errors import CapabilityError, ContractError, SelectionError
from smi.gaussian import GaussianHyper, GaussianSuffStats, TrueGenerative, exact_elpd, predictive_moments
from smi.gaussian import smi_posterior_moments
from smi.mcmc import ChainConfig, SampleMatrix, nested_smi_sampler
from smi.model import ModuleData, TwoModuleModel, check_eta

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("eta", "elpd_hat", "se", "estimator", "ess_min", "status")
TARGETS = ("z", "y", "both", "pair")
P_WAIC_WARN = 0.4


@dataclass
class LogLikMatrix:
    """Pointwise log-likelihoods: draw s, observation j -> log p(x_j | params_s)."""

    values: np.ndarray
    target_label: str = "y"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ContractError("log-likelihood matrix must be 2-d (draws x observations)")
        if np.isnan(self.values).any() or (self.values == np.inf).any():
            raise ContractError("log-likelihood matrix contains NaN or +inf")


@dataclass
class WaicResult:
    elpd_waic: float
    p_waic: float
    se: float
    pointwise: np.ndarray
    p_waic_pointwise: np.ndarray
    unreliable: int = 0


def waic(ll: LogLikMatrix) -> WaicResult:
    """WAIC estimate of elpd: sum_j lppd_j - p_waic_j with the variance penalty."""
    values = ll.values if isinstance(ll, LogLikMatrix) else LogLikMatrix(ll).values
    s, n = values.shape
    if s < 2:
        raise ContractError("WAIC needs at least two posterior draws")
    lppd = logsumexp(values, axis=0) - math.log(s)
    # centring on the first draw keeps constant columns at exactly zero penalty
    p_waic = np.var(values - values[:1], axis=0, ddof=1)
    pointwise = lppd - p_waic
    unreliable = int(np.sum(p_waic > P_WAIC_WARN))
    if unreliable:
        warnings.warn(f"{unreliable} of {n} p_waic estimates exceed {P_WAIC_WARN}; WAIC may be unreliable")
    se = math.sqrt(n * np.var(pointwise)) if n > 1 else 0.0
    return WaicResult(float(pointwise.sum()), float(p_waic.sum()), se, pointwise, p_waic, unreliable)


def loglik_matrix(model: TwoModuleModel, data: ModuleData, samples: SampleMatrix, target: str) -> LogLikMatrix:
    """Pointwise log-likelihood of module ``target`` ("z" or "y") at each draw."""
    dp, dt = model.dim_phi, model.dim_theta
    phi = samples.draws[:, :dp]
    theta = samples.draws[:, dp + dt: dp + 2 * dt]
    if target == "z":
        if model.pointwise_z_lik is None:
            raise CapabilityError(f"model '{model.name}' has no pointwise module-1 likelihood")
        values = model.pointwise_z_lik(phi, data.z)
    elif target == "y":
        if model.pointwise_y_lik is None:
            raise CapabilityError(f"model '{model.name}' has no pointwise module-2 likelihood")
        values = model.pointwise_y_lik(phi, theta, data.y)
    else:
        raise ContractError(f"unknown module target {target!r}")
    return LogLikMatrix(values, target)


@dataclass(frozen=True)
class WaicScorer:
    """Score posterior draws by WAIC on one module, both, or per observation pair.

    ``pair`` estimates the elpd of one fresh (z, y) observation pair as the sum
    over modules of the per-observation WAIC elpd; ``both`` sums every
    observation of both modules.
    """

    target: str = "y"
    estimator = "waic"
    needs_samples = True

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ContractError(f"WAIC target must be one of {TARGETS}")

    def __call__(self, model, data, samples, eta):
        if self.target in ("z", "y"):
            res = waic(loglik_matrix(model, data, samples, self.target))
            return res.elpd_waic, res.se
        parts = [waic(loglik_matrix(model, data, samples, t)) for t in ("z", "y")]
        if self.target == "both":
            pointwise = np.concatenate([p.pointwise for p in parts])
            return float(pointwise.sum()), math.sqrt(pointwise.size * np.var(pointwise))
        elpd = sum(p.elpd_waic / p.pointwise.size for p in parts)
        se = math.sqrt(sum((p.se / p.pointwise.size) ** 2 for p in parts))
        return float(elpd), float(se)


@dataclass(frozen=True)
class ExactElpdScorer:
    """Exact Monte Carlo elpd of a fresh (z, y) pair for the Gaussian model.

    The same ``seed`` is used at every eta, giving common random numbers.
    """

    stats: GaussianSuffStats
    hyper: GaussianHyper
    truth: TrueGenerative = TrueGenerative()
    n_mc: int = 10_000
    seed: int = 0
    estimator = "exact"
    needs_samples = False

    def __call__(self, model, data, samples, eta):
        pred = predictive_moments(self.stats, self.hyper, eta)
        return exact_elpd(pred, self.truth, self.hyper, self.n_mc, self.seed)


@dataclass(frozen=True)
class ClosedFormSampler:
    """Exact draws from the Gaussian SMI posterior in (phi, theta_tilde, theta) column order.

    Uses the same standard-normal draws at every eta (common random numbers).
    """

    stats: GaussianSuffStats
    hyper: GaussianHyper
    n_draws: int = 4000
    seed: int = 0

    def __call__(self, model, data, eta, cfg):
        post = smi_posterior_moments(self.stats, self.hyper, eta)
        eps = np.random.default_rng(self.seed).standard_normal((self.n_draws, 3))
        draws = post.transform(eps)[:, [0, 2, 1]]
        return SampleMatrix(draws, ["phi", "theta_tilde", "theta"], self.seed, 1.0,
                            {"eta": eta, "sampler": "closed-form"})


def nested_sampler(model, data, eta, cfg):
    return nested_smi_sampler(model, data, eta, cfg)


def eta_seed(master_seed: int, eta: float) -> int:
    """Per-eta seed that depends only on the master seed and the eta value."""
    key = int(round(check_eta(eta) * 1_000_000_000))
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(key,))
    return int(seq.generate_state(1, np.uint64)[0])


def default_grid(j: int = 21) -> list:
    return [round(float(x), 12) for x in np.linspace(0.0, 1.0, j)]


@dataclass
class SweepRow:
    eta: float
    elpd_hat: float
    se: float
    estimator: str
    ess_min: float
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class EtaSweepTable:
    rows: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        etas = [r.eta for r in self.rows]
        if any(b <= a for a, b in zip(etas, etas[1:])):
            raise ContractError("sweep rows must have strictly increasing eta")
        if not etas or etas[0] != 0.0 or etas[-1] != 1.0:
            raise ContractError("eta grid must contain both 0 and 1")

    @property
    def etas(self) -> np.ndarray:
        return np.array([r.eta for r in self.rows])

    @property
    def elpd(self) -> np.ndarray:
        return np.array([r.elpd_hat for r in self.rows])

    @property
    def se(self) -> np.ndarray:
        return np.array([r.se for r in self.rows])

    def row(self, eta: float) -> SweepRow:
        for r in self.rows:
            if r.eta == eta:
                return r
        raise KeyError(eta)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                writer.writerow([repr(r.eta), repr(r.elpd_hat), repr(r.se), r.estimator, repr(r.ess_min), r.status])
        return path

    @classmethod
    def from_csv(cls, path) -> "EtaSweepTable":
        with Path(path).open(newline="") as fh:
            rows = [
                SweepRow(float(r["eta"]), float(r["elpd_hat"]), float(r["se"]), r["estimator"],
                         float(r["ess_min"]), r["status"])
                for r in csv.DictReader(fh)
            ]
        return cls(rows)


def _run_row(model, data, eta, cfg, scorer, sampler, master_seed):
    estimator = getattr(scorer, "estimator", "custom")
    try:
        samples = None
        ess_min = float("nan")
        if getattr(scorer, "needs_samples", True):
            samples = sampler(model, data, eta, replace(cfg, seed=eta_seed(master_seed, eta)))
            if samples.draws.shape[0] >= MIN_DRAWS:
                ess_min = diagnostics(samples).ess_min
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            elpd, se = scorer(model, data, samples, eta)
        return SweepRow(eta, float(elpd), float(se), estimator, ess_min)
    except Exception as exc:  # a failed row must not abort the sweep
        logger.warning("eta=%s failed: %s", eta, exc)
        message = f"failed: {type(exc).__name__}: {exc}".replace("\n", " ").replace(",", ";")
        return SweepRow(eta, float("nan"), float("nan"), estimator, float("nan"), message)


def eta_sweep(model: TwoModuleModel, data: ModuleData, grid: Sequence[float], cfg: ChainConfig, scorer,
              sampler=None, workers: int = 1) -> EtaSweepTable:
    """Sample and score the SMI posterior at each eta of ``grid``.

    Each row is seeded from ``cfg.seed`` and its own eta only, so rows are
    independent of grid order and of ``workers``.
    """
    etas = sorted(check_eta(e) for e in grid)
    if len(set(etas)) != len(etas):
        raise ContractError("eta grid contains duplicates")
    sampler = sampler or nested_sampler
    args = [(model, data, eta, cfg, scorer, sampler, cfg.seed) for eta in etas]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda a: _run_row(*a), args))
    else:
        rows = [_run_row(*a) for a in args]
    return EtaSweepTable(rows, {"master_seed": cfg.seed, "estimator": getattr(scorer, "estimator", "custom")})


def moving_average(values, window: int) -> np.ndarray:
    """Centred moving average; windows are truncated at the ends of the grid."""
    values = np.asarray(values, dtype=float)
    window = int(window)
    if window < 1 or window % 2 == 0:
        raise ContractError("moving-average window must be a positive odd integer")
    half = window // 2
    out = np.empty_like(values)
    for i in range(values.size):
        out[i] = values[max(0, i - half): i + half + 1].mean()
    return out


def select_eta(table: EtaSweepTable, smoothing: Optional[str] = None, window: int = 3):
    """Return (eta*, curve): the maximiser of the (optionally smoothed) elpd curve.

    Failed rows are dropped; ties go to the larger eta.
    """
    good = [r for r in table.rows if r.ok and np.isfinite(r.elpd_hat)]
    if not good:
        raise SelectionError("every sweep row failed; cannot select eta")
    etas = np.array([r.eta for r in good])
    curve = np.array([r.elpd_hat for r in good])
    if smoothing in (None, "none"):
        pass
    elif smoothing == "moving-average":
        curve = moving_average(curve, window)
    else:
        raise ContractError(f"unknown smoothing {smoothing!r}")
    best = curve.size - 1 - int(np.argmax(curve[::-1]))
    return float(etas[best]), curve
