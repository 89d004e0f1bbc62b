"""Random-walk Metropolis and the nested two-stage sampler for SMI posteriors."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from smi.errors import ContractError
from smi.model import ModuleData, TwoModuleModel, check_eta, power_stage1_logpdf, stage2_conditional_logpdf

logger = logging.getLogger(__name__)

STAGE2_MODES = ("warm", "parallel")
_TUNE_BATCH = 100


@dataclass(frozen=True)
class ChainConfig:
    """Run lengths and proposal settings.

    ``n1`` kept draws are produced after ``burnin`` iterations with thinning
    ``thin``. ``proposal_scales`` are the per-coordinate random-walk scales of
    the sampled block (stage 1 in the nested sampler); a single value is used
    for every coordinate. ``stage2_scales`` default to the theta part of
    ``proposal_scales``. ``tune`` > 0 runs a pilot phase of
    that many iterations that rescales proposals toward acceptance 0.2-0.5; the
    pilot draws are discarded.
    """

    n1: int = 1000
    n2: int = 500
    burnin: int = 1000
    thin: int = 1
    proposal_scales: tuple = (0.1,)
    stage2_scales: Optional[tuple] = None
    seed: int = 0
    tune: int = 0
    stage2_mode: str = "warm"

    def __post_init__(self):
        if int(self.n1) < 1 or int(self.n2) < 1 or int(self.thin) < 1 or int(self.burnin) < 0:
            raise ContractError("need n1 >= 1, n2 >= 1, thin >= 1 and burnin >= 0")
        if int(self.tune) < 0:
            raise ContractError("tune must be nonnegative")
        object.__setattr__(self, "proposal_scales", tuple(float(s) for s in np.atleast_1d(self.proposal_scales)))
        if self.stage2_scales is not None:
            object.__setattr__(self, "stage2_scales", tuple(float(s) for s in np.atleast_1d(self.stage2_scales)))
        scales = self.proposal_scales + (self.stage2_scales or ())
        if not all(s > 0 and math.isfinite(s) for s in scales):
            raise ContractError("proposal scales must be positive and finite")
        if self.stage2_mode not in STAGE2_MODES:
            raise ContractError(f"stage2_mode must be one of {STAGE2_MODES}")

    @property
    def n_iter(self) -> int:
        return self.burnin + self.n1 * self.thin


@dataclass
class SampleMatrix:
    """Post burn-in, thinned draws with run metadata."""

    draws: np.ndarray
    names: list
    seed: int
    accept_rate: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 2 or self.draws.shape[0] < 1:
            raise ContractError("draws must be a non-empty S x d matrix")
        if self.draws.shape[1] != len(self.names):
            raise ContractError("one name per column is required")
        if np.isnan(self.draws).any():
            raise ContractError("draws contain NaN")

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    @property
    def warnings(self) -> list:
        return self.meta.setdefault("warnings", [])

    def to_csv(self, path) -> Path:
        """Write draws as CSV and metadata to a sidecar ``.json`` next to it."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(",".join(self.names) + "\n")
            for row in self.draws:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        sidecar = {"seed": int(self.seed), "accept_rate": float(self.accept_rate), **self.meta}
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=float) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "SampleMatrix":
        path = Path(path)
        names = path.read_text().splitlines()[0].split(",")
        draws = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        seed = meta.pop("seed")
        accept = meta.pop("accept_rate")
        return cls(draws, names, seed, accept, meta)


def _rng_pair(seed):
    stage1, stage2 = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(stage1), np.random.default_rng(stage2)


def _metropolis(target, state, logp, scales, n_steps, rng, keep=None):
    """Run ``n_steps`` RW Metropolis steps; return final state, logp, accepts and kept rows."""
    dim = state.size
    noise = rng.standard_normal((n_steps, dim)) * scales
    log_u = np.log(rng.random(n_steps))
    kept = []
    accepted = 0
    for i in range(n_steps):
        proposal = state + noise[i]
        logp_prop = target(proposal)
        if log_u[i] < logp_prop - logp:
            state, logp = proposal, logp_prop
            accepted += 1
        if keep is not None and keep(i):
            kept.append(state)
    return state, logp, accepted, kept


def tune_scales(target, init, scales, n_tune, rng, low=0.2, high=0.5):
    """Pilot runs that rescale proposals toward an acceptance rate in [low, high].

    Scales follow the pilot draws' marginal standard deviations where these
    are informative, times a global factor adapted from the batch acceptance.
    Returns the tuned scales and the final pilot state.
    """
    scales = np.asarray(scales, dtype=float).copy()
    state = np.asarray(init, dtype=float).copy()
    logp = target(state)
    dim = state.size
    factor = 1.0
    history = []
    done = 0
    while done < n_tune:
        batch = min(_TUNE_BATCH, n_tune - done)
        state, logp, accepted, kept = _metropolis(target, state, logp, scales * factor, batch, rng, keep=lambda i: True)
        done += batch
        history.extend(kept)
        rate = accepted / batch
        if rate < low:
            factor *= max(0.3, rate / 0.3 + 0.1)
        elif rate > high:
            factor *= min(3.0, rate / 0.3)
        if len(history) >= 10 * _TUNE_BATCH and done < n_tune:
            sd = np.std(np.asarray(history[-10 * _TUNE_BATCH:]), axis=0)
            ok = sd > 0
            if ok.all():
                scales = 2.38 / math.sqrt(dim) * sd
                factor = 1.0
            history = []
    return scales * factor, state


def rw_metropolis_chain(target_logpdf: Callable, init, cfg: ChainConfig, rng: Optional[np.random.Generator] = None,
                        names: Optional[Sequence[str]] = None) -> SampleMatrix:
    """Gaussian random-walk Metropolis with fixed per-coordinate scales.

    Deterministic given ``cfg.seed`` (or the supplied generator).
    """
    init = np.atleast_1d(np.asarray(init, dtype=float))
    scales = np.asarray(cfg.proposal_scales, dtype=float)
    if scales.size == 1:
        scales = np.full(init.size, scales[0])
    if scales.size != init.size:
        raise ContractError(f"{scales.size} proposal scales for a {init.size}-dimensional chain")
    logp = float(target_logpdf(init))
    if not math.isfinite(logp):
        raise ContractError("target log-density is not finite at the initial point")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    meta = {"warnings": []}
    state = init
    if cfg.tune:
        scales, state = tune_scales(target_logpdf, init, scales, cfg.tune, rng)
        logp = float(target_logpdf(state))
        meta["tuned_scales"] = scales.tolist()
    burnin, thin = cfg.burnin, cfg.thin
    state, logp, accepted, kept = _metropolis(
        target_logpdf, state, logp, scales, cfg.n_iter, rng,
        keep=lambda i: i >= burnin and (i - burnin + 1) % thin == 0,
    )
    accept_rate = accepted / cfg.n_iter
    if accepted == 0:
        meta["warnings"].append("all proposals rejected")
        logger.warning("random-walk chain rejected every proposal")
    names = list(names) if names is not None else [f"x{i}" for i in range(init.size)]
    return SampleMatrix(np.asarray(kept), names, cfg.seed, accept_rate, meta)


def nested_smi_sampler(model: TwoModuleModel, data: ModuleData, eta: float, cfg: ChainConfig,
                       init_phi=None, init_theta=None) -> SampleMatrix:
    """Two-stage nested MCMC targeting the eta-SMI posterior.

    Stage 1 samples (phi, theta_tilde) from the power posterior; after burn-in
    and thinning, each kept phi gets an ``n2``-step sub-chain on
    p(theta | Y, phi) whose final state is kept. Output columns are
    (phi, theta_tilde, theta).
    """
    eta = check_eta(eta)
    dp, dt = model.dim_phi, model.dim_theta
    if len(cfg.proposal_scales) not in (1, dp + dt):
        raise ContractError(f"stage-1 needs 1 or {dp + dt} proposal scales, got {len(cfg.proposal_scales)}")
    stage1_scales = np.broadcast_to(np.asarray(cfg.proposal_scales, dtype=float), (dp + dt,))
    stage2_scales = np.asarray(cfg.stage2_scales or stage1_scales[dp:], dtype=float)
    if stage2_scales.size == 1:
        stage2_scales = np.full(dt, stage2_scales[0])
    if stage2_scales.size != dt:
        raise ContractError(f"stage-2 needs {dt} proposal scales, got {stage2_scales.size}")
    rng1, rng2 = _rng_pair(cfg.seed)
    phi0 = model.initial_phi() if init_phi is None else np.asarray(init_phi, dtype=float).reshape(dp)
    theta0 = model.initial_theta() if init_theta is None else np.asarray(init_theta, dtype=float).reshape(dt)

    def stage1(x):
        return power_stage1_logpdf(model, x[:dp], x[dp:], data, eta)

    first = rw_metropolis_chain(stage1, np.concatenate([phi0, theta0]), cfg, rng=rng1)
    phis = first.draws[:, :dp]
    thetas, stage2_meta = run_stage2(model, phis, data.y, cfg, stage2_scales, theta0, rng2)

    meta = {
        "eta": eta,
        "model": model.name,
        "stage1_accept_rate": first.accept_rate,
        "warnings": first.warnings + stage2_meta.pop("warnings"),
        **stage2_meta,
    }
    if "tuned_scales" in first.meta:
        meta["stage1_scales"] = first.meta["tuned_scales"]
    draws = np.hstack([first.draws, thetas])
    return SampleMatrix(draws, model.names(), cfg.seed, first.accept_rate, meta)


def run_stage2(model: TwoModuleModel, phis, y, cfg: ChainConfig, scales, theta0, rng):
    """Stage 2 of the nested sampler: one final theta per kept phi.

    Depends only on ``phis``, module-2 data and ``rng``; module-1 data never
    enters. In "warm" mode sub-chain s starts from the kept theta of sub-chain
    s - 1; in "parallel" mode every sub-chain starts from ``theta0`` and all
    sub-chains advance together as one vectorised batch.
    """
    phis = np.asarray(phis, dtype=float)
    scales = np.asarray(scales, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    meta = {"stage2_mode": cfg.stage2_mode, "n2": cfg.n2, "warnings": []}
    if cfg.tune:
        def pilot(t):
            return stage2_conditional_logpdf(model, t, phis[0], y)
        scales, _ = tune_scales(pilot, theta0, scales, cfg.tune, rng)
        meta["stage2_scales"] = scales.tolist()
    if cfg.stage2_mode == "parallel":
        thetas, accepted = _stage2_parallel(model, phis, y, cfg.n2, scales, theta0, rng)
    else:
        thetas, accepted = _stage2_warm(model, phis, y, cfg.n2, scales, theta0, rng)
    zero = int(np.sum(accepted == 0))
    meta["stage2_accept_rate"] = float(accepted.sum() / (accepted.size * cfg.n2))
    meta["stage2_zero_accept"] = zero
    if zero:
        meta["warnings"].append(f"{zero} stage-2 sub-chains accepted no proposals")
        logger.warning("%d stage-2 sub-chains accepted no proposals", zero)
    return thetas, meta


def _stage2_warm(model, phis, y, n2, scales, theta0, rng):
    n1, dt = phis.shape[0], theta0.size
    thetas = np.empty((n1, dt))
    accepted = np.zeros(n1, dtype=int)
    state = theta0
    for s in range(n1):
        phi = phis[s]

        def target(t, phi=phi):
            return stage2_conditional_logpdf(model, t, phi, y)

        logp = target(state)
        if not math.isfinite(logp):
            raise ContractError(f"stage-2 target is not finite at the initial theta for draw {s}")
        state, logp, accepted[s], _ = _metropolis(target, state, logp, scales, n2, rng)
        thetas[s] = state
    return thetas, accepted


def _stage2_parallel(model, phis, y, n2, scales, theta0, rng):
    n1, dt = phis.shape[0], theta0.size
    state = np.broadcast_to(theta0, (n1, dt)).copy()
    logp = np.asarray(stage2_conditional_logpdf(model, state, phis, y), dtype=float)
    if not np.all(np.isfinite(logp)):
        raise ContractError("stage-2 target is not finite at the initial theta")
    accepted = np.zeros(n1, dtype=int)
    for _ in range(n2):
        proposal = state + rng.standard_normal((n1, dt)) * scales
        logp_prop = np.asarray(stage2_conditional_logpdf(model, proposal, phis, y), dtype=float)
        accept = np.log(rng.random(n1)) < logp_prop - logp
        state[accept] = proposal[accept]
        logp[accept] = logp_prop[accept]
        accepted += accept
    return state, accepted


def with_seed(cfg: ChainConfig, seed: int) -> ChainConfig:
    return replace(cfg, seed=int(seed))
