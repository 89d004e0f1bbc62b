"""Concrete two-module models: HPV prevalence / cervical cancer incidence and user factories.

HPV model, for populations i = 1..I:
    Z_i ~ Binomial(N_i, phi_i)                      (module 1)
    Y_i ~ Poisson(T_i * exp(theta_1 + theta_2 phi_i))  (module 2)

phi is sampled on the logit scale, u_i = logit(phi_i); the log-Jacobian of the
inverse transform is part of ``log_prior_phi``.
"""
from __future__ import annotations

import csv
import importlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, gammaln, logit

from smi.errors import ConfigError, ContractError, DataValidationError
from smi.model import ModuleData, TwoModuleModel

HPV_COLUMNS = ("pop", "Y", "T", "Z", "N")


@dataclass(frozen=True)
class HpvData:
    y: np.ndarray
    t: np.ndarray
    z: np.ndarray
    n: np.ndarray
    pop: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y)
        z = np.asarray(self.z)
        n = np.asarray(self.n)
        t = np.asarray(self.t, dtype=float)
        if not (y.shape == t.shape == z.shape == n.shape) or y.ndim != 1 or y.size < 1:
            raise DataValidationError("Y, T, Z and N must be 1-d arrays of equal, nonzero length")
        for name, arr in (("Y", y), ("Z", z), ("N", n)):
            if np.any(arr < 0) or np.any(arr != np.round(arr)):
                raise DataValidationError(f"{name} must hold nonnegative integers")
        if np.any(n < 1):
            raise DataValidationError("N must be positive")
        if np.any(t <= 0):
            raise DataValidationError("T must be positive")
        if np.any(z > n):
            bad = int(np.flatnonzero(z > n)[0])
            raise DataValidationError(f"population {bad}: Z = {z[bad]} exceeds N = {n[bad]}")
        object.__setattr__(self, "y", y.astype(int))
        object.__setattr__(self, "z", z.astype(int))
        object.__setattr__(self, "n", n.astype(int))
        object.__setattr__(self, "t", t)
        pop = tuple(str(p) for p in self.pop) or tuple(str(i + 1) for i in range(y.size))
        if len(pop) != y.size:
            raise DataValidationError("one population label per row is required")
        object.__setattr__(self, "pop", pop)

    @property
    def size(self) -> int:
        return self.y.size

    def module_data(self) -> ModuleData:
        return ModuleData(z={"Z": self.z, "N": self.n}, y={"Y": self.y, "T": self.t})

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HPV_COLUMNS)
            for row in zip(self.pop, self.y, self.t, self.z, self.n):
                writer.writerow([row[0], int(row[1]), repr(float(row[2])), int(row[3]), int(row[4])])
        return path

    @classmethod
    def from_csv(cls, path) -> "HpvData":
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(HPV_COLUMNS) - set(reader.fieldnames):
                raise DataValidationError(f"HPV CSV needs header columns {','.join(HPV_COLUMNS)}")
            rows = list(reader)
        try:
            return cls(
                y=np.array([int(r["Y"]) for r in rows]),
                t=np.array([float(r["T"]) for r in rows]),
                z=np.array([int(r["Z"]) for r in rows]),
                n=np.array([int(r["N"]) for r in rows]),
                pop=tuple(r["pop"] for r in rows),
            )
        except ValueError as exc:
            raise DataValidationError(f"malformed HPV CSV {path}: {exc}") from None


@dataclass(frozen=True)
class HpvPrior:
    """theta_k ~ N(0, theta_sd^2); phi_i ~ Beta(phi_a, phi_b)."""

    theta_sd: float = 10.0
    phi_a: float = 1.0
    phi_b: float = 1.0


@dataclass(frozen=True)
class HpvParams:
    theta1: float
    theta2: float
    phi: np.ndarray

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if np.any(phi <= 0) or np.any(phi >= 1):
            raise ContractError("phi must lie strictly inside (0, 1)")
        object.__setattr__(self, "phi", phi)


def _log_sigmoid(u):
    return -np.logaddexp(0.0, -u)


def _poisson_logpmf(y, log_mu):
    with np.errstate(over="ignore", invalid="ignore"):
        out = y * log_mu - np.exp(log_mu) - gammaln(y + 1.0)
    return np.where(np.isnan(out), -np.inf, out)


def hpv_model(data: HpvData, prior: HpvPrior = HpvPrior()) -> TwoModuleModel:
    """Build the HPV two-module model; phi is parameterised by logits."""
    size = data.size
    log_binom_coef = gammaln(data.n + 1.0) - gammaln(data.z + 1.0) - gammaln(data.n - data.z + 1.0)
    beta_norm = gammaln(prior.phi_a + prior.phi_b) - gammaln(prior.phi_a) - gammaln(prior.phi_b)
    theta_norm = -np.log(prior.theta_sd) - 0.5 * np.log(2 * np.pi)

    def pointwise_z_lik(u, zdata):
        z, n = zdata["Z"], zdata["N"]
        return log_binom_coef + z * _log_sigmoid(u) + (n - z) * _log_sigmoid(-u)

    def pointwise_y_lik(u, theta, ydata):
        log_mu = np.log(ydata["T"]) + theta[..., :1] + theta[..., 1:2] * expit(u)
        return _poisson_logpmf(ydata["Y"], log_mu)

    def log_prior_phi(u):
        # Beta(a, b) density of phi = expit(u) times |d phi / d u| = phi (1 - phi)
        terms = beta_norm + prior.phi_a * _log_sigmoid(u) + prior.phi_b * _log_sigmoid(-u)
        return terms.sum(axis=-1)

    def log_prior_theta(theta):
        return np.sum(theta_norm - 0.5 * (theta / prior.theta_sd) ** 2, axis=-1)

    pooled = np.log(data.y.sum() + 0.5) - np.log(data.t.sum())
    return TwoModuleModel(
        dim_phi=size,
        dim_theta=2,
        log_z_lik=lambda u, zdata: pointwise_z_lik(u, zdata).sum(axis=-1),
        log_y_lik=lambda u, theta, ydata: pointwise_y_lik(u, theta, ydata).sum(axis=-1),
        log_prior_phi=log_prior_phi,
        log_prior_theta=log_prior_theta,
        pointwise_z_lik=pointwise_z_lik,
        pointwise_y_lik=pointwise_y_lik,
        phi_init=logit((data.z + 0.5) / (data.n + 1.0)),
        theta_init=np.array([pooled, 0.0]),
        name="hpv",
        phi_names=tuple(f"logit_phi_{p}" for p in data.pop),
        theta_names=("theta1", "theta2"),
    )


def hpv_simulate(params: HpvParams, t, n, seed) -> HpvData:
    """Forward-simulate HPV data; deterministic given ``seed``."""
    t = np.asarray(t, dtype=float)
    n = np.asarray(n, dtype=int)
    if not (t.shape == n.shape == params.phi.shape):
        raise ContractError("T, N and phi must have the same length")
    rng = np.random.default_rng(seed)
    z = rng.binomial(n, params.phi)
    y = rng.poisson(t * np.exp(params.theta1 + params.theta2 * params.phi))
    return HpvData(y=y, t=t, z=z, n=n)


def to_probability(u):
    return expit(np.asarray(u, dtype=float))


def to_unconstrained(phi):
    return logit(np.asarray(phi, dtype=float))


def load_factory(spec: str):
    """Resolve a ``"package.module:callable"`` reference."""
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ConfigError(f"custom model factory must look like 'module:callable', got {spec!r}")
    try:
        return getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load custom model factory {spec!r}: {exc}") from None


def custom_model(spec: str, options: dict):
    """Call a user factory returning ``(TwoModuleModel, ModuleData)``."""
    result = load_factory(spec)(**options)
    if not (isinstance(result, tuple) and len(result) == 2 and isinstance(result[0], TwoModuleModel)):
        raise ConfigError("custom model factory must return (TwoModuleModel, ModuleData)")
    return result
