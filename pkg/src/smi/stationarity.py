"""Exact transition-matrix check of the two-stage SMI kernel on enumerable models.

Stage 1 is a Metropolis matrix on (phi, theta_tilde) in detailed balance with
the discrete power posterior; stage 2 draws theta exactly from p(theta | Y, phi').
The combined kernel should leave the discrete SMI posterior invariant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from smi.errors import CapacityError, ContractError
from smi.model import check_eta

MAX_STATES = 10_000


@dataclass(frozen=True)
class DiscreteTwoModuleSpec:
    """Log-probability tables of a finite two-module model.

    ``log_z`` has shape (P,) and holds log p(Z | phi_i); ``log_y`` has shape
    (P, T) and holds log p(Y | phi_i, theta_j). Priors are tables over the
    phi and theta grids; theta_tilde shares theta's grid.
    """

    log_z: np.ndarray
    log_y: np.ndarray
    log_prior_phi: np.ndarray
    log_prior_theta: np.ndarray
    log_prior_theta_tilde: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("log_z", "log_y", "log_prior_phi", "log_prior_theta", "log_prior_theta_tilde"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.asarray(value, dtype=float))
        if self.log_prior_theta_tilde is None:
            object.__setattr__(self, "log_prior_theta_tilde", self.log_prior_theta)
        p, t = self.log_y.shape
        if self.log_z.shape != (p,) or self.log_prior_phi.shape != (p,):
            raise ContractError("log_z and log_prior_phi must have one entry per phi state")
        if self.log_prior_theta.shape != (t,) or self.log_prior_theta_tilde.shape != (t,):
            raise ContractError("theta priors must have one entry per theta state")

    @property
    def shape(self):
        return self.log_y.shape[0], self.log_y.shape[1], self.log_y.shape[1]


def _normalise(logw):
    return np.exp(logw - logsumexp(logw))


def power_posterior(spec: DiscreteTwoModuleSpec, eta: float) -> np.ndarray:
    """Exact discrete power posterior over (phi, theta_tilde), shape (P, T)."""
    logw = (spec.log_z + spec.log_prior_phi)[:, None] + eta * spec.log_y + spec.log_prior_theta_tilde[None, :]
    return _normalise(logw)


def conditional_theta(spec: DiscreteTwoModuleSpec) -> np.ndarray:
    """Rows p(theta | Y, phi_i), shape (P, T)."""
    logw = spec.log_y + spec.log_prior_theta[None, :]
    return np.exp(logw - logsumexp(logw, axis=1, keepdims=True))


def smi_posterior(spec: DiscreteTwoModuleSpec, eta: float) -> np.ndarray:
    """Exact discrete SMI posterior indexed [phi, theta, theta_tilde]."""
    eta = check_eta(eta)
    return power_posterior(spec, eta)[:, None, :] * conditional_theta(spec)[:, :, None]


def metropolis_matrix(target: np.ndarray) -> np.ndarray:
    """Metropolis kernel with a uniform proposal over all other states.

    Satisfies detailed balance with ``target`` (a probability vector).
    """
    k = target.size
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(target[:, None] > 0, target[None, :] / target[:, None], 1.0)
    kernel = np.minimum(1.0, ratio) / (k - 1)
    np.fill_diagonal(kernel, 0.0)
    np.fill_diagonal(kernel, 1.0 - kernel.sum(axis=1))
    return kernel


def smi_kernel(spec: DiscreteTwoModuleSpec, eta: float) -> np.ndarray:
    """Two-stage transition matrix over states ordered as [phi, theta, theta_tilde] (C order).

    K((phi, theta, tt) -> (phi', theta', tt')) = K1((phi, tt) -> (phi', tt')) p(theta' | Y, phi').
    """
    eta = check_eta(eta)
    p, t, _ = spec.shape
    if p * t * t > MAX_STATES:
        raise CapacityError(f"{p * t * t} states exceed the enumeration limit of {MAX_STATES}")
    k1 = metropolis_matrix(power_posterior(spec, eta).ravel()).reshape(p, t, p, t)
    cond = conditional_theta(spec)
    # axes: phi, tt, phi', tt' -> phi, theta, tt, phi', theta', tt'
    full = k1[:, None, :, :, None, :] * cond[None, None, None, :, :, None]
    full = np.broadcast_to(full, (p, t, t, p, t, t))
    return full.reshape(p * t * t, p * t * t)


def two_stage_kernel_stationarity(spec: DiscreteTwoModuleSpec, eta: float) -> float:
    """Max-norm residual ||pi K - pi|| of the two-stage kernel at the exact SMI posterior pi."""
    pi = smi_posterior(spec, eta).ravel()
    kernel = smi_kernel(spec, eta)
    return float(np.max(np.abs(pi @ kernel - pi)))


def stationary_distribution(kernel: np.ndarray) -> np.ndarray:
    """Left Perron eigenvector of a transition matrix, normalised to sum one."""
    w, v = np.linalg.eig(kernel.T)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    return vec / vec.sum()
