"""Two-module model contract and the semi-modular loss functions / MCMC targets.

A two-module model ties data ``Z`` to a shared parameter ``phi`` (module 1) and
data ``Y`` to ``(phi, theta)`` (module 2). Every callable on
:class:`TwoModuleModel` is vectorised over leading batch axes: parameters are
arrays whose last axis is the parameter vector, and the return value has the
batch shape (a 0-d array for a single point).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from smi.errors import CapabilityError, ContractError

LogDensity = Callable[..., Any]


def check_eta(eta: float) -> float:
    """Validate an influence value and return it as a float."""
    value = float(eta)
    if not 0.0 <= value <= 1.0 or np.isnan(value):
        raise ContractError(f"eta must lie in [0, 1], got {eta!r}")
    return value


@dataclass(frozen=True)
class ModuleData:
    """Observed data for both modules; contents are interpreted by the model callables."""

    z: Any
    y: Any


@dataclass(frozen=True)
class TwoModuleModel:
    """Bundle of log-density callables describing a two-module model.

    ``log_prior_theta_tilde`` defaults to ``log_prior_theta``. ``log_y_marginal``
    (log p(Y | phi) with theta integrated out under its prior) is only needed to
    evaluate losses; samplers never call it. ``pointwise_*`` callables return
    per-observation log-likelihoods with a trailing observation axis and are
    needed for WAIC scoring.
    """

    dim_phi: int
    dim_theta: int
    log_z_lik: LogDensity
    log_y_lik: LogDensity
    log_prior_phi: LogDensity
    log_prior_theta: LogDensity
    log_prior_theta_tilde: Optional[LogDensity] = None
    log_y_marginal: Optional[LogDensity] = None
    pointwise_z_lik: Optional[LogDensity] = None
    pointwise_y_lik: Optional[LogDensity] = None
    phi_init: Optional[np.ndarray] = None
    theta_init: Optional[np.ndarray] = None
    name: str = "model"
    phi_names: tuple = field(default=())
    theta_names: tuple = field(default=())

    def __post_init__(self):
        if int(self.dim_phi) < 1 or int(self.dim_theta) < 1:
            raise ContractError("dim_phi and dim_theta must be positive integers")

    @property
    def prior_theta_tilde(self) -> LogDensity:
        return self.log_prior_theta_tilde or self.log_prior_theta

    def names(self) -> list[str]:
        """Column labels in sampler output order (phi, theta_tilde, theta)."""
        phi = list(self.phi_names) or _labels("phi", self.dim_phi)
        theta = list(self.theta_names) or _labels("theta", self.dim_theta)
        return phi + [f"{t}_tilde" for t in theta] + theta

    def initial_phi(self) -> np.ndarray:
        return _default(self.phi_init, self.dim_phi)

    def initial_theta(self) -> np.ndarray:
        return _default(self.theta_init, self.dim_theta)


@dataclass(frozen=True)
class SmiParams:
    """Joint parameter point (phi, theta, theta_tilde)."""

    phi: np.ndarray
    theta: np.ndarray
    theta_tilde: np.ndarray

    def __post_init__(self):
        for name in ("phi", "theta", "theta_tilde"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.theta.shape[-1] != self.theta_tilde.shape[-1]:
            raise ContractError("theta and theta_tilde must have the same dimension")


def _labels(base: str, dim: int) -> list[str]:
    return [base] if dim == 1 else [f"{base}{i + 1}" for i in range(dim)]


def _default(value, dim):
    if value is None:
        return np.zeros(dim)
    return np.asarray(value, dtype=float).reshape(dim)


def _as_param(x, dim: int, what: str) -> np.ndarray:
    arr = x if type(x) is np.ndarray and x.dtype == np.float64 else np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise ContractError(f"{what} has trailing dimension {arr.shape[-1]}, model expects {dim}")
    return arr


def _checked(value, what: str):
    out = np.asarray(value, dtype=float)
    # NaN and +inf both fail "< inf"; -inf passes
    if not (out < np.inf).all():
        raise ContractError(f"{what} returned NaN or +inf; log-densities must be finite or -inf")
    return out


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def _require_marginal(model: TwoModuleModel):
    if model.log_y_marginal is None:
        raise CapabilityError(f"model '{model.name}' does not provide log p(Y | phi); loss evaluation needs it")


def power_stage1_logpdf(model: TwoModuleModel, phi, theta_tilde, data: ModuleData, eta: float):
    """Unnormalised log power posterior of (phi, theta_tilde).

    log p(Z|phi) + eta * log p(Y|phi, theta_tilde) + log p(phi) + log p(theta_tilde)
    """
    eta = check_eta(eta)
    phi = _as_param(phi, model.dim_phi, "phi")
    theta_tilde = _as_param(theta_tilde, model.dim_theta, "theta_tilde")
    out = _checked(model.log_prior_phi(phi), "log_prior_phi")
    out = out + _checked(model.prior_theta_tilde(theta_tilde), "log_prior_theta_tilde")
    out = out + _checked(model.log_z_lik(phi, data.z), "log_z_lik")
    if eta > 0.0:
        out = out + eta * _checked(model.log_y_lik(phi, theta_tilde, data.y), "log_y_lik")
    return _scalar(out)


def stage2_conditional_logpdf(model: TwoModuleModel, theta, phi, y):
    """Unnormalised log p(theta | Y, phi): log p(Y|phi, theta) + log p(theta).

    Module-1 data is never read, so anything depending on Z cannot leak in.
    """
    phi = _as_param(phi, model.dim_phi, "phi")
    theta = _as_param(theta, model.dim_theta, "theta")
    out = _checked(model.log_prior_theta(theta), "log_prior_theta")
    out = out + _checked(model.log_y_lik(phi, theta, y), "log_y_lik")
    return _scalar(out)


def smi_log_loss(model: TwoModuleModel, params: SmiParams, data: ModuleData, eta: float):
    """Loss whose generalised-Bayes update gives the eta-SMI posterior.

    -log p(Z|phi) - eta log p(Y|phi, theta_tilde) - log p(Y|phi, theta) + log p(Y|phi)
    """
    _require_marginal(model)
    eta = check_eta(eta)
    phi = _as_param(params.phi, model.dim_phi, "phi")
    theta = _as_param(params.theta, model.dim_theta, "theta")
    theta_tilde = _as_param(params.theta_tilde, model.dim_theta, "theta_tilde")
    loss = -_checked(model.log_z_lik(phi, data.z), "log_z_lik")
    if eta > 0.0:
        loss = loss - eta * _checked(model.log_y_lik(phi, theta_tilde, data.y), "log_y_lik")
    loss = loss - _checked(model.log_y_lik(phi, theta, data.y), "log_y_lik")
    loss = loss + _checked(model.log_y_marginal(phi, data.y), "log_y_marginal")
    return _scalar(loss)


def cut_log_loss(model: TwoModuleModel, phi, theta, data: ModuleData):
    """Loss giving the cut posterior: -log p(Z|phi) - log p(Y|phi, theta) + log p(Y|phi)."""
    _require_marginal(model)
    phi = _as_param(phi, model.dim_phi, "phi")
    theta = _as_param(theta, model.dim_theta, "theta")
    loss = -_checked(model.log_z_lik(phi, data.z), "log_z_lik")
    loss = loss - _checked(model.log_y_lik(phi, theta, data.y), "log_y_lik")
    loss = loss + _checked(model.log_y_marginal(phi, data.y), "log_y_marginal")
    return _scalar(loss)
