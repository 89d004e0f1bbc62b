"""Closed-form SMI for the biased-data Gaussian model.

Module 1: Z_i ~ N(phi, sigma_z^2), i = 1..n.
Module 2: Y_j ~ N(phi + theta, sigma_y^2), j = 1..m.
Priors: phi ~ N(0, sigma_phi^2) (sigma_phi = inf means a flat prior),
theta ~ N(0, sigma_theta^2), theta_tilde ~ N(0, sigma_theta_tilde^2).

The eta-SMI posterior of (phi, theta, theta_tilde) is trivariate normal, and the
posterior predictive of a fresh pair (z0, y0) is bivariate normal, so every
quantity in the simulation study is available exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from smi.errors import ContractError, NumericalError
from smi.model import ModuleData, TwoModuleModel, check_eta

PARAM_NAMES = ("phi", "theta", "theta_tilde")
PREDICTIVE_NAMES = ("z0", "y0", "phi", "theta")
_MAX_CONDITION = 1e12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianHyper:
    sigma_z: float = 2.0
    sigma_y: float = 1.0
    sigma_phi: float = math.inf
    sigma_theta: float = 0.5
    sigma_theta_tilde: Optional[float] = None

    def __post_init__(self):
        if self.sigma_theta_tilde is None:
            object.__setattr__(self, "sigma_theta_tilde", self.sigma_theta)
        for name in ("sigma_z", "sigma_y", "sigma_phi", "sigma_theta", "sigma_theta_tilde"):
            value = float(getattr(self, name))
            if not value > 0 or (math.isinf(value) and name != "sigma_phi"):
                raise ContractError(f"{name} must be a positive real, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def phi_prior_precision(self) -> float:
        return 0.0 if math.isinf(self.sigma_phi) else self.sigma_phi ** -2


@dataclass(frozen=True)
class GaussianSuffStats:
    n: int
    m: int
    z_bar: float
    y_bar: float

    def __post_init__(self):
        if int(self.n) < 1 or int(self.m) < 1:
            raise ContractError("n and m must both be at least 1")

    @classmethod
    def from_data(cls, z, y) -> "GaussianSuffStats":
        z = np.asarray(z, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        return cls(n=z.size, m=y.size, z_bar=float(z.mean()), y_bar=float(y.mean()))


@dataclass(frozen=True)
class TrueGenerative:
    phi_star: float = 0.0
    theta_star: float = 1.0


class MvnDist:
    """Multivariate normal given by mean vector and covariance matrix."""

    def __init__(self, mean, cov, names=None):
        self.mean = np.asarray(mean, dtype=float).reshape(-1)
        self.cov = np.asarray(cov, dtype=float).reshape(self.mean.size, self.mean.size)
        self.names = tuple(names) if names is not None else None
        if not np.allclose(self.cov, self.cov.T, rtol=0.0, atol=1e-12):
            raise NumericalError("covariance matrix is not symmetric")
        self.cov = 0.5 * (self.cov + self.cov.T)
        lowest = np.linalg.eigvalsh(self.cov).min() if self.mean.size else 0.0
        if lowest < -1e-10:
            raise NumericalError(f"covariance matrix is not PSD (smallest eigenvalue {lowest:.3e})")

    def __repr__(self):
        return f"MvnDist(mean={self.mean!r}, cov={self.cov!r})"

    @property
    def dim(self) -> int:
        return self.mean.size

    def marginal(self, idx) -> "MvnDist":
        idx = list(idx)
        names = [self.names[i] for i in idx] if self.names else None
        return MvnDist(self.mean[idx], self.cov[np.ix_(idx, idx)], names)

    def logpdf(self, x) -> np.ndarray:
        """Log density at points ``x`` of shape (..., dim)."""
        chol = _cholesky(self.cov)
        diff = np.asarray(x, dtype=float) - self.mean
        sol = np.linalg.solve(chol, diff.reshape(-1, self.dim).T).T.reshape(diff.shape)
        half_logdet = np.log(np.diag(chol)).sum()
        return -0.5 * np.sum(sol ** 2, axis=-1) - half_logdet - 0.5 * self.dim * _LOG_2PI

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return self.transform(rng.standard_normal((size, self.dim)))

    def transform(self, eps) -> np.ndarray:
        """Map standard-normal rows ``eps`` to draws (common random numbers)."""
        return self.mean + np.asarray(eps) @ _cholesky(self.cov, allow_psd=True).T


def _cholesky(cov, allow_psd=False):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        if not allow_psd:
            raise NumericalError("covariance matrix is not positive definite") from None
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))


def _solve_precision(precision, linear, names):
    cond = np.linalg.cond(precision)
    if not np.isfinite(cond) or cond >= _MAX_CONDITION:
        raise NumericalError(f"precision matrix is singular or ill-conditioned (condition number {cond:.3e})")
    chol = np.linalg.cholesky(precision)
    inv_chol = np.linalg.inv(chol)
    cov = inv_chol.T @ inv_chol
    return MvnDist(cov @ linear, cov, names)


def smi_precision(stats: GaussianSuffStats, hyper: GaussianHyper, eta: float):
    """Precision matrix and linear term of the eta-SMI posterior over (phi, theta, theta_tilde)."""
    eta = check_eta(eta)
    n, m = stats.n, stats.m
    sz2, sy2 = hyper.sigma_z ** 2, hyper.sigma_y ** 2
    ym = m / sy2
    feedback = m / (sy2 + m * hyper.sigma_theta ** 2)
    precision = np.array(
        [
            [n / sz2 + ym * (1 + eta) - feedback + hyper.phi_prior_precision, ym, eta * ym],
            [ym, ym + hyper.sigma_theta ** -2, 0.0],
            [eta * ym, 0.0, eta * ym + hyper.sigma_theta_tilde ** -2],
        ]
    )
    linear = np.array(
        [
            n * stats.z_bar / sz2 + (1 + eta) * ym * stats.y_bar - feedback * stats.y_bar,
            ym * stats.y_bar,
            eta * ym * stats.y_bar,
        ]
    )
    return precision, linear


def smi_posterior_moments(stats: GaussianSuffStats, hyper: GaussianHyper, eta: float) -> MvnDist:
    """Exact eta-SMI posterior of (phi, theta, theta_tilde)."""
    precision, linear = smi_precision(stats, hyper, eta)
    return _solve_precision(precision, linear, PARAM_NAMES)


def predictive_moments(stats: GaussianSuffStats, hyper: GaussianHyper, eta: float,
                       post: Optional[MvnDist] = None) -> MvnDist:
    """Joint eta-SMI posterior of a fresh pair and the parameters: (z0, y0, phi, theta)."""
    if post is None:
        post = smi_posterior_moments(stats, hyper, eta)
    pair = post.marginal([0, 1])
    q = np.linalg.inv(pair.cov)
    a, b, c = q[0, 0], q[0, 1], q[1, 1]
    d, e = pair.mean
    iz, iy = hyper.sigma_z ** -2, hyper.sigma_y ** -2
    precision = np.array(
        [
            [iz, 0.0, -iz, 0.0],
            [0.0, iy, -iy, -iy],
            [-iz, -iy, a + iz + iy, b + iy],
            [0.0, -iy, b + iy, c + iy],
        ]
    )
    linear = np.array([0.0, 0.0, a * d + b * e, b * d + c * e])
    return _solve_precision(precision, linear, PREDICTIVE_NAMES)


def sample_truth(truth: TrueGenerative, hyper: GaussianHyper, size: int, rng: np.random.Generator) -> np.ndarray:
    """Fresh (z, y) pairs from the true data-generating process, shape (size, 2)."""
    z = rng.normal(truth.phi_star, hyper.sigma_z, size)
    y = rng.normal(truth.phi_star + truth.theta_star, hyper.sigma_y, size)
    return np.column_stack([z, y])


def exact_elpd(pred: MvnDist, truth: TrueGenerative, hyper: GaussianHyper, n_mc: int = 10_000, seed=0):
    """Monte Carlo elpd of the (z0, y0) predictive under the true process.

    Returns ``(elpd, mc_se)``. Reusing ``seed`` across eta values gives common
    random numbers, so differences between candidate posteriors are smooth.
    """
    if int(n_mc) < 100:
        raise ContractError("n_mc must be at least 100")
    marginal = pred.marginal([0, 1])
    draws = sample_truth(truth, hyper, int(n_mc), np.random.default_rng(seed))
    logp = marginal.logpdf(draws)
    return float(logp.mean()), float(logp.std(ddof=1) / math.sqrt(logp.size))


def squared_errors(post: MvnDist, truth: TrueGenerative):
    """Posterior squared error of phi, theta and theta_tilde about the truth."""
    if post.dim != 3:
        raise ContractError("squared_errors expects the 3-d (phi, theta, theta_tilde) posterior")
    mu, cov = post.mean, post.cov
    return (
        float(cov[0, 0] + (mu[0] - truth.phi_star) ** 2),
        float(cov[1, 1] + (mu[1] - truth.theta_star) ** 2),
        float(cov[2, 2] + (mu[2] - truth.theta_star) ** 2),
    )


def simulate_dataset(truth: TrueGenerative, hyper: GaussianHyper, n: int, m: int, seed):
    """Draw Z (length n) and Y (length m) with numpy's PCG64 generator."""
    if int(n) < 1 or int(m) < 1:
        raise ContractError("n and m must both be at least 1")
    rng = np.random.default_rng(seed)
    z = rng.normal(truth.phi_star, hyper.sigma_z, int(n))
    y = rng.normal(truth.phi_star + truth.theta_star, hyper.sigma_y, int(m))
    return z, y, GaussianSuffStats.from_data(z, y)


class SmiBelief:
    """Gaussian belief over (phi, theta, theta_tilde) in information form.

    Supports block-wise SMI updates so batch and sequential updating can be
    compared. Precision may be singular (flat phi prior) until enough data is
    seen; ``moments`` requires it to be invertible.
    """

    def __init__(self, precision, linear):
        self.precision = np.asarray(precision, dtype=float)
        self.linear = np.asarray(linear, dtype=float)
        if abs(self.precision[1, 2]) > 0.0:
            raise ContractError("theta and theta_tilde must be conditionally independent given phi")

    @classmethod
    def prior(cls, hyper: GaussianHyper) -> "SmiBelief":
        diag = [hyper.phi_prior_precision, hyper.sigma_theta ** -2, hyper.sigma_theta_tilde ** -2]
        return cls(np.diag(diag), np.zeros(3))

    def update_z(self, n: int, z_bar: float, hyper: GaussianHyper) -> "SmiBelief":
        """Update with a block of module-1 data (n observations, mean z_bar)."""
        precision = self.precision.copy()
        linear = self.linear.copy()
        precision[0, 0] += n / hyper.sigma_z ** 2
        linear[0] += n * z_bar / hyper.sigma_z ** 2
        return SmiBelief(precision, linear)

    def update_y(self, m: int, y_bar: float, hyper: GaussianHyper, eta: float) -> "SmiBelief":
        """Update with a block of module-2 data under the eta-SMI loss.

        The cut term log p(Y|phi) integrates theta against the current belief's
        conditional theta | phi, which is N(alpha + beta * phi, v).
        """
        eta = check_eta(eta)
        ym = m / hyper.sigma_y ** 2
        ptt = self.precision[1, 1]
        v = 1.0 / ptt
        alpha = self.linear[1] / ptt
        beta = -self.precision[0, 1] / ptt
        # Ybar | phi ~ N((1 + beta) phi + alpha, sigma_y^2 / m + v)
        s = hyper.sigma_y ** 2 / m + v
        slope = 1.0 + beta
        precision = self.precision.copy()
        linear = self.linear.copy()
        quad = np.array([[1.0, 1.0], [1.0, 1.0]]) * ym
        for idx, weight in (([0, 1], 1.0), ([0, 2], eta)):
            precision[np.ix_(idx, idx)] += weight * quad
            linear[idx] += weight * ym * y_bar
        precision[0, 0] -= slope ** 2 / s
        linear[0] -= slope * (y_bar - alpha) / s
        return SmiBelief(precision, linear)

    def moments(self) -> MvnDist:
        return _solve_precision(self.precision, self.linear, PARAM_NAMES)


def gaussian_model(hyper: GaussianHyper) -> TwoModuleModel:
    """The biased-data model as a generic :class:`TwoModuleModel` over raw data vectors."""
    sz, sy, st = hyper.sigma_z, hyper.sigma_y, hyper.sigma_theta
    stt = hyper.sigma_theta_tilde
    prec_phi = hyper.phi_prior_precision

    cache = {}

    def summary(x):
        hit = cache.get(id(x))
        if hit is not None and hit[0] is x:
            return hit[1:]
        arr = np.asarray(x, dtype=float).ravel()
        xbar = float(arr.mean())
        entry = (x, arr.size, xbar, float(np.sum((arr - xbar) ** 2)))
        if len(cache) > 8:
            cache.clear()
        cache[id(x)] = entry  # single dict writes are atomic, so threads may share this
        return entry[1:]

    def normal_sum(x, loc, scale):
        n, xbar, ss = summary(x)
        return -0.5 * n * (_LOG_2PI + 2 * math.log(scale)) - (ss + n * (xbar - loc) ** 2) / (2 * scale ** 2)

    def log_z_lik(phi, z):
        return normal_sum(z, phi[..., 0], sz)

    def log_y_lik(phi, theta, y):
        return normal_sum(y, phi[..., 0] + theta[..., 0], sy)

    def pointwise_z_lik(phi, z):
        r = np.asarray(z, dtype=float) - phi[..., :1]
        return -0.5 * (_LOG_2PI + 2 * math.log(sz)) - r ** 2 / (2 * sz ** 2)

    def pointwise_y_lik(phi, theta, y):
        r = np.asarray(y, dtype=float) - (phi[..., :1] + theta[..., :1])
        return -0.5 * (_LOG_2PI + 2 * math.log(sy)) - r ** 2 / (2 * sy ** 2)

    def log_prior_phi(phi):
        if prec_phi == 0.0:
            return np.zeros(phi.shape[:-1])
        return -0.5 * (_LOG_2PI - math.log(prec_phi)) - 0.5 * prec_phi * phi[..., 0] ** 2

    def normal_prior(scale):
        def logp(theta):
            return -0.5 * (_LOG_2PI + 2 * math.log(scale)) - theta[..., 0] ** 2 / (2 * scale ** 2)
        return logp

    def log_y_marginal(phi, y):
        # Y | phi ~ N(phi 1, sigma_y^2 I + sigma_theta^2 11^T)
        y = np.asarray(y, dtype=float).ravel()
        m = y.size
        r_sum = y.sum() - m * phi[..., 0]
        r_sq = np.sum(y ** 2) - 2 * phi[..., 0] * y.sum() + m * phi[..., 0] ** 2
        denom = sy ** 2 + m * st ** 2
        quad = (r_sq - st ** 2 * r_sum ** 2 / denom) / sy ** 2
        logdet = (m - 1) * math.log(sy ** 2) + math.log(denom)
        return -0.5 * (m * _LOG_2PI + logdet + quad)

    return TwoModuleModel(
        dim_phi=1,
        dim_theta=1,
        log_z_lik=log_z_lik,
        log_y_lik=log_y_lik,
        log_prior_phi=log_prior_phi,
        log_prior_theta=normal_prior(st),
        log_prior_theta_tilde=normal_prior(stt),
        log_y_marginal=log_y_marginal,
        pointwise_z_lik=pointwise_z_lik,
        pointwise_y_lik=pointwise_y_lik,
        name="gaussian-biased",
    )


def gaussian_data(z, y) -> ModuleData:
    return ModuleData(z=np.asarray(z, dtype=float), y=np.asarray(y, dtype=float))
