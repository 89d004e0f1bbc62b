"""Integrated autocorrelation time and effective sample size."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from smi.errors import ContractError

MIN_DRAWS = 100


@dataclass
class Diagnostics:
    iact: np.ndarray
    ess: np.ndarray
    flags: list = field(default_factory=list)

    @property
    def ess_min(self) -> float:
        return float(np.min(self.ess)) if self.ess.size else float("nan")


def autocovariance(x) -> np.ndarray:
    """Biased empirical autocovariance at every lag, computed by FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centred, size)
    return np.fft.irfft(spec * np.conj(spec), size)[:n] / n


def iact(x) -> float:
    """IACT by Geyer's initial positive sequence.

    Pairs of consecutive autocorrelations are summed until the first
    non-positive pair; tau = -1 + 2 * sum of the retained pairs.
    """
    acov = autocovariance(x)
    if acov[0] <= 0.0:
        return float("inf")
    rho = acov / acov[0]
    n_pairs = rho.size // 2
    pairs = rho[: 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    stop = np.flatnonzero(pairs <= 0.0)
    k = stop[0] if stop.size else n_pairs
    return float(-1.0 + 2.0 * pairs[:k].sum())


def diagnostics(draws) -> Diagnostics:
    """Per-column IACT and ESS = S / IACT for an S x d matrix (or a SampleMatrix)."""
    draws = np.asarray(getattr(draws, "draws", draws), dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    s = draws.shape[0]
    if s < MIN_DRAWS:
        raise ContractError(f"need at least {MIN_DRAWS} draws for autocorrelation diagnostics, got {s}")
    taus, ess, flags = [], [], []
    for j in range(draws.shape[1]):
        tau = iact(draws[:, j])
        if not np.isfinite(tau):
            flags.append(f"column {j} is constant")
            taus.append(np.inf)
            ess.append(0.0)
            continue
        taus.append(tau)
        ess.append(min(s / tau, float(s)) if tau > 0 else float(s))
    return Diagnostics(np.array(taus), np.array(ess), flags)
