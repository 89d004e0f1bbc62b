import numpy as np
import pytest

from smi.gaussian import GaussianHyper, GaussianSuffStats, gaussian_model

REFERENCE_STATS = GaussianSuffStats(n=25, m=50, z_bar=-0.0667, y_bar=1.0562)


@pytest.fixture
def hyper():
    return GaussianHyper()


@pytest.fixture
def reference_stats():
    return REFERENCE_STATS


@pytest.fixture
def model(hyper):
    return gaussian_model(hyper)


def data_with_means(n, m, z_bar, y_bar, seed=0):
    """Raw vectors whose sample means equal the requested values exactly."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n)
    y = rng.normal(size=m)
    return z - z.mean() + z_bar, y - y.mean() + y_bar


ACCEPTANCE = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    """Remember one acceptance outcome for the end-of-session summary."""
    ACCEPTANCE[number] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
