import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smi.errors import CapacityError, ContractError
from smi.stationarity import (
    DiscreteTwoModuleSpec,
    metropolis_matrix,
    smi_kernel,
    smi_posterior,
    stationary_distribution,
    two_stage_kernel_stationarity,
)

TOY = DiscreteTwoModuleSpec(
    log_z=np.log([0.2, 0.7]),
    log_y=np.log([[0.1, 0.6], [0.5, 0.3]]),
    log_prior_phi=np.log([0.5, 0.5]),
    log_prior_theta=np.log([0.4, 0.6]),
)


def enumerate_cut(spec):
    """p(phi | Z) p(theta | Y, phi) p(theta_tilde), by explicit loops."""
    p, t = spec.log_y.shape
    pz = np.exp(spec.log_z + spec.log_prior_phi)
    pz /= pz.sum()
    out = np.zeros((p, t, t))
    for i, j, k in itertools.product(range(p), range(t), range(t)):
        cond = np.exp(spec.log_y[i] + spec.log_prior_theta)
        tt = np.exp(spec.log_prior_theta_tilde)
        out[i, j, k] = pz[i] * cond[j] / cond.sum() * tt[k] / tt.sum()
    return out


def enumerate_full(spec):
    joint = np.exp(spec.log_z[:, None] + spec.log_y + spec.log_prior_phi[:, None] + spec.log_prior_theta[None, :])
    return joint / joint.sum()


@pytest.mark.parametrize("eta", [0.0, 0.3, 1.0])
def test_toy_residual(eta):
    assert two_stage_kernel_stationarity(TOY, eta) <= 1e-12


def test_kernel_rows_are_distributions():
    kernel = smi_kernel(TOY, 0.5)
    assert kernel.shape == (8, 8)
    np.testing.assert_allclose(kernel.sum(axis=1), 1.0, atol=1e-14)
    assert kernel.min() >= 0.0


def test_cut_is_stationary_at_zero():
    pi = stationary_distribution(smi_kernel(TOY, 0.0)).reshape(2, 2, 2)
    np.testing.assert_allclose(pi, enumerate_cut(TOY), atol=1e-12)


def test_full_posterior_is_stationary_marginal_at_one():
    pi = stationary_distribution(smi_kernel(TOY, 1.0)).reshape(2, 2, 2)
    np.testing.assert_allclose(pi.sum(axis=2), enumerate_full(TOY), atol=1e-12)


def test_metropolis_matrix_detailed_balance():
    target = np.array([0.1, 0.2, 0.3, 0.4])
    k = metropolis_matrix(target)
    flow = target[:, None] * k
    np.testing.assert_allclose(flow, flow.T, atol=1e-15)


def test_capacity_limit():
    big = DiscreteTwoModuleSpec(np.zeros(200), np.zeros((200, 8)), np.zeros(200), np.zeros(8))
    with pytest.raises(CapacityError):
        smi_kernel(big, 0.5)


def test_shape_validation():
    with pytest.raises(ContractError):
        DiscreteTwoModuleSpec(np.zeros(3), np.zeros((2, 2)), np.zeros(2), np.zeros(2))


logs = arrays(float, 3, elements=st.floats(-4, 0))


@settings(max_examples=40, deadline=None)
@given(log_z=logs, log_y=arrays(float, (3, 3), elements=st.floats(-4, 0)), lp=logs, lt=logs, ltt=logs,
       eta=st.floats(0, 1))
def test_residual_on_random_tables(log_z, log_y, lp, lt, ltt, eta):
    spec = DiscreteTwoModuleSpec(log_z, log_y, lp, lt, ltt)
    assert two_stage_kernel_stationarity(spec, eta) <= 1e-12
    np.testing.assert_allclose(smi_posterior(spec, eta).sum(), 1.0, atol=1e-12)
