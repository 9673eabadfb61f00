import numpy as np
import pytest

from tnprep.dynamics import DensityMatrix, apply_channel
from tnprep.errors import NumericalError, ValidationError
from tnprep.experiments import g_family_tensors
from tnprep.generators import max_gamma
from tnprep.mps import (MpsChain, assemble_chain_state, block_mps,
                        blocked_ring_channel, blocked_ring_spec,
                        correlation_length, environments, mps_expectation,
                        transfer_matrix)
from tnprep.tensors import assemble_state, delta_isometry

SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def lam2(g):
    return (1 - g) / (1 + g)


def test_chain_validation():
    with pytest.raises(ValidationError, match="at least one"):
        MpsChain(())
    with pytest.raises(ValidationError, match="expected"):
        MpsChain((np.eye(2), np.zeros((3, 3))))
    with pytest.raises(ValidationError, match="boundary"):
        MpsChain((np.eye(2),), boundary="twisted")


@pytest.mark.parametrize("g", [0.1, 0.3, 0.5])
def test_transfer_spectrum(g):
    E = transfer_matrix(g_family_tensors(g))
    ev = np.sort(np.abs(np.linalg.eigvals(E)))[::-1]
    assert ev[0] == pytest.approx(1.0, abs=1e-12)
    assert ev[1] == pytest.approx(lam2(g), abs=1e-12)


def test_environments_normalization(gchain03):
    lam, rho, sigma = environments(gchain03)
    assert lam == pytest.approx(1.0, abs=1e-10)
    for X in (rho, sigma):
        assert np.linalg.norm(X - X.conj().T) < 1e-10
        assert np.linalg.eigvalsh(X).min() > -1e-12
    assert np.trace(rho @ sigma).real == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("g", [0.3, 0.5])
def test_correlation_length_closed_form(g):
    xi = correlation_length(g_family_tensors(g))
    assert xi == pytest.approx(-1.0 / np.log(lam2(g)), rel=1e-10)


def test_correlation_length_product_chain():
    assert correlation_length(MpsChain((np.eye(1), np.eye(1)))) == 0.0


def test_magnetization_frozen_values():
    # periodic N=8 transfer-matrix expectations, pinned to ten digits
    for g, sx in ((0.3, 0.7050763692), (0.5, 0.8887534288), (-0.3, -0.0171855836)):
        val = mps_expectation(g_family_tensors(g), SX, 8)
        assert abs(val.imag) < 1e-12
        assert val.real == pytest.approx(sx, abs=1e-9)


def test_transfer_vs_dense_expectation(gchain03):
    N = 6
    psi = assemble_chain_state(gchain03, N)
    X0 = np.kron(SX, np.eye(2 ** (N - 1)))
    dense = psi.conj() @ (X0 @ psi)
    val = mps_expectation(gchain03, SX, N)
    assert abs(val - dense) < 1e-12


@pytest.mark.parametrize("l", [2, 3, 4, 6])
def test_blocked_isometry_deviation_decays(gchain03, l):
    # gauged block deviation ||M^dag M - 1|| = lambda_2^(l-1) for this family
    M = block_mps(gchain03, 0, l).matrix
    dev = np.linalg.norm(M.conj().T @ M - np.eye(4), 2)
    assert dev == pytest.approx(lam2(0.3) ** (l - 1), rel=1e-8)


def test_blocked_ring_spec_state_exact(gchain03):
    # the blocked spec assembles to the original chain state, m = 3 and m = 2
    for N, l in ((6, 2), (4, 2)):
        spec = blocked_ring_spec(gchain03, N, l)
        psi_spec = assemble_state(spec).vector
        psi_chain = assemble_chain_state(gchain03, N)
        assert abs(abs(psi_chain.conj() @ psi_spec) - 1) < 1e-10


def test_blocked_ring_spec_delta(gchain03):
    for N, l in ((6, 2), (4, 2), (8, 4)):
        spec = blocked_ring_spec(gchain03, N, l)
        assert delta_isometry(spec)["uniform"] == pytest.approx(
            lam2(0.3) ** (l - 1), rel=1e-8)


def test_blocked_ring_spec_validation(gchain03):
    with pytest.raises(ValidationError, match="not divisible"):
        blocked_ring_spec(gchain03, 7, 2)
    with pytest.raises(ValidationError, match="at least 2 blocks"):
        blocked_ring_spec(gchain03, 4, 4)


def test_blocked_channel_three_blocks(gchain03):
    ch = blocked_ring_channel(gchain03, 6, 2)
    assert ch.num_layers == 3  # odd ring needs three matchings
    spec = ch.spec
    assert ch.gamma == pytest.approx(0.9 * max_gamma(spec), rel=1e-12)
    psi = assemble_state(spec).vector
    rho = DensityMatrix.pure(psi, spec.phys_dims)
    out = apply_channel(ch, rho)
    fid = np.real(psi.conj() @ (out.matrix @ psi))
    assert fid == pytest.approx(1.0, abs=1e-11)


def test_blocked_channel_two_blocks(gchain03):
    # the fused-bond ring: two parallel matchings whose K_0 back-actions
    # do not commute, so they stay separate layers
    ch = blocked_ring_channel(gchain03, 4, 2)
    assert ch.num_layers == 2
    assert ch.coloring is None
    spec = ch.spec
    psi = assemble_state(spec).vector
    rho = DensityMatrix.pure(psi, spec.phys_dims)
    out = apply_channel(ch, rho)
    fid = np.real(psi.conj() @ (out.matrix @ psi))
    assert fid == pytest.approx(1.0, abs=1e-11)


def test_blocked_channel_rate_guards(gchain03):
    cap2 = max_gamma(blocked_ring_spec(gchain03, 4, 2))
    with pytest.raises(NumericalError, match="square root failed"):
        blocked_ring_channel(gchain03, 4, 2, gamma=6.0 * cap2)
    cap3 = max_gamma(blocked_ring_spec(gchain03, 6, 2))
    with pytest.raises(NumericalError, match="max_gamma"):
        blocked_ring_channel(gchain03, 6, 2, gamma=1.1 * cap3)
    with pytest.raises(ValidationError, match="nonnegative"):
        blocked_ring_channel(gchain03, 4, 2, gamma=-0.1)
