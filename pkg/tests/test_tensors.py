import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnprep.errors import CapacityError, ValidationError
from tnprep.graphs import build_lattice_graph
from tnprep.tensors import (PepsSpec, SiteTensor, assemble_state,
                            delta_isometry, injectivity_report,
                            make_bond_basis, random_injective_spec,
                            random_near_isometry_spec)


def test_default_bond_state_is_maximally_entangled():
    basis = make_bond_basis(2)
    assert np.allclose(basis.phi0, np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert len(basis.phis) == 3


def test_custom_phi0_completion_real():
    phi0 = np.array([0.6, 0.0, 0.0, 0.8])
    basis = make_bond_basis(2, phi0)
    assert np.allclose(basis.phi0, phi0, atol=1e-14)
    for v in basis.vectors():
        assert np.abs(v.imag).max() < 1e-14


def test_make_bond_basis_rejects():
    with pytest.raises(ValidationError, match="nonzero"):
        make_bond_basis(2, np.zeros(4))
    with pytest.raises(ValidationError, match="expected D\\^2"):
        make_bond_basis(2, np.ones(3))


@given(st.integers(2, 3), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=40, deadline=None)
def test_bond_completion_is_unitary(D, seed):
    rng = np.random.default_rng(seed)
    phi0 = rng.normal(size=D * D) + 1j * rng.normal(size=D * D)
    basis = make_bond_basis(D, phi0)
    Q = np.column_stack(basis.vectors())
    assert np.linalg.norm(Q.conj().T @ Q - np.eye(D * D)) < 1e-11
    assert np.linalg.norm(basis.phi0 - phi0 / np.linalg.norm(phi0)) < 1e-12


def test_injectivity_report(ring3):
    spec = random_injective_spec(ring3, 2, seed=0)
    for t in spec.tensors:
        rep = injectivity_report(t)
        assert rep["injective"]
        assert rep["sigma_min"] > 1e-3
        # Moore-Penrose identities on an injective map
        assert np.linalg.norm(rep["pseudo_inverse"] @ t.matrix - np.eye(4)) < 1e-10


def test_noninjective_tensor_flagged():
    # fewer rows than columns can never be injective
    t = SiteTensor(0, np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]]), 2, (1, 2))
    rep = injectivity_report(t)
    assert not rep["injective"]


def test_pseudo_inverse_annihilates_cokernel(ring3):
    spec = random_near_isometry_spec(ring3, 2, 0.1, seed=3, extra_phys=2)
    for t in spec.tensors:
        Ainv = injectivity_report(t)["pseudo_inverse"]
        Pperp = np.eye(t.phys_dim) - t.matrix @ Ainv
        assert np.linalg.norm(Ainv @ Pperp) < 1e-10


@pytest.mark.parametrize("delta", [0.0, 0.05, 0.3, 0.45])
def test_near_isometry_delta_is_exact(ring3, delta):
    spec = random_near_isometry_spec(ring3, 2, delta, seed=7)
    rep = delta_isometry(spec)
    assert rep["uniform"] == pytest.approx(delta, abs=1e-12)
    for d in rep["per_site"]:
        assert d == pytest.approx(delta, abs=1e-12)


def test_spec_validation_names_site(ring3):
    spec = random_injective_spec(ring3, 2, seed=0)
    bad = SiteTensor(0, spec.tensors[0].matrix, 2, (0, 2))
    with pytest.raises(ValidationError, match="site 0.*adjacency"):
        PepsSpec(ring3, (bad,) + spec.tensors[1:], spec.bond_basis)
    with pytest.raises(ValidationError, match="one site tensor per vertex"):
        PepsSpec(ring3, spec.tensors[:2], spec.bond_basis)


def test_site_tensor_shape_validation():
    with pytest.raises(ValidationError, match="columns, expected"):
        SiteTensor(0, np.zeros((4, 3)), 2, (1, 2))


def test_assemble_path2_matches_contraction():
    g = build_lattice_graph("path", (2,))
    spec = random_injective_spec(g, 2, seed=4)
    A0, A1 = spec.tensors[0].matrix, spec.tensors[1].matrix
    phi0 = spec.bond_basis.phi0.reshape(2, 2)
    psi = np.einsum("sk,tl,kl->st", A0, A1, phi0).reshape(-1)
    psi /= np.linalg.norm(psi)
    out = assemble_state(spec)
    phase = psi.conj() @ out.vector
    assert abs(abs(phase) - 1) < 1e-12
    assert np.linalg.norm(out.vector - phase * psi) < 1e-12


def test_assemble_is_normalized(spec_ring3):
    out = assemble_state(spec_ring3)
    assert np.linalg.norm(out.vector) == pytest.approx(1.0, abs=1e-13)
    assert out.raw_norm > 0


def test_assemble_guard():
    g = build_lattice_graph("path", (15,))
    spec = random_injective_spec(g, 2, seed=0, real=True)
    with pytest.raises(CapacityError, match="amplitudes"):
        assemble_state(spec)


def test_is_real_checks_values(ring3):
    spec = random_near_isometry_spec(ring3, 2, 0.1, seed=2, real=True)
    assert spec.is_real()
    # complex dtype with zero imaginary part still counts as real
    tensors = tuple(SiteTensor(t.vertex, t.matrix.astype(complex), t.bond_dim,
                               t.leg_order) for t in spec.tensors)
    assert PepsSpec(ring3, tensors, spec.bond_basis).is_real()
    assert not random_near_isometry_spec(ring3, 2, 0.1, seed=2).is_real()
