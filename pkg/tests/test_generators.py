import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnprep.errors import CapacityError, NumericalError, ValidationError
from tnprep.generators import (KrausChannel, build_edge_channel,
                               build_global_channel, build_jump_set,
                               build_liouvillian, build_parent_ham,
                               effective_hamiltonian, isometrized_parent_term,
                               lift_operator, max_gamma, unvec_cm, vec_cm)
from tnprep.graphs import build_lattice_graph
from tnprep.tensors import (assemble_state, delta_isometry,
                            random_near_isometry_spec)


def test_lift_operator_middle_site(rng):
    op = rng.normal(size=(3, 3))
    lifted = lift_operator((2, 3, 4), (1,), op)
    assert np.allclose(lifted, np.kron(np.eye(2), np.kron(op, np.eye(4))))


def test_lift_operator_pair(rng):
    X = rng.normal(size=(2, 2))
    Y = rng.normal(size=(4, 4))
    lifted = lift_operator((2, 3, 4), (0, 2), np.kron(X, Y))
    assert np.allclose(lifted, np.kron(X, np.kron(np.eye(3), Y)))


def test_lift_operator_composes(rng):
    dims = (2, 2, 2)
    A = rng.normal(size=(4, 4))
    B = rng.normal(size=(4, 4))
    assert np.allclose(lift_operator(dims, (0, 1), A @ B),
                       lift_operator(dims, (0, 1), A) @ lift_operator(dims, (0, 1), B))


def test_vec_column_stacking(rng):
    A, rho, B = (rng.normal(size=(3, 3)) for _ in range(3))
    assert np.allclose(vec_cm(A @ rho @ B), np.kron(B.T, A) @ vec_cm(rho))
    assert np.allclose(unvec_cm(vec_cm(rho), 3), rho)


def test_parent_terms_annihilate_target(spec_ring3):
    ham = build_parent_ham(spec_ring3)
    psi = assemble_state(spec_ring3).vector
    dims = spec_ring3.phys_dims
    for e, h in ham.terms.items():
        assert np.linalg.norm(h - h.conj().T) < 1e-12
        assert np.linalg.eigvalsh(h).min() > -1e-12
        assert np.linalg.norm(lift_operator(dims, e, h) @ psi) < 1e-10


def test_parent_term_is_projector_at_zero_delta(ring3):
    spec = random_near_isometry_spec(ring3, 2, 0.0, seed=9)
    ham = build_parent_ham(spec)
    for h in ham.terms.values():
        assert np.linalg.norm(h @ h - h) < 1e-10
        assert np.linalg.norm(h, 2) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("delta", [0.1, 0.3, 0.45])
def test_deviation_bounds(ring3, delta):
    spec = random_near_isometry_spec(ring3, 2, delta, seed=13)
    ham = build_parent_ham(spec)
    jumps = build_jump_set(spec)
    for e, h in ham.terms.items():
        ht = isometrized_parent_term(spec, e)
        assert np.linalg.norm(h, 2) <= 4 + 1e-9
        assert np.linalg.norm(h - ht, 2) <= 8 * delta + 1e-9
        w = np.linalg.eigvalsh(h)
        gap = w[w > 1e-10].min()
        assert gap >= 1 - 8 * delta - 1e-9
        heff = effective_hamiltonian(jumps, e)
        assert np.linalg.norm(heff - 0.5 * h, 2) <= 5 * delta + 1e-9


def test_jumps_annihilate_and_nilpotent(spec_ring3):
    jumps = build_jump_set(spec_ring3)
    psi = assemble_state(spec_ring3).vector
    dims = spec_ring3.phys_dims
    for e, Ls in jumps.two_site.items():
        assert len(Ls) == 3  # D^2 - 1 bond excitations
        for L in Ls:
            assert np.linalg.norm(L @ L) < 1e-12
            assert np.linalg.norm(lift_operator(dims, e, L) @ psi) < 1e-10


def test_single_site_jumps_only_for_proper_images(ring3):
    minimal = random_near_isometry_spec(ring3, 2, 0.1, seed=2)
    assert all(len(Ls) == 0 for Ls in build_jump_set(minimal).single_site.values())
    padded = random_near_isometry_spec(ring3, 2, 0.1, seed=2, extra_phys=1)
    jumps = build_jump_set(padded)
    assert all(len(Ls) == 4 for Ls in jumps.single_site.values())
    psi = assemble_state(padded).vector
    for v, Ls in jumps.single_site.items():
        for L in Ls:
            assert np.linalg.norm(
                lift_operator(padded.phys_dims, (v,), L) @ psi) < 1e-10


def test_effective_hamiltonian_definition(spec_ring3):
    jumps = build_jump_set(spec_ring3)
    e = spec_ring3.graph.edges[0]
    heff = effective_hamiltonian(jumps, e)
    direct = 0.5 * sum(L.conj().T @ L for L in jumps.two_site[e])
    assert np.allclose(heff, direct, atol=1e-13)


def test_max_gamma_formula(ring3):
    spec = random_near_isometry_spec(ring3, 2, 1.0 / 3.0, seed=1)
    delta = delta_isometry(spec)["uniform"]
    assert max_gamma(spec) == pytest.approx(
        0.5 * ((1 - delta) / (1 + delta)) ** 2, rel=1e-12)
    assert max_gamma(spec) == pytest.approx(0.125, abs=1e-9)


def test_edge_channel_completeness(spec_ring3):
    gamma = 0.5 * max_gamma(spec_ring3)
    e = spec_ring3.graph.edges[0]
    ch = build_edge_channel(spec_ring3, e, gamma)
    S = sum(K.conj().T @ K for K in ch.kraus)
    assert np.linalg.norm(S - np.eye(S.shape[0])) < 1e-12
    assert ch.gamma == gamma and ch.support == e


def test_edge_channel_rejects_high_rate(spec_ring3):
    e = spec_ring3.graph.edges[1]
    with pytest.raises(NumericalError) as exc:
        build_edge_channel(spec_ring3, e, 1.01 * max_gamma(spec_ring3))
    assert "max_gamma" in str(exc.value) and str(e) in str(exc.value)
    with pytest.raises(ValidationError, match="nonnegative"):
        build_edge_channel(spec_ring3, e, -0.5)


def test_kraus_completeness_is_validated(spec_ring3):
    e = spec_ring3.graph.edges[0]
    ch = build_edge_channel(spec_ring3, e, 0.5 * max_gamma(spec_ring3))
    broken = (0.9 * ch.kraus[0],) + ch.kraus[1:]
    with pytest.raises(NumericalError, match="completeness"):
        KrausChannel(broken, support=e, gamma=ch.gamma)


def test_global_channel_structure(ring3):
    spec = random_near_isometry_spec(ring3, 2, 0.1, seed=2, extra_phys=1)
    ch = build_global_channel(spec, 0.5 * max_gamma(spec))
    assert ch.num_layers == ch.coloring.k == 3
    assert len(ch.site_layer) == 3  # padded images need the site refresh
    covered = sorted(c.support for layer in ch.matching_layers for c in layer)
    assert covered == list(spec.graph.edges)
    minimal = random_near_isometry_spec(ring3, 2, 0.1, seed=2)
    assert build_global_channel(minimal, 0.1).site_layer == ()


def test_liouvillian_annihilates_target(spec_path3):
    Lsup = build_liouvillian(spec_path3)
    psi = assemble_state(spec_path3).vector
    rho = np.outer(psi, psi.conj())
    assert np.linalg.norm(Lsup @ vec_cm(rho)) < 1e-10


def test_liouvillian_guard(ring3):
    spec = random_near_isometry_spec(ring3, 2, 0.1, seed=0, extra_phys=1)
    assert spec.total_dim == 125
    with pytest.raises(CapacityError, match="guard"):
        build_liouvillian(spec)


@given(st.floats(min_value=0.01, max_value=0.45), st.integers(0, 10 ** 6))
@settings(max_examples=8, deadline=None)
def test_parent_bounds_random(delta, seed):
    g = build_lattice_graph("ring", (3,))
    spec = random_near_isometry_spec(g, 2, delta, seed=seed)
    ham = build_parent_ham(spec)
    psi = assemble_state(spec).vector
    for e, h in ham.terms.items():
        assert np.linalg.norm(h, 2) <= 4 + 1e-9
        assert np.linalg.norm(lift_operator(spec.phys_dims, e, h) @ psi) < 1e-9
