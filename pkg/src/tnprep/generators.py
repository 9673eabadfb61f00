"""Dynamical objects derived from a PepsSpec: parent-Hamiltonian terms,
jump operators, the vectorized Liouvillian, and the discrete-time Kraus
channels with the admissible-rate check.

Local operators are stored on their support only; `lift_operator` embeds them
in a dense N-site space on demand.  Vectorization is column-stacking
throughout: vec(A rho B) = (B^T (x) A) vec(rho).
"""

from dataclasses import dataclass
import string

import numpy as np

from .errors import CapacityError, NumericalError, ValidationError
from .graphs import edge_color
from .tensors import delta_isometry, injectivity_report

SUPEROP_GUARD = 64  # dense superoperators up to (64^2) x (64^2)


@dataclass(frozen=True)
class ParentHamiltonian:
    """Edge terms h_e on their two-site supports plus per-vertex violation
    projectors F_i = P_perp(Im A_i)."""

    spec: object
    terms: dict
    violations: dict

    def edge_term(self, e):
        return self.terms[e]

    def total_dense(self, include_violations=False):
        dims = self.spec.phys_dims
        H = np.zeros((int(np.prod(dims)),) * 2, dtype=self.terms[next(iter(self.terms))].dtype)
        for e, h in self.terms.items():
            H = H + lift_operator(dims, e, h)
        if include_violations:
            for v, F in self.violations.items():
                if np.linalg.norm(F) > 1e-14:
                    H = H + lift_operator(dims, (v,), F)
        return H


@dataclass(frozen=True)
class JumpSet:
    spec: object
    two_site: dict
    single_site: dict

    def all_lifted(self):
        """Every jump operator embedded in the full space (dense budget)."""
        dims = self.spec.phys_dims
        ops = []
        for e, Ls in self.two_site.items():
            ops.extend(lift_operator(dims, e, L) for L in Ls)
        for v, Ls in self.single_site.items():
            ops.extend(lift_operator(dims, (v,), L) for L in Ls)
        return ops


@dataclass(frozen=True)
class KrausChannel:
    """Ordered Kraus list on a declared support; gamma set for edge channels."""

    kraus: tuple
    support: tuple
    gamma: float = None

    def __post_init__(self):
        object.__setattr__(self, "kraus", tuple(np.asarray(K) for K in self.kraus))
        dim = self.kraus[0].shape[0]
        res = sum(K.conj().T @ K for K in self.kraus) - np.eye(dim)
        if np.linalg.norm(res) > 1e-12 * dim:
            raise NumericalError(
                f"Kraus completeness violated on support {self.support}: "
                f"residual {np.linalg.norm(res):.2e}")


@dataclass(frozen=True)
class GlobalChannel:
    """Site channels composed first, then a uniform mixture of matching layers."""

    spec: object
    site_layer: tuple
    matching_layers: tuple
    coloring: object

    @property
    def num_layers(self):
        return len(self.matching_layers)

    @property
    def mixing_weight(self):
        return 1.0 / len(self.matching_layers)

    @property
    def gamma(self):
        for layer in self.matching_layers:
            for ch in layer:
                return ch.gamma
        return None


# ---------------------------------------------------------------------------
# dense embedding


def lift_operator(dims, support, op):
    """Embed `op` (acting on the listed sites, factors in that order) into the
    product space of all `dims`."""
    n = len(dims)
    if 2 * n > len(string.ascii_letters):
        raise CapacityError(f"cannot label {n} sites for dense embedding")
    out = string.ascii_letters[:n]
    inn = string.ascii_letters[n:2 * n]
    sup = tuple(support)
    op_nd = np.asarray(op).reshape([dims[v] for v in sup] * 2)
    subs = ["".join(out[v] for v in sup) + "".join(inn[v] for v in sup)]
    operands = [op_nd]
    for v in range(n):
        if v not in sup:
            operands.append(np.eye(dims[v], dtype=op_nd.dtype))
            subs.append(out[v] + inn[v])
    full = np.einsum(",".join(subs) + "->" + out + inn, *operands, optimize=True)
    d = int(np.prod(dims))
    return full.reshape(d, d)


def vec_cm(M):
    """Column-stacking vectorization."""
    return np.asarray(M).reshape(-1, order="F")


def unvec_cm(v, dim):
    return np.asarray(v).reshape(dim, dim, order="F")


# ---------------------------------------------------------------------------
# pair-space machinery shared by the Hamiltonian and jump builders


def _pair_maps(spec, e):
    """Forward map B = A_i (x) A_j, its pseudo-inverse, and a lifter taking an
    operator on the edge's two bond wires into the pair's full virtual domain."""
    i, j = e
    ti, tj = spec.tensors[i], spec.tensors[j]
    ri = injectivity_report(ti)
    rj = injectivity_report(tj)
    for v, rep in ((i, ri), (j, rj)):
        if not rep["injective"]:
            raise ValidationError(
                f"site {v} is not injective (sigma_min = {rep['sigma_min']:.2e})")
    B = np.kron(ti.matrix, tj.matrix)
    Binv = np.kron(ri["pseudo_inverse"], rj["pseudo_inverse"])
    D = spec.bond_dim
    ni, nj = len(ti.leg_order), len(tj.leg_order)
    pi = ti.leg_order.index(j)
    pj = tj.leg_order.index(i)

    def lift_wires(W):
        # W acts on (wire at i) (x) (wire at j); identity on the other legs
        npair = ni + nj
        letters = string.ascii_letters
        out = letters[:npair]
        inn = letters[npair:2 * npair]
        W4 = np.asarray(W).reshape(D, D, D, D)
        subs = [out[pi] + out[ni + pj] + inn[pi] + inn[ni + pj]]
        operands = [W4]
        for a in range(npair):
            if a not in (pi, ni + pj):
                operands.append(np.eye(D, dtype=W4.dtype))
                subs.append(out[a] + inn[a])
        full = np.einsum(",".join(subs) + "->" + out + inn, *operands, optimize=True)
        return full.reshape(D ** npair, D ** npair)

    return B, Binv, lift_wires


def _maybe_real(M, spec):
    if spec.is_real() and (np.isrealobj(M) or abs(M.imag).max() < 1e-13):
        return np.ascontiguousarray(M.real)
    return M


def _image_projectors(t):
    """P onto Im(A), its complement, and the image/cokernel orthonormal bases."""
    U, s, _ = np.linalg.svd(t.matrix, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * (s[0] if s.size else 1.0)))
    PS = U[:, :rank] @ U[:, :rank].conj().T
    Pp = np.eye(t.phys_dim) - PS
    return PS, Pp, U[:, :rank], U[:, rank:]


# ---------------------------------------------------------------------------
# builders


def build_parent_ham(spec):
    """h_e = (A_i (x) A_j)^{-dag} Q (A_i (x) A_j)^{-1} with Q the projector
    complement of |phi_0> on the edge's bond pair, plus violation projectors."""
    phi0 = spec.bond_basis.phi0
    Q = np.eye(phi0.size) - np.outer(phi0, phi0.conj())
    terms = {}
    for e in spec.graph.edges:
        B, Binv, lift_wires = _pair_maps(spec, e)
        h = Binv.conj().T @ lift_wires(Q) @ Binv
        h = 0.5 * (h + h.conj().T)
        terms[e] = _maybe_real(h, spec)
    violations = {}
    for v, t in enumerate(spec.tensors):
        _, Pp, _, _ = _image_projectors(t)
        violations[v] = _maybe_real(Pp, spec)
    return ParentHamiltonian(spec, terms, violations)


def isometrized_parent_term(spec, e):
    """The ideal projector h-tilde: the same edge term built from the polar
    isometries of the two tensors (all singular values snapped to 1)."""
    i, j = e

    def polar(t):
        U, _, Vh = np.linalg.svd(t.matrix, full_matrices=False)
        return U @ Vh

    ai, aj = polar(spec.tensors[i]), polar(spec.tensors[j])
    B = np.kron(ai, aj)
    _, _, lift_wires = _pair_maps(spec, e)
    phi0 = spec.bond_basis.phi0
    Q = np.eye(phi0.size) - np.outer(phi0, phi0.conj())
    h = B @ lift_wires(Q) @ B.conj().T  # isometry: pinv = adjoint
    return _maybe_real(0.5 * (h + h.conj().T), spec)


def build_jump_set(spec):
    """Two-site jumps L_{alpha,e} = B |phi_0><phi_alpha| B^{-1} plus the
    single-site family {|s_a><f_b| / sqrt(dim S_i)} with s ranging over an
    orthonormal basis of Im(A_i) and f over its complement."""
    phi0 = spec.bond_basis.phi0
    two_site = {}
    for e in spec.graph.edges:
        B, Binv, lift_wires = _pair_maps(spec, e)
        Ls = []
        for phi in spec.bond_basis.phis:
            L = B @ lift_wires(np.outer(phi0, phi.conj())) @ Binv
            Ls.append(_maybe_real(L, spec))
        two_site[e] = tuple(Ls)
    single_site = {}
    for v, t in enumerate(spec.tensors):
        _, Pp, Simg, Sco = _image_projectors(t)
        if np.linalg.norm(Pp) < 1e-12:
            single_site[v] = ()
            continue
        dimS = Simg.shape[1]
        Ls = []
        for a in range(dimS):
            for b in range(Sco.shape[1]):
                Ls.append(_maybe_real(
                    np.outer(Simg[:, a], Sco[:, b].conj()) / np.sqrt(dimS), spec))
        single_site[v] = tuple(Ls)
    return JumpSet(spec, two_site, single_site)


def effective_hamiltonian(jumps, e):
    """H_eff,e = (1/2) sum_alpha L^dag L for the edge's jump list."""
    Heff = 0.5 * sum(L.conj().T @ L for L in jumps.two_site[e])
    return 0.5 * (Heff + Heff.conj().T)


def max_gamma(spec):
    """Admissible cap on the discrete rate: (1/2)((1-delta)/(1+delta))^2,
    which keeps ||2 Gamma H_eff|| <= 1 for every edge."""
    delta = delta_isometry(spec)["uniform"]
    if delta >= 1:
        raise ValidationError(
            f"uniform isometry deviation delta = {delta:.3f} >= 1; no admissible rate")
    return 0.5 * ((1.0 - delta) / (1.0 + delta)) ** 2


def build_edge_channel(spec, e, gamma, jumps=None):
    """Kraus channel {K_0 = (I - 2 Gamma H_eff)^{1/2}, K_alpha = sqrt(Gamma) L_alpha}.

    The rate must respect max_gamma(spec); the square root is taken by
    Hermitian eigendecomposition, treating eigenvalues below -1e-12 as a
    genuine rate violation and clamping mere roundoff to zero.
    """
    if gamma < 0:
        raise ValidationError(f"gamma must be nonnegative, got {gamma}")
    cap = max_gamma(spec)
    if gamma > cap * (1 + 1e-12):
        raise NumericalError(
            f"gamma = {gamma:.6g} exceeds max_gamma = {cap:.6g} at edge {e}")
    if jumps is None:
        jumps = build_jump_set(spec)
    Ls = jumps.two_site[e]
    Heff = effective_hamiltonian(jumps, e)
    K0sq = np.eye(Heff.shape[0], dtype=Heff.dtype) - 2.0 * gamma * Heff
    w, U = np.linalg.eigh(K0sq)
    if w.min() < -1e-12:
        raise NumericalError(
            f"K_0 square root failed at edge {e}: eigenvalue {w.min():.3e} < 0 "
            f"(gamma too large)")
    K0 = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.conj().T
    kraus = (K0,) + tuple(np.sqrt(gamma) * L for L in Ls)
    return KrausChannel(kraus, support=e, gamma=gamma)


def build_site_channel(spec, v):
    """Single-site refresh P rho P + (P/dim S) Tr(P_perp rho), or None when the
    tensor's image is the whole site space (the map is the identity)."""
    t = spec.tensors[v]
    PS, Pp, Simg, Sco = _image_projectors(t)
    if np.linalg.norm(Pp) < 1e-12:
        return None
    dimS = Simg.shape[1]
    kraus = [_maybe_real(PS, spec)]
    for a in range(dimS):
        for b in range(Sco.shape[1]):
            kraus.append(_maybe_real(
                np.outer(Simg[:, a], Sco[:, b].conj()) / np.sqrt(dimS), spec))
    return KrausChannel(tuple(kraus), support=(v,), gamma=None)


def build_global_channel(spec, gamma, coloring=None):
    """Site refreshes composed with the uniform mixture of matching layers."""
    if coloring is None:
        coloring = edge_color(spec.graph)
    jumps = build_jump_set(spec)
    site_layer = tuple(ch for ch in (build_site_channel(spec, v)
                                     for v in range(spec.graph.num_vertices))
                       if ch is not None)
    matching_layers = tuple(
        tuple(build_edge_channel(spec, e, gamma, jumps=jumps) for e in layer)
        for layer in coloring.classes)
    return GlobalChannel(spec, site_layer, matching_layers, coloring)


def build_liouvillian(spec):
    """Dense column-stacked generator of the parent Lindbladian (all two-site
    and single-site dissipators at unit rate)."""
    dims = spec.phys_dims
    total = int(np.prod(dims))
    if total > SUPEROP_GUARD:
        raise CapacityError(
            f"dense Liouvillian needs ({total}^2)^2 = {total ** 4} entries "
            f"(guard {SUPEROP_GUARD ** 4})")
    jumps = build_jump_set(spec)
    dt = np.float64 if spec.is_real() else np.complex128
    Lsup = np.zeros((total * total, total * total), dtype=dt)
    eye = np.eye(total, dtype=dt)
    for L in jumps.all_lifted():
        L = L.astype(dt)
        LdL = L.conj().T @ L
        Lsup += np.kron(L.conj(), L)
        Lsup -= 0.5 * (np.kron(eye, LdL) + np.kron(LdL.T, eye))
    return Lsup
