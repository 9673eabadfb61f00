"""Site tensors, bond bases, injectivity diagnostics, and dense state assembly.

Conventions fixed here and relied on everywhere else:

* A site tensor is stored as a d x D^(number of legs) matrix.  Rows index the
  physical basis; columns index the virtual product basis, row-major over the
  legs taken in sorted-neighbor order (``leg_order``).
* Each edge (i, j) with i < j carries a two-leg bond state; its first tensor
  factor lives on the leg of i pointing to j, the second on the leg of j
  pointing to i.
* The assembled state is the image of the tensor product of all bond states
  under the tensor product of all site maps, normalized to unit 2-norm.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ValidationError

ASSEMBLE_GUARD = 2 ** 24  # max amplitudes of a dense assembled state


@dataclass(frozen=True)
class SiteTensor:
    """Linear map from the virtual legs of one vertex into its physical space."""

    vertex: int
    matrix: np.ndarray
    bond_dim: int
    leg_order: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2:
            raise ValidationError(f"site {self.vertex}: tensor must be a matrix")
        if list(self.leg_order) != sorted(self.leg_order):
            raise ValidationError(f"site {self.vertex}: leg_order not sorted")
        expected = self.bond_dim ** len(self.leg_order)
        if m.shape[1] != expected:
            raise ValidationError(
                f"site {self.vertex}: {m.shape[1]} columns, expected "
                f"{expected} = D^{len(self.leg_order)}")

    @property
    def phys_dim(self):
        return self.matrix.shape[0]

    @property
    def virt_dim(self):
        return self.matrix.shape[1]


@dataclass(frozen=True)
class BondBasis:
    """Orthonormal basis {phi_0, phi_1, ...} of the two-leg bond space.

    phi_0 is the state placed on every edge; the remaining vectors index the
    two-site jump operators.
    """

    phi0: np.ndarray
    phis: tuple

    def __post_init__(self):
        object.__setattr__(self, "phi0", np.asarray(self.phi0, dtype=complex))
        object.__setattr__(self, "phis", tuple(np.asarray(p, dtype=complex) for p in self.phis))
        vecs = self.vectors()
        if len(vecs) != self.phi0.size:
            raise ValidationError("bond basis must span the full bond space")
        G = np.array([[u.conj() @ v for v in vecs] for u in vecs])
        if np.linalg.norm(G - np.eye(len(vecs))) > 1e-12 * len(vecs):
            raise ValidationError("bond basis is not orthonormal")

    @property
    def bond_dim(self):
        return int(round(np.sqrt(self.phi0.size)))

    def vectors(self):
        return [self.phi0, *self.phis]


@dataclass(frozen=True)
class PepsSpec:
    """Graph + per-vertex site tensors + the bond basis shared by all edges."""

    graph: object
    tensors: tuple
    bond_basis: BondBasis

    def __post_init__(self):
        object.__setattr__(self, "tensors", tuple(self.tensors))
        g = self.graph
        if len(self.tensors) != g.num_vertices:
            raise ValidationError("one site tensor per vertex required")
        D = self.bond_basis.bond_dim
        for v, t in enumerate(self.tensors):
            if t.vertex != v:
                raise ValidationError(f"tensor at position {v} labeled {t.vertex}")
            if t.bond_dim != D:
                raise ValidationError(f"site {v}: bond dim {t.bond_dim} != basis dim {D}")
            if tuple(t.leg_order) != tuple(g.adjacency[v]):
                raise ValidationError(f"site {v}: leg_order does not match adjacency")

    @property
    def bond_dim(self):
        return self.bond_basis.bond_dim

    @property
    def phys_dims(self):
        return tuple(t.phys_dim for t in self.tensors)

    @property
    def total_dim(self):
        return int(np.prod(self.phys_dims, dtype=object))

    def is_real(self):
        return all(np.isrealobj(t.matrix) or np.abs(t.matrix.imag).max() == 0
                   for t in self.tensors) and \
            all(np.abs(v.imag).max() == 0 for v in self.bond_basis.vectors())


@dataclass(frozen=True)
class StateVector:
    """Normalized dense pure state plus the raw (pre-normalization) norm."""

    vector: np.ndarray
    raw_norm: float
    dims: tuple


# ---------------------------------------------------------------------------
# bond bases


def _householder_with_first_column(phi0):
    """Unitary whose first column is phi0 (deterministic, single reflection)."""
    n = phi0.size
    v = phi0.astype(complex)
    e0 = np.zeros(n, dtype=complex)
    e0[0] = 1.0
    alpha = np.exp(1j * np.angle(v[0])) if abs(v[0]) > 1e-14 else 1.0
    u = v + alpha * e0
    nu = np.linalg.norm(u)
    if nu < 1e-14:  # phi0 = -e0 up to phase
        Q = np.eye(n, dtype=complex)
    else:
        u = u / nu
        Q = np.eye(n, dtype=complex) - 2.0 * np.outer(u, u.conj())
    # first column is -alpha*phi0-ish; rotate the global phase so col0 == phi0
    ph = Q[:, 0].conj() @ v
    Q = Q * (ph / abs(ph)) if abs(ph) > 1e-14 else Q
    return Q


def make_bond_basis(D, phi0=None):
    """Orthonormal bond basis with a distinguished first vector.

    Default phi0 is the maximally entangled state (1/sqrt(D)) sum_k |kk>, and
    the completion is the generalized Bell family (shift/clock displacements),
    which is deterministic and exactly orthonormal.  A custom phi0 gets a
    deterministic Householder completion instead.
    """
    if D < 1:
        raise ValidationError(f"bond dimension must be >= 1, got {D}")
    if phi0 is None:
        eye = np.eye(D, dtype=complex)
        vecs = []
        w = np.exp(2j * np.pi / D) if D > 1 else 1.0
        for a in range(D):
            shift = np.roll(eye, -a, axis=0)
            for b in range(D):
                clock = np.diag(w ** (b * np.arange(D)))
                vecs.append((shift @ clock).reshape(-1) / np.sqrt(D))
        # exp(2j pi/D) leaves ~1e-16 imaginary dust when the phases are
        # actually real (D <= 2); strip it so real specs stay exactly real
        vecs = [np.real_if_close(v, tol=4) for v in vecs]
        return BondBasis(vecs[0], tuple(vecs[1:]))
    phi0 = np.asarray(phi0, dtype=complex).reshape(-1)
    if phi0.size != D * D:
        raise ValidationError(f"phi0 has size {phi0.size}, expected D^2 = {D * D}")
    nrm = np.linalg.norm(phi0)
    if nrm < 1e-14:
        raise ValidationError("phi0 must be nonzero")
    Q = _householder_with_first_column(phi0 / nrm)
    return BondBasis(Q[:, 0], tuple(Q[:, k] for k in range(1, D * D)))


# ---------------------------------------------------------------------------
# per-tensor diagnostics


def injectivity_report(t, tol=None):
    """Smallest singular value, injectivity flag, and the Moore-Penrose inverse.

    The pseudo-inverse annihilates the cokernel by construction (singular
    directions below the cutoff are dropped), so A^{-1} P_perp = 0, and
    A^{-1} A = I exactly when the tensor is injective.
    """
    A = t.matrix
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    smax = s[0] if s.size else 0.0
    cutoff = (1e-10 * smax) if tol is None else tol
    sigma_min = float(s[-1]) if s.size else 0.0
    injective = bool(A.shape[0] >= A.shape[1] and sigma_min > cutoff)
    keep = s > cutoff
    sinv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    pinv = (Vh.conj().T * sinv) @ U.conj().T
    return {"sigma_min": sigma_min, "injective": injective, "pseudo_inverse": pinv}


def delta_isometry(spec):
    """Per-site and uniform distance from isometry, ||A^dag A - I||.

    The uniform value is the max over sites: that is the quantity every bound
    downstream consumes.  (The per-site list lets callers inspect the min as
    well, which is reported for completeness but used nowhere.)
    """
    per_site = []
    for t in spec.tensors:
        G = t.matrix.conj().T @ t.matrix
        per_site.append(float(np.linalg.norm(G - np.eye(G.shape[0]), 2)))
    return {"per_site": per_site, "uniform": max(per_site)}


# ---------------------------------------------------------------------------
# dense assembly


def _wire_letters(spec):
    import string

    letters = string.ascii_letters
    need = 2 * len(spec.graph.edges) + spec.graph.num_vertices
    if need > len(letters):
        raise CapacityError(f"contraction needs {need} indices, max {len(letters)}")
    it = iter(letters)
    wire = {}
    for e in spec.graph.edges:
        wire[(e, 0)] = next(it)
        wire[(e, 1)] = next(it)
    site = {v: next(it) for v in range(spec.graph.num_vertices)}
    return wire, site


def assemble_state(spec):
    """Contract all bond states with all site maps into a dense state vector.

    Guarded at 2^24 amplitudes.  Returns the normalized vector and the raw
    norm (the assembled state is not normalized in general).
    """
    total = spec.total_dim
    if total > ASSEMBLE_GUARD:
        raise CapacityError(
            f"assembled state needs {total} amplitudes (guard {ASSEMBLE_GUARD})")
    D = spec.bond_dim
    real = spec.is_real()
    dt = np.float64 if real else np.complex128
    wire, site = _wire_letters(spec)
    phi0 = spec.bond_basis.phi0.reshape(D, D)
    phi0 = phi0.real.astype(dt) if real else phi0.astype(dt)
    operands, subs = [], []
    for e in spec.graph.edges:
        operands.append(phi0)
        subs.append(wire[(e, 0)] + wire[(e, 1)])
    for v in range(spec.graph.num_vertices):
        t = spec.tensors[v]
        legs = ""
        for u in t.leg_order:
            e = (v, u) if v < u else (u, v)
            legs += wire[(e, 0)] if v == e[0] else wire[(e, 1)]
        m = t.matrix.real.astype(dt) if real else t.matrix.astype(dt)
        operands.append(m.reshape((t.phys_dim,) + (D,) * len(t.leg_order)))
        subs.append(site[v] + legs)
    out = "".join(site[v] for v in range(spec.graph.num_vertices))
    psi = np.einsum(",".join(subs) + "->" + out, *operands, optimize=True).reshape(-1)
    raw = float(np.linalg.norm(psi))
    if raw < 1e-300:
        raise ValidationError("assembled state is identically zero")
    return StateVector(psi / raw, raw, spec.phys_dims)


# ---------------------------------------------------------------------------
# seeded generators used by tests and experiments


def random_injective_spec(graph, bond_dim, seed, phys_dims=None, real=False):
    """Random injective spec: Gaussian site tensors with minimal physical
    dimensions d_i = D^{deg(i)} unless overridden.  Redraws (deterministically)
    until every tensor is comfortably injective."""
    rng = np.random.default_rng(seed)
    D = bond_dim
    if phys_dims is None:
        phys_dims = [D ** graph.degree(v) for v in range(graph.num_vertices)]
    tensors = []
    for v in range(graph.num_vertices):
        cols = D ** graph.degree(v)
        if phys_dims[v] < cols:
            raise ValidationError(
                f"site {v}: physical dim {phys_dims[v]} < D^deg = {cols}, cannot be injective")
        for _ in range(64):
            A = rng.normal(size=(phys_dims[v], cols))
            if not real:
                A = A + 1j * rng.normal(size=A.shape)
            A /= np.linalg.norm(A, 2)
            if np.linalg.svd(A, compute_uv=False)[-1] > 1e-3:
                break
        tensors.append(SiteTensor(v, A, D, tuple(graph.adjacency[v])))
    return PepsSpec(graph, tensors, make_bond_basis(D))


def random_near_isometry_spec(graph, bond_dim, delta, seed, extra_phys=0, real=False):
    """Random spec with uniform isometry deviation exactly delta at every site.

    Construction: A_i = V_i (I + eps H_i) with V_i a Haar-ish isometry and H_i
    Hermitian with top eigenvalue +1 and spectral radius 1; then
    ||A^dag A - I|| = (1+eps)^2 - 1, and eps is solved so that equals delta.
    """
    if delta < 0:
        raise ValidationError("delta must be nonnegative")
    rng = np.random.default_rng(seed)
    D = bond_dim
    eps = np.sqrt(1.0 + delta) - 1.0
    tensors = []
    for v in range(graph.num_vertices):
        cols = D ** graph.degree(v)
        rows = cols + extra_phys
        Z = rng.normal(size=(rows, cols))
        if not real:
            Z = Z + 1j * rng.normal(size=Z.shape)
        V, _ = np.linalg.qr(Z)
        A = V[:, :cols]
        if delta > 0:
            Hm = rng.normal(size=(cols, cols))
            if not real:
                Hm = Hm + 1j * rng.normal(size=Hm.shape)
            Hm = 0.5 * (Hm + Hm.conj().T)
            w = np.linalg.eigvalsh(Hm)
            Hm = Hm / max(abs(w[0]), abs(w[-1]))
            if abs(w[0]) > abs(w[-1]):  # make the +1 extreme eigenvalue dominant
                Hm = -Hm
            A = A @ (np.eye(cols) + eps * Hm)
        tensors.append(SiteTensor(v, A, D, tuple(graph.adjacency[v])))
    return PepsSpec(graph, tensors, make_bond_basis(D))
