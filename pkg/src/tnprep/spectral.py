"""Exact spectral verification: fixed-point uniqueness of the channel and
Liouvillian, Hamiltonian gaps, and the inequality suite relating the parent
Hamiltonian, its isometrized form, the effective Hamiltonian, and the
interference operators.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .dynamics import ChannelApplier
from .errors import CapacityError, NumericalError, ValidationError
from .generators import (SUPEROP_GUARD, build_jump_set, build_parent_ham,
                         effective_hamiltonian, isometrized_parent_term,
                         lift_operator, max_gamma, vec_cm, unvec_cm)
from .tensors import assemble_state, delta_isometry

PERIPHERAL_TOL = 1e-8
DENSE_EIG_MAX = 4096       # full eigh budget for Hamiltonians
ITER_EIG_MAX = 16384       # two-eigenvalue Lanczos budget
FULL_EIGVEC_MAX = 1024     # superoperator size up to which we take eigenvectors


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    unique_fixed_point: bool
    peripheral_count: int
    gap: float
    fixed_point_overlap: float
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BoundsReport:
    edges: dict          # edge -> {delta, h_norm, local_gap, heff_dev, ...}
    pairs: dict          # (edge_jumps, edge_ham) -> interference norm
    global_report: dict  # gap formula vs exact, all_passed
    all_passed: bool


def channel_superoperator(channel):
    """Dense column-stacked superoperator of one global channel step."""
    spec = channel.spec
    total = int(np.prod(spec.phys_dims))
    if total > SUPEROP_GUARD:
        raise CapacityError(
            f"dense channel superoperator needs ({total}^2)^2 entries; "
            f"guard is total dimension {SUPEROP_GUARD}")
    applier = ChannelApplier(channel)
    S = np.zeros((total * total, total * total), dtype=complex)
    basis = np.zeros((total, total))
    for j in range(total * total):
        col, row = divmod(j, total)
        basis[row, col] = 1.0
        S[:, j] = vec_cm(applier.step_average(basis.astype(applier.dtype)))
        basis[row, col] = 0.0
    if spec.is_real():
        S = np.real_if_close(S, tol=100)
    return S


def channel_spectrum(channel, psi=None):
    """Spectrum of the one-step channel; the fixed point comes from the
    lambda=1 eigenvector (small superoperators) or from inverse iteration on
    S - I (identical limit, cheaper at the largest dense sizes)."""
    spec = channel.spec
    S = channel_superoperator(channel)
    total = int(np.prod(spec.phys_dims))
    if psi is None:
        psi = assemble_state(spec).vector
    if S.shape[0] <= FULL_EIGVEC_MAX:
        w, V = np.linalg.eig(S)
        order = np.argsort(-np.abs(w))
        w, V = w[order], V[:, order]
        rho = unvec_cm(V[:, 0], total)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if abs(tr) < 1e-12:
            raise NumericalError("leading channel eigenvector is traceless")
        rho /= tr
    else:
        # Eigenvectors of a >1024-dim superoperator are not worth the memory;
        # the fixed point comes from inverse iteration on S - I instead, which
        # converges at the shift/gap ratio rather than the channel mixing rate.
        w = np.linalg.eigvals(S)
        w = w[np.argsort(-np.abs(w))]
        eye = np.eye(S.shape[0], dtype=S.dtype)
        rho = _inverse_iterate_null(S - eye, total)
    mods = np.abs(w)
    if mods[0] > 1 + 1e-9:
        raise NumericalError(f"channel spectrum left the unit disk: {mods[0]:.12f}")
    peripheral = int(np.sum(mods >= 1 - PERIPHERAL_TOL))
    gap = float(1 - mods[1]) if w.size > 1 else 1.0
    overlap = float(np.real(psi.conj() @ (rho @ psi)))
    return SpectralReport(w, peripheral == 1, peripheral, gap, overlap,
                          {"kind": "channel", "gamma": channel.gamma})


def liouvillian_spectrum(spec, liouvillian=None, psi=None):
    """Spectrum of the parent Lindbladian; asserts a simple zero mode and no
    other (near-)imaginary-axis eigenvalues."""
    from .generators import build_liouvillian
    L = build_liouvillian(spec) if liouvillian is None else liouvillian
    total = int(np.prod(spec.phys_dims))
    if psi is None:
        psi = assemble_state(spec).vector
    if L.shape[0] <= FULL_EIGVEC_MAX:
        w, V = np.linalg.eig(L)
        order = np.argsort(-w.real)
        w, V = w[order], V[:, order]
        izero = int(np.argmin(np.abs(w)))
        rho = unvec_cm(V[:, izero], total)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if abs(tr) < 1e-12:
            raise NumericalError("Liouvillian zero mode is traceless")
        rho /= tr
    else:
        w = np.linalg.eigvals(L)
        w = w[np.argsort(-w.real)]
        rho = _inverse_iterate_null(L, total)
    on_axis = np.abs(w.real) <= PERIPHERAL_TOL
    rotating = on_axis & (np.abs(w.imag) > PERIPHERAL_TOL)
    if np.any(rotating):
        raise NumericalError(
            f"{int(rotating.sum())} purely imaginary nonzero eigenvalues found")
    peripheral = int(np.sum(on_axis & (np.abs(w.imag) <= PERIPHERAL_TOL)))
    nonzero = w[np.abs(w) > 1e-9]
    gap = float(-nonzero.real.max()) if nonzero.size else 0.0
    overlap = float(np.real(psi.conj() @ (rho @ psi)))
    return SpectralReport(w, peripheral == 1, peripheral, gap, overlap,
                          {"kind": "liouvillian"})


def _inverse_iterate_null(L, total, shift=0.0, iters=50):
    """Null vector of a (numerically) singular generator, normalized to a
    unit-trace Hermitian matrix.

    Inverse power iteration on A^dag A (two triangular solves per step off
    one LU of A), i.e. convergence to the least-singular direction.  Plain
    inverse iteration on the eigenproblem is not enough here: these
    generators are strongly non-normal (nilpotent jumps), so the solve's
    noise floor leaks across the skewed eigenbasis.  Singular subspaces are
    orthogonal regardless, and the null singular value sits at machine zero
    while the rest stay at the physical-gap scale, so an (essentially)
    unshifted solve pins the noise onto the wanted direction.  A nonzero
    shift would ruin exactly that separation; it exists only as a fallback
    for the measure-zero case of an exactly vanishing LU pivot."""
    eye = np.eye(L.shape[0], dtype=L.dtype)
    v0 = vec_cm(np.eye(total, dtype=L.dtype) / total)
    v0 /= np.linalg.norm(v0)
    best, best_res = v0, np.inf
    for s in (shift, 1e-12):
        lu = sla.lu_factor(L - s * eye)
        v = v0
        for _ in range(iters):
            y = sla.lu_solve(lu, v, trans=2)
            v = sla.lu_solve(lu, y, trans=0)
            nrm = np.linalg.norm(v)
            if not np.isfinite(nrm) or nrm == 0:
                break
            v /= nrm
            res = np.linalg.norm(L @ v)
            if res < best_res:
                best, best_res = v, res
            if res < 1e-13:
                break
        if np.isfinite(best_res):
            break
    rho = unvec_cm(best, total)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


class _LocalTermMatvec:
    """Matrix-free H @ v through per-edge local applications."""

    def __init__(self, ham, include_violations):
        self.dims = ham.spec.phys_dims
        self.terms = [(e, h) for e, h in ham.terms.items()]
        if include_violations:
            self.terms += [((v,), F) for v, F in ham.violations.items()
                           if np.linalg.norm(F) > 1e-14]

    def __call__(self, vec):
        dims = self.dims
        n = len(dims)
        psi = vec.reshape(dims)
        out = np.zeros_like(psi)
        for pos, h in self.terms:
            nd = np.moveaxis(psi, pos, range(len(pos)))
            rest = nd.shape[len(pos):]
            p = h.shape[0]
            y = (h @ nd.reshape(p, -1)).reshape((p,) + rest) \
                if len(pos) == 1 else (h @ nd.reshape(p, -1)).reshape(
                    tuple(dims[v] for v in pos) + rest)
            out += np.moveaxis(y.reshape(nd.shape), range(len(pos)), pos)
        return out.reshape(-1)


def hamiltonian_gap(ham, include_violations=False, psi=None):
    """Two smallest eigenvalues of H (or H' = H + sum F_i): gap and ground
    overlap.  Dense eigh up to 4096; Lanczos two-eigenvalue solve to 16384."""
    spec = ham.spec
    total = int(np.prod(spec.phys_dims))
    if psi is None:
        psi = assemble_state(spec).vector
    if total <= DENSE_EIG_MAX:
        H = ham.total_dense(include_violations=include_violations)
        w, V = np.linalg.eigh(H)
        e0, e1 = float(w[0]), float(w[1])
        v0 = V[:, 0]
    elif total <= ITER_EIG_MAX:
        mv = _LocalTermMatvec(ham, include_violations)
        op = spla.LinearOperator((total, total), matvec=mv,
                                 dtype=complex if not spec.is_real() else float)
        w, V = spla.eigsh(op, k=2, which="SA", tol=1e-10, maxiter=20000)
        order = np.argsort(w)
        e0, e1 = float(w[order[0]]), float(w[order[1]])
        v0 = V[:, order[0]]
    else:
        raise CapacityError(
            f"Hamiltonian dimension {total} exceeds the iterative budget "
            f"{ITER_EIG_MAX}")
    return {"e0": e0, "e1": e1, "gap": e1 - e0,
            "ground_overlap": float(abs(np.vdot(psi, v0)) ** 2)}


def _opnorm(M):
    return float(np.linalg.norm(M, 2))


def _local_gap(h):
    w = np.linalg.eigvalsh(h)
    above = w[w > 1e-10]
    return float(above[0]) if above.size else 0.0


def lemma_gap_formula(delta, max_degree):
    """Worst-case lower bound on the parent gap; None outside its validity
    region delta < 1/(4 d0 - 3)."""
    if delta >= 1.0 / (4 * max_degree - 3):
        return None
    return 1.0 / (1 + delta) - 4 * delta * (max_degree - 1) / (1 - delta ** 2)


def interference_operator(spec, edge_jumps, edge_ham, jumps=None, ham=None):
    """F = sum_alpha L_alpha^dag [h, L_alpha] on the union support of two
    adjacent edges, assembled literally from the definition."""
    i_shared = set(edge_jumps) & set(edge_ham)
    if len(i_shared) != 1:
        raise ValidationError(
            f"edges {edge_jumps} and {edge_ham} do not share exactly one site")
    jumps = build_jump_set(spec) if jumps is None else jumps
    ham = build_parent_ham(spec) if ham is None else ham
    support = tuple(sorted(set(edge_jumps) | set(edge_ham)))
    dims = tuple(spec.phys_dims[v] for v in support)
    posL = tuple(support.index(v) for v in edge_jumps)
    posH = tuple(support.index(v) for v in edge_ham)
    h = lift_operator(dims, posH, ham.terms[edge_ham])
    F = np.zeros_like(h)
    for L in jumps.two_site[edge_jumps]:
        Lg = lift_operator(dims, posL, L)
        F += Lg.conj().T @ (h @ Lg - Lg @ h)
    return F


def verify_bounds(spec, ham=None, jumps=None, gap_budget=ITER_EIG_MAX):
    """Per-edge and per-adjacent-pair norm checks against the delta-isometry
    bounds, plus the exact-gap-vs-formula comparison."""
    delta = delta_isometry(spec)["uniform"]
    if delta > 0.5 + 1e-12:
        raise ValidationError(f"bounds suite requires delta <= 1/2, got {delta:.4f}")
    ham = build_parent_ham(spec) if ham is None else ham
    jumps = build_jump_set(spec) if jumps is None else jumps
    edges = {}
    ok = True
    for e, h in ham.terms.items():
        ht = isometrized_parent_term(spec, e)
        heff = effective_hamiltonian(jumps, e)
        rec = {
            "delta": delta,
            "h_norm": _opnorm(h),
            "local_gap": _local_gap(h),
            "iso_dev": _opnorm(h - ht),
            "heff_dev": _opnorm(heff - 0.5 * h),
        }
        rec["pass"] = (rec["h_norm"] <= 4 + 1e-9
                       and rec["local_gap"] >= 1 - 8 * delta - 1e-9
                       and rec["iso_dev"] <= 8 * delta + 1e-9
                       and rec["heff_dev"] <= 5 * delta + 1e-9)
        ok &= rec["pass"]
        edges[e] = rec
    pairs = {}
    edge_list = list(ham.terms)
    for ej in edge_list:
        for eh in edge_list:
            if ej != eh and len(set(ej) & set(eh)) == 1:
                nrm = _opnorm(interference_operator(spec, ej, eh,
                                                    jumps=jumps, ham=ham))
                passed = nrm <= 48 * delta + 1e-9
                ok &= passed
                pairs[(ej, eh)] = {"norm": nrm, "pass": passed}
    d0 = spec.graph.max_degree
    formula = lemma_gap_formula(delta, d0)
    total = int(np.prod(spec.phys_dims))
    gap_exact = None
    if total <= gap_budget:
        # violation projectors included: sites whose image is a proper
        # subspace otherwise contribute spurious zero modes outside the
        # tensor-network manifold
        gap_exact = hamiltonian_gap(ham, include_violations=True)["gap"]
        if formula is not None:
            ok &= gap_exact >= formula - 1e-9
    glob = {"delta": delta, "max_degree": d0,
            "gap_lower_bound_formula": formula, "gap_exact": gap_exact}
    return BoundsReport(edges, pairs, glob, bool(ok))
