"""Evolution of density matrices under the parent Lindbladian (continuous
time) and the global discrete channel, plus a Kraus-trajectory sampler.

Time axes
---------
Continuous series record real time t.  Discrete series record *rounds*
t = steps / k, where k is the number of matching layers: each channel step
applies one layer drawn uniformly from k, so one round is the natural unit in
which every edge has been refreshed once in expectation (the clock of the
parallel protocol, independent of how many matchings the graph happens to
need).  The raw step count and k are stored in the series meta.

Kraus application is always local (moveaxis the support to the front, apply a
precomputed pair superoperator or the stacked Kraus batch, move back); the
global superoperator is never materialized here.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .errors import NumericalError, ValidationError
from .generators import (build_jump_set, build_liouvillian, build_parent_ham,
                         lift_operator, vec_cm, unvec_cm)
from .tensors import assemble_state

PAIR_SUPEROP_MAX = 32     # precompute (p^2 x p^2) superops up to this pair dim
DENSE_OBS_MAX = 4096      # lift H once when the total dimension is at most this


@dataclass(frozen=True)
class DensityMatrix:
    """Dense Hermitian unit-trace state.  dims holds the per-site physical
    dimensions.  (PSD is an evolution invariant that is spot-checked in
    tests, not revalidated on every construction.)"""

    matrix: np.ndarray
    dims: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        total = int(np.prod(self.dims))
        if m.shape != (total, total):
            raise ValidationError(f"state is {m.shape}, dims {self.dims} need {total}")
        if np.linalg.norm(m - m.conj().T) > 1e-10 * max(1.0, np.linalg.norm(m)):
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > 1e-10:
            raise ValidationError(f"trace is {np.trace(m):.12f}, expected 1")

    @classmethod
    def maximally_mixed(cls, dims, real=True):
        total = int(np.prod(dims))
        eye = np.eye(total, dtype=np.float64 if real else np.complex128)
        return cls(eye / total, tuple(dims))

    @classmethod
    def pure(cls, vector, dims):
        v = np.asarray(vector.vector if hasattr(vector, "vector") else vector)
        return cls(np.outer(v, v.conj()), tuple(dims))


@dataclass(frozen=True)
class TimeSeries:
    """Recorded observables along one evolution; `final` retains the last
    state so callers can resume or inspect it."""

    times: np.ndarray
    fidelity: np.ndarray
    energy: np.ndarray
    violation: np.ndarray
    meta: dict = field(default_factory=dict)
    final: object = None

    def __post_init__(self):
        for name in ("times", "fidelity", "energy", "violation"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("series times must be strictly increasing")
        if self.fidelity.size and (self.fidelity.min() < -1e-9
                                   or self.fidelity.max() > 1 + 1e-9):
            raise ValidationError("fidelity left [0, 1] beyond tolerance")
        n = self.times.size
        for name in ("fidelity", "energy", "violation"):
            if getattr(self, name).size != n:
                raise ValidationError("series columns must share one length")


def _reduced(rho, dims, support):
    """Partial trace of rho onto the listed sites (ascending order)."""
    n = len(dims)
    sup = tuple(support)
    nd = rho.reshape(dims + dims)
    src = sup + tuple(n + v for v in sup)
    nd = np.moveaxis(nd, src, range(2 * len(sup)))
    p = int(np.prod([dims[v] for v in sup]))
    X = nd.reshape(p, p, -1)
    R = int(round(np.sqrt(X.shape[2])))
    return np.einsum("abrr->ab", X.reshape(p, p, R, R))


class Observables:
    """Target-state fidelity, parent energy, and violation weight of a state.

    Lifts H and sum F_i to dense matrices once when the dimension allows it
    (records then cost two elementwise contractions); otherwise falls back to
    per-term partial traces.
    """

    def __init__(self, spec, ham=None, psi=None):
        self.spec = spec
        self.ham = build_parent_ham(spec) if ham is None else ham
        self.psi = np.asarray(psi.vector if hasattr(psi, "vector") else psi) \
            if psi is not None else assemble_state(spec).vector
        self.dims = spec.phys_dims
        total = int(np.prod(self.dims))
        self._viols = {v: F for v, F in self.ham.violations.items()
                       if np.linalg.norm(F) > 1e-14}
        self._dense = total <= DENSE_OBS_MAX
        if self._dense:
            self._H = self.ham.total_dense()
            self._F = sum(lift_operator(self.dims, (v,), F)
                          for v, F in self._viols.items()) if self._viols else None

    def record(self, rho):
        f = float(np.real(self.psi.conj() @ (rho @ self.psi)))
        if self._dense:
            e = float(np.real(np.sum(self._H.T * rho)))
            w = float(np.real(np.sum(self._F.T * rho))) if self._F is not None else 0.0
        else:
            e = sum(float(np.real(np.trace(h @ _reduced(rho, self.dims, edge))))
                    for edge, h in self.ham.terms.items())
            w = sum(float(np.real(np.trace(F @ _reduced(rho, self.dims, (v,)))))
                    for v, F in self._viols.items())
        return {"fidelity": f, "energy": e, "violation": w}


def measure(rho, spec, ham, psi):
    """Single-shot record {fidelity, energy, violation} of one state."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    total = int(np.prod(spec.phys_dims))
    if m.shape != (total, total):
        raise ValidationError(f"state dimension {m.shape} does not match spec ({total})")
    return Observables(spec, ham=ham, psi=psi).record(m)


# ---------------------------------------------------------------------------
# discrete channel application


class _LocalKraus:
    """One local channel compiled for dense application: a small
    superoperator on the support when the pair dimension allows it, the
    stacked Kraus batch otherwise (or when branch sampling needs it)."""

    def __init__(self, kraus, positions, dtype, superop=True):
        Ks = [np.asarray(K).astype(dtype, copy=False) for K in kraus]
        self.positions = tuple(positions)
        self.p = Ks[0].shape[0]
        if superop and self.p <= PAIR_SUPEROP_MAX:
            self.superop = sum(np.kron(K.conj(), K) for K in Ks)
            self.stack = None
        else:
            self.superop = None
            self.stack = np.stack(Ks)

    def apply(self, rho, dims):
        n = len(dims)
        pos = self.positions
        nd = rho.reshape(dims + dims)
        src = pos + tuple(n + v for v in pos)
        dst = tuple(range(2 * len(pos)))
        nd = np.moveaxis(nd, src, dst)
        rest = nd.shape[2 * len(pos):]
        p = self.p
        X = nd.reshape(p, p, -1)
        if self.superop is not None:
            Xv = X.transpose(1, 0, 2).reshape(p * p, -1)
            Y = (self.superop @ Xv).reshape(p, p, -1).transpose(1, 0, 2)
        else:
            T = np.tensordot(self.stack, X, axes=([2], [0]))
            Y = np.einsum("kabR,kcb->acR", T, self.stack.conj(), optimize=True)
        shp = tuple(dims[v] for v in pos)
        nd2 = np.moveaxis(Y.reshape(shp + shp + rest), dst, src)
        return nd2.reshape(rho.shape)


class ChannelApplier:
    """Compiled form of a GlobalChannel for repeated dense application.
    Stays in float64 when the spec and all Kraus operators are real."""

    def __init__(self, channel, dtype=None):
        spec = channel.spec
        self.channel = channel
        self.dims = spec.phys_dims
        if dtype is None:
            all_kraus = [K for layer in channel.matching_layers
                         for ch in layer for K in ch.kraus]
            all_kraus += [K for ch in channel.site_layer for K in ch.kraus]
            real = spec.is_real() and all(
                np.max(np.abs(np.imag(K))) < 1e-13 for K in all_kraus)
            dtype = np.float64 if real else np.complex128
        self.dtype = dtype
        self.sites = [_LocalKraus(ch.kraus, ch.support, dtype)
                      for ch in channel.site_layer]
        self.layers = [[_LocalKraus(ch.kraus, ch.support, dtype) for ch in layer]
                       for layer in channel.matching_layers]

    @property
    def num_layers(self):
        return len(self.layers)

    def _site_pass(self, rho):
        for lk in self.sites:
            rho = lk.apply(rho, self.dims)
        return rho

    def step_average(self, rho):
        rho = self._site_pass(rho)
        acc = None
        for layer in self.layers:
            z = rho
            for lk in layer:
                z = lk.apply(z, self.dims)
            acc = z if acc is None else acc + z
        return acc / len(self.layers)

    def step_sampled(self, rho, rng):
        rho = self._site_pass(rho)
        for lk in self.layers[rng.integers(len(self.layers))]:
            rho = lk.apply(rho, self.dims)
        return rho


def apply_channel(channel, rho, mode="average", seed=None):
    """One step of the global channel; `sampled` draws a single matching."""
    applier = channel if isinstance(channel, ChannelApplier) else ChannelApplier(channel)
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    m = m.astype(np.result_type(m.dtype, applier.dtype), copy=False)
    if mode == "average":
        out = applier.step_average(m)
    elif mode == "sampled":
        out = applier.step_sampled(m, np.random.default_rng(seed))
    else:
        raise ValidationError(f"unknown channel mode {mode!r}")
    return DensityMatrix(out, applier.dims)


def iterate_channel(channel, rho0, steps, cadence=1, observables=None,
                    mode="average", seed=None, stop_threshold=None, meta=None):
    """Run the channel for up to `steps` steps, recording every `cadence`.

    Records are also taken at step 0 and the final step.  If
    `stop_threshold` is set, iteration halts at the first recorded fidelity
    at or above it.  Series times are rounds = steps / num_layers; the final
    state rides along on the returned series.
    """
    if steps < 0:
        raise ValidationError("steps must be nonnegative")
    if mode not in ("average", "sampled"):
        raise ValidationError(f"unknown channel mode {mode!r}")
    applier = channel if isinstance(channel, ChannelApplier) else ChannelApplier(channel)
    if observables is None:
        observables = Observables(applier.channel.spec)
    rho = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0)
    rho = rho.astype(np.result_type(rho.dtype, applier.dtype), copy=True)
    rng = np.random.default_rng(seed)
    k = applier.num_layers
    stepper = (applier.step_average if mode == "average"
               else lambda r: applier.step_sampled(r, rng))
    times, recs = [0.0], [observables.record(rho)]
    n_done = 0
    for n in range(1, steps + 1):
        rho = stepper(rho)
        n_done = n
        if n % cadence == 0 or n == steps:
            times.append(n / k)
            recs.append(observables.record(rho))
            if stop_threshold is not None and recs[-1]["fidelity"] >= stop_threshold:
                break
    info = {"mode": mode, "gamma": applier.channel.gamma, "seed": seed,
            "steps_per_round": k, "steps_run": n_done, "cadence": cadence}
    info.update(meta or {})
    return TimeSeries(np.array(times),
                      np.array([r["fidelity"] for r in recs]),
                      np.array([r["energy"] for r in recs]),
                      np.array([r["violation"] for r in recs]),
                      info, final=DensityMatrix(rho, applier.dims))


def mixing_time(series, threshold):
    """First recorded time with fidelity >= threshold (no interpolation);
    None when the series never gets there."""
    hits = np.nonzero(series.fidelity >= threshold)[0]
    return float(series.times[hits[0]]) if hits.size else None


# ---------------------------------------------------------------------------
# continuous time


class _LindbladRHS:
    """Local-term action of the Lindbladian on a dense density matrix."""

    def __init__(self, spec, jumps=None):
        self.dims = spec.phys_dims
        jumps = build_jump_set(spec) if jumps is None else jumps
        self.terms = []
        for e, Ls in jumps.two_site.items():
            for L in Ls:
                self.terms.append((e, np.asarray(L), np.asarray(L).conj().T @ L))
        for v, Ls in jumps.single_site.items():
            for L in Ls:
                self.terms.append(((v,), np.asarray(L), np.asarray(L).conj().T @ L))

    def apply(self, rho):
        out = np.zeros_like(rho)
        dims = self.dims
        n = len(dims)
        for pos, L, LdL in self.terms:
            src = tuple(pos) + tuple(n + v for v in pos)
            dst = tuple(range(2 * len(pos)))
            nd = np.moveaxis(rho.reshape(dims + dims), src, dst)
            rest = nd.shape[2 * len(pos):]
            p = L.shape[0]
            X = nd.reshape(p, p, -1)
            Y = np.einsum("ab,bcR,dc->adR", L, X, L.conj(), optimize=True)
            Y -= 0.5 * np.einsum("ab,bcR->acR", LdL, X, optimize=True)
            Y -= 0.5 * np.einsum("abR,cb->acR", X, LdL.conj(), optimize=True)
            shp = tuple(dims[v] for v in pos)
            out += np.moveaxis(Y.reshape(shp + shp + rest), dst, src).reshape(rho.shape)
        return out


def lindblad_evolve(spec, rho0, t_final, dt_control=None, rtol=1e-8,
                    method="rk", observables=None, jumps=None, meta=None):
    """Integrate rho' = L(rho) to t_final, recording every dt_control.

    method="rk": adaptive RK45 on the locally applied generator, integrating
    record-to-record and re-symmetrizing the state at each recorded point.
    method="expm": exact exponentiation of the vectorized Liouvillian (dense
    guard applies; intended as an oracle at small sizes).
    """
    if t_final < 0:
        raise ValidationError("t_final must be nonnegative")
    if observables is None:
        observables = Observables(spec)
    rho = np.asarray(rho0.matrix if isinstance(rho0, DensityMatrix) else rho0,
                     dtype=complex)
    dims = spec.phys_dims
    total = int(np.prod(dims))
    if dt_control is None:
        dt_control = t_final / 100 if t_final > 0 else 1.0
    t_grid = np.arange(0.0, t_final + 0.5 * dt_control, dt_control)
    if t_grid[-1] < t_final:
        t_grid = np.append(t_grid, t_final)
    t_grid[-1] = t_final
    times, recs = [0.0], [observables.record(rho)]
    if method == "expm":
        Lsup = build_liouvillian(spec)
        v = vec_cm(rho).astype(complex)
        for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
            v = expm_multiply(Lsup * (t1 - t0), v)
            rho = unvec_cm(v, total)
            rho = 0.5 * (rho + rho.conj().T)
            v = vec_cm(rho)
            times.append(float(t1))
            recs.append(observables.record(rho))
    elif method == "rk":
        rhs = _LindbladRHS(spec, jumps=jumps)

        def f(_, y):
            return rhs.apply(y.reshape(total, total)).reshape(-1)

        for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
            sol = solve_ivp(f, (t0, t1), rho.reshape(-1), method="RK45",
                            rtol=rtol, atol=rtol * 1e-2)
            if not sol.success:
                raise NumericalError(f"integrator failed in [{t0}, {t1}]: {sol.message}")
            rho = sol.y[:, -1].reshape(total, total)
            rho = 0.5 * (rho + rho.conj().T)
            times.append(float(t1))
            recs.append(observables.record(rho))
    else:
        raise ValidationError(f"unknown integration method {method!r}")
    info = {"method": method, "rtol": rtol, "dt_control": dt_control}
    info.update(meta or {})
    return TimeSeries(np.array(times),
                      np.array([r["fidelity"] for r in recs]),
                      np.array([r["energy"] for r in recs]),
                      np.array([r["violation"] for r in recs]),
                      info, final=DensityMatrix(rho, dims))


# ---------------------------------------------------------------------------
# Monte Carlo unraveling


def _sample_branch(psi_nd, lk, dims, rng):
    """Apply one local channel to a pure state by sampling a Kraus branch
    with its Born weight; renormalizes, resamples zero-norm draws."""
    pos = lk.positions
    nd = np.moveaxis(psi_nd, pos, range(len(pos)))
    rest = nd.shape[len(pos):]
    X = nd.reshape(lk.p, -1)
    Y = lk.stack @ X                                    # (nk, p, rest)
    w = np.einsum("kpr,kpr->k", Y, Y.conj()).real
    probs = np.clip(w, 0.0, None)
    probs /= probs.sum()
    for _ in range(8):
        a = int(rng.choice(w.size, p=probs))
        nrm = np.sqrt(w[a])
        if nrm > 1e-15:
            break
    else:
        raise NumericalError("trajectory hit a zero-norm branch repeatedly")
    out = (Y[a] / nrm).reshape((lk.p,) + rest)
    shp = tuple(dims[v] for v in pos)
    return np.moveaxis(out.reshape(shp + rest), range(len(pos)), pos)


def sample_trajectory(channel, psi0, steps, seed, target=None, cadence=1):
    """One pure-state Kraus trajectory: each step runs the site channels,
    then one matching layer drawn uniformly; every local channel samples a
    Kraus branch.  Returns (times in rounds, fidelity estimates or None,
    final state vector).  Averaging |<target|psi>|^2 over trajectories is an
    unbiased estimator of the averaged channel's fidelity (fidelity is
    linear in the density matrix)."""
    spec = channel.spec
    dims = spec.phys_dims
    dt = np.float64 if spec.is_real() else np.complex128
    mk = lambda ch: _LocalKraus(ch.kraus, ch.support, dt, superop=False)
    sites = [mk(ch) for ch in channel.site_layer]
    layers = [[mk(ch) for ch in layer] for layer in channel.matching_layers]
    rng = np.random.default_rng(seed)
    if psi0 is None:
        # uniformly drawn basis state: the unbiased pure-state unraveling of
        # the maximally mixed start
        psi = np.zeros(int(np.prod(dims)), dtype=dt)
        psi[rng.integers(psi.size)] = 1.0
    else:
        psi = np.asarray(psi0.vector if hasattr(psi0, "vector") else psi0)
        psi = psi.astype(np.result_type(psi.dtype, dt), copy=True)
    psi = psi.reshape(dims)
    k = len(layers)
    tvec = None if target is None else np.asarray(
        target.vector if hasattr(target, "vector") else target).conj().reshape(-1)
    times = [0.0]
    fids = None if tvec is None else [float(abs(tvec @ psi.reshape(-1)) ** 2)]
    for n in range(1, steps + 1):
        for lk in sites:
            psi = _sample_branch(psi, lk, dims, rng)
        for lk in layers[rng.integers(k)]:
            psi = _sample_branch(psi, lk, dims, rng)
        if n % cadence == 0 or n == steps:
            times.append(n / k)
            if fids is not None:
                fids.append(float(abs(tvec @ psi.reshape(-1)) ** 2))
    return (np.array(times), None if fids is None else np.array(fids),
            psi.reshape(-1))
