"""Trotterized Lindblad evolution of the operator-basis tensor state.

Each nearest-neighbour site pair gets one two-site superoperator gate: the
exact exponential of the local Liouvillian (bond flip-flop terms, plus the
adjacent one-site splitting and dissipator terms folded in with 1/2 weight
each, full weight at the boundary sites).  Order-2 sweeps apply the even
layer for half a step, the odd layer for a full step, then the even layer
again; consecutive even half-steps are merged between sample points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, NumericalError
from .model import ANCILLA, NV_RIGHT, build_dissipators, build_hamiltonian, build_layout
from .dense import default_dt, sampling_plan, spec_summary
from .observables import Trajectory, condition_two_qubit, entanglement_of_formation
from .tensor_state import (
    apply_two_site_superoperator,
    encode_product_state,
    operator_basis,
    trace_vector,
)

GATE_TRACE_TOL = 1e-12          # left fixed-point residual allowed per gate
ABORT_DISCARD_DEFAULT = 1e-3    # cumulative discarded weight that aborts a run
TRACE_HARD_FACTOR = 100.0       # hard-failure multiple of the trace bound
CONVERGE_TOL_DEFAULT = 1e-4
CHI_SCHEDULE_DEFAULT = (8, 16, 32, 64)

_SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
_SIGMA_MINUS = _SIGMA_PLUS.T.copy()
_SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

_PAULI = {"x": _SIGMA_X, "z": _SIGMA_Z, "+": _SIGMA_PLUS, "-": _SIGMA_MINUS}


def _embed(op, n_factors, which):
    """op acting on qubit factor `which` of an n_factors-qubit site."""
    out = np.array([[1.0 + 0j]])
    for f in range(n_factors):
        out = np.kron(out, op if f == which else np.eye(2))
    return out


def _site_operator(site, spin_ops):
    """Sum of single-spin operators embedded into a site's full space.

    spin_ops: list of (spin_name, 2x2 matrix, coefficient).
    """
    n = len(site)
    dim = 2 ** n
    h = np.zeros((dim, dim), dtype=complex)
    for name, op, coef in spin_ops:
        h += coef * _embed(op, n, site.index(name))
    return h


@dataclass
class _BondGenerator:
    """Local Liouvillian ingredients for one bond (site pair i, i+1)."""

    dims: tuple
    hamiltonian: np.ndarray          # on the d_i * d_j product space
    dissipators: list                # (embedded jump op, effective rate)

    def signature(self):
        diss = tuple(sorted((x.tobytes(), g) for x, g in self.dissipators))
        return (self.dims, self.hamiltonian.tobytes(), diss)


@dataclass
class TrotterPlan:
    """Precomputed gate layers for one (spec, layout, dt, order) choice."""

    dt: float
    order: int
    layer_a: tuple                   # even bond indices
    layer_b: tuple                   # odd bond indices
    gates_full: list                 # per bond, exp(dt L_bond)
    gates_half: list                 # per bond, exp(dt/2 L_bond); order 2 only
    site_dims: tuple


def _bond_generators(spec, layout):
    """Assemble per-bond local Hamiltonians and dissipator lists."""
    terms = build_hamiltonian(spec)
    dissipators = build_dissipators(spec)
    L = layout.n_sites
    sites = layout.sites
    dims = layout.dims

    # one-site pieces, gathered per site first
    site_h = [np.zeros((d, d), dtype=complex) for d in dims]
    site_diss = [[] for _ in range(L)]
    for spin, kind, coef in terms.one_site:
        s, f = layout.locate(spin)
        site_h[s] += coef * _embed(_PAULI[kind], len(sites[s]), f)
    for a, b, kind, coef in terms.two_site:
        (sa, fa), (sb, fb) = layout.locate(a), layout.locate(b)
        if sa == sb:
            n = len(sites[sa])
            hop = (_embed(_SIGMA_PLUS, n, fa) @ _embed(_SIGMA_MINUS, n, fb))
            site_h[sa] += coef * (hop + hop.conj().T)
        elif abs(sa - sb) != 1:
            raise ValueError(
                f"term ({a}, {b}) spans non-adjacent sites {sa}, {sb}; "
                "only nearest-neighbour site pairs are supported")
    for spin, kind, rate in dissipators:
        s, f = layout.locate(spin)
        site_diss[s].append((_embed(_PAULI[kind], len(sites[s]), f), rate))

    def weight(site, bond):
        if site == 0 or site == L - 1:
            return 1.0
        return 0.5

    gens = []
    for b in range(L - 1):
        i, j = b, b + 1
        di, dj = dims[i], dims[j]
        h = np.zeros((di * dj, di * dj), dtype=complex)
        h += np.kron(weight(i, b) * site_h[i], np.eye(dj))
        h += np.kron(np.eye(di), weight(j, b) * site_h[j])
        for a, c, kind, coef in terms.two_site:
            (sa, fa), (sc, fc) = layout.locate(a), layout.locate(c)
            if {sa, sc} == {i, j}:
                if sa == j:                      # orient across the bond
                    (sa, fa), (sc, fc) = (sc, fc), (sa, fa)
                hop = np.kron(_embed(_SIGMA_PLUS, len(sites[i]), fa),
                              _embed(_SIGMA_MINUS, len(sites[j]), fc))
                h += coef * (hop + hop.conj().T)
        diss = []
        for x, rate in site_diss[i]:
            diss.append((np.kron(x, np.eye(dj)), weight(i, b) * rate))
        for x, rate in site_diss[j]:
            diss.append((np.kron(np.eye(di), x), weight(j, b) * rate))
        gens.append(_BondGenerator((di, dj), h, diss))
    return gens


def _pair_transform(di, dj):
    """Unitary W whose columns are the vectorized two-site basis elements."""
    bi, bj = operator_basis(di), operator_basis(dj)
    pair = np.einsum("mab,ncd->mnacbd", bi, bj)
    n = di * di * dj * dj
    d = di * dj
    return pair.reshape(n, d * d).T


def _gate_from_generator(gen, tau):
    """exp(tau * Liouvillian) expressed in the two-site operator basis."""
    di, dj = gen.dims
    d = di * dj
    h = gen.hamiltonian
    eye = np.eye(d)
    s = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for x, rate in gen.dissipators:
        xdx = x.conj().T @ x
        s += rate * (np.kron(x, x.conj())
                     - 0.5 * (np.kron(xdx, eye) + np.kron(eye, xdx.T)))
    w = _pair_transform(di, dj)
    s_op = w.conj().T @ (s @ w)
    if np.max(np.abs(s_op.imag)) > 1e-10 * max(1.0, np.max(np.abs(s_op.real))):
        raise NumericalError("bond generator is not real in the operator basis")
    gate = scipy.linalg.expm(tau * s_op.real)

    tvec = np.kron(trace_vector(di), trace_vector(dj))
    resid = np.max(np.abs(tvec @ gate - tvec)) / np.max(np.abs(tvec))
    if resid > GATE_TRACE_TOL:
        raise NumericalError(
            f"gate is not trace preserving (residual {resid:.2e})")
    return gate


def build_trotter_plan(spec, layout, dt, order=2):
    """Exponentiate every bond's local Liouvillian into gate layers.

    Bonds with identical local generators share one exponential.  Order 2
    additionally prepares half-step gates for the even layer.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    gens = _bond_generators(spec, layout)
    cache = {}

    def gate(gen, tau):
        key = (gen.signature(), tau)
        if key not in cache:
            cache[key] = _gate_from_generator(gen, tau)
        return cache[key]

    gates_full = [gate(g, dt) for g in gens]
    gates_half = [gate(g, dt / 2.0) for g in gens] if order == 2 else []
    n_bonds = len(gens)
    return TrotterPlan(
        dt=float(dt), order=order,
        layer_a=tuple(range(0, n_bonds, 2)),
        layer_b=tuple(range(1, n_bonds, 2)),
        gates_full=gates_full, gates_half=gates_half,
        site_dims=tuple(layout.dims),
    )


def _apply_layer(state, bonds, gates):
    for b in bonds:
        apply_two_site_superoperator(state, b, gates[b])


def evolve_tebd(spec, t_max, dt=None, chi_max=64, cutoff=1e-12,
                sample_every=None, order=2, abort_discard=ABORT_DISCARD_DEFAULT):
    """Integrate the master equation by TEBD sweeps and sample E(t).

    Samples entanglement of formation between ancilla and the right NV, the
    global trace, and the cumulative relative discarded weight.  Aborts with
    a convergence error when the discarded weight passes abort_discard (the
    run cannot certify accuracy; raise chi_max).  The trace is required to
    stay within a hard multiple of the discarded-weight bound.
    """
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    if dt is None:
        dt = default_dt(spec)
    layout = build_layout(spec.geometry)
    n_steps, sample_every = sampling_plan(t_max, dt, sample_every)
    plan = build_trotter_plan(spec, layout, dt, order)
    state = encode_product_state(layout, chi_max=chi_max, cutoff=cutoff)

    sa, fa = layout.locate(ANCILLA)
    sb, fb = layout.locate(NV_RIGHT)
    keep_a = fa if len(layout.sites[sa]) > 1 else None
    keep_b = fb if len(layout.sites[sb]) > 1 else None

    times, ent, trace, disc = [], [], [], []

    def sample(step):
        t = state.trace()
        bound = 10.0 * state.discarded_total + 1e-10
        if abs(t - 1.0) > TRACE_HARD_FACTOR * bound:
            raise NumericalError(
                f"trace drifted to {t!r} at t={step * dt:.6g} "
                f"(bound {bound:.2e}); reduce dt or raise chi_max")
        rho = state.reduce_pair(sa, sb, keep_a=keep_a, keep_b=keep_b)
        rho = rho / np.trace(rho).real
        rho = condition_two_qubit(rho)
        times.append(step * dt)
        ent.append(entanglement_of_formation(rho))
        trace.append(t)
        disc.append(state.discarded_total)
        if state.discarded_total > abort_discard:
            raise ConvergenceError(
                f"cumulative discarded weight {state.discarded_total:.3e} "
                f"exceeds {abort_discard:.1e}; raise chi_max")

    sample(0)
    if n_steps > 0 and plan.order == 2:
        a, b = plan.layer_a, plan.layer_b
        _apply_layer(state, a, plan.gates_half)
        for step in range(1, n_steps + 1):
            _apply_layer(state, b, plan.gates_full)
            boundary = step % sample_every == 0 or step == n_steps
            if boundary:
                _apply_layer(state, a, plan.gates_half)
                sample(step)
                if step < n_steps:
                    _apply_layer(state, a, plan.gates_half)
            else:
                _apply_layer(state, a, plan.gates_full)
    elif n_steps > 0:
        for step in range(1, n_steps + 1):
            _apply_layer(state, plan.layer_a, plan.gates_full)
            _apply_layer(state, plan.layer_b, plan.gates_full)
            if step % sample_every == 0 or step == n_steps:
                sample(step)

    metadata = {
        "solver": "tebd",
        "dt_us": float(dt),
        "n_steps": int(n_steps),
        "sample_every": int(sample_every),
        "order": int(order),
        "chi_max": int(chi_max),
        "cutoff": float(cutoff),
        "max_bond_dim": int(max(state.bond_dims, default=1)),
        "discarded_weight": float(state.discarded_total),
        "spec": spec_summary(spec),
    }
    return Trajectory(
        times=np.array(times), entanglement=np.array(ent),
        trace=np.array(trace), aux=np.array(disc),
        aux_kind="discarded_weight", metadata=metadata,
    )


def converge_chi(spec, t_max, dt=None, chi_schedule=CHI_SCHEDULE_DEFAULT,
                 tol=CONVERGE_TOL_DEFAULT, cutoff=1e-12, sample_every=None,
                 order=2, abort_discard=ABORT_DISCARD_DEFAULT):
    """Raise chi until E(t) stops moving, per the insensitivity protocol.

    Runs evolve_tebd at each chi in the strictly increasing schedule and
    stops once max_t |E_chi(t) - E_prev(t)| < tol, returning the last run and
    a report with the deviation history.  A candidate that fails numerically
    records an infinite deviation and the schedule moves on.  Exhausting the
    schedule raises a convergence error carrying the history.
    """
    chis = tuple(int(c) for c in chi_schedule)
    if len(chis) < 2 or any(b <= a for a, b in zip(chis, chis[1:])):
        raise ValueError("chi_schedule must be strictly increasing, len >= 2")

    prev = None
    deviations = []
    report = {"chi_schedule": list(chis), "deviations": deviations,
              "tol": float(tol), "converged_chi": None}
    for chi in chis:
        try:
            traj = evolve_tebd(spec, t_max, dt=dt, chi_max=chi, cutoff=cutoff,
                               sample_every=sample_every, order=order,
                               abort_discard=abort_discard)
        except (NumericalError, ConvergenceError):
            deviations.append(float("inf"))
            prev = None
            continue
        if prev is not None:
            dev = float(np.max(np.abs(traj.entanglement - prev.entanglement)))
            deviations.append(dev)
            if dev < tol:
                report["converged_chi"] = chi
                traj.metadata["convergence"] = report
                return traj, report
        prev = traj
    raise ConvergenceError(
        f"chi schedule {chis} exhausted without convergence; "
        f"deviations {deviations}")
