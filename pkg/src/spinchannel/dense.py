"""Dense density-matrix integrator: fixed-step RK4 on the full Lindblad flow.

The density matrix is stored as a D x D complex array over the simulated
spins.  Spins that never interact are factored out exactly before the state
is built: the dummy spin of ladder layouts and any missing channel spins
(both stay in a fixed product state forever and never correlate), so a
configuration with vacancies needs a smaller matrix than the complete one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CapabilityError, NumericalError
from .model import (ANCILLA, DUMMY, NV_RIGHT, build_dissipators,
                    build_hamiltonian, build_layout, channel_spin,
                    initial_state_spec)
from .observables import Trajectory, entanglement_of_formation

SPIN_LIMIT_DEFAULT = 11          # dense backend refuses > 2^11 basis states
DT_COUPLING_FACTOR = 0.01        # default dt = 0.01 / max coupling
TRACE_DRIFT_TOL = 1e-6


@dataclass
class DenseSystem:
    """Compiled right-hand side: bit masks and index lists per term."""

    spins: tuple
    dim: int
    hops: list = field(default_factory=list)    # (rows, mask, strength)
    flips: list = field(default_factory=list)   # (mask, rate)
    row_add: np.ndarray = None                  # -i d[r] - sum(rates)
    col_add: np.ndarray = None                  # +i d[c]

    @classmethod
    def from_terms(cls, spins, one_site, two_site, dissipators):
        spins = tuple(spins)
        n = len(spins)
        dim = 2 ** n
        pos = {sp: i for i, sp in enumerate(spins)}

        def bit(sp):
            return 1 << (n - 1 - pos[sp])

        sys = cls(spins=spins, dim=dim)
        idx = np.arange(dim)
        for a, b, op, s in two_site:
            if op != "hop":
                raise ValueError(f"unknown two-site op {op!r}")
            ma, mb = bit(a), bit(b)
            rows = idx[((idx & ma) != 0) & ((idx & mb) == 0)]
            sys.hops.append((rows, ma | mb, float(s)))

        dvec = np.zeros(dim)
        for sp, op, s in one_site:
            if op != "z":
                raise ValueError(f"unknown one-site op {op!r}")
            signs = np.where((idx & bit(sp)) == 0, 1.0, -1.0)   # bit 0 is up
            dvec += s * signs

        total_rate = 0.0
        for sp, op, rate in dissipators:
            if op != "x":
                raise ValueError(f"unknown dissipator op {op!r}")
            sys.flips.append((bit(sp), float(rate)))
            total_rate += rate

        sys.row_add = (-1j) * dvec - total_rate
        sys.col_add = (+1j) * dvec
        return sys

    @classmethod
    def from_spec(cls, spec):
        return cls.from_terms(simulated_spins(spec),
                              build_hamiltonian(spec).one_site,
                              build_hamiltonian(spec).two_site,
                              build_dissipators(spec))


def simulated_spins(spec):
    """Spins the dense state must represent, in layout order.

    The ladder dummy spin and missing channel spins carry no Hamiltonian or
    dissipator terms and start in a product state, so they factor out of the
    dynamics exactly and are dropped rather than simulated.
    """
    layout = build_layout(spec.geometry)
    absent = {DUMMY} | {channel_spin(i, r) for i, r in spec.missing}
    return tuple(sp for sp in layout.flat_spins if sp not in absent)


def lindblad_rhs(rho, system, out=None):
    """d(rho)/dt = -i[H, rho] + sum_k rate_k (X_k rho X_k - rho).

    Works for any complex square input (the RK4 stages are not exactly
    Hermitian), preserves Hermiticity and trace in exact arithmetic.
    """
    if out is None:
        out = np.zeros_like(rho)
    else:
        out[...] = 0.0
    for rows, mask, s in system.hops:
        _kernels.hop_left(out, rho, rows, mask, -1j * s)
        _kernels.hop_right(out, rho, rows, mask, +1j * s)
    for mask, rate in system.flips:
        _kernels.flip_conjugate(out, rho, mask, rate)
    _kernels.diag_damp(out, rho, system.row_add, system.col_add)
    return out


def initial_density_matrix(system):
    """Singlet on (ancilla, NV_L), every other simulated spin down."""
    n = len(system.spins)
    pos = {sp: i for i, sp in enumerate(system.spins)}
    all_down = system.dim - 1
    b_anc = 1 << (n - 1 - pos[ANCILLA])
    b_nvl = 1 << (n - 1 - pos["nvL"])
    s1 = all_down ^ b_anc            # ancilla up, NV_L down
    s2 = all_down ^ b_nvl            # ancilla down, NV_L up
    rho = np.zeros((system.dim, system.dim), dtype=complex)
    rho[s1, s1] = rho[s2, s2] = 0.5
    rho[s1, s2] = rho[s2, s1] = -0.5
    return rho


def reduce_pair_dense(rho, spins, spin_a, spin_b):
    """Partial trace down to the ordered pair (spin_a, spin_b), 4x4 output."""
    n = len(spins)
    pos = {sp: i for i, sp in enumerate(spins)}
    i, j = pos[spin_a], pos[spin_b]
    t = rho.reshape((2,) * (2 * n))
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    row = list(letters[:n])
    col = list(letters[:n])
    col[i], col[j] = letters[n], letters[n + 1]
    out = f"{row[i]}{row[j]}{col[i]}{col[j]}"
    sub = "".join(row) + "".join(col) + "->" + out
    return np.einsum(sub, t).reshape(4, 4)


def default_dt(spec):
    w = spec.max_coupling()
    if w > 0:
        return DT_COUPLING_FACTOR / w
    rates = [spec.nv_noise_rate, spec.channel_noise_rate]
    r = max(rates)
    return 0.1 / r if r > 0 else 1.0


def sampling_plan(t_max, dt, sample_every):
    """(n_steps, sample_every) shared by both backends for matching grids."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    n_steps = int(round(t_max / dt))
    if t_max > 0 and n_steps == 0:
        n_steps = 1
    if sample_every is None:
        sample_every = max(1, n_steps // 512)
    return n_steps, int(sample_every)


def _rk4_step(rho, system, dt, work):
    k1, k2, k3, k4, y = work
    lindblad_rhs(rho, system, k1)
    np.multiply(k1, dt / 2.0, out=y)
    y += rho
    lindblad_rhs(y, system, k2)
    np.multiply(k2, dt / 2.0, out=y)
    y += rho
    lindblad_rhs(y, system, k3)
    np.multiply(k3, dt, out=y)
    y += rho
    lindblad_rhs(y, system, k4)
    k2 += k3
    k1 += k4
    k1 += k2
    k1 += k2                      # k1 + k4 + 2 (k2 + k3)
    np.multiply(k1, dt / 6.0, out=k1)
    rho += k1


def evolve_dense(spec, t_max, dt=None, sample_every=None,
                 spin_limit=SPIN_LIMIT_DEFAULT, trace_tol=TRACE_DRIFT_TOL):
    """Integrate the Lindblad equation with fixed-step RK4, sampling E(t).

    The guard counts *simulated* spins (dummy and missing spins excluded),
    matching backend auto-selection; raise `spin_limit` to override.
    Samples land on step multiples of `sample_every` plus the final step.
    Trace drift beyond `trace_tol` aborts with a NumericalError suggesting
    a smaller dt.
    """
    n_sim = len(simulated_spins(spec))
    if n_sim > spin_limit:
        raise CapabilityError(
            f"dense backend limited to {spin_limit} simulated spins "
            f"({n_sim} requested); use the tensor backend"
        )
    system = DenseSystem.from_spec(spec)
    if dt is None:
        dt = default_dt(spec)
    n_steps, sample_every = sampling_plan(t_max, dt, sample_every)

    rho = initial_density_matrix(system)
    work = [np.zeros_like(rho) for _ in range(5)]

    times, ent, trace, purity = [], [], [], []

    def sample(step):
        tr = float(np.real(np.trace(rho)))
        if abs(tr - 1.0) > trace_tol:
            raise NumericalError(
                f"trace drifted to {tr!r} at t={step * dt!r}; reduce dt"
            )
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        if herm > 1e-10:
            raise NumericalError(f"Hermiticity drift {herm:.3e}; reduce dt")
        red = reduce_pair_dense(rho, system.spins, ANCILLA, NV_RIGHT)
        red = red / np.real(np.trace(red))
        times.append(step * dt)
        ent.append(entanglement_of_formation(red))
        trace.append(tr)
        purity.append(float(np.real(np.vdot(rho, rho))))

    sample(0)
    for step in range(1, n_steps + 1):
        _rk4_step(rho, system, dt, work)
        if step % sample_every == 0 or step == n_steps:
            sample(step)

    meta = {
        "solver": "dense",
        "dt_us": dt,
        "n_steps": n_steps,
        "sample_every": sample_every,
        "spins": list(system.spins),
        "spec": spec_summary(spec),
    }
    return Trajectory(times=times, entanglement=ent, trace=trace,
                      aux=purity, aux_kind="purity", metadata=meta)


def spec_summary(spec):
    g = spec.geometry
    return {
        "geometry": g.kind,
        "n": g.n,
        "left_nv_coupling": list(spec.left_nv_coupling),
        "right_nv_coupling": list(spec.right_nv_coupling),
        "rail_couplings": [list(r) for r in spec.rail_couplings],
        "rung_couplings": list(spec.rung_couplings),
        "splitting": spec.splitting,
        "nv_noise_rate": spec.nv_noise_rate,
        "channel_noise_rate": spec.channel_noise_rate,
        "missing": sorted(list(m) for m in spec.missing),
    }
