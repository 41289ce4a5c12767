"""Two-qubit entanglement measures and the trajectory record type."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

_SY_SY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))

HERM_TOL = 1e-9
TRACE_TOL = 1e-8
NEG_EIG_TOL = 1e-8
IMAG_EIG_TOL = 1e-9


def condition_two_qubit(rho):
    """Validate and gently repair a raw 4x4 density matrix.

    Symmetrizes, clips eigenvalues in [-NEG_EIG_TOL, 0) to zero and
    renormalizes the trace.  Deviations beyond the tolerances (Hermiticity
    1e-9, trace 1e-8 after the caller's own normalization, negativity 1e-8)
    raise NumericalError rather than silently producing garbage entropies.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("expected a 4x4 density matrix")
    herm_dev = np.max(np.abs(rho - rho.conj().T))
    if herm_dev > HERM_TOL:
        raise NumericalError(f"two-qubit state not Hermitian: deviation {herm_dev:.3e}")
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > TRACE_TOL:
        raise NumericalError(f"two-qubit state trace {tr!r} deviates from 1")
    rho /= tr
    evals, evecs = np.linalg.eigh(rho)
    if evals[0] < -NEG_EIG_TOL:
        raise NumericalError(f"two-qubit state has eigenvalue {evals[0]:.3e} < -{NEG_EIG_TOL}")
    if evals[0] < 0.0:
        evals = np.clip(evals, 0.0, None)
        rho = (evecs * evals) @ evecs.conj().T
        rho /= np.real(np.trace(rho))
    return rho


def concurrence(rho):
    """Wootters concurrence of a two-qubit density matrix.

    C = max(0, l1 - l2 - l3 - l4) with l_i the decreasingly sorted square
    roots of the eigenvalues of rho (sy x sy) rho* (sy x sy).  The product is
    not Hermitian, so we take eigenvalues directly and check that their
    imaginary parts are numerical dust before discarding them.
    """
    rho = condition_two_qubit(rho)
    rho_tilde = _SY_SY @ rho.conj() @ _SY_SY
    evals = np.linalg.eigvals(rho @ rho_tilde)
    if np.max(np.abs(evals.imag)) > IMAG_EIG_TOL:
        raise NumericalError("spin-flipped product has non-real eigenvalues")
    lam = np.sqrt(np.clip(evals.real, 0.0, None))
    lam[::-1].sort()
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def _binary_entropy(x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def entanglement_of_formation(rho):
    """Entanglement of formation E = h((1 + sqrt(1 - C^2)) / 2), in ebits.

    Monotone in the concurrence C, 0 for separable states, 1 for Bell states.
    """
    c = concurrence(rho)
    c = min(c, 1.0)
    x = 0.5 * (1.0 + math.sqrt(max(0.0, 1.0 - c * c)))
    e = _binary_entropy(x)
    return float(min(1.0, max(0.0, e)))


@dataclass
class Trajectory:
    """Sampled time series from one evolution run.

    aux holds purity for the dense backend and cumulative discarded weight
    for the tensor backend; aux_kind says which.  metadata echoes everything
    needed to reproduce the run (system description, solver id and its
    parameters).
    """

    times: np.ndarray
    entanglement: np.ndarray
    trace: np.ndarray
    aux: np.ndarray
    aux_kind: str               # "purity" | "discarded_weight"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.entanglement = np.asarray(self.entanglement, dtype=float)
        self.trace = np.asarray(self.trace, dtype=float)
        self.aux = np.asarray(self.aux, dtype=float)
        n = len(self.times)
        if not (len(self.entanglement) == len(self.trace) == len(self.aux) == n):
            raise ValueError("trajectory columns must have equal length")
        if n and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self):
        return len(self.times)


def max_entanglement(traj, refine=False):
    """(E_max, t_at_max) over a trajectory; earliest sample wins ties.

    With refine=True the peak is interpolated by the parabola through the
    argmax sample and its two neighbours, which removes the O(grid^2) bias
    of reading a sharp maximum off a discrete time grid.  The refined value
    never moves outside the bracketing samples; boundary maxima are
    returned as sampled.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    e = np.asarray(traj.entanglement, dtype=float)
    t = np.asarray(traj.times, dtype=float)
    i = int(np.argmax(e))
    if not refine or i == 0 or i == len(e) - 1:
        return float(e[i]), float(t[i])
    a, b, c = np.polyfit(t[i - 1:i + 2] - t[i], e[i - 1:i + 2], 2)
    if a >= 0.0:
        return float(e[i]), float(t[i])
    dt_star = -b / (2.0 * a)
    dt_star = min(max(dt_star, t[i - 1] - t[i]), t[i + 1] - t[i])
    e_star = (a * dt_star + b) * dt_star + c
    return float(max(e_star, e[i])), float(t[i] + dt_star)
