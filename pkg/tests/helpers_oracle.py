"""Independent matrix constructions shared by the oracle tests.

Everything here builds operators with explicit Kronecker products, a route
the package itself never takes, so agreement between the two is meaningful.
"""

import numpy as np

from spinchannel.dense import simulated_spins
from spinchannel.model import build_dissipators, build_hamiltonian

I2 = np.eye(2)
SP = np.array([[0.0, 1.0], [0.0, 0.0]])   # raising: |down> -> |up>, up = index 0
SM = SP.T
SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.diag([1.0, -1.0])


def op_on(spins, placed):
    """Kronecker product with `placed[spin]` at that spin, identity elsewhere."""
    out = np.array([[1.0]])
    for sp in spins:
        out = np.kron(out, placed.get(sp, I2))
    return out


def build_matrices(spec, spins=None):
    """(H, [(X_k, rate_k)]) as explicit matrices over the given spins."""
    if spins is None:
        spins = simulated_spins(spec)
    terms = build_hamiltonian(spec)
    h = np.zeros((2 ** len(spins),) * 2)
    for sp, _op, s in terms.one_site:
        h += s * op_on(spins, {sp: SZ})
    for a, b, _op, s in terms.two_site:
        h += s * (op_on(spins, {a: SP, b: SM}) + op_on(spins, {a: SM, b: SP}))
    diss = [(op_on(spins, {sp: SX}), rate)
            for sp, _op, rate in build_dissipators(spec)]
    return h, diss


def liouvillian(h, diss):
    """Row-major-vec superoperator: vec(A rho B) = (A kron B^T) vec(rho)."""
    d = h.shape[0]
    eye = np.eye(d)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for x, rate in diss:
        sup += rate * (np.kron(x, x.T) - np.kron(eye, eye))
    return sup


def ptrace_pair_bits(rho, n, pos_a, pos_b):
    """Brute-force partial trace by basis-state enumeration."""
    bit_a, bit_b = n - 1 - pos_a, n - 1 - pos_b
    red = np.zeros((4, 4), dtype=complex)
    dim = 2 ** n
    keep = (1 << bit_a) | (1 << bit_b)
    for i in range(dim):
        for j in range(dim):
            if (i & ~keep) != (j & ~keep):
                continue
            ra = ((i >> bit_a) & 1) * 2 + ((i >> bit_b) & 1)
            ca = ((j >> bit_a) & 1) * 2 + ((j >> bit_b) & 1)
            red[ra, ca] += rho[i, j]
    return red
