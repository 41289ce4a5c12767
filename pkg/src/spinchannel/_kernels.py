"""Hot loops for the dense integrator.

Local operators are applied to the density matrix by index arithmetic on
basis-state bit patterns; neither the Hamiltonian nor any superoperator is
ever materialized.  Each kernel exists twice: a numba-jitted version and a
pure-numpy fallback with identical semantics (the fallback also serves as a
cross-check oracle in the tests).  All kernels *accumulate* into `out`.

Bit convention: spin k of n occupies bit (n-1-k); basis index 0 is all-up.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(f):
            return f
        return wrap(a[0]) if a and callable(a[0]) else wrap


@njit(cache=True)
def _hop_left_nb(out, rho, rows, mask, coef):
    for k in range(rows.size):
        r = rows[k]
        r2 = r ^ mask
        for c in range(rho.shape[1]):
            out[r2, c] += coef * rho[r, c]
            out[r, c] += coef * rho[r2, c]


@njit(cache=True)
def _hop_right_nb(out, rho, cols, mask, coef):
    for r in range(rho.shape[0]):
        for k in range(cols.size):
            c = cols[k]
            c2 = c ^ mask
            out[r, c2] += coef * rho[r, c]
            out[r, c] += coef * rho[r, c2]


@njit(cache=True)
def _flip_conjugate_nb(out, rho, mask, gamma):
    for r in range(rho.shape[0]):
        r2 = r ^ mask
        for c in range(rho.shape[1]):
            out[r2, c ^ mask] += gamma * rho[r, c]


@njit(cache=True)
def _diag_damp_nb(out, rho, row_add, col_add):
    for r in range(rho.shape[0]):
        ra = row_add[r]
        for c in range(rho.shape[1]):
            out[r, c] += (ra + col_add[c]) * rho[r, c]


def hop_left_np(out, rho, rows, mask, coef):
    """out += coef * (hop term applied from the left).

    `rows` lists the basis rows with the source bit pattern (1, 0) on the
    two coupled spins; mask has exactly those two bits set.  Rows and their
    partners are disjoint, so fancy-indexed += is safe.
    """
    rows2 = rows ^ mask
    out[rows2, :] += coef * rho[rows, :]
    out[rows, :] += coef * rho[rows2, :]


def hop_right_np(out, rho, cols, mask, coef):
    cols2 = cols ^ mask
    out[:, cols2] += coef * rho[:, cols]
    out[:, cols] += coef * rho[:, cols2]


def flip_conjugate_np(out, rho, mask, gamma):
    perm = np.arange(rho.shape[0]) ^ mask
    out[np.ix_(perm, perm)] += gamma * rho


def diag_damp_np(out, rho, row_add, col_add):
    out += (row_add[:, None] + col_add[None, :]) * rho


if HAVE_NUMBA:
    hop_left, hop_right = _hop_left_nb, _hop_right_nb
    flip_conjugate, diag_damp = _flip_conjugate_nb, _diag_damp_nb
else:  # pragma: no cover
    hop_left, hop_right = hop_left_np, hop_right_np
    flip_conjugate, diag_damp = flip_conjugate_np, diag_damp_np
