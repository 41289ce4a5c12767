"""Matrix-product operator state in a Hermitian local operator basis.

The density matrix is expanded as rho = sum_m c[m0, m1, ...] B_m0 x B_m1 x ..
over an orthonormal Hermitian basis per site (identity first, then the
symmetric, antisymmetric and diagonal families), so the coefficient tensor is
real.  The tensor is stored in canonical Gamma/lambda form

    c[n0..n_{L-1}] = Gamma0 l0 Gamma1 l1 ... Gamma_{L-1}

with the Schmidt weights on the bonds.  Lambdas are kept un-normalized: the
Frobenius norm of rho (its purity, which Lindblad flow does not preserve)
lives in them, and the physical trace is obtained by contraction.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import NumericalError

LAMBDA_FLOOR = 1e-14      # relative floor below which 1/lambda is treated as 0
TIE_TOL = 1e-12           # relative degeneracy window kept at the truncation cut


@lru_cache(maxsize=None)
def operator_basis(d):
    """Orthonormal Hermitian basis of d x d matrices, Tr(B_m B_n) = delta_mn.

    Order: identity/sqrt(d); symmetric pair elements (E_jk + E_kj)/sqrt(2)
    for j < k in lexicographic order; the matching antisymmetric elements
    (-i E_jk + i E_kj)/sqrt(2); diagonal elements diag(1,..,1,-l,0,..)
    normalized, for l = 1..d-1.  Element 0 is the only one with a trace.
    """
    elems = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1.0 / np.sqrt(2.0)
            elems.append(m)
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = -1j / np.sqrt(2.0)
            m[k, j] = +1j / np.sqrt(2.0)
            elems.append(m)
    for l in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        for i in range(l):
            m[i, i] = 1.0
        m[l, l] = -float(l)
        elems.append(m / np.sqrt(l * (l + 1.0)))
    out = np.array(elems)
    out.setflags(write=False)
    return out


def trace_vector(d):
    """Row vector t with Tr(rho) = t . c for local coefficients c."""
    t = np.zeros(d * d)
    t[0] = np.sqrt(d)
    return t


def coeffs_from_matrix(rho, d):
    """Real coefficient vector of a Hermitian d x d matrix."""
    basis = operator_basis(d)
    c = np.einsum("mrc,cr->m", basis, np.asarray(rho, dtype=complex))
    if np.max(np.abs(c.imag)) > 1e-12 * max(1.0, np.max(np.abs(c.real))):
        raise NumericalError("non-Hermitian input: complex basis coefficients")
    return c.real.copy()


def matrix_from_coeffs(c, d):
    basis = operator_basis(d)
    return np.einsum("m,mrc->rc", np.asarray(c, dtype=float), basis)


def truncate_spectrum(s, chi_max, cutoff):
    """Number of singular values kept under the cap and relative cutoff.

    Values below cutoff * s[0] are dropped, at most chi_max survive, and any
    values tied with the boundary value within TIE_TOL * s[0] are kept too
    (still capped at chi_max) so that degenerate multiplets are not split.
    """
    s = np.asarray(s)
    if s.size == 0 or s[0] <= 0.0:
        return 1
    k = int(np.searchsorted(-s, -cutoff * s[0], side="right"))
    k = max(1, min(k, chi_max, s.size))
    boundary = s[k - 1]
    while k < min(chi_max, s.size) and s[k] >= boundary - TIE_TOL * s[0]:
        k += 1
    return k


def _svd(mat):
    try:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


class TensorState:
    """Canonical-form MPO over the given site layout."""

    def __init__(self, site_dims, gammas, lambdas, chi_max=64, cutoff=1e-12):
        self.site_dims = tuple(site_dims)
        self.gammas = gammas            # (chiL, d^2, chiR) float64 per site
        self.lambdas = lambdas          # len L+1, boundaries are [1.0]
        self.chi_max = int(chi_max)
        self.cutoff = float(cutoff)
        self.discarded_total = 0.0

    @property
    def n_sites(self):
        return len(self.gammas)

    @property
    def bond_dims(self):
        return tuple(len(l) for l in self.lambdas[1:-1])

    def copy(self):
        st = TensorState(self.site_dims, [g.copy() for g in self.gammas],
                         [l.copy() for l in self.lambdas],
                         self.chi_max, self.cutoff)
        st.discarded_total = self.discarded_total
        return st

    # -- contraction helpers ------------------------------------------------

    def _site_transfer(self, i, open_index):
        """Gamma_i contracted with the local trace vector unless kept open."""
        g = self.gammas[i]
        if open_index:
            return g * self.lambdas[i + 1][None, None, :]
        t = np.sqrt(self.site_dims[i]) * g[:, 0, :]
        return t * self.lambdas[i + 1][None, :]

    def trace(self):
        v = self.lambdas[0].copy()
        for i in range(self.n_sites):
            v = v @ self._site_transfer(i, open_index=False)
        return float(v[0])

    def reduce_pair(self, site_a, site_b, keep_a=None, keep_b=None):
        """Joint density matrix of two sites, everything else traced out.

        keep_a / keep_b select one qubit factor (0 = first named spin in the
        fused site, 1 = second) to retain from a four-level site; None keeps
        the whole site.  With both sites reduced to qubits the result is the
        ordered two-qubit matrix in the {uu, ud, du, dd} basis.
        """
        if site_a >= site_b:
            raise ValueError("need site_a < site_b")
        v = np.diag(self.lambdas[0])
        open_tensors = []
        for i in range(self.n_sites):
            if i in (site_a, site_b):
                t = self._site_transfer(i, open_index=True)   # (l, m, r)
                v = np.einsum("al,lmr->amr", v, t)
                a, m, r = v.shape
                open_tensors.append(m)
                v = v.reshape(a * m, r)
            else:
                v = v @ self._site_transfer(i, open_index=False)
        v = v.reshape(open_tensors[0], open_tensors[1])
        da, db = self.site_dims[site_a], self.site_dims[site_b]
        ba, bb = operator_basis(da), operator_basis(db)
        rho = np.einsum("mn,mrc,nst->rsct", v, ba, bb)
        rho = rho.reshape(da * db, da * db)
        rho = _partial_trace_factor(rho, da, db, keep_a, keep_b)
        return rho

    def to_matrix(self):
        """Full density matrix; for tests on small systems only."""
        coeff = np.diag(self.lambdas[0])
        shape = []
        for i in range(self.n_sites):
            t = self.gammas[i] * self.lambdas[i + 1][None, None, :]
            coeff = np.tensordot(coeff, t, axes=([-1], [0]))
            shape.append(self.site_dims[i] ** 2)
        coeff = coeff.reshape(shape)
        for d in self.site_dims:
            coeff = np.tensordot(coeff, operator_basis(d), axes=([0], [0]))
        # coeff now indexed (r0, c0, r1, c1, ...) appended in site order
        L = self.n_sites
        perm = [2 * i for i in range(L)] + [2 * i + 1 for i in range(L)]
        coeff = coeff.transpose(perm)
        dim = int(np.prod(self.site_dims))
        return coeff.reshape(dim, dim)


def _partial_trace_factor(rho, da, db, keep_a, keep_b):
    """Trace out the unwanted qubit factor(s) of fused 4-level sites."""
    if keep_a is None and keep_b is None:
        return rho
    # reshape to (a1, a2, b1, b2) x (a1', a2', b1', b2') factor indices
    fa = 2 if da == 4 else 1
    fb = 2 if db == 4 else 1
    dims = ([2, 2] if fa == 2 else [da]) + ([2, 2] if fb == 2 else [db])
    t = rho.reshape(dims + dims)
    n = len(dims)

    def trace_axis(t, ax, n):
        return np.trace(t, axis1=ax, axis2=ax + n)

    # axes: a factors first, then b factors
    if keep_a is not None:
        if fa != 2:
            raise ValueError("keep_a given for a site without inner factors")
        drop = 1 - keep_a
        t = trace_axis(t, drop, n)
        n -= 1
    if keep_b is not None:
        if fb != 2:
            raise ValueError("keep_b given for a site without inner factors")
        offset = 1 if keep_a is not None else fa
        drop = offset + (1 - keep_b)
        t = trace_axis(t, drop, n)
        n -= 1
    dim = int(round(np.sqrt(t.size)))
    return t.reshape(dim, dim)


def encode_product_state(layout, chi_max=64, cutoff=1e-12):
    """Initial state: singlet on (ancilla, NV_L), all other spins down.

    For chains the singlet spans the first bond and enters through its exact
    operator-basis Schmidt decomposition (rank 4, weights 1/2 each); for
    ladders it sits inside the first fused site and every bond starts at
    dimension 1.
    """
    from .model import ANCILLA, NV_LEFT

    dn = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
    psi = np.array([0.0, 1.0, -1.0, 0.0]) / np.sqrt(2.0)
    singlet = np.outer(psi, psi)

    dims = layout.dims
    L = layout.n_sites
    gammas, lambdas = [], [np.array([1.0])]
    encode_discard = 0.0

    if len(layout.sites[0]) == 2:            # ladder: singlet inside site 0
        for i in range(L):
            d = dims[i]
            rho0 = singlet if i == 0 else np.kron(dn, dn)
            c = coeffs_from_matrix(rho0, d)
            gammas.append(c.reshape(1, d * d, 1))
            lambdas.append(np.array([1.0]))
    else:                                    # chain: singlet spans bond 0
        assert layout.sites[0] == (ANCILLA,) and layout.sites[1] == (NV_LEFT,)
        cmat = np.zeros((4, 4))
        ba = operator_basis(2)
        for m in range(4):
            for n in range(4):
                cmat[m, n] = np.real(np.trace(np.kron(ba[m], ba[n]) @ singlet))
        u, s, vh = _svd(cmat)
        k = truncate_spectrum(s, chi_max, cutoff)
        encode_discard = float(np.sum(s[k:]) / np.linalg.norm(s))
        gammas.append(u[:, :k].reshape(1, 4, k))
        lambdas.append(s[:k].copy())
        gammas.append(vh[:k, :].reshape(k, 4, 1))
        lambdas.append(np.array([1.0]))
        for i in range(2, L):
            c = coeffs_from_matrix(dn, 2)
            gammas.append(c.reshape(1, 4, 1))
            lambdas.append(np.array([1.0]))

    state = TensorState(dims, gammas, lambdas, chi_max=chi_max, cutoff=cutoff)
    # a cap below the singlet's exact rank already discards weight here
    state.discarded_total += encode_discard
    return state


def apply_two_site_superoperator(state, bond, gate):
    """Apply a (d_i^2 d_j^2)^2 gate to sites (bond, bond+1), truncate, and
    return the relative discarded weight of the cut.

    Discarded weight is the linear measure sum(s_cut) / ||s||_2: unlike the
    squared sum it bounds how far the trace (or any bounded functional of
    the state) can move per cut, which is what the solver's drift guarantees
    are stated against.  gate=None re-splits the pair without applying
    anything (used by the re-orthogonalization sweep).  Singular values are
    sorted descending and carry the state's norm; inverse lambdas on the
    outer bonds are guarded against underflow.
    """
    i, j = bond, bond + 1
    gi, gj = state.gammas[i], state.gammas[j]
    ll, lm, lr = state.lambdas[i], state.lambdas[i + 1], state.lambdas[j + 1]
    d2i, d2j = gi.shape[1], gj.shape[1]

    theta = np.einsum("l,lma,a,anr,r->lmnr", ll, gi, lm, gj, lr, optimize=True)
    chi_l, chi_r = theta.shape[0], theta.shape[3]
    if gate is not None:
        mat = theta.transpose(1, 2, 0, 3).reshape(d2i * d2j, chi_l * chi_r)
        mat = gate @ mat
        theta = mat.reshape(d2i, d2j, chi_l, chi_r).transpose(2, 0, 1, 3)

    mat = theta.reshape(chi_l * d2i, d2j * chi_r)
    u, s, vh = _svd(mat)
    total = float(np.sum(s * s))
    if total == 0.0:
        raise NumericalError("state collapsed to zero norm during evolution")
    k = truncate_spectrum(s, state.chi_max, state.cutoff)
    discarded = float(np.sum(s[k:]) / np.sqrt(total))

    inv_l = np.where(ll > LAMBDA_FLOOR * ll.max(), 1.0 / ll, 0.0)
    inv_r = np.where(lr > LAMBDA_FLOOR * lr.max(), 1.0 / lr, 0.0)
    state.gammas[i] = (u[:, :k].reshape(chi_l, d2i, k)
                       * inv_l[:, None, None])
    state.gammas[j] = (vh[:k, :].reshape(k, d2j, chi_r)
                       * inv_r[None, None, :])
    state.lambdas[i + 1] = s[:k].copy()
    state.discarded_total += discarded
    return discarded


def canonical_defect(state):
    """Worst deviation from the canonical orthonormality conditions."""
    worst = 0.0
    for i in range(state.n_sites):
        g = state.gammas[i]
        lg = state.lambdas[i][:, None, None] * g
        m = np.tensordot(lg, lg, axes=([0, 1], [0, 1]))
        worst = max(worst, float(np.max(np.abs(m - np.eye(m.shape[0])))))
        gl = g * state.lambdas[i + 1][None, None, :]
        m = np.tensordot(gl, gl, axes=([1, 2], [1, 2]))
        worst = max(worst, float(np.max(np.abs(m - np.eye(m.shape[0])))))
    return worst


def recanonicalize(state):
    """Restore canonical form with identity-gate sweeps (no new physics).

    One left-to-right and one right-to-left pass of bare re-splits; the
    truncation rules still apply, so any weight it discards is accounted in
    discarded_total like a normal gate.
    """
    for b in range(state.n_sites - 1):
        apply_two_site_superoperator(state, b, None)
    for b in range(state.n_sites - 2, -1, -1):
        apply_two_site_superoperator(state, b, None)
    return state
