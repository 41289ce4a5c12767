"""Operator-basis tensor state: basis algebra, encoding, contractions."""

import numpy as np
import pytest

from spinchannel.dense import DenseSystem, initial_density_matrix
from spinchannel.errors import NumericalError
from spinchannel.model import Geometry, build_layout, uniform_spec
from spinchannel.tensor_state import (
    TIE_TOL,
    apply_two_site_superoperator,
    canonical_defect,
    coeffs_from_matrix,
    encode_product_state,
    matrix_from_coeffs,
    operator_basis,
    recanonicalize,
    trace_vector,
    truncate_spectrum,
)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_operator_basis_is_orthonormal_and_hermitian(d):
    basis = operator_basis(d)
    assert basis.shape == (d * d, d, d)
    gram = np.einsum("mrc,ncr->mn", basis, basis)
    assert np.allclose(gram, np.eye(d * d), atol=1e-14)
    for b in basis:
        assert np.allclose(b, b.conj().T, atol=1e-15)
    assert np.allclose(basis[0], np.eye(d) / np.sqrt(d), atol=1e-15)
    # only element 0 carries a trace
    traces = np.einsum("mrr->m", basis)
    assert np.allclose(traces[1:], 0.0, atol=1e-14)
    assert traces[0] == pytest.approx(np.sqrt(d))


def test_operator_basis_is_readonly_and_cached():
    basis = operator_basis(2)
    assert basis is operator_basis(2)
    with pytest.raises(ValueError):
        basis[0, 0, 0] = 5.0


def test_pauli_structure_for_qubits():
    # d=2 order: I/sqrt2, (X)/sqrt2, (Y)/sqrt2, (Z)/sqrt2 up to layout rules
    basis = operator_basis(2)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.diag([1.0, -1.0]).astype(complex)
    assert np.allclose(basis[1], sx / np.sqrt(2))
    assert np.allclose(basis[2], sy / np.sqrt(2))
    assert np.allclose(basis[3], sz / np.sqrt(2))


@pytest.mark.parametrize("d", [2, 4])
def test_coefficient_round_trip(d):
    rng = np.random.default_rng(5)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = m + m.conj().T
    c = coeffs_from_matrix(rho, d)
    assert c.dtype == np.float64
    assert np.allclose(matrix_from_coeffs(c, d), rho, atol=1e-13)
    # trace functional
    assert trace_vector(d) @ c == pytest.approx(np.trace(rho).real, abs=1e-12)


def test_coeffs_reject_non_hermitian():
    m = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(NumericalError):
        coeffs_from_matrix(m, 2)


def test_truncate_spectrum_cap_cutoff_and_ties():
    s = np.array([1.0, 0.5, 0.25, 1e-13])
    assert truncate_spectrum(s, 64, 1e-12) == 3      # cutoff drops the tail
    assert truncate_spectrum(s, 2, 1e-12) == 2       # cap wins
    assert truncate_spectrum(s, 64, 0.3) == 2        # relative cutoff
    # degenerate multiplet at the boundary is kept together
    s = np.array([1.0, 0.5, 0.5 - 0.5 * TIE_TOL, 0.4])
    assert truncate_spectrum(s, 2, 1e-12) == 2       # cap still binds
    assert truncate_spectrum(s, 3, 0.45) == 3        # tie partner pulled in
    assert truncate_spectrum(np.array([0.0]), 8, 1e-12) == 1


def test_encode_chain_bond_structure():
    layout = build_layout(Geometry("chain", 2))
    state = encode_product_state(layout)
    assert state.site_dims == (2, 2, 2, 2, 2)
    # singlet operator-Schmidt spectrum across (ancilla | rest): rank 4, all 1/2
    assert state.bond_dims == (4, 1, 1, 1)
    assert np.allclose(np.sort(state.lambdas[1]), [0.5, 0.5, 0.5, 0.5], atol=1e-14)
    assert state.trace() == pytest.approx(1.0, abs=1e-13)
    assert canonical_defect(state) < 1e-12
    assert state.discarded_total == 0.0


def test_encode_ladder_bond_structure():
    layout = build_layout(Geometry("ladder", 2))
    state = encode_product_state(layout)
    assert state.site_dims == (4, 4, 4, 4)
    assert state.bond_dims == (1, 1, 1)              # singlet inside site 0
    assert state.trace() == pytest.approx(1.0, abs=1e-13)
    assert canonical_defect(state) < 1e-12


@pytest.mark.parametrize("kind,n", [("chain", 2), ("ladder", 2)])
def test_encoded_matrix_matches_dense_initial_state(kind, n):
    spec = uniform_spec(kind, n)
    layout = build_layout(spec.geometry)
    state = encode_product_state(layout)
    rho = state.to_matrix()
    # dense backend drops the dummy; pad it back as |down><down| for ladders
    system = DenseSystem.from_terms(
        layout.flat_spins, (), (), ())
    want = initial_density_matrix(system)
    assert np.allclose(rho, want, atol=1e-13)


def test_reduce_pair_on_initial_state():
    layout = build_layout(Geometry("chain", 3))
    state = encode_product_state(layout)
    red = state.reduce_pair(0, layout.n_sites - 1)
    # ancilla maximally mixed against NV_R down
    assert np.allclose(red, np.diag([0.0, 0.5, 0.0, 0.5]), atol=1e-13)

    lay2 = build_layout(Geometry("ladder", 2))
    st2 = encode_product_state(lay2)
    red2 = st2.reduce_pair(0, lay2.n_sites - 1, keep_a=0, keep_b=0)
    assert np.allclose(red2, np.diag([0.0, 0.5, 0.0, 0.5]), atol=1e-13)
    # keeping NV_L instead: also maximally mixed against dummy-side qubit
    red3 = st2.reduce_pair(0, lay2.n_sites - 1, keep_a=1, keep_b=1)
    assert np.allclose(red3, np.diag([0.0, 0.5, 0.0, 0.5]), atol=1e-13)


def test_reduce_pair_matches_to_matrix_partial_trace():
    layout = build_layout(Geometry("chain", 2))
    state = encode_product_state(layout)
    rho = state.to_matrix()                          # 5 qubits, 32 x 32
    red = state.reduce_pair(1, 2)                    # (nvL, c1B)
    t = rho.reshape((2,) * 10)
    # trace over anc, c2B, nvR; keep (nvL, c1B) row and column indices
    want = np.einsum("abcdeaBCde->bcBC", t, optimize=True).reshape(4, 4)
    assert np.allclose(red, want, atol=1e-13)


def test_reduce_pair_rejects_bad_order():
    layout = build_layout(Geometry("chain", 1))
    state = encode_product_state(layout)
    with pytest.raises(ValueError):
        state.reduce_pair(2, 1)
    with pytest.raises(ValueError):
        state.reduce_pair(0, 1, keep_a=0)            # chain sites are not fused


def test_bare_resplit_is_identity_on_the_state():
    layout = build_layout(Geometry("chain", 2))
    state = encode_product_state(layout)
    before = state.to_matrix()
    disc = apply_two_site_superoperator(state, 0, None)
    assert disc < 1e-13
    assert np.allclose(state.to_matrix(), before, atol=1e-12)
    assert canonical_defect(state) < 1e-12


def test_identity_gate_preserves_state_and_canonical_form():
    layout = build_layout(Geometry("ladder", 1))
    state = encode_product_state(layout)
    before = state.to_matrix()
    d2 = state.site_dims[0] ** 2
    gate = np.eye(d2 * d2)
    for bond in range(state.n_sites - 1):
        apply_two_site_superoperator(state, bond, gate)
    assert np.allclose(state.to_matrix(), before, atol=1e-12)
    assert state.trace() == pytest.approx(1.0, abs=1e-12)
    assert canonical_defect(state) < 1e-11


def test_recanonicalize_restores_orthonormality():
    layout = build_layout(Geometry("chain", 3))
    state = encode_product_state(layout)
    # deliberately damage canonical form without changing the state's matrix:
    # scale a gamma up and its neighbour down
    state.gammas[2] = state.gammas[2] * 2.0
    state.gammas[3] = state.gammas[3] / 2.0
    assert canonical_defect(state) > 0.1
    before = state.to_matrix()
    recanonicalize(state)
    assert canonical_defect(state) < 1e-12
    assert np.allclose(state.to_matrix(), before, atol=1e-12)


def test_copy_is_deep():
    layout = build_layout(Geometry("chain", 1))
    state = encode_product_state(layout)
    dup = state.copy()
    dup.gammas[0][...] = 0.0
    dup.discarded_total = 9.9
    assert state.trace() == pytest.approx(1.0, abs=1e-13)
    assert state.discarded_total == 0.0
