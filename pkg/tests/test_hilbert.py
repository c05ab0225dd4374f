import numpy as np
import pytest

from bohmlab.hilbert import (
    DimensionError,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SPIN_DOWN,
    SPIN_UP,
    ValidationError,
    commuting_family,
    partial_trace,
    projector,
    spectral_decompose,
    tensor_product,
)
from bohmlab.checks import random_hermitian, random_state
from bohmlab.streams import stream

SINGLET = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)


def brute_kron(a, b):
    """Index-loop Kronecker product; the oracle for tensor_product."""
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim == 1:
        out = np.zeros(a.shape[0] * b.shape[0], dtype=complex)
        for i, av in enumerate(a):
            for j, bv in enumerate(b):
                out[i * b.shape[0] + j] = av * bv
        return out
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n * m, n * m), dtype=complex)
    for i in range(n):
        for j in range(n):
            for k in range(m):
                for l in range(m):
                    out[i * m + k, j * m + l] = a[i, j] * b[k, l]
    return out


def brute_partial_trace(w, keep, dims):
    """Explicit index-loop partial trace for two factors."""
    d1, d2 = dims
    w = w.reshape(d1, d2, d1, d2)
    if keep == 0:
        out = np.zeros((d1, d1), dtype=complex)
        for i in range(d1):
            for j in range(d1):
                for k in range(d2):
                    out[i, j] += w[i, k, j, k]
    else:
        out = np.zeros((d2, d2), dtype=complex)
        for i in range(d2):
            for j in range(d2):
                for k in range(d1):
                    out[i, j] += w[k, i, k, j]
    return out


class TestTensorProduct:
    def test_identity_times_identity(self):
        assert np.array_equal(tensor_product(np.eye(2), np.eye(2)), np.eye(4))

    def test_sigma_z_times_identity(self):
        expected = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)
        got = tensor_product(SIGMA_Z, np.eye(2))
        assert np.array_equal(got, expected)
        assert np.array_equal(got, brute_kron(SIGMA_Z, np.eye(2)))

    def test_spin_basis_product(self):
        # ordering (++, +-, -+, --): up (x) down is the second basis vector
        got = tensor_product(SPIN_UP, SPIN_DOWN)
        assert np.array_equal(got, np.array([0, 1, 0, 0], dtype=complex))

    def test_matches_brute_force_on_random_operators(self):
        rng = stream(5)
        a = random_hermitian(rng, 3)
        b = random_hermitian(rng, 2)
        assert np.allclose(tensor_product(a, b), brute_kron(a, b), atol=1e-14)

    def test_dimension_cap(self):
        with pytest.raises(DimensionError):
            tensor_product(np.eye(70), np.eye(60))

    def test_mixed_kinds_rejected(self):
        with pytest.raises(DimensionError):
            tensor_product(SPIN_UP, np.eye(2))


class TestPartialTrace:
    def test_product_state(self):
        psi = random_state(stream(1), 3)
        phi = random_state(stream(2), 4)
        w = projector(tensor_product(psi, phi))
        reduced = partial_trace(w, 0, (3, 4))
        assert np.allclose(reduced, projector(psi), atol=1e-12)

    def test_singlet_gives_maximally_mixed(self):
        w = projector(SINGLET)
        reduced = partial_trace(w, 0, (2, 2))
        assert np.allclose(reduced, np.eye(2) / 2, atol=1e-12)
        assert np.allclose(reduced, brute_partial_trace(w, 0, (2, 2)), atol=1e-14)

    def test_keep_second_factor_of_product(self):
        rng = stream(3)
        w1 = projector(random_state(rng, 2))
        w = tensor_product(w1, np.eye(2) / 2)
        assert np.allclose(partial_trace(w, 1, (2, 2)), np.eye(2) / 2, atol=1e-12)

    def test_trace_preserved_on_random_operators(self):
        rng = stream(7)
        for _ in range(200):
            w = random_hermitian(rng, 6)
            reduced = partial_trace(w, 0, (2, 3))
            assert abs(np.trace(reduced) - np.trace(w)) < 1e-10

    def test_three_factors(self):
        states = [random_state(stream(k), 2) for k in (11, 12, 13)]
        psi = tensor_product(tensor_product(states[0], states[1]), states[2])
        reduced = partial_trace(projector(psi), 1, (2, 2, 2))
        assert np.allclose(reduced, projector(states[1]), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            partial_trace(np.eye(6), 0, (2, 2))


class TestSpectralDecompose:
    def test_sigma_z(self):
        dec = spectral_decompose(SIGMA_Z)
        assert dec.eigenvalues == (-1.0, 1.0)
        assert np.allclose(dec.projectors[0], np.diag([0, 1]), atol=1e-14)
        assert np.allclose(dec.projectors[1], np.diag([1, 0]), atol=1e-14)

    def test_identity_single_eigenspace(self):
        dec = spectral_decompose(np.eye(3))
        assert len(dec.eigenvalues) == 1
        assert np.allclose(dec.projectors[0], np.eye(3), atol=1e-14)

    def test_reconstruction_roundtrip_random(self):
        rng = stream(17)
        for _ in range(200):
            dim = int(rng.integers(2, 17))
            a = random_hermitian(rng, dim)
            dec = spectral_decompose(a)
            assert np.max(np.abs(dec.reconstruct() - a)) <= 1e-10

    def test_projectors_orthogonal_idempotent(self):
        rng = stream(19)
        for _ in range(50):
            a = random_hermitian(rng, 6)
            dec = spectral_decompose(a)
            for i, p in enumerate(dec.projectors):
                assert np.max(np.abs(p @ p - p)) <= 1e-10
                for q in dec.projectors[i + 1:]:
                    assert np.max(np.abs(p @ q)) <= 1e-10
            total = sum(dec.projectors)
            assert np.max(np.abs(total - np.eye(6))) <= 1e-10

    def test_degeneracy_merge(self):
        a = np.diag([1.0, 1.0 + 1e-12, 2.0]).astype(complex)
        dec = spectral_decompose(a)
        assert len(dec.eigenvalues) == 2
        assert abs(np.trace(dec.projectors[0]) - 2.0) < 1e-12

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValidationError):
            spectral_decompose(np.array([[0, 1], [0, 0]], dtype=complex))


class TestCommutingFamily:
    def test_identity_commutes(self):
        assert commuting_family([SIGMA_Z, np.eye(2)])

    def test_pauli_pair_fails(self):
        comm = SIGMA_Z @ SIGMA_X - SIGMA_X @ SIGMA_Z
        assert np.allclose(comm, 2j * SIGMA_Y, atol=1e-14)
        assert not commuting_family([SIGMA_Z, SIGMA_X])

    def test_different_factors_commute(self):
        a = tensor_product(SIGMA_Z, np.eye(2))
        b = tensor_product(np.eye(2), SIGMA_X)
        assert np.allclose(a @ b, b @ a, atol=1e-14)
        assert commuting_family([a, b])

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            commuting_family([SIGMA_Z, np.eye(4)])
