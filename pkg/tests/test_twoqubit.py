import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdpair import PLANCK_UEV_PS
from qdpair.twoqubit import (
    DensityMatrix,
    bell_state,
    cascade_ket,
    check_density,
    density_from_ket,
    eigenvalues_hermitian4,
    eigh_hermitian4,
    fidelity_to_pure,
    negativity2n,
    partial_transpose,
    trace_distance,
)

S = 1 / math.sqrt(2)


def random_density(rng, rank=None):
    rank = rank or rng.integers(1, 5)
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary2(rng):
    q, r = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    return q * (np.diag(r) / abs(np.diag(r)))


seeds = st.integers(0, 2**32 - 1)


def test_cascade_ket_examples():
    np.testing.assert_allclose(cascade_ket(0, 5.79), [S, 0, 0, S])
    tp = PLANCK_UEV_PS / 5.79
    assert tp == pytest.approx(714.3, abs=0.1)
    np.testing.assert_allclose(cascade_ket(tp / 2, 5.79), [S, 0, 0, -S], atol=1e-12)
    with pytest.raises(ValueError):
        cascade_ket(-1, 5.79)


def test_density_examples():
    rho = density_from_ket(bell_state("phi+"))
    expected = np.zeros((4, 4))
    expected[np.ix_([0, 3], [0, 3])] = 0.5
    np.testing.assert_allclose(rho, expected, atol=1e-15)
    hv = density_from_ket([0, 1, 0, 0])
    np.testing.assert_allclose(hv, np.diag([0, 1, 0, 0]))
    with pytest.raises(ValueError):
        density_from_ket([1, 1, 0, 0])


def test_partial_transpose_examples():
    bell = density_from_ket(bell_state("phi+"))
    np.testing.assert_allclose(eigenvalues_hermitian4(partial_transpose(bell)), [-0.5, 0.5, 0.5, 0.5], atol=1e-12)
    hh = np.diag([1.0, 0, 0, 0])
    np.testing.assert_allclose(partial_transpose(hh), hh)
    np.testing.assert_allclose(partial_transpose(np.eye(4) / 4), np.eye(4) / 4)


def test_negativity_examples():
    bell = density_from_ket(bell_state("phi+"))
    assert negativity2n(bell) == pytest.approx(1, abs=1e-12)
    assert negativity2n(np.eye(4) / 4) == pytest.approx(0, abs=1e-12)
    werner = 0.5 * bell + 0.5 * np.eye(4) / 4
    assert negativity2n(werner) == pytest.approx(0.25, abs=1e-12)


def test_fidelity_examples():
    psi = bell_state("phi+")
    assert fidelity_to_pure(density_from_ket(psi), psi) == pytest.approx(1)
    assert fidelity_to_pure(np.eye(4) / 4, psi) == pytest.approx(0.25)
    assert fidelity_to_pure(density_from_ket(psi), bell_state("phi-")) == pytest.approx(0, abs=1e-15)


def test_eigenvalue_examples():
    np.testing.assert_allclose(eigenvalues_hermitian4(np.eye(4)), [1, 1, 1, 1])
    np.testing.assert_allclose(eigenvalues_hermitian4(np.diag([0.4, 0.1, 0.3, 0.2])), [0.1, 0.2, 0.3, 0.4])
    with pytest.raises(ValueError):
        eigenvalues_hermitian4(np.triu(np.ones((4, 4))))


@settings(max_examples=100)
@given(st.floats(0, 5000), st.floats(0, 50))
def test_cascade_state_always_maximally_entangled(delay, fss):
    assert negativity2n(density_from_ket(cascade_ket(delay, fss))) == pytest.approx(1, abs=1e-9)


@given(seeds)
def test_eigensolver_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = g + g.conj().T
    np.testing.assert_allclose(eigenvalues_hermitian4(m), np.linalg.eigvalsh(m), atol=1e-10)
    w, v = eigh_hermitian4(m)
    np.testing.assert_allclose(m @ v, v * w, atol=1e-9)


@given(seeds)
def test_density_invariants(seed):
    rho = random_density(np.random.default_rng(seed))
    assert eigenvalues_hermitian4(rho).sum() == pytest.approx(1, abs=1e-10)
    np.testing.assert_allclose(partial_transpose(partial_transpose(rho)), rho, atol=1e-12)
    check_density(rho)
    assert 0 <= negativity2n(rho) <= 1


@given(seeds)
def test_negativity_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng)
    u = np.kron(random_unitary2(rng), random_unitary2(rng))
    assert negativity2n(u @ rho @ u.conj().T) == pytest.approx(negativity2n(rho), abs=1e-9)


def test_trace_distance():
    a = density_from_ket(bell_state("phi+"))
    b = density_from_ket(bell_state("phi-"))
    assert trace_distance(a, a) == pytest.approx(0, abs=1e-12)
    assert trace_distance(a, b) == pytest.approx(1)


@given(seeds)
def test_density_matrix_text_roundtrip(seed):
    rho = random_density(np.random.default_rng(seed))
    dm = DensityMatrix(rho, window_ps=(-2.0, 2.0), coincidences=1234)
    back = DensityMatrix.from_text(dm.to_text())
    assert np.array_equal(back.rho, dm.rho)
    assert back.window_ps == (-2.0, 2.0) and back.coincidences == 1234
