import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qdpair.poincare import (
    LABELS,
    PoincareCoord,
    PolarizationLabel as P,
    basis_coords,
    combinations,
    combo_label,
    ket,
    pair_projector,
    parse_combo,
    projector,
    setting_outcomes,
    settings,
)

angles = st.floats(0, math.pi)
phases = st.floats(0, 2 * math.pi, exclude_max=True)


@pytest.mark.parametrize(
    "label, theta, phi",
    [(P.H, 0, 0), (P.V, math.pi, 0), (P.D, math.pi / 2, 0), (P.A, math.pi / 2, math.pi),
     (P.R, math.pi / 2, 3 * math.pi / 2), (P.L, math.pi / 2, math.pi / 2)],
)
def test_basis_coords(label, theta, phi):
    c = basis_coords(label)
    assert c.theta == pytest.approx(theta) and c.phi == pytest.approx(phi)


def test_kets():
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(ket(PoincareCoord(0, 0)), [1, 0])
    np.testing.assert_allclose(ket(PoincareCoord(math.pi / 2, 0)), [s, s])
    np.testing.assert_allclose(ket(PoincareCoord(math.pi / 2, math.pi / 2)), [s, 1j * s])


def test_hh_projector():
    m = pair_projector(P.H, P.H)
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    np.testing.assert_allclose(m, expected, atol=1e-15)


@pytest.mark.parametrize("label", LABELS)
def test_orthogonal_partner(label):
    assert abs(np.vdot(ket(basis_coords(label)), ket(basis_coords(label.orthogonal)))) < 1e-15
    assert label.orthogonal.orthogonal is label


def test_invalid_coord():
    with pytest.raises(ValueError):
        PoincareCoord(-0.1, 0)
    with pytest.raises(ValueError):
        PoincareCoord(0.1, 2 * math.pi)


@given(angles, phases)
def test_projector_is_rank_one(theta, phi):
    m = projector(PoincareCoord(theta, phi))
    np.testing.assert_allclose(m @ m, m, atol=1e-12)
    np.testing.assert_allclose(m, m.conj().T, atol=1e-15)
    assert np.trace(m).real == pytest.approx(1)


def test_combination_bookkeeping():
    assert len(combinations()) == 36
    assert len(settings()) == 9
    covered = {o for s in settings() for o in setting_outcomes(*s)}
    assert covered == set(combinations())


@pytest.mark.parametrize("first, second", settings())
def test_setting_outcomes_complete(first, second):
    total = sum(pair_projector(i, j) for i, j in setting_outcomes(first, second))
    np.testing.assert_allclose(total, np.eye(4), atol=1e-12)


def test_combo_label_roundtrip():
    for i, j in combinations():
        assert parse_combo(combo_label(i, j)) == (i, j)
    assert combo_label(P.D, P.A) == "D-A"
