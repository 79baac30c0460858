import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import convolve_numeric, numeric_model
from qdpair import FWHM_PER_SIGMA
from qdpair.cascade import (
    CascadeParams,
    ModelCurve,
    coherence_factor,
    fss_energy_shift,
    lifetime_curve_x,
    lifetime_curve_xx,
    model_coincidence,
    model_curve,
    pulse_energy,
    rabi_rate,
    theory_coincidence,
    theory_curve,
)
from qdpair.poincare import LABELS, PolarizationLabel as P, combinations, pair_ket, setting_outcomes, settings as pp_settings
from qdpair.twoqubit import cascade_ket

PARAMS = CascadeParams()
labels = st.sampled_from(LABELS)


def test_params_derived():
    assert PARAMS.precession_period == pytest.approx(714.28, abs=0.01)
    assert PARAMS.jitter_2p_fwhm == pytest.approx(math.sqrt(2) * 89, abs=1e-12)
    with pytest.raises(ValueError):
        CascadeParams(t1_x=0)
    with pytest.raises(ValueError):
        CascadeParams(fss=-1)


def test_theory_examples():
    t = np.linspace(0, 2000, 101)
    decay = np.exp(-t / 320) / 640
    np.testing.assert_allclose(theory_coincidence(P.H, P.H, t, PARAMS), decay, rtol=1e-12)
    assert theory_coincidence(P.D, P.A, 0, PARAMS) == pytest.approx(0, abs=1e-18)
    tp = PARAMS.precession_period
    assert theory_coincidence(P.D, P.D, tp / 2, PARAMS) == pytest.approx(0, abs=1e-15)
    np.testing.assert_allclose(
        theory_coincidence(P.D, P.D, t, PARAMS), decay * np.cos(math.pi * t / tp) ** 2, rtol=1e-10, atol=1e-18
    )
    assert theory_coincidence(P.R, P.R, 0, PARAMS) == pytest.approx(0, abs=1e-18)
    assert theory_coincidence(P.R, P.L, 0, PARAMS) == pytest.approx(1 / 640)
    with pytest.raises(ValueError):
        theory_coincidence(P.H, P.H, -1, PARAMS)
    assert theory_curve(P.H, P.H, [-10.0], PARAMS)[0] == 0


@settings(max_examples=200)
@given(labels, labels, st.floats(0, 3000), st.floats(0.1, 30))
def test_theory_matches_projector_overlap(i, j, t, fss):
    p = CascadeParams(fss=fss)
    brute = 2 * math.exp(-t / p.t1_x) / (2 * p.t1_x) * abs(np.vdot(pair_ket(i, j), cascade_ket(t, fss))) ** 2
    assert theory_coincidence(i, j, t, p) == pytest.approx(brute, rel=1e-10, abs=1e-18)


@pytest.mark.parametrize("first, second", pp_settings())
def test_outcomes_sum_to_exciton_decay(first, second):
    t = np.linspace(0, 3000, 301)
    total = sum(theory_coincidence(i, j, t, PARAMS) for i, j in setting_outcomes(first, second))
    np.testing.assert_allclose(total, np.exp(-t / 320) / 320, rtol=1e-10)


def test_dd_oscillation_period():
    t = np.linspace(0, 5000, 500001)
    y = theory_coincidence(P.D, P.D, t, PARAMS) / (np.exp(-t / 320) / 640)
    minima = t[1:-1][(y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])]
    period = np.mean(np.diff(minima))
    assert period == pytest.approx(PARAMS.precession_period, rel=1e-3)


@pytest.mark.parametrize("i, j", [(P.H, P.H), (P.D, P.D), (P.R, P.L), (P.H, P.D), (P.A, P.R)])
def test_model_matches_numeric_convolution(i, j):
    d = np.linspace(-320, 1600, 41)
    ref = numeric_model(i, j, d, PARAMS)
    got = model_coincidence(i, j, d, PARAMS)
    keep = ref > 1e-12 * ref.max()
    np.testing.assert_allclose(got[keep], ref[keep], rtol=1e-6)


def test_model_zero_jitter_limit():
    d = np.linspace(1, 2000, 50)
    for i, j in [(P.D, P.D), (P.R, P.H), (P.H, P.V)]:
        np.testing.assert_allclose(
            model_coincidence(i, j, d, PARAMS, jitter_fwhm=0), theory_coincidence(i, j, d, PARAMS), rtol=1e-12, atol=1e-18
        )
        np.testing.assert_allclose(
            model_coincidence(i, j, d, PARAMS, jitter_fwhm=1e-3), theory_coincidence(i, j, d, PARAMS), rtol=1e-4, atol=1e-12
        )


def test_model_far_negative_tail_is_finite():
    d = np.array([-5000.0, -2000.0, -1000.0])
    for i, j in combinations():
        v = model_coincidence(i, j, d, PARAMS)
        assert np.all(np.isfinite(v)) and np.all(v >= 0)


def test_coherence_factor_bounds():
    d = np.linspace(-500, 2000, 101)
    c = np.abs(coherence_factor(d, PARAMS))
    assert np.all(c <= 1 + 1e-12)
    assert np.allclose(np.abs(coherence_factor(d, CascadeParams(fss=0))), 1)


def test_lifetime_curves():
    p0 = CascadeParams(jitter_1p_fwhm=0)
    assert lifetime_curve_xx(1e-9, p0) == pytest.approx(1 / 222.7, rel=1e-9)
    t = np.linspace(0.5, 3000, 60)
    exact = (np.exp(-t / 320) - np.exp(-t / 222.7)) / (320 - 222.7)
    np.testing.assert_allclose(lifetime_curve_x(t, p0), exact, rtol=1e-9)
    # jittered curves are convolutions of the jitter-free ones
    s = PARAMS.sigma_1p
    ref = convolve_numeric(lambda u: lifetime_curve_x(u, p0), np.array([0.0, 200.0, 900.0]), s, 900 + 14 * s)
    np.testing.assert_allclose(lifetime_curve_x(np.array([0.0, 200.0, 900.0]), PARAMS), ref, rtol=1e-6)
    equal = CascadeParams(t1_x=300, t1_xx=300, jitter_1p_fwhm=0)
    np.testing.assert_allclose(lifetime_curve_x(t, equal), t * np.exp(-t / 300) / 300**2, rtol=1e-9)


def test_fss_energy_shift():
    a = np.linspace(0, 180, 721)
    e_x = fss_energy_shift(a, 5.79, 0.3, 1.0)
    e_xx = fss_energy_shift(a, -5.79, 0.3, -1.0)
    assert np.ptp((e_x - e_xx)) / 2 == pytest.approx(5.79, rel=1e-4)
    np.testing.assert_allclose(fss_energy_shift(a, 0, 0.3, 2.5), 2.5)


def test_rabi_rate():
    assert rabi_rate(0, 0.65, 1e6) == 0
    assert rabi_rate(0.65, 0.65, 1e6) == pytest.approx(1e6)
    assert rabi_rate(4 * 0.65, 0.65, 1e6) == pytest.approx(0, abs=1e-6)
    assert pulse_energy(0.65, 76e6) == pytest.approx(8.55e-15, rel=1e-3)


def test_model_curve_csv_roundtrip():
    curve = model_curve(P.D, P.A, np.arange(-200, 1000, 4.0), PARAMS)
    back = ModelCurve.from_csv(curve.to_csv())
    np.testing.assert_allclose(back.values, curve.values, rtol=1e-15)
    np.testing.assert_array_equal(back.delta_tau_grid, curve.delta_tau_grid)
    assert back.label == curve.label
    with pytest.raises(ValueError):
        ModelCurve(np.array([0.0, 1.0, 3.0]), np.zeros(3))


def test_fwhm_constant():
    assert FWHM_PER_SIGMA == pytest.approx(2.354820045, abs=1e-9)
