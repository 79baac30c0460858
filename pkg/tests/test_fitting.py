import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdpair import FWHM_PER_SIGMA
from qdpair.cascade import CascadeParams, rabi_rate
from qdpair.correlate import Histogram, sync_histogram
from qdpair.fitting import (
    SHIPPED_MODELS,
    ConvergenceError,
    FitError,
    diffraction_limit_fwhm,
    exponential,
    fit_fss,
    fit_lifetime,
    fit_psf,
    fit_rabi,
    least_squares_fit,
    mean_delay_lifetime,
    numeric_jacobian,
    synthetic_fss_scan,
)
from qdpair.simulate import Channel, DetectionConfig, simulate

SAMPLE_POINTS = {
    "exponential": (np.linspace(0, 2000, 50), (3.0, 320.0)),
    "gaussian": (np.linspace(-500, 500, 60), (2.0, 30.0, 120.0, 0.5)),
    "rabi": (np.linspace(0, 2.5, 40), (0.65, 1e6)),
    "fss_joint": (np.linspace(0, 180, 37), (1.0, -1.0, 2.0, 1.5)),
    "fss_diff": (np.linspace(0, 180, 37), (0.3, 2.0, -1.5)),
}


def line(x, a, b):
    return a * x + b


def test_line_exact():
    x = np.arange(10.0)
    res = least_squares_fit(line, x, 2 * x + 1, 1.0, (0.0, 0.0), ["a", "b"])
    assert res["a"] == pytest.approx(2) and res["b"] == pytest.approx(1)
    assert res.chi2_reduced == pytest.approx(0, abs=1e-20)


def test_exponential_noise_free():
    x = np.linspace(0, 2000, 200)
    res = least_squares_fit(exponential, x, exponential(x, 1.0, 320.0), 1e-3, (1.0, 200.0), ["amplitude", "tau"],
                            jac=SHIPPED_MODELS["exponential"][1])
    assert res["tau"] == pytest.approx(320, rel=1e-6)


def test_model_mismatch_visible():
    x = np.linspace(-2, 2, 40)
    res = least_squares_fit(lambda x, a, b, c: a * x**2 + b * x + c, x, x**3, 0.01, (0, 0, 0))
    assert res.converged and res.chi2_reduced > 100


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        least_squares_fit(line, [1.0, 2.0], [1.0, 2.0], 1.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        least_squares_fit(line, np.arange(5.0), np.arange(5.0), 0.0, (0.0, 0.0))
    with pytest.raises(FitError):
        least_squares_fit(lambda x, a, b: a * b * x, np.arange(5.0), np.arange(5.0), 1.0, (1.0, 1.0))


def test_iteration_cap():
    x = np.linspace(0, 2000, 50)
    with pytest.raises(ConvergenceError):
        least_squares_fit(exponential, x, exponential(x, 1.0, 320.0) + 0.01 * np.sin(x), 0.01, (1.0, 50.0),
                          max_iter=1)


@pytest.mark.parametrize("name", sorted(SHIPPED_MODELS))
def test_analytic_jacobians(name):
    model, jac = SHIPPED_MODELS[name]
    x, p = SAMPLE_POINTS[name]
    analytic = np.asarray(jac(x, *p))
    numeric = numeric_jacobian(model, x, p)
    scale = np.abs(analytic).max(axis=0)
    np.testing.assert_allclose(analytic / scale, numeric / scale, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fit_order_invariance(seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 2000, 80)
    y = rng.poisson(exponential(x, 500.0, 320.0)).astype(float) + 1
    perm = rng.permutation(x.size)
    a = least_squares_fit(exponential, x, y, None, (400.0, 250.0), jac=SHIPPED_MODELS["exponential"][1])
    b = least_squares_fit(exponential, x[perm], y[perm], None, (400.0, 250.0), jac=SHIPPED_MODELS["exponential"][1])
    assert a["p1"] == pytest.approx(b["p1"], rel=1e-9)
    assert a.sigmas["p1"] == pytest.approx(b.sigmas["p1"], rel=1e-6)


def test_poisson_doubling():
    rng = np.random.default_rng(1)
    x = np.linspace(0, 1500, 60)
    y = rng.poisson(exponential(x, 2000.0, 320.0)).astype(float) + 5
    jac = SHIPPED_MODELS["exponential"][1]
    one = least_squares_fit(exponential, x, y, None, (1500.0, 250.0), jac=jac)
    two = least_squares_fit(exponential, x, 2 * y, None, (3000.0, 250.0), jac=jac)
    assert two["p1"] == pytest.approx(one["p1"], rel=1e-9)
    assert two["p0"] == pytest.approx(2 * one["p0"], rel=1e-9)
    # relative errors of counting statistics scale as 1/sqrt(N)
    ratio = (two.sigmas["p1"] / two["p1"]) / (one.sigmas["p1"] / one["p1"])
    assert ratio == pytest.approx(1 / math.sqrt(2), rel=0.1)


def test_mean_delay_matches_fit():
    rng = np.random.default_rng(5)
    d = rng.exponential(320.0, 200_000)
    assert mean_delay_lifetime(d) == pytest.approx(320, rel=0.01)
    counts, edges = np.histogram(d, bins=np.arange(0, 4000, 8))
    x = edges[:-1] + 4
    res = least_squares_fit(exponential, x, counts, None, (counts[0], 200.0), jac=SHIPPED_MODELS["exponential"][1])
    assert res["p1"] == pytest.approx(mean_delay_lifetime(d), rel=0.01)


@pytest.mark.parametrize("kind, channel, truth", [("X", Channel.X_T, 320.0), ("XX", Channel.XX_T, 222.7)])
def test_lifetime_roundtrip(kind, channel, truth):
    params = CascadeParams()
    cfg = DetectionConfig(n_pulses=400_000, eta_xx=1, eta_x=1, seed=8)
    hist = sync_histogram(simulate(params, cfg), channel, cfg.rep_period, 16)
    res = fit_lifetime(hist, kind, params, rep_period=cfg.rep_period)
    key = "t1_x" if kind == "X" else "t1_xx"
    assert res[key] == pytest.approx(truth, rel=0.01)
    assert res[key] == pytest.approx(truth, abs=4 * res.sigmas[key])


def test_lifetime_needs_populated_bins():
    with pytest.raises(ValueError):
        fit_lifetime(Histogram(16, 0, np.zeros(100, dtype=np.uint64)), "X", CascadeParams())


def test_fss_recovery():
    angles = np.linspace(0, 180, 37)
    e_x, e_xx = synthetic_fss_scan(angles, 5.79, phase=0.7, offset_x=2.0, offset_xx=-1.0, noise=0.5, seed=3)
    res = fit_fss(angles, e_x, e_xx)
    assert abs(res["fss"] - 5.79) <= 2 * res.sigmas["fss"]
    assert res.extra["fss_difference"] == pytest.approx(5.79, abs=3 * res.extra["fss_difference_sigma"])


def test_fss_zero_amplitude():
    angles = np.linspace(0, 180, 37)
    e_x, e_xx = synthetic_fss_scan(angles, 0.0, noise=0.5, seed=4)
    res = fit_fss(angles, e_x, e_xx)
    assert math.isfinite(res.sigmas["fss"]) and res["fss"] < 3 * res.sigmas["fss"]


def test_fss_errors():
    with pytest.raises(ValueError):
        fit_fss(np.linspace(0, 180, 10), np.ones(10), np.ones(10))
    with pytest.raises(ValueError):
        fit_fss(np.linspace(0, 45, 10), np.arange(10.0), np.arange(10.0))


def test_rabi():
    p = np.linspace(0.05, 2.0, 30)
    res = fit_rabi(p, rabi_rate(p, 0.65, 4e5))
    assert res["pi_power"] == pytest.approx(0.65, rel=1e-8)
    assert res["max_rate"] == pytest.approx(4e5, rel=1e-8)
    with pytest.raises(ValueError):
        fit_rabi(p[:10], rabi_rate(p[:10], 5.0, 1.0))


def gaussian_spot(sigma_nm=100.0, scale=1.0):
    x = np.arange(-600.0, 601.0, 20.0)
    y = np.arange(-500.0, 501.0, 20.0)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    return scale * np.exp(-((xx - 13) ** 2 + (yy + 7) ** 2) / (2 * sigma_nm**2)), x, y


def test_psf_fwhm():
    image, x, y = gaussian_spot()
    res = fit_psf(image, x, y)
    assert res["fwhm"] == pytest.approx(235.482, rel=1e-4)
    assert res["fwhm"] / res.extra["sigma_x"] == pytest.approx(2.3548, abs=1e-4)
    assert FWHM_PER_SIGMA == pytest.approx(2 * math.sqrt(2 * math.log(2)), abs=1e-15)


@given(st.floats(1e-3, 1e6))
def test_psf_scale_invariance(scale):
    image, x, y = gaussian_spot(120.0)
    base = fit_psf(image, x, y)["fwhm"]
    assert fit_psf(image * scale, x, y)["fwhm"] == pytest.approx(base, rel=1e-8)


def test_psf_boundary_peak():
    image, x, y = gaussian_spot()
    image[0, 0] = 10
    with pytest.raises(ValueError):
        fit_psf(image, x, y)


def test_diffraction_limit():
    assert diffraction_limit_fwhm(780, 0.6) == pytest.approx(663)
