"""Levenberg-Marquardt least squares and the lifetime, FSS, Rabi and PSF fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import FWHM_PER_SIGMA
from .cascade import CascadeParams, fss_energy_shift, lifetime_curve_x, lifetime_curve_xx, rabi_rate


class FitError(RuntimeError):
    pass


class SingularFitError(FitError):
    def __init__(self, cond: float):
        super().__init__(f"singular normal equations (condition number {cond:.3e})")
        self.condition_number = cond


class ConvergenceError(FitError):
    pass


@dataclass
class FitResult:
    params: dict
    sigmas: dict
    chi2_reduced: float
    n_iterations: int
    converged: bool
    chi2: float = 0.0
    dof: int = 0
    gradient_norm: float = 0.0
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def to_csv(self) -> str:
        lines = ["name,value,sigma"]
        lines += [f"{k},{v:.17g},{self.sigmas.get(k, float('nan')):.17g}" for k, v in self.params.items()]
        lines += [f"{k},{v:.17g}," for k, v in self.extra.items()]
        lines += [
            f"chi2_reduced,{self.chi2_reduced:.17g},",
            f"n_iterations,{self.n_iterations},",
            f"converged,{int(self.converged)},",
        ]
        return "\n".join(lines) + "\n"


def poisson_sigma(y) -> np.ndarray:
    """Counting error sqrt(y), floored at one count."""
    return np.sqrt(np.maximum(np.asarray(y, dtype=float), 1.0))


def numeric_jacobian(model, x, p, h_rel=6e-6):
    p = np.asarray(p, dtype=float)
    cols = []
    for k in range(p.size):
        h = h_rel * max(abs(p[k]), 1.0)
        up, dn = p.copy(), p.copy()
        up[k] += h
        dn[k] -= h
        cols.append((np.asarray(model(x, *up)) - np.asarray(model(x, *dn))) / (2 * h))
    return np.column_stack(cols)


def least_squares_fit(
    model: Callable,
    x,
    y,
    sigma=None,
    p0: Sequence[float] = (),
    names: Sequence[str] | None = None,
    jac: Callable | None = None,
    max_iter: int = 500,
    rtol: float = 1e-10,
    gtol: float = 1e-12,
) -> FitResult:
    """Minimize sum(((y - model(x, *p)) / sigma)^2) by damped Gauss-Newton.

    The damping starts at 1e-3 and is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one. ``sigma`` defaults to Poisson errors.
    """
    x = np.asarray(x, dtype=float) if not isinstance(x, tuple) else x
    y = np.asarray(y, dtype=float)
    sigma = poisson_sigma(y) if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    p = np.array(p0, dtype=float)
    names = list(names) if names is not None else [f"p{k}" for k in range(p.size)]
    if y.size <= p.size:
        raise ValueError("need more data points than parameters")
    w = 1 / sigma
    jac = jac or (lambda xx, *pp: numeric_jacobian(model, xx, pp))

    def resid(pp):
        return (y - np.asarray(model(x, *pp), dtype=float)) * w

    r = resid(p)
    chi2 = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        j = np.asarray(jac(x, *p), dtype=float).reshape(y.size, p.size) * w[:, None]
        a = j.T @ j
        g = j.T @ r
        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol or chi2 == 0.0:
            converged = True
            break
        while True:
            damped = a + lam * np.diag(np.where(np.diag(a) > 0, np.diag(a), 1.0))
            try:
                step = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                raise SingularFitError(np.linalg.cond(a)) from None
            p_new = p + step
            r_new = resid(p_new)
            chi2_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if chi2_new <= chi2:
                rel = (chi2 - chi2_new) / max(chi2, 1e-300)
                p, r, chi2 = p_new, r_new, chi2_new
                lam = max(lam / 10, 1e-12)
                if rel < rtol:
                    converged = True
                break
            if math.isfinite(chi2_new) and (chi2_new - chi2) <= rtol * chi2:
                converged = True  # no representable improvement left
                break
            lam *= 10
            if lam > 1e16:
                converged = True
                break
        if converged:
            break
    if not converged:
        raise ConvergenceError(f"no convergence after {max_iter} iterations")

    j = np.asarray(jac(x, *p), dtype=float).reshape(y.size, p.size) * w[:, None]
    a = j.T @ j
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e15:
        raise SingularFitError(cond)
    cov = np.linalg.inv(a)
    dof = y.size - p.size
    return FitResult(
        params=dict(zip(names, p.tolist())),
        sigmas=dict(zip(names, np.sqrt(np.clip(np.diag(cov), 0, None)).tolist())),
        chi2_reduced=chi2 / dof,
        n_iterations=it,
        converged=converged,
        chi2=chi2,
        dof=dof,
        gradient_norm=float(np.linalg.norm(j.T @ r)),
        extra={},
    )


# --- model functions with analytic Jacobians -----------------------------------


def exponential(x, amplitude, tau):
    return amplitude * np.exp(-np.asarray(x) / tau)


def exponential_jac(x, amplitude, tau):
    e = np.exp(-np.asarray(x) / tau)
    return np.column_stack([e, amplitude * e * np.asarray(x) / tau**2])


def gaussian(x, amplitude, center, sigma, offset):
    return offset + amplitude * np.exp(-((np.asarray(x) - center) ** 2) / (2 * sigma**2))


def gaussian_jac(x, amplitude, center, sigma, offset):
    x = np.asarray(x, dtype=float)
    e = np.exp(-((x - center) ** 2) / (2 * sigma**2))
    return np.column_stack(
        [e, amplitude * e * (x - center) / sigma**2, amplitude * e * (x - center) ** 2 / sigma**3, np.ones_like(x)]
    )


def rabi_model(power, pi_power, max_rate):
    return rabi_rate(power, abs(pi_power), max_rate)


def rabi_jac(power, pi_power, max_rate):
    pw = np.asarray(power, dtype=float)
    arg = np.pi / 2 * np.sqrt(pw / pi_power)
    s2 = np.sin(arg) ** 2
    d_arg = -arg / (2 * pi_power)
    return np.column_stack([max_rate * 2 * np.sin(arg) * np.cos(arg) * d_arg, s2])


def _fss_design(angle_deg):
    a = np.radians(np.asarray(angle_deg, dtype=float))
    return np.sin(4 * a), np.cos(4 * a)


def fss_joint_model(x, offset_x, offset_xx, a_sin, a_cos):
    """Stacked X then XX branch energies; the branches have opposite sign."""
    s, c = _fss_design(x)
    branch = a_sin * s + a_cos * c
    return np.concatenate([offset_x + branch, offset_xx - branch])


def fss_joint_jac(x, offset_x, offset_xx, a_sin, a_cos):
    s, c = _fss_design(x)
    n = s.size
    one, zero = np.ones(n), np.zeros(n)
    top = np.column_stack([one, zero, s, c])
    bot = np.column_stack([zero, one, -s, -c])
    return np.vstack([top, bot])


def fss_diff_model(x, offset, a_sin, a_cos):
    s, c = _fss_design(x)
    return offset + a_sin * s + a_cos * c


def fss_diff_jac(x, offset, a_sin, a_cos):
    s, c = _fss_design(x)
    return np.column_stack([np.ones_like(s), s, c])


SHIPPED_MODELS = {
    "exponential": (exponential, exponential_jac),
    "gaussian": (gaussian, gaussian_jac),
    "rabi": (rabi_model, rabi_jac),
    "fss_joint": (fss_joint_model, fss_joint_jac),
    "fss_diff": (fss_diff_model, fss_diff_jac),
}


# --- lifetimes -----------------------------------------------------------------


def lifetime_model(kind: str, params: CascadeParams, rep_period: float | None = None):
    """Histogram model: amplitude * curve(t - t0) + background, period-folded if asked."""
    kind = kind.upper()
    if kind not in ("X", "XX"):
        raise ValueError(f"unknown lifetime kind {kind!r}")

    def model(t, *p):
        if kind == "XX":
            amp, t0, bg, txx = p
            cp = replace(params, t1_xx=abs(txx))
            curve = lifetime_curve_xx
        else:
            amp, t0, bg, tx = p
            cp = replace(params, t1_x=abs(tx))
            curve = lifetime_curve_x
        tt = np.asarray(t, dtype=float) - t0
        val = curve(tt, cp)
        if rep_period is not None:
            val = val + curve(tt + rep_period, cp) + curve(tt - rep_period, cp)
        return amp * val + bg

    return model


def fit_lifetime(hist, kind: str, params: CascadeParams, rep_period: float | None = None, init=None) -> FitResult:
    """Fit the lifetime of ``kind`` ("X" or "XX") to a sync-referenced histogram.

    Free: amplitude, time offset, flat background and the lifetime. The jitter
    and, for X, the XX lifetime stay fixed at ``params``.
    """
    counts = np.asarray(hist.counts, dtype=float)
    t = hist.centers
    if rep_period is not None:
        # a trailing bin only partly inside the period would be under-filled
        full = hist.edges[1:] <= rep_period + 1e-9
        counts, t = counts[full], t[full]
    if np.count_nonzero(counts) < 10:
        raise ValueError("need at least 10 populated bins")
    kind = kind.upper()
    life0 = params.t1_xx if kind == "XX" else params.t1_x
    p0 = init or (counts.sum() * hist.bin_width, 0.0, float(np.median(counts[-max(counts.size // 10, 1):])), life0)
    names = ["amplitude", "t0", "background", "t1_xx" if kind == "XX" else "t1_x"]
    model = lifetime_model(kind, params, rep_period)
    res = least_squares_fit(model, t, counts, poisson_sigma(counts), p0, names)
    res.params[names[3]] = abs(res.params[names[3]])
    return res


def mean_delay_lifetime(delays) -> float:
    """Maximum-likelihood lifetime of jitter-free exponential delays (their mean)."""
    return float(np.mean(delays))


# --- fine-structure splitting -------------------------------------------------


def fit_fss(angle, e_x, e_xx, sigma: float | None = None) -> FitResult:
    """Joint fit of the X and XX line energies versus half-wave-plate angle (degrees).

    Both branches share the sine term with opposite sign; each has its own
    offset. The splitting is the peak-to-peak amplitude of the X - XX trace,
    also fitted on its own and reported in ``extra``.
    """
    angle = np.asarray(angle, dtype=float)
    e_x = np.asarray(e_x, dtype=float)
    e_xx = np.asarray(e_xx, dtype=float)
    if angle.size < 8:
        raise ValueError("need at least 8 angle samples")
    if np.ptp(angle) < 90:
        raise ValueError("angles must span at least 90 degrees of plate rotation")
    if np.ptp(e_x) == 0 and np.ptp(e_xx) == 0:
        raise ValueError("degenerate input: energies are constant")
    y = np.concatenate([e_x, e_xx])
    sig = np.ones_like(y) if sigma is None else np.full_like(y, sigma)
    p0 = (float(e_x.mean()), float(e_xx.mean()), 0.0, 0.0)
    res = least_squares_fit(fss_joint_model, angle, y, sig, p0, ["offset_x", "offset_xx", "a_sin", "a_cos"],
                            jac=fss_joint_jac)
    scale = 1.0 if sigma is not None else math.sqrt(max(res.chi2_reduced, 1e-300))
    fss, phase, s_fss = _amplitude_phase(res, "a_sin", "a_cos", scale)
    # E = offset + a_sin sin + a_cos cos = offset + (fss/2) sin(4 angle + phase)
    fss, s_fss = 2 * fss, 2 * s_fss

    d = e_x - e_xx
    sig_d = None if sigma is None else np.full_like(d, sigma * math.sqrt(2))
    dres = least_squares_fit(fss_diff_model, angle, d, np.ones_like(d) if sig_d is None else sig_d,
                             (float(d.mean()), 0.0, 0.0), ["offset", "a_sin", "a_cos"], jac=fss_diff_jac)
    dscale = 1.0 if sigma is not None else math.sqrt(max(dres.chi2_reduced, 1e-300))
    fss_d, _, s_fss_d = _amplitude_phase(dres, "a_sin", "a_cos", dscale)

    out = FitResult(
        params={"fss": fss, "phase": phase, "offset_x": res["offset_x"], "offset_xx": res["offset_xx"]},
        sigmas={
            "fss": s_fss,
            "phase": _phase_sigma(res, scale),
            "offset_x": res.sigmas["offset_x"] * scale,
            "offset_xx": res.sigmas["offset_xx"] * scale,
        },
        chi2_reduced=res.chi2_reduced,
        n_iterations=res.n_iterations,
        converged=res.converged,
        chi2=res.chi2,
        dof=res.dof,
        gradient_norm=res.gradient_norm,
        extra={"fss_difference": fss_d, "fss_difference_sigma": s_fss_d},
    )
    return out


def _amplitude_phase(res: FitResult, ks: str, kc: str, scale: float):
    a, b = res[ks], res[kc]
    sa, sb = res.sigmas[ks] * scale, res.sigmas[kc] * scale
    amp = math.hypot(a, b)
    phase = math.atan2(b, a) % (2 * math.pi)
    if amp > 0:
        s_amp = math.sqrt((a * sa) ** 2 + (b * sb) ** 2) / amp
    else:
        s_amp = math.sqrt((sa**2 + sb**2) / 2)
    return amp, phase, s_amp


def _phase_sigma(res: FitResult, scale: float) -> float:
    a, b = res["a_sin"], res["a_cos"]
    r2 = a * a + b * b
    if r2 == 0:
        return math.pi
    sa, sb = res.sigmas["a_sin"] * scale, res.sigmas["a_cos"] * scale
    return math.sqrt((b * sa) ** 2 + (a * sb) ** 2) / r2


def synthetic_fss_scan(angles, fss, phase=0.3, offset_x=0.0, offset_xx=0.0, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    e_x = fss_energy_shift(angles, fss, phase, offset_x) + rng.normal(0, noise, np.size(angles))
    e_xx = fss_energy_shift(angles, -fss, phase, offset_xx) + rng.normal(0, noise, np.size(angles))
    return e_x, e_xx


# --- Rabi ----------------------------------------------------------------------


def fit_rabi(power, rate, sigma=None) -> FitResult:
    power = np.asarray(power, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if power.size < 5:
        raise ValueError("need at least 5 power points")
    k = int(np.argmax(rate))
    if k == power.size - 1:
        raise ValueError("no point beyond the first maximum")
    p0 = (float(power[k]), float(rate[k]))
    sig = np.ones_like(rate) if sigma is None else sigma
    res = least_squares_fit(rabi_model, power, rate, sig, p0, ["pi_power", "max_rate"], jac=rabi_jac)
    res.params["pi_power"] = abs(res.params["pi_power"])
    if power.max() < res["pi_power"] / 4:
        raise FitError("no curvature: all powers below a quarter of the pi-pulse power")
    return res


# --- point spread function ------------------------------------------------------


def diffraction_limit_fwhm(wavelength_nm: float, na: float) -> float:
    return 0.51 * wavelength_nm / na


def _fit_cut(coord, values):
    k = int(np.argmax(values))
    half = values.min() + (values[k] - values.min()) / 2
    width = max(np.count_nonzero(values >= half) * abs(coord[1] - coord[0]), abs(coord[1] - coord[0]))
    p0 = (values[k] - values.min(), coord[k], width / FWHM_PER_SIGMA, values.min())
    scale = max(np.abs(values).max(), 1e-300)
    res = least_squares_fit(gaussian, coord, values / scale, np.ones_like(values), (p0[0] / scale, p0[1], p0[2], p0[3] / scale),
                            ["amplitude", "center", "sigma", "offset"], jac=gaussian_jac)
    res.params["sigma"] = abs(res.params["sigma"])
    return res


def fit_psf(image, x_grid, y_grid) -> FitResult:
    """Gaussian fits to horizontal and vertical cuts through the brightest pixel.

    ``image`` is indexed [x, y]. Widths are in the grid unit.
    """
    image = np.asarray(image, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    y_grid = np.asarray(y_grid, dtype=float)
    ix, iy = np.unravel_index(int(np.argmax(image)), image.shape)
    if ix in (0, image.shape[0] - 1) or iy in (0, image.shape[1] - 1):
        raise ValueError("peak lies on the image boundary")
    fx = _fit_cut(x_grid, image[:, iy])
    fy = _fit_cut(y_grid, image[ix, :])
    fwhm_x = FWHM_PER_SIGMA * fx["sigma"]
    fwhm_y = FWHM_PER_SIGMA * fy["sigma"]
    sx = FWHM_PER_SIGMA * fx.sigmas["sigma"] * math.sqrt(max(fx.chi2_reduced, 0))
    sy = FWHM_PER_SIGMA * fy.sigmas["sigma"] * math.sqrt(max(fy.chi2_reduced, 0))
    return FitResult(
        params={
            "fwhm_x": fwhm_x,
            "fwhm_y": fwhm_y,
            "fwhm": (fwhm_x + fwhm_y) / 2,
            "center_x": fx["center"],
            "center_y": fy["center"],
        },
        sigmas={
            "fwhm_x": sx,
            "fwhm_y": sy,
            "fwhm": 0.5 * math.hypot(sx, sy),
            "center_x": fx.sigmas["center"],
            "center_y": fy.sigmas["center"],
        },
        chi2_reduced=(fx.chi2_reduced + fy.chi2_reduced) / 2,
        n_iterations=fx.n_iterations + fy.n_iterations,
        converged=fx.converged and fy.converged,
        extra={"sigma_x": fx["sigma"], "sigma_y": fy["sigma"]},
    )
