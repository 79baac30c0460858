"""Closed-form cascade curves: polarization-resolved coincidences, lifetimes, FSS, Rabi."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import wofz

from . import FWHM_PER_SIGMA, PLANCK_UEV_PS
from .poincare import PoincareCoord, basis_coords


@dataclass(frozen=True)
class CascadeParams:
    t1_x: float = 320.0  # ps
    t1_xx: float = 222.7  # ps
    fss: float = 5.79  # µeV
    jitter_1p_fwhm: float = 89.0  # ps, per detector
    planck_uev_ps: float = PLANCK_UEV_PS

    def __post_init__(self):
        if self.t1_x <= 0 or self.t1_xx <= 0:
            raise ValueError("lifetimes must be positive")
        if self.fss < 0 or self.jitter_1p_fwhm < 0:
            raise ValueError("fss and jitter must be non-negative")

    @property
    def precession_period(self) -> float:
        return math.inf if self.fss == 0 else self.planck_uev_ps / self.fss

    @property
    def omega(self) -> float:
        """Precession angular frequency 2 pi fss / h in rad/ps."""
        return 2 * math.pi * self.fss / self.planck_uev_ps

    @property
    def jitter_2p_fwhm(self) -> float:
        return math.sqrt(2.0) * self.jitter_1p_fwhm

    @property
    def sigma_1p(self) -> float:
        return self.jitter_1p_fwhm / FWHM_PER_SIGMA

    @property
    def sigma_2p(self) -> float:
        return self.jitter_2p_fwhm / FWHM_PER_SIGMA


def _coord(c) -> PoincareCoord:
    return c if isinstance(c, PoincareCoord) else basis_coords(c)


def _oscillation_coeffs(i, j):
    """Write |A cos a + i B sin a|^2 as c0 + c1 cos(phi_I + phi_J + omega t)."""
    ci, cj = _coord(i), _coord(j)
    a = math.cos((ci.theta - cj.theta) / 2)
    b = math.cos((ci.theta + cj.theta) / 2)
    return (a * a + b * b) / 2, (a * a - b * b) / 2, ci.phi + cj.phi


def theory_coincidence(i, j, delta_tau, params: CascadeParams):
    """Coincidence density (per ps) for XX basis ``i`` and X basis ``j``.

    Normalized so the four outcomes of one projection setting add up to the
    exciton decay density exp(-t/T1X)/T1X.
    """
    t = np.asarray(delta_tau, dtype=float)
    if np.any(t < 0):
        raise ValueError("theory coincidence is defined for delta_tau >= 0 only")
    ci, cj = _coord(i), _coord(j)
    alpha = (ci.phi + cj.phi) / 2 + math.pi * t * params.fss / params.planck_uev_ps
    amp = math.cos((ci.theta - cj.theta) / 2) * np.cos(alpha) + 1j * math.cos(
        (ci.theta + cj.theta) / 2
    ) * np.sin(alpha)
    out = np.exp(-t / params.t1_x) / (2 * params.t1_x) * np.abs(amp) ** 2
    return float(out) if out.ndim == 0 else out


def theory_curve(i, j, grid, params: CascadeParams) -> np.ndarray:
    """``theory_coincidence`` on a grid, zero for negative delays."""
    grid = np.asarray(grid, dtype=float)
    out = np.zeros_like(grid)
    pos = grid >= 0
    out[pos] = theory_coincidence(i, j, grid[pos], params)
    return out


def exp_gauss(d, rate, sigma):
    """Integral over t >= 0 of exp(-rate t) N(d - t; 0, sigma); ``rate`` may be complex."""
    d = np.asarray(d, dtype=float)
    rate = complex(rate)
    if sigma == 0:
        return np.where(d >= 0, np.exp(-rate * np.maximum(d, 0)), 0.0)
    z = (rate * sigma**2 - d) / (sigma * math.sqrt(2))
    gauss = np.exp(-(d**2) / (2 * sigma**2))
    # erfcx(z) = w(iz); use the reflected form where Re z < 0 to avoid overflow
    pos = z.real >= 0
    out = np.empty(d.shape, dtype=complex)
    out[pos] = 0.5 * gauss[pos] * wofz(1j * z[pos])
    neg = ~pos
    dn = d[neg]
    out[neg] = np.exp(rate**2 * sigma**2 / 2 - rate * dn) - 0.5 * gauss[neg] * wofz(-1j * z[neg])
    return out


def _real(x):
    x = np.real(x)
    return float(x) if np.ndim(x) == 0 else x


def model_coincidence(i, j, delta_tau, params: CascadeParams, jitter_fwhm: float | None = None):
    """Theory coincidence convolved with the two-photon timing jitter (Gaussian)."""
    fwhm = params.jitter_2p_fwhm if jitter_fwhm is None else jitter_fwhm
    sigma = fwhm / FWHM_PER_SIGMA
    c0, c1, phase = _oscillation_coeffs(i, j)
    k = 1 / params.t1_x
    d = np.asarray(delta_tau, dtype=float)
    val = c0 * exp_gauss(d, k, sigma).real
    if c1 != 0:
        val = val + c1 * np.real(np.exp(1j * phase) * exp_gauss(d, k - 1j * params.omega, sigma))
    return _real(np.maximum(val / (2 * params.t1_x), 0.0))


def coherence_factor(delta_tau, params: CascadeParams, jitter_fwhm: float | None = None):
    """Complex <exp(-i omega t)> over true delays contributing to a measured delay.

    Its modulus is the HH-VV coherence left after timing jitter.
    """
    fwhm = params.jitter_2p_fwhm if jitter_fwhm is None else jitter_fwhm
    sigma = fwhm / FWHM_PER_SIGMA
    k = 1 / params.t1_x
    num = exp_gauss(delta_tau, k + 1j * params.omega, sigma)
    den = exp_gauss(delta_tau, k, sigma).real
    out = num / den
    return complex(out) if np.ndim(out) == 0 else out


def lifetime_curve_xx(tau, params: CascadeParams):
    """Unit-area XX decay seen through single-photon jitter."""
    k = 1 / params.t1_xx
    return _real(k * exp_gauss(tau, k, params.sigma_1p))


def lifetime_curve_x(tau, params: CascadeParams):
    """Unit-area X decay (fed by the XX decay) seen through single-photon jitter."""
    tx, txx, sigma = params.t1_x, params.t1_xx, params.sigma_1p
    tau = np.asarray(tau, dtype=float)
    if abs(tx - txx) <= 1e-9 * max(tx, txx):
        k = 1 / tx
        if sigma == 0:
            val = np.where(tau >= 0, np.maximum(tau, 0) * np.exp(-k * np.maximum(tau, 0)), 0.0)
        else:
            gauss = np.exp(-(tau**2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
            val = (tau - k * sigma**2) * exp_gauss(tau, k, sigma).real + sigma**2 * gauss
        return _real(val * k * k)
    val = (exp_gauss(tau, 1 / tx, sigma) - exp_gauss(tau, 1 / txx, sigma)).real / (tx - txx)
    return _real(val)


def fss_energy_shift(halfwave_angle, amplitude, phase, offset):
    """Line-energy shift (µeV) versus half-wave-plate angle in degrees.

    The polarization rotates by twice the plate angle, so the linear
    polarization pattern repeats every 45 degrees of plate rotation.
    """
    ang = np.radians(np.asarray(halfwave_angle, dtype=float))
    return _real(offset + amplitude / 2 * np.sin(4 * ang + phase))


def rabi_rate(pulse_power, pi_power, max_rate):
    """Ideal two-level pulse-area law; pulse area grows with sqrt(power)."""
    if pi_power <= 0:
        raise ValueError("pi_power must be positive")
    p = np.asarray(pulse_power, dtype=float)
    if np.any(p < 0):
        raise ValueError("pulse power must be non-negative")
    return _real(max_rate * np.sin(np.pi / 2 * np.sqrt(p / pi_power)) ** 2)


def pulse_energy(power_uw: float, rep_rate_hz: float) -> float:
    """Energy per pulse in joules."""
    return power_uw * 1e-6 / rep_rate_hz


@dataclass
class ModelCurve:
    delta_tau_grid: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        g = np.asarray(self.delta_tau_grid, dtype=float)
        if g.size > 1:
            step = np.diff(g)
            if np.any(step <= 0) or np.ptp(step) > 1e-9:
                raise ValueError("grid must be strictly increasing and uniform")
        self.delta_tau_grid = g
        self.values = np.asarray(self.values, dtype=float)

    def to_csv(self) -> str:
        lines = [f"# {self.label}", "delta_tau_ps,value"]
        lines += [f"{t:.17g},{v:.17g}" for t, v in zip(self.delta_tau_grid, self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ModelCurve":
        lines = text.strip().splitlines()
        comments = [l[1:].strip() for l in lines if l.startswith("#")]
        label = comments[-1] if comments else ""
        rows = [l.split(",") for l in lines if l and not l.startswith("#") and not l.startswith("delta")]
        arr = np.array(rows, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], label)


def model_curve(i, j, grid, params: CascadeParams, kind: str = "model") -> ModelCurve:
    fn = model_coincidence if kind == "model" else theory_curve
    label = (
        f"{kind} {_label(i)}-{_label(j)} t1_x_ps={params.t1_x} fss_uev={params.fss} "
        f"jitter_1p_fwhm_ps={params.jitter_1p_fwhm}"
    )
    return ModelCurve(grid, fn(i, j, np.asarray(grid, dtype=float), params), label)


def _label(c) -> str:
    return getattr(c, "value", str(c))
