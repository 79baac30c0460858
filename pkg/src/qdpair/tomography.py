"""Time-resolved two-photon polarization tomography by maximum likelihood."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .cascade import CascadeParams, coherence_factor
from .correlate import cross_correlate
from .poincare import (
    combinations,
    combo_label,
    pair_ket,
    parse_combo,
    setting_outcomes,
    settings,
)
from .simulate import Channel
from .twoqubit import DensityMatrix, negativity2n

log = logging.getLogger(__name__)

COMBOS = combinations()
COMBO_LABELS = [combo_label(i, j) for i, j in COMBOS]
LOW_STATISTICS = 100

_PORT_CHANNELS = [
    (Channel.XX_T, Channel.X_T),
    (Channel.XX_T, Channel.X_R),
    (Channel.XX_R, Channel.X_T),
    (Channel.XX_R, Channel.X_R),
]


class MLEConvergenceError(RuntimeError):
    pass


@dataclass
class TomogramCounts:
    """Coincidences per (XX basis, X basis) combination and delay bin."""

    delay_grid: np.ndarray  # bin starts, ps
    bin_width: int
    counts: np.ndarray  # (36, n_bins)
    exposure: np.ndarray = None  # pulses per combination's setting
    bases: list = field(default_factory=lambda: list(COMBOS))

    def __post_init__(self):
        self.delay_grid = np.asarray(self.delay_grid, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (36, self.delay_grid.size):
            raise ValueError(f"counts must have shape (36, {self.delay_grid.size})")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if len(set(self.bases)) != 36:
            raise ValueError("all 36 combinations must be present")
        if self.delay_grid.size > 1 and np.any(np.diff(self.delay_grid) != self.bin_width):
            raise ValueError("delay grid must be uniform with spacing bin_width")
        if self.exposure is None:
            self.exposure = np.zeros(36, dtype=np.int64)
        self.exposure = np.asarray(self.exposure, dtype=np.int64)

    @property
    def centers(self) -> np.ndarray:
        return self.delay_grid + self.bin_width / 2

    def column(self, first, second) -> np.ndarray:
        return self.counts[self.bases.index((first, second))]

    def to_csv(self) -> str:
        labels = [combo_label(i, j) for i, j in self.bases]
        exp = ";".join(f"{l}={e}" for l, e in zip(labels, self.exposure.tolist()))
        lines = [f"# bin_width_ps={self.bin_width}, exposure_pulses={exp}", "delay_ps," + ",".join(labels)]
        for k, d in enumerate(self.delay_grid.tolist()):
            lines.append(f"{d}," + ",".join(str(v) for v in self.counts[:, k].tolist()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TomogramCounts":
        lines = [l for l in text.strip().splitlines() if l.strip()]
        k = next(n for n, l in enumerate(lines) if "bin_width_ps=" in l)
        head, lines = lines[k], lines[k:]
        width = int(head.split("bin_width_ps=")[1].split(",")[0])
        exp_map = dict(kv.split("=") for kv in head.split("exposure_pulses=")[1].split(";"))
        labels = lines[1].split(",")[1:]
        bases = [parse_combo(l) for l in labels]
        arr = np.array([l.split(",") for l in lines[2:]], dtype=np.int64).reshape(-1, 37)
        exposure = [int(exp_map[l]) for l in labels]
        return cls(arr[:, 0], width, arr[:, 1:].T, exposure, bases)


def _default_start(window: int, bin_width: int) -> int:
    # one bin centred on zero delay
    return -(window // bin_width) * bin_width - bin_width // 2


def assemble_tomogram(streams: dict, window: int, bin_width: int, start: int | None = None) -> TomogramCounts:
    """Relabel the four detector pairs of each of the 9 settings into 36 combinations.

    The delay is t_X - t_XX.
    """
    need = settings()
    missing = [s for s in need if s not in streams]
    if missing:
        raise ValueError(f"missing projection settings: {[combo_label(*s) for s in missing]}")
    start = _default_start(int(window), int(bin_width)) if start is None else start
    counts = np.zeros((36, 0), dtype=np.int64)
    exposure = np.zeros(36, dtype=np.int64)
    grid = None
    for setting in need:
        tags = streams[setting]
        pulses = tags.count(Channel.SYNC)
        for (ch_xx, ch_x), combo in zip(_PORT_CHANNELS, setting_outcomes(*setting)):
            h = cross_correlate(tags, ch_xx, ch_x, window, bin_width, start)
            if grid is None:
                grid = h.bin_starts
                counts = np.zeros((36, grid.size), dtype=np.int64)
            elif not np.array_equal(grid, h.bin_starts):
                raise ValueError("inconsistent bin grids between settings")
            k = COMBOS.index(combo)
            counts[k] += h.counts.astype(np.int64)
            exposure[k] = pulses
    return TomogramCounts(grid, int(bin_width), counts, exposure)


# --- maximum likelihood --------------------------------------------------------

_KETS_CACHE: dict = {}


def _measurement(bases):
    key = tuple(bases)
    if key not in _KETS_CACHE:
        kets = np.array([pair_ket(i, j) for i, j in bases])
        groups = [(i.setting, j.setting) for i, j in bases]
        uniq = sorted(set(groups), key=lambda g: (g[0].value, g[1].value))
        group_idx = np.array([uniq.index(g) for g in groups])
        _KETS_CACHE[key] = (kets, group_idx, len(uniq))
    return _KETS_CACHE[key]


def _t_from_params(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    rows, cols = np.tril_indices(4, -1)
    t[rows, cols] = x[4:10] + 1j * x[10:16]
    return t


def _params_from_rho(rho: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """T parameters with T^dagger T = rho (regularized to full rank)."""
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    w = np.clip(w, 0, None) + eps
    rho = (v * w) @ v.conj().T
    rho /= np.trace(rho).real
    j = np.eye(4)[::-1]
    lower = np.linalg.cholesky(j @ rho @ j)
    t = j @ lower.conj().T @ j
    rows, cols = np.tril_indices(4, -1)
    return np.concatenate([t[np.diag_indices(4)].real, t[rows, cols].real, t[rows, cols].imag])


def rho_from_params(x) -> np.ndarray:
    t = _t_from_params(np.asarray(x, dtype=float))
    m = t.conj().T @ t
    return m / np.trace(m).real


def _pauli_basis():
    s = [
        np.eye(2),
        np.array([[0, 1], [1, 0]]),
        np.array([[0, -1j], [1j, 0]]),
        np.array([[1, 0], [0, -1]]),
    ]
    return np.array([np.kron(a, b) for a in s for b in s]) / 4


def linear_inversion(counts36, bases=None) -> np.ndarray:
    bases = list(COMBOS) if bases is None else list(bases)
    kets, group_idx, n_groups = _measurement(bases)
    n = np.asarray(counts36, dtype=float)
    norm = np.bincount(group_idx, weights=n, minlength=n_groups)[group_idx]
    p = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
    basis = _pauli_basis()
    a = np.real(np.einsum("ni,mij,nj->nm", kets.conj(), basis, kets))
    r, *_ = np.linalg.lstsq(a[:, 1:], p - a[:, 0], rcond=None)
    rho = basis[0] + np.tensordot(r, basis[1:], axes=1)
    return (rho + rho.conj().T) / 2


def _objective(x, kets, n, norm):
    t = _t_from_params(x)
    tr = np.sum(np.abs(t) ** 2)
    tpsi = kets @ t.T  # rows: T psi
    p = np.sum(np.abs(tpsi) ** 2, axis=1) / tr
    mu = np.maximum(norm * p, 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.where(n > 0, n * np.log(n / mu), 0.0)
    f = np.sum(mu - n + logterm)
    g = norm * (1 - n / mu)
    gmat = (kets.T * g) @ kets.conj() - np.sum(g * p) * np.eye(4)
    gt = (gmat @ t.conj().T) / tr
    rows, cols = np.tril_indices(4, -1)
    grad = np.concatenate(
        [
            2 * np.real(gt[np.arange(4), np.arange(4)]),
            2 * np.real(gt[cols, rows]),
            -2 * np.imag(gt[cols, rows]),
        ]
    )
    return f, grad


def _minimize(x0, kets, n, norm, maxiter):
    res = minimize(
        _objective,
        x0,
        args=(kets, n, norm),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": maxiter, "maxfun": 4 * maxiter, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 30},
    )
    msg = str(res.message)
    ok = res.success or "ABNORMAL" in msg.upper()
    return res, ok


@dataclass
class MLEFit:
    rho: np.ndarray
    params: np.ndarray
    deviance: float
    expected: np.ndarray
    total: int


def mle_fit(counts36, bases=None, restarts: int = 5, seed: int = 0, x0=None, maxiter: int = 20000) -> MLEFit:
    """Poisson maximum-likelihood density matrix, rho = T^dagger T / tr(T^dagger T).

    Expected counts are N_setting <psi|rho|psi>, with N_setting the total of the
    four combinations sharing a projection setting. Starts from the linear
    inversion estimate (or ``x0``) plus ``restarts`` random points.
    """
    bases = list(COMBOS) if bases is None else list(bases)
    n = np.asarray(counts36, dtype=float)
    if n.shape != (len(bases),) or len(bases) != 36:
        raise ValueError("expected 36 combination counts")
    total = int(round(n.sum()))
    if total == 0:
        raise ValueError("no coincidences to reconstruct from")
    kets, group_idx, n_groups = _measurement(bases)
    norm = np.bincount(group_idx, weights=n, minlength=n_groups)[group_idx]

    starts = [x0] if x0 is not None else [_params_from_rho(linear_inversion(n, bases), eps=1e-3)]
    rng = np.random.default_rng(seed)
    starts += [rng.normal(size=16) for _ in range(restarts)]

    best = None
    for x in starts:
        res, ok = _minimize(np.asarray(x, dtype=float), kets, n, norm, maxiter)
        if not ok:
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise MLEConvergenceError("likelihood optimizer did not converge from any start")
    rho = rho_from_params(best.x)
    rho = (rho + rho.conj().T) / 2
    if not np.all(np.isfinite(rho)):
        raise MLEConvergenceError("likelihood optimizer returned a non-finite state")
    p = np.clip(np.real(np.einsum("ni,ij,nj->n", kets.conj(), rho, kets)), 0.0, None)
    return MLEFit(rho, best.x, float(best.fun), norm * p, total)


def mle_reconstruct(counts36, bases=None, **kwargs) -> DensityMatrix:
    fit = mle_fit(counts36, bases, **kwargs)
    low = fit.total < LOW_STATISTICS
    if low:
        log.warning("low statistics: %d coincidences", fit.total)
    return DensityMatrix(fit.rho, coincidences=fit.total, low_statistics=low)


# --- delay-resolved negativity -----------------------------------------------


@dataclass
class NegativitySeries:
    delay_centers: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    counts: np.ndarray = None
    low_statistics: np.ndarray = None

    def __post_init__(self):
        self.delay_centers = np.asarray(self.delay_centers, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        n = self.delay_centers.size
        self.counts = np.zeros(n, np.int64) if self.counts is None else np.asarray(self.counts, np.int64)
        if self.low_statistics is None:
            self.low_statistics = self.counts < LOW_STATISTICS
        self.low_statistics = np.asarray(self.low_statistics, dtype=bool)

    def to_csv(self) -> str:
        lines = ["delay_ps,two_n,sigma,counts,low_statistics"]
        for row in zip(self.delay_centers, self.values, self.errors, self.counts, self.low_statistics):
            lines.append(f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},{row[3]},{int(row[4])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "NegativitySeries":
        lines = [l for l in text.strip().splitlines() if l and not l.startswith("#")]
        rows = [l.split(",") for l in lines[1:]]
        arr = np.array(rows, dtype=float).reshape(-1, 5)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3].astype(np.int64), arr[:, 4].astype(bool))

    def window_mask(self, lo: float, hi: float) -> np.ndarray:
        return (self.delay_centers >= lo) & (self.delay_centers <= hi) & np.isfinite(self.values)

    def weighted_mean(self, lo: float, hi: float) -> float:
        """Coincidence-weighted mean 2n over bins centred in [lo, hi]."""
        m = self.window_mask(lo, hi)
        w = self.counts[m].astype(float)
        if w.sum() == 0:
            raise ValueError("no populated bins in window")
        return float(np.sum(w * self.values[m]) / w.sum())


def aggregate(tomogram: TomogramCounts, bin_width_out: int):
    """Sum input bins into wider output bins; one output bin is centred on zero if possible."""
    if bin_width_out % tomogram.bin_width:
        raise ValueError("output bin width must be a multiple of the tomogram bin width")
    f = bin_width_out // tomogram.bin_width
    zero = int(np.clip(np.searchsorted(tomogram.delay_grid, 0, side="right") - 1, 0, None))
    first = (zero - f // 2) % f
    n_out = (tomogram.delay_grid.size - first) // f
    idx = first + np.arange(n_out * f)
    c = tomogram.counts[:, idx].reshape(36, n_out, f).sum(axis=2)
    starts = tomogram.delay_grid[first::f][:n_out]
    return starts, c


def _negativity_bin(args):
    counts36, bases, n_bootstrap, seed = args
    total = int(counts36.sum())
    if total == 0:
        return math.nan, math.nan
    fit = mle_fit(counts36, bases, seed=seed)
    value = negativity2n(fit.rho)
    if n_bootstrap <= 0:
        return value, math.nan
    rng = np.random.default_rng([seed, 1])
    reps = []
    for _ in range(n_bootstrap):
        sample = rng.poisson(fit.expected)
        if sample.sum() == 0:
            reps.append(0.0)
            continue
        try:
            rep = mle_fit(sample, bases, restarts=0, x0=fit.params, seed=seed)
        except MLEConvergenceError:
            continue
        reps.append(negativity2n(rep.rho))
    return value, float(np.std(reps, ddof=1)) if len(reps) > 1 else math.nan


def negativity_vs_delay(
    tomogram: TomogramCounts,
    bin_width_out: int,
    n_bootstrap: int = 100,
    seed: int = 0,
    delay_range: tuple[float, float] | None = None,
    workers: int = 1,
) -> NegativitySeries:
    """2n per output delay bin, with parametric-bootstrap 1-sigma errors."""
    starts, c = aggregate(tomogram, bin_width_out)
    centers = starts + bin_width_out / 2
    if delay_range is not None:
        keep = (centers >= delay_range[0]) & (centers <= delay_range[1])
        starts, c, centers = starts[keep], c[:, keep], centers[keep]
    jobs = [(c[:, k], tomogram.bases, n_bootstrap, seed * 100003 + k) for k in range(c.shape[1])]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_negativity_bin, jobs, chunksize=4))
    else:
        out = [_negativity_bin(j) for j in jobs]
    values = np.array([o[0] for o in out])
    errors = np.array([o[1] for o in out])
    totals = c.sum(axis=0)
    return NegativitySeries(centers, values, errors, totals, totals < LOW_STATISTICS)


def window_counts(tomogram: TomogramCounts, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    m = (tomogram.centers >= lo) & (tomogram.centers <= hi)
    if not m.any():
        raise ValueError(f"no delay bins inside window {window}")
    return tomogram.counts[:, m].sum(axis=1)


def window_average_matrix(tomogram: TomogramCounts, window: tuple[float, float], **kwargs) -> DensityMatrix:
    """Single reconstruction from counts summed over all bins centred in ``window``."""
    lo, hi = window
    if lo < tomogram.delay_grid[0] or hi > tomogram.delay_grid[-1] + tomogram.bin_width:
        raise ValueError("window extends beyond the tomogram")
    counts = window_counts(tomogram, window)
    if counts.sum() == 0:
        raise ValueError("window contains no coincidences")
    dm = mle_reconstruct(counts, tomogram.bases, **kwargs)
    dm.window_ps = (float(lo), float(hi))
    return dm


# --- analytic model ----------------------------------------------------------


def model_density(delta_tau: float, params: CascadeParams, projection_accuracy: float = 1.0,
                  jitter_fwhm: float | None = None) -> np.ndarray:
    """Maximally entangled cascade state seen through timing jitter and imperfect projections.

    Jitter averages the precession phase over the true delays that feed one
    measured delay; a projection error (probability 1 - accuracy per photon)
    acts as local depolarization.
    """
    c = coherence_factor(delta_tau, params, jitter_fwhm)
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[3, 3] = 0.5
    rho[0, 3] = np.conj(c) / 2
    rho[3, 0] = c / 2
    a2 = projection_accuracy**2
    return a2 * rho + (1 - a2) * np.eye(4) / 4


def model_negativity(delta_tau, params: CascadeParams, projection_accuracy: float = 1.0,
                     jitter_fwhm: float | None = None) -> np.ndarray:
    d = np.atleast_1d(np.asarray(delta_tau, dtype=float))
    out = np.array([negativity2n(model_density(x, params, projection_accuracy, jitter_fwhm)) for x in d])
    return out if np.ndim(delta_tau) else float(out[0])


def expected_counts(rho, bases=None, per_setting: float = 1.0) -> np.ndarray:
    """Noise-free Born-rule counts for the 36 combinations."""
    bases = list(COMBOS) if bases is None else list(bases)
    kets, _, _ = _measurement(bases)
    return per_setting * np.real(np.einsum("ni,ij,nj->n", kets.conj(), np.asarray(rho), kets))
