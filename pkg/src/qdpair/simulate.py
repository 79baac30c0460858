"""Monte-Carlo time-tag generation for the pulsed XX-X cascade experiment."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .cascade import CascadeParams
from .poincare import PolarizationLabel, pair_ket, setting_outcomes, settings

QTT1_MAGIC = b"QTT1\0\0\0\0"
QTT1_DTYPE = np.dtype([("channel", "u1"), ("reserved", "V7"), ("timestamp", "<i8")])


class Channel(IntEnum):
    XX_T = 0
    XX_R = 1
    X_T = 2
    X_R = 3
    SYNC = 4

    @classmethod
    def parse(cls, value) -> "Channel":
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        return cls[str(value).strip().upper()]


@dataclass(frozen=True)
class DetectionConfig:
    rep_period: float = 13157.9  # ps, 76 MHz
    n_pulses: int = 1_000_000
    eta_xx: float = 0.0026
    eta_x: float = 0.0026
    prep_prob: float = 1.0
    dark_rate: float = 0.0  # Hz per detector
    projection_accuracy: float = 1.0
    basis_first: PolarizationLabel = PolarizationLabel.H
    basis_second: PolarizationLabel = PolarizationLabel.H
    seed: int = 0
    multiphoton_prob: float = 0.0
    source: str = "cascade"
    mean_photons: float = 1.0  # per pulse and transition, poisson source only
    block_size: int = 1 << 18

    def __post_init__(self):
        object.__setattr__(self, "basis_first", PolarizationLabel.parse(self.basis_first))
        object.__setattr__(self, "basis_second", PolarizationLabel.parse(self.basis_second))
        for name in ("eta_xx", "eta_x", "prep_prob", "projection_accuracy", "multiphoton_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.rep_period <= 0:
            raise ValueError("rep_period must be positive")
        if self.n_pulses < 0 or self.dark_rate < 0 or self.mean_photons < 0:
            raise ValueError("n_pulses, dark_rate and mean_photons must be non-negative")
        if self.source not in ("cascade", "poisson"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")

    @property
    def rep_rate_hz(self) -> float:
        return 1e12 / self.rep_period

    @property
    def duration_ps(self) -> float:
        return self.n_pulses * self.rep_period


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    channels: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        ch = np.ascontiguousarray(self.channels, dtype=np.uint8)
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        if ch.shape != ts.shape or ch.ndim != 1:
            raise ValueError("channels and timestamps must be 1-D arrays of equal length")
        if ch.size and ch.max() > 4:
            raise ValueError("invalid channel code")
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be nondecreasing")
        ch.flags.writeable = False
        ts.flags.writeable = False
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.timestamps.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TimeTagStream)
            and np.array_equal(self.channels, other.channels)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    def times(self, channel) -> np.ndarray:
        return self.timestamps[self.channels == Channel.parse(channel)]

    def count(self, channel) -> int:
        return int(np.count_nonzero(self.channels == Channel.parse(channel)))

    @classmethod
    def from_unsorted(cls, channels, timestamps) -> "TimeTagStream":
        channels = np.asarray(channels, dtype=np.uint8)
        timestamps = np.asarray(timestamps, dtype=np.int64)
        order = np.lexsort((channels, timestamps))
        return cls(channels[order], timestamps[order])

    @classmethod
    def empty(cls) -> "TimeTagStream":
        return cls(np.zeros(0, np.uint8), np.zeros(0, np.int64))

    def to_bytes(self) -> bytes:
        rec = np.zeros(len(self), dtype=QTT1_DTYPE)
        rec["channel"] = self.channels
        rec["timestamp"] = self.timestamps
        return QTT1_MAGIC + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TimeTagStream":
        if data[:8] != QTT1_MAGIC:
            raise ValueError("not a QTT1 time-tag file")
        body = data[8:]
        if len(body) % QTT1_DTYPE.itemsize:
            raise ValueError("truncated QTT1 record")
        rec = np.frombuffer(body, dtype=QTT1_DTYPE)
        return cls(rec["channel"].copy(), rec["timestamp"].copy())

    def to_csv(self) -> str:
        names = [c.name for c in Channel]
        rows = ["channel_label,timestamp_ps"]
        rows += [f"{names[c]},{t}" for c, t in zip(self.channels.tolist(), self.timestamps.tolist())]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TimeTagStream":
        chans, times = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("channel"):
                continue
            label, ts = line.split(",")
            chans.append(Channel.parse(label))
            times.append(int(ts))
        return cls.from_unsorted(chans, times)

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix.lower() == ".csv":
            path.write_text(self.to_csv())
        else:
            path.write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TimeTagStream":
        path = Path(path)
        data = path.read_bytes()
        if data[:4] == b"QTT1":
            return cls.from_bytes(data)
        return cls.from_csv(data.decode())


def born_probabilities(delta_tau, params: CascadeParams, basis_first, basis_second) -> np.ndarray:
    """Probabilities of the (T,T), (T,R), (R,T), (R,R) detector outcomes.

    Vectorized over ``delta_tau``; the last axis holds the four outcomes.
    """
    dt = np.asarray(delta_tau, dtype=float)
    phase = np.exp(-1j * params.omega * dt)
    probs = []
    for a, b in setting_outcomes(basis_first, basis_second):
        k = pair_ket(a, b).conj()  # <P_a P_b|
        amp = (k[0] + k[3] * phase) / math.sqrt(2)
        probs.append(np.abs(amp) ** 2)
    out = np.stack(probs, axis=-1)
    return out / out.sum(axis=-1, keepdims=True)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, block]))


def _pair_events(rng, pulse_t, params, config, sigma):
    """Detection events of one emitted XX-X pair per entry of ``pulse_t``."""
    m = pulse_t.size
    t_xx = rng.exponential(params.t1_xx, m)
    dtau = rng.exponential(params.t1_x, m)
    probs = born_probabilities(dtau, params, config.basis_first, config.basis_second)
    u = rng.random(m)
    outcome = (u[:, None] >= np.cumsum(probs, axis=1)[:, :3]).sum(axis=1)
    port_xx, port_x = outcome // 2, outcome % 2
    # imperfect projection: the port is replaced by a fair coin
    flip_xx = rng.random(m) >= config.projection_accuracy
    port_xx = np.where(flip_xx, rng.integers(0, 2, m), port_xx)
    flip_x = rng.random(m) >= config.projection_accuracy
    port_x = np.where(flip_x, rng.integers(0, 2, m), port_x)
    det_xx = rng.random(m) < config.eta_xx
    det_x = rng.random(m) < config.eta_x
    jit_xx = rng.normal(0.0, sigma, m) if sigma > 0 else np.zeros(m)
    jit_x = rng.normal(0.0, sigma, m) if sigma > 0 else np.zeros(m)
    ts_xx = pulse_t + np.rint(t_xx + jit_xx).astype(np.int64)
    ts_x = pulse_t + np.rint(t_xx + dtau + jit_x).astype(np.int64)
    ch = np.concatenate([(Channel.XX_T + port_xx)[det_xx], (Channel.X_T + port_x)[det_x]])
    ts = np.concatenate([ts_xx[det_xx], ts_x[det_x]])
    return ch, ts


def _poisson_events(rng, pulse_t, params, config, sigma):
    chans, times = [], []
    for base, tau, eta in ((Channel.XX_T, params.t1_xx, config.eta_xx), (Channel.X_T, params.t1_x, config.eta_x)):
        n = rng.poisson(config.mean_photons, pulse_t.size)
        t0 = np.repeat(pulse_t, n)
        k = t0.size
        t = rng.exponential(tau, k) + (rng.normal(0.0, sigma, k) if sigma > 0 else 0.0)
        port = rng.integers(0, 2, k)
        det = rng.random(k) < eta
        chans.append((base + port)[det])
        times.append((t0 + np.rint(t).astype(np.int64))[det])
    return np.concatenate(chans), np.concatenate(times)


def _simulate_block(block, params, config):
    lo = block * config.block_size
    hi = min(lo + config.block_size, config.n_pulses)
    rng = _block_rng(config.seed, block)
    pulse_t = np.rint(np.arange(lo, hi) * config.rep_period).astype(np.int64)
    sigma = params.sigma_1p
    chans = [np.full(pulse_t.size, Channel.SYNC, dtype=np.int64)]
    times = [pulse_t]

    if config.source == "poisson":
        c, t = _poisson_events(rng, pulse_t, params, config, sigma)
        chans.append(c)
        times.append(t)
    else:
        prepared = pulse_t[rng.random(pulse_t.size) < config.prep_prob]
        c, t = _pair_events(rng, prepared, params, config, sigma)
        chans.append(c)
        times.append(t)
        if config.multiphoton_prob > 0:
            extra = prepared[rng.random(prepared.size) < config.multiphoton_prob]
            c, t = _pair_events(rng, extra, params, config, sigma)
            chans.append(c)
            times.append(t)

    if config.dark_rate > 0:
        t_lo, t_hi = lo * config.rep_period, hi * config.rep_period
        mean = config.dark_rate * (t_hi - t_lo) * 1e-12
        for ch in (Channel.XX_T, Channel.XX_R, Channel.X_T, Channel.X_R):
            n = rng.poisson(mean)
            chans.append(np.full(n, ch, dtype=np.int64))
            times.append(np.floor(rng.uniform(t_lo, t_hi, n)).astype(np.int64))
    return np.concatenate(chans), np.concatenate(times)


def simulate(params: CascadeParams, config: DetectionConfig, workers: int = 1) -> TimeTagStream:
    """Generate the sorted time-tag stream of ``config.n_pulses`` laser pulses.

    Pulses are processed in fixed blocks, each with its own counter-based
    generator keyed by (seed, block index), so the output does not depend on
    ``workers``.
    """
    n_blocks = -(-config.n_pulses // config.block_size)
    if n_blocks == 0:
        return TimeTagStream.empty()
    blocks = range(n_blocks)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _simulate_block(b, params, config), blocks))
    else:
        parts = [_simulate_block(b, params, config) for b in blocks]
    ch = np.concatenate([p[0] for p in parts])
    ts = np.concatenate([p[1] for p in parts])
    return TimeTagStream.from_unsorted(ch, ts)


def setting_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def simulate_tomography(params: CascadeParams, config: DetectionConfig, workers: int = 1):
    """One stream per projection setting in {H, D, R} x {H, D, R}."""
    out = {}
    for k, (i, j) in enumerate(settings()):
        cfg = replace(config, basis_first=i, basis_second=j, seed=setting_seed(config.seed, k))
        out[(i, j)] = simulate(params, cfg, workers=workers)
    return out


def multiphoton_prob_for_g2(g2: float) -> float:
    """Extra-pair probability giving the requested pulsed g2(0).

    A pulse emitting a second pair with probability ``p`` has
    g2 = 2 p / (1 + p)^2.
    """
    if not 0 <= g2 < 0.5:
        raise ValueError("g2 must lie in [0, 0.5)")
    if g2 == 0:
        return 0.0
    return ((1 - g2) - math.sqrt(1 - 2 * g2)) / g2
