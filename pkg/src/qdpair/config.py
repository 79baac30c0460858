"""Flat key=value run configuration: defaults < config file < command-line flags."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .cascade import CascadeParams
from .simulate import DetectionConfig


@dataclass
class RunConfig:
    # cascade
    t1_x_ps: float = 320.0
    t1_xx_ps: float = 222.7
    fss_uev: float = 5.79
    jitter_1p_fwhm_ps: float = 89.0
    # detection; efficiencies are assumptions reproducing the 5.2e-3 per-pulse yield
    rep_period_ps: float = 13157.9
    n_pulses: int = 1_000_000
    eta_xx: float = 0.0026
    eta_x: float = 0.0026
    prep_prob: float = 1.0
    dark_rate_hz: float = 0.0
    projection_accuracy: float = 1.0
    basis_first: str = "H"
    basis_second: str = "H"
    seed: int = 0
    multiphoton_prob: float = 0.0
    source: str = "cascade"
    mean_photons: float = 1.0
    # io
    input: str = ""
    output: str = "out"
    format: str = "qtt"
    # command options
    settings: str = "all"
    window_ps: int = 2000
    bin_width_ps: int = 4
    bin_width_out_ps: int = 16
    n_bootstrap: int = 100
    channel_a: str = "XX_T"
    channel_b: str = "X_T"
    channel: str = "XX_T"
    sync: bool = False
    g2: bool = False
    n_side_peaks: int = 5
    band_lo_nm: float = 770.0
    band_hi_nm: float = 790.0
    wavelength_nm: float = 780.0
    na: float = 0.6
    fit_sigma: float = 0.0
    combined_rate_hz: float = 0.0
    pi_power_uw: float = 0.65
    workers: int = 1
    deterministic: bool = False

    def cascade(self) -> CascadeParams:
        return CascadeParams(self.t1_x_ps, self.t1_xx_ps, self.fss_uev, self.jitter_1p_fwhm_ps)

    def detection(self) -> DetectionConfig:
        return DetectionConfig(
            rep_period=self.rep_period_ps,
            n_pulses=self.n_pulses,
            eta_xx=self.eta_xx,
            eta_x=self.eta_x,
            prep_prob=self.prep_prob,
            dark_rate=self.dark_rate_hz,
            projection_accuracy=self.projection_accuracy,
            basis_first=self.basis_first,
            basis_second=self.basis_second,
            seed=self.seed,
            multiphoton_prob=self.multiphoton_prob,
            source=self.source,
            mean_photons=self.mean_photons,
        )

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.items())

    @property
    def hash(self) -> str:
        # io and run-control keys do not change results
        skip = {"input", "output", "workers", "deterministic"}
        text = "".join(f"{k}={v}\n" for k, v in self.items() if k not in skip)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, value: str):
    if key not in FIELD_TYPES:
        raise KeyError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    if kind == "bool":
        v = str(value).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off", ""):
            return False
        raise ValueError(f"{key}: not a boolean: {value!r}")
    if kind == "int":
        return int(float(value))
    if kind == "float":
        return float(value)
    return str(value).strip()


def parse_config_text(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = coerce(key, value)
    return out


def resolve(file: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if file:
        values.update(parse_config_text(Path(file).read_text()))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = coerce(k, v) if isinstance(v, str) else v
    return RunConfig(**values)
