"""Command-line entry point: ``qdpair <command> [--config FILE] [--key value ...]``."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import PLANCK_UEV_PS
from .cascade import model_coincidence, pulse_energy, theory_curve
from .config import RunConfig, resolve
from .correlate import Histogram, cross_correlate, g2_pulsed, sync_histogram
from .fitting import FitError, diffraction_limit_fwhm, fit_fss, fit_lifetime, fit_psf, fit_rabi
from .hyperspectral import HyperspectralCube, band_integrate, band_map_csv
from .poincare import PolarizationLabel, combinations, combo_label, settings
from .simulate import Channel, TimeTagStream, setting_seed, simulate
from .tomography import (
    COMBOS,
    MLEConvergenceError,
    TomogramCounts,
    aggregate,
    assemble_tomogram,
    mle_reconstruct,
    model_negativity,
    negativity_vs_delay,
    window_average_matrix,
)

log = logging.getLogger("qdpair")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CONVERGENCE = 0, 2, 3, 4
FIT_KINDS = ("lifetime-x", "lifetime-xx", "fss", "rabi", "psf")


class InputError(Exception):
    pass


# --- output helpers ------------------------------------------------------------


def provenance(cfg: RunConfig) -> str:
    line = f"# qdpair config_hash={cfg.hash}"
    if not cfg.deterministic:
        line += f" created={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}"
    return line + "\n"


def write_text(path: Path, text: str, cfg: RunConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".json":
        extra = {"config_hash": cfg.hash}
        if not cfg.deterministic:
            extra["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        text = "{" + json.dumps(extra)[1:-1] + ", " + text.lstrip()[1:]
    else:
        text = provenance(cfg) + text
    path.write_text(text)
    return path


def write_manifest(out: Path, cfg: RunConfig, files) -> None:
    lines = [provenance(cfg), cfg.to_text(), "# files\n"]
    lines += [f"# {Path(f).name}\n" for f in files]
    (out / "manifest.txt").write_text("".join(lines))


def tag_filename(first, second, fmt: str) -> str:
    return f"tags_{PolarizationLabel.parse(first).value}{PolarizationLabel.parse(second).value}.{'csv' if fmt == 'csv' else 'qtt'}"


def _requested_settings(cfg: RunConfig):
    if cfg.settings.strip().lower() == "all":
        return settings()
    out = []
    for tok in cfg.settings.replace(";", ",").split(","):
        tok = tok.strip().replace("-", "")
        if len(tok) != 2:
            raise ValueError(f"bad setting {tok!r}; use pairs like HD")
        out.append((PolarizationLabel.parse(tok[0]), PolarizationLabel.parse(tok[1])))
    return out


def _need_input(cfg: RunConfig) -> Path:
    if not cfg.input:
        raise InputError("no --input given")
    path = Path(cfg.input)
    if not path.exists():
        raise InputError(f"input {path} does not exist")
    return path


def _load_streams(path: Path) -> dict:
    streams = {}
    for i, j in settings():
        for fmt in ("qtt", "csv"):
            f = path / tag_filename(i, j, fmt)
            if f.exists():
                streams[(i, j)] = TimeTagStream.load(f)
                break
    if not streams:
        raise InputError(f"no time-tag files found in {path}")
    missing = [combo_label(*s) for s in settings() if s not in streams]
    if missing:
        raise InputError(f"missing settings in {path}: {', '.join(missing)}")
    if all(len(s) == 0 for s in streams.values()):
        raise InputError("all time-tag files are empty")
    return streams


# --- commands ------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    params = cfg.cascade()
    base = cfg.detection()
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    all_settings = settings()
    for i, j in _requested_settings(cfg):
        # seeds depend only on (seed, setting), never on the order requested
        k = all_settings.index((i, j)) if (i, j) in all_settings else 9 + combinations().index((i, j))
        det = replace(base, basis_first=i, basis_second=j, seed=setting_seed(cfg.seed, k))
        stream = simulate(params, det, workers=cfg.workers)
        path = out / tag_filename(i, j, cfg.format)
        stream.save(path)
        files.append(path)
        log.info("%s: %d records", path.name, len(stream))
    write_manifest(out, cfg, files)
    return files


def cmd_correlate(cfg: RunConfig) -> Path:
    stream = TimeTagStream.load(_need_input(cfg))
    out = Path(cfg.output)
    if cfg.sync:
        hist = sync_histogram(stream, cfg.channel, cfg.rep_period_ps, cfg.bin_width_ps)
        name = f"sync_{Channel.parse(cfg.channel).name}.csv"
    else:
        hist = cross_correlate(stream, cfg.channel_a, cfg.channel_b, cfg.window_ps, cfg.bin_width_ps)
        name = f"corr_{Channel.parse(cfg.channel_a).name}_{Channel.parse(cfg.channel_b).name}.csv"
    path = write_text(out / name, hist.to_csv(), cfg)
    if cfg.g2:
        res = g2_pulsed(hist, cfg.rep_period_ps, cfg.n_side_peaks)
        text = f"g2_0={res.value:.6g}\nsigma={res.sigma:.3g}\ncentral={res.central}\nside_mean={res.side_mean:.6g}\n"
        write_text(out / "g2.txt", text, cfg)
        print(text, end="")
    return path


def cmd_tomo(cfg: RunConfig) -> Path:
    streams = _load_streams(_need_input(cfg))
    tomo = assemble_tomogram(streams, cfg.window_ps, cfg.bin_width_ps)
    out = Path(cfg.output)
    path = write_text(out / "tomogram.csv", tomo.to_csv(), cfg)
    _write_matrices(tomo, cfg, out)
    return path


def _write_matrices(tomo: TomogramCounts, cfg: RunConfig, out: Path):
    zero = int(np.argmin(np.abs(tomo.centers)))
    peak_counts = tomo.counts[:, zero]
    results = {}
    if peak_counts.sum() > 0:
        dm = mle_reconstruct(peak_counts)
        lo = float(tomo.delay_grid[zero])
        dm.window_ps = (lo, lo + tomo.bin_width)
        write_text(out / "density_peak.json", dm.to_text(), cfg)
        results["peak"] = dm
    try:
        dm = window_average_matrix(tomo, (0.0, cfg.t1_x_ps))
        write_text(out / "density_window.json", dm.to_text(), cfg)
        results["window"] = dm
    except ValueError as exc:
        log.warning("window-averaged matrix skipped: %s", exc)
    return results


def cmd_negativity(cfg: RunConfig) -> Path:
    path = _need_input(cfg)
    if path.is_dir():
        path = path / "tomogram.csv"
    tomo = TomogramCounts.from_csv(path.read_text())
    series = negativity_vs_delay(tomo, cfg.bin_width_out_ps, cfg.n_bootstrap, cfg.seed, workers=cfg.workers)
    return write_text(Path(cfg.output) / "negativity.csv", series.to_csv(), cfg)


def _read_table(path: Path, ncols: int) -> np.ndarray:
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            rows.append([float(v) for v in parts[:ncols]])
        except ValueError:
            continue  # header
    if not rows:
        raise InputError(f"{path} contains no data rows")
    return np.array(rows)


def cmd_fit(cfg: RunConfig, kind: str) -> Path:
    if kind not in FIT_KINDS:
        raise ValueError(f"unknown fit kind {kind!r}; choose from {', '.join(FIT_KINDS)}")
    path = _need_input(cfg)
    sigma = cfg.fit_sigma if cfg.fit_sigma > 0 else None
    if kind.startswith("lifetime"):
        hist = Histogram.from_csv(path.read_text())
        res = fit_lifetime(hist, "X" if kind == "lifetime-x" else "XX", cfg.cascade(), rep_period=cfg.rep_period_ps)
    elif kind == "fss":
        t = _read_table(path, 3)
        res = fit_fss(t[:, 0], t[:, 1], t[:, 2], sigma)
    elif kind == "rabi":
        t = _read_table(path, 2)
        res = fit_rabi(t[:, 0], t[:, 1], sigma)
        res.extra["pi_pulse_energy_j"] = pulse_energy(res["pi_power"], 1e12 / cfg.rep_period_ps)
    else:
        if path.suffix == ".csv":
            t = _read_table(path, 3)
            xs, ys = np.unique(t[:, 0]), np.unique(t[:, 1])
            image = t[:, 2].reshape(xs.size, ys.size)
        else:
            cube = HyperspectralCube.load(path)
            xs, ys = cube.x_grid, cube.y_grid
            image = band_integrate(cube, (cfg.band_lo_nm, cfg.band_hi_nm))
        res = fit_psf(image, xs * 1000.0, ys * 1000.0)  # µm grid -> nm widths
        res.extra["diffraction_limit_nm"] = diffraction_limit_fwhm(cfg.wavelength_nm, cfg.na)
    out = write_text(Path(cfg.output) / f"fit_{kind}.csv", res.to_csv(), cfg)
    print(res.to_csv(), end="")
    return out


def cmd_hyper_map(cfg: RunConfig) -> Path:
    cube = HyperspectralCube.load(_need_input(cfg))
    image = band_integrate(cube, (cfg.band_lo_nm, cfg.band_hi_nm))
    name = f"band_{cfg.band_lo_nm:g}-{cfg.band_hi_nm:g}nm.csv"
    return write_text(Path(cfg.output) / name, band_map_csv(cube, image), cfg)


def efficiency_lines(combined_rate_hz: float, rep_period_ps: float) -> str:
    rep_rate = 1e12 / rep_period_ps
    return (
        f"combined detector rate: {combined_rate_hz / 1e3:.1f} kHz at {rep_rate / 1e6:.1f} MHz\n"
        f"per-pulse efficiency: {combined_rate_hz / rep_rate:.2e}\n"
    )


def summary_text(cfg: RunConfig, streams=None, tomo=None, series=None, mats=None) -> str:
    params = cfg.cascade()
    lines = [
        f"precession period T_p = h/fss: {PLANCK_UEV_PS / params.fss if params.fss else float('inf'):.1f} ps",
        f"two-photon jitter FWHM: {params.jitter_2p_fwhm:.1f} ps",
        f"diffraction limit 0.51*{cfg.wavelength_nm:g}/{cfg.na:g}: {diffraction_limit_fwhm(cfg.wavelength_nm, cfg.na):.0f} nm",
        f"pi-pulse energy at {cfg.pi_power_uw:g} uW: {pulse_energy(cfg.pi_power_uw, 1e12 / cfg.rep_period_ps):.2e} J",
    ]
    text = "\n".join(lines) + "\n"
    if cfg.combined_rate_hz > 0:
        text += efficiency_lines(cfg.combined_rate_hz, cfg.rep_period_ps)
    if streams:
        events = sum(len(s) - s.count(Channel.SYNC) for s in streams.values())
        pulses = sum(s.count(Channel.SYNC) for s in streams.values())
        if pulses:
            rate = events / pulses * 1e12 / cfg.rep_period_ps
            text += efficiency_lines(rate, cfg.rep_period_ps)
    if tomo is not None:
        text += f"coincidences in tomogram: {int(tomo.counts.sum())}\n"
    if mats:
        if "peak" in mats:
            lo, hi = mats["peak"].window_ps
            text += f"2n in central {hi - lo:g} ps bin: {mats['peak'].negativity2n:.3f}\n"
        if "window" in mats:
            text += f"2n of counts summed over [0, T1X]: {mats['window'].negativity2n:.3f}\n"
    if series is not None:
        k = int(np.argmin(np.abs(series.delay_centers)))
        err = f" +- {series.errors[k]:.3f}" if np.isfinite(series.errors[k]) else ""
        text += f"2n in {cfg.bin_width_out_ps} ps bin at {series.delay_centers[k]:g} ps: {series.values[k]:.3f}{err}\n"
        try:
            text += f"pair-weighted mean 2n over [0, T1X]: {series.weighted_mean(0, cfg.t1_x_ps):.3f}\n"
            text += f"pair-weighted mean 2n over [T1X, 3 T1X]: {series.weighted_mean(cfg.t1_x_ps, 3 * cfg.t1_x_ps):.3f}\n"
        except ValueError:
            pass
        model = model_negativity([0.0, 2 * cfg.t1_x_ps], params, cfg.projection_accuracy)
        text += f"model 2n at 0 / 2 T1X: {model[0]:.3f} / {model[1]:.3f}\n"
    return text


def cmd_analyze(cfg: RunConfig) -> Path:
    path = _need_input(cfg)
    streams = _load_streams(path)
    out = Path(cfg.output)
    params = cfg.cascade()
    tomo = assemble_tomogram(streams, cfg.window_ps, cfg.bin_width_ps)
    if tomo.counts.sum() == 0:
        raise InputError("no coincidences in input")
    write_text(out / "tomogram.csv", tomo.to_csv(), cfg)
    # overlay panels: data with theory and jitter model on the same count scale
    starts, counts = aggregate(tomo, cfg.bin_width_out_ps)
    centers = starts + cfg.bin_width_out_ps / 2
    group_total = {}
    for k, (i, j) in enumerate(COMBOS):
        key = (i.setting, j.setting)
        group_total[key] = group_total.get(key, 0) + int(counts[k].sum())
    for k, (i, j) in enumerate(COMBOS):
        scale = group_total[(i.setting, j.setting)] * cfg.bin_width_out_ps
        theory = theory_curve(i, j, centers, params) * scale
        model = model_coincidence(i, j, centers, params) * scale
        rows = ["delay_ps,data,theory,model"]
        rows += [f"{d:g},{c},{t:.6g},{m:.6g}" for d, c, t, m in zip(centers, counts[k], theory, model)]
        write_text(out / "overlay" / f"{combo_label(i, j)}.csv", "\n".join(rows) + "\n", cfg)
    mats = _write_matrices(tomo, cfg, out)
    series = negativity_vs_delay(tomo, cfg.bin_width_out_ps, cfg.n_bootstrap, cfg.seed, workers=cfg.workers)
    write_text(out / "negativity.csv", series.to_csv(), cfg)
    model_rows = ["delay_ps,two_n_model"]
    model_vals = model_negativity(series.delay_centers, params, cfg.projection_accuracy)
    model_rows += [f"{d:g},{v:.6g}" for d, v in zip(series.delay_centers, model_vals)]
    write_text(out / "negativity_model.csv", "\n".join(model_rows) + "\n", cfg)
    text = summary_text(cfg, streams, tomo, series, mats)
    path = write_text(out / "summary.txt", text, cfg)
    print(text, end="")
    return path


def cmd_report(cfg: RunConfig) -> Path:
    text = summary_text(cfg)
    if cfg.input:
        summary = Path(cfg.input) / "summary.txt"
        if summary.exists():
            text += "".join(l + "\n" for l in summary.read_text().splitlines() if not l.startswith("#"))
    path = write_text(Path(cfg.output) / "report.txt", text, cfg)
    print(text, end="")
    return path


# --- argument parsing ----------------------------------------------------------

COMMANDS = ("simulate", "correlate", "tomo", "negativity", "fit", "hyper-map", "analyze", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdpair", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "fit":
            p.add_argument("kind", help=f"one of: {', '.join(FIT_KINDS)}")
        p.add_argument("--config", help="flat key=value configuration file")
        for f in fields(RunConfig):
            flag = "--" + f.name
            if f.type == "bool":
                p.add_argument(flag, nargs="?", const="true", default=None, metavar="BOOL")
            else:
                p.add_argument(flag, default=None, metavar=f.name.upper())
    return parser


def _error(code: int, message: str) -> int:
    print(json.dumps({"error": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    try:
        cfg = resolve(args.config, overrides)
    except (KeyError, ValueError, OSError) as exc:
        return _error(EXIT_USAGE, f"configuration: {exc}")
    try:
        if args.command == "fit":
            if args.kind not in FIT_KINDS:
                return _error(EXIT_USAGE, f"unknown fit kind {args.kind!r}; choose from {', '.join(FIT_KINDS)}")
            cmd_fit(cfg, args.kind)
        else:
            {
                "simulate": cmd_simulate,
                "correlate": cmd_correlate,
                "tomo": cmd_tomo,
                "negativity": cmd_negativity,
                "hyper-map": cmd_hyper_map,
                "analyze": cmd_analyze,
                "report": cmd_report,
            }[args.command](cfg)
    except (FitError, MLEConvergenceError) as exc:
        return _error(EXIT_CONVERGENCE, str(exc))
    except (InputError, ValueError, OSError, KeyError) as exc:
        return _error(EXIT_INPUT, str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
