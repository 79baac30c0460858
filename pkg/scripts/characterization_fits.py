"""FSS, Rabi and PSF fits on synthetic scans, plus the hyperspectral lens map.

    python scripts/characterization_fits.py
"""
import argparse

import numpy as np

from qdpair.cascade import pulse_energy, rabi_rate
from qdpair.fitting import diffraction_limit_fwhm, fit_fss, fit_psf, fit_rabi, synthetic_fss_scan
from qdpair.hyperspectral import band_integrate, synthetic_lens_cube


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--fss", type=float, default=5.79)
    ap.add_argument("--noise", type=float, default=0.5, help="energy noise, ueV")
    ap.add_argument("--pi-power", type=float, default=0.65, help="uW")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    angles = np.linspace(0, 180, 37)
    e_x, e_xx = synthetic_fss_scan(angles, args.fss, noise=args.noise, seed=args.seed)
    res = fit_fss(angles, e_x, e_xx)
    print(f"fss: {res['fss']:.3f} +- {res.sigmas['fss']:.3f} ueV (set {args.fss})")

    power = np.linspace(0.02, 2.0, 40)
    rate = rng.poisson(rabi_rate(power, args.pi_power, 2e4)).astype(float)
    res = fit_rabi(power, rate, np.sqrt(np.maximum(rate, 1)))
    e = pulse_energy(res["pi_power"], 76e6)
    print(f"pi power: {res['pi_power']:.3f} +- {res.sigmas['pi_power']:.3f} uW, {e:.2e} J per pulse")

    cube = synthetic_lens_cube(n_xy=61, seed=args.seed)
    qd = band_integrate(cube, (779, 781))
    res = fit_psf(qd, cube.x_grid * 1000, cube.y_grid * 1000)
    print(f"PSF FWHM: {res['fwhm']:.0f} +- {res.sigmas['fwhm']:.0f} nm at "
          f"({res['center_x'] / 1000:.2f}, {res['center_y'] / 1000:.2f}) um; "
          f"diffraction limit {diffraction_limit_fwhm(780, 0.6):.0f} nm")


if __name__ == "__main__":
    main()
