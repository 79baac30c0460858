"""Simulate the nine-setting tomography and compare negativity versus delay with the model.

    python scripts/reproduce_negativity.py --pulses 1e6 --accuracy 0.96 --out out/negativity
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from qdpair.cascade import CascadeParams
from qdpair.simulate import DetectionConfig, simulate_tomography
from qdpair.tomography import (
    assemble_tomogram,
    mle_reconstruct,
    model_negativity,
    negativity_vs_delay,
    window_average_matrix,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--pulses", type=float, default=1e6, help="pulses per projection setting")
    ap.add_argument("--eta", type=float, default=0.35, help="detection efficiency of each photon")
    ap.add_argument("--accuracy", type=float, default=1.0, help="projection accuracy")
    ap.add_argument("--fss", type=float, default=5.79)
    ap.add_argument("--bin", type=int, default=32, help="output bin width, ps")
    ap.add_argument("--bootstrap", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("out/negativity"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    params = CascadeParams(fss=args.fss)
    cfg = DetectionConfig(n_pulses=int(args.pulses), eta_xx=args.eta, eta_x=args.eta,
                          projection_accuracy=args.accuracy, seed=args.seed)
    streams = simulate_tomography(params, cfg)
    tomo = assemble_tomogram(streams, 2000, 4)
    t1 = params.t1_x
    series = negativity_vs_delay(tomo, args.bin, n_bootstrap=args.bootstrap, seed=args.seed,
                                 delay_range=(-3 * args.bin, 3 * t1 + args.bin), workers=args.workers)
    model = model_negativity(series.delay_centers, params, args.accuracy)

    args.out.mkdir(parents=True, exist_ok=True)
    rows = ["delay_ps,two_n,sigma,counts,two_n_model"]
    rows += [f"{d:g},{v:.5f},{e:.5f},{c},{m:.5f}"
             for d, v, e, c, m in zip(series.delay_centers, series.values, series.errors, series.counts, model)]
    (args.out / "negativity_vs_model.csv").write_text("\n".join(rows) + "\n")

    zero = int(np.argmin(np.abs(tomo.centers)))
    peak = mle_reconstruct(tomo.counts[:, zero])
    summed = window_average_matrix(tomo, (0, t1))
    print(f"coincidences per setting: {tomo.counts.sum() / 9:.0f}")
    print(f"2n, central 4 ps bin: {peak.negativity2n:.3f} ({peak.coincidences} pairs)")
    print(f"2n, pair-weighted mean over [0, T1X]: {series.weighted_mean(0, t1):.3f}")
    print(f"2n, pair-weighted mean over [T1X, 3 T1X]: {series.weighted_mean(t1, 3 * t1):.3f}")
    print(f"2n, counts summed over [0, T1X]: {summed.negativity2n:.3f}")
    ok = series.counts >= 500
    print(f"max |data - model| for bins with >= 500 pairs: {np.max(np.abs(series.values[ok] - model[ok])):.3f}")


if __name__ == "__main__":
    main()
