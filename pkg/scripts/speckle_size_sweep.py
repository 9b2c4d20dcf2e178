#!/usr/bin/env python3
"""Speckle-size law check: measured autocovariance FWHM vs 1.22*lambda*z/D.

Sweeps the aperture diameter at fixed wavelength and distance, measures the
speckle diameter of each simulated capture, and plots both against the
formula. Writes CSV and PNG into --out.
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from speckleauth import (expected_speckle_diameter, measured_speckle_diameter,
                         simulate_speckle)
from speckleauth.experiment import DeskScale


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("artifacts"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--apertures-mm", type=float, nargs="+",
                    default=[2.5, 3.0, 4.0, 5.0, 5.9, 7.0, 8.5, 10.0])
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    expected_px, measured_px = [], []
    for ap_mm in args.apertures_mm:
        scale = DeskScale(aperture_d=ap_mm * 1e-3)
        config = scale.config()
        master = scale.make_master(seed=args.seed)
        pattern = simulate_speckle(master, config, noise_seed=args.seed)
        expected_px.append(expected_speckle_diameter(config)
                           / config.sensor.px_pitch)
        measured_px.append(measured_speckle_diameter(pattern))
        print(f"D = {ap_mm:5.2f} mm: expected {expected_px[-1]:6.3f} px, "
              f"measured {measured_px[-1]:6.3f} px "
              f"({100 * (measured_px[-1] / expected_px[-1] - 1):+.1f}%)")

    csv = args.out / "speckle_size_sweep.csv"
    lines = ["aperture_mm,expected_px,measured_px"]
    for ap_mm, e, m in zip(args.apertures_mm, expected_px, measured_px):
        lines.append(f"{ap_mm!r},{e!r},{m!r}")
    csv.write_text("\n".join(lines) + "\n")

    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    grid = np.linspace(min(expected_px) * 0.9, max(expected_px) * 1.1, 50)
    ax.plot(grid, grid, "k--", lw=0.8, label="formula 1.22$\\lambda$z/D")
    ax.fill_between(grid, grid * 0.85, grid * 1.15, alpha=0.15,
                    label="$\\pm$15% band")
    ax.plot(expected_px, measured_px, "o", label="measured FWHM")
    ax.set_xlabel("expected speckle diameter (px)")
    ax.set_ylabel("measured speckle diameter (px)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out / "speckle_size_sweep.png", dpi=150)
    print(f"wrote {csv}")
    print(f"wrote {args.out / 'speckle_size_sweep.png'}")


if __name__ == "__main__":
    main()
