#!/usr/bin/env python3
"""Anti-hologram challenge walkthrough.

Enrolls a genuine relief at three wavelengths, then challenges (a) the relief
itself and (b) a simulated holographic copy recorded at the middle
wavelength. The hologram matches perfectly at its recording wavelength and
collapses at the shifted ones, which is exactly what the multi-wavelength
protocol detects.
"""

import argparse
import tempfile
from pathlib import Path

from speckleauth import (ReferenceStore, challenge_verify,
                         simulate_hologram_copy, simulate_speckle)
from speckleauth.experiment import DeskScale

WAVELENGTHS_NM = (635.0, 650.0, 670.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--store", type=Path, default=None,
                    help="store directory (default: temp)")
    args = ap.parse_args()

    scale = DeskScale(surface_nx=512, surface_ny=512, sensor_n=256)
    configs = [scale.config(wavelength=nm * 1e-9) for nm in WAVELENGTHS_NM]
    enroll_config = configs[1]

    master = scale.make_master(seed=args.seed)
    store_dir = args.store or Path(tempfile.mkdtemp(prefix="ose-store-"))
    store = ReferenceStore(store_dir)
    store.enroll("demo", [(simulate_speckle(master, c, noise_seed=i), c)
                          for i, c in enumerate(configs)])
    print(f"enrolled genuine relief at {WAVELENGTHS_NM} nm -> {store_dir}")

    def run(label, probes):
        decision = challenge_verify(store, "demo", probes, max_shift=16)
        print(f"\n{label}: verdict {decision.verdict.upper()} "
              f"(threshold {decision.threshold}, band {decision.band})")
        for nm, score in zip(WAVELENGTHS_NM, decision.scores):
            print(f"  {nm:6.1f} nm: peak {score.peak:+.4f} at "
                  f"(dx={score.dx}, dy={score.dy})")

    genuine_probes = [(simulate_speckle(master, c, noise_seed=100 + i), c)
                      for i, c in enumerate(configs)]
    run("genuine relief re-probed", genuine_probes)

    holo_probes = [(simulate_hologram_copy(master, enroll_config, c,
                                           noise_seed=200 + i), c)
                   for i, c in enumerate(configs)]
    run(f"holographic copy recorded at {WAVELENGTHS_NM[1]} nm", holo_probes)


if __name__ == "__main__":
    main()
