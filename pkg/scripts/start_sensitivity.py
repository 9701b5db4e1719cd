"""Noise-free steady-state direction error on trajectory A versus the start position."""

import argparse
import itertools

import numpy as np

from flowvio import config as C
from flowvio import harness as H


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--values", type=float, nargs="+", default=[-1.0, -0.5, 0.0, 0.5, 1.0])
    ap.add_argument("--z-values", type=float, nargs="+", default=[0.0, 1.0, 2.0])
    args = ap.parse_args()
    rows = []
    for x, y, z in itertools.product(args.values, args.values, args.z_values):
        cfg = C.load_config("paper-a", ["noise.bearing_std=0", f"scenario.xi0=[{x}, {y}, {z}]"])
        err = H.steady_state_mean(H.run_direction(cfg))
        rows.append(((x, y, z), err))
        print(f"xi0=({x:+.1f}, {y:+.1f}, {z:+.1f})  mean error {err:.3e}")
    errs = np.array([e for _, e in rows])
    print(f"{np.sum(errs < 1e-4)}/{len(errs)} starts below 1e-4; median {np.median(errs):.3e}")


if __name__ == "__main__":
    main()
