"""Body-frame versus inertial-frame cascade on trajectory B, noise-free."""

import argparse

import numpy as np

from flowvio import config as C
from flowvio import harness as H

QUIET = ["noise.gyro_std=0", "noise.accel_std=0", "noise.mag_std=0", "noise.bearing_std=0"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--integrator", default="lawson", choices=["lawson", "rk4", "euler"])
    ap.add_argument("--substeps", type=int, default=2)
    args = ap.parse_args()
    base = QUIET + [f"riccati.integrator={args.integrator}", f"mode.substeps={args.substeps}"]
    body = H.run_single(C.load_config("paper-b", base))
    inertial = H.run_single(C.load_config("paper-b", base + ["mode.inertial_formulation=true"]))
    for prefix in ("R_hat_", "vB_hat_", "xi_hat_", "z_hat_"):
        cols = [c for c in H.COLUMNS if c.startswith(prefix)]
        diff = max(np.max(np.abs(body[c] - inertial[c])) for c in cols)
        print(f"max |body - inertial| {prefix.rstrip('_'):7s}: {diff:.2e}")


if __name__ == "__main__":
    main()
