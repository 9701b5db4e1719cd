"""Seeded Monte Carlo campaign on trajectory B with percentile bands."""

import argparse
import time
from pathlib import Path

import numpy as np

from flowvio import config as C
from flowvio import harness as H


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=30)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/monte_carlo.csv")
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    cfg = C.load_config("paper-b", [f"seed={args.seed}", f"monte_carlo.n_runs={args.runs}",
                                    f"monte_carlo.workers={args.workers}"])
    t0 = time.perf_counter()
    mc = H.run_monte_carlo(cfg)
    H.export(mc, Path(args.out), args.plot)
    print(f"{mc.n_runs} runs in {time.perf_counter() - t0:.0f} s, failures: {mc.failures or 'none'}")
    for m in ("v_err", "z_err", "att_err", "tilt_err"):
        for t in (0.0, 10.0, 20.0, 30.0):
            k = int(np.argmin(np.abs(mc.t - t)))
            p5, p50, p95 = mc.bands[m][:, k]
            print(f"  {m:8s} t={t:4.1f}s  p5 {p5:.3e}  p50 {p50:.3e}  p95 {p95:.3e}")


if __name__ == "__main__":
    main()
