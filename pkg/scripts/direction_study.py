"""Direction estimator on trajectory A: iterations x landmark-count sweep, noisy and noise-free."""

import argparse
from pathlib import Path

from flowvio import config as C
from flowvio import harness as H


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="out/direction_study")
    ap.add_argument("--after", type=float, default=5.0)
    args = ap.parse_args()
    out = Path(args.out_dir)
    for label, overrides in (("noisy", []), ("noise-free", ["noise.bearing_std=0"])):
        results = H.run_direction_sweep(C.load_config("paper-a", overrides))
        print(f"{label}: steady-state mean of 1 - eta_hat^T eta for t > {args.after} s")
        for (n_iter, n_lm), res in results.items():
            H.export(res, out / f"{label}_N{n_iter}_L{n_lm}.csv")
            print(f"  N={n_iter:2d} landmarks={n_lm}: {H.steady_state_mean(res, after=args.after):.3e}")


if __name__ == "__main__":
    main()
