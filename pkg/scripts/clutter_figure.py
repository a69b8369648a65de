"""Clutter-problem posterior curves: EP, EP-MC and EP-ADMM against the exact posterior.

Sweeps several seeds and prints the mean error of each method, then writes the
curves and an SVG overlay for the first seed.

    python3 scripts/clutter_figure.py --n 10 --w 0.5 --out-dir results/clutter
"""
import argparse
from pathlib import Path

from splitep.cli import main as cli_main
from splitep.clutter import (ClutterModel, ep_clutter, epadmm_clutter, epmc_clutter,
                             exact_posterior, simulate_clutter)
from splitep.epmc import McConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--w", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--out-dir", default="results/clutter")
    args = ap.parse_args()
    cm = ClutterModel(args.w)
    errs = {"ep": [], "ep-mc": [], "ep-admm": []}
    for seed in range(args.seeds):
        data = simulate_clutter(args.n, cm, seed=seed)
        exact = exact_posterior(data, cm).mean
        errs["ep"].append(abs(ep_clutter(data, cm).mean - exact))
        errs["ep-mc"].append(abs(epmc_clutter(data, cm, McConfig(samples=args.samples, seed=seed)).mean - exact))
        errs["ep-admm"].append(abs(epadmm_clutter(data, cm).mean - exact))
    for k, v in errs.items():
        print(f"{k:8s} mean |posterior mean - exact| over {args.seeds} seeds: {sum(v) / len(v):.4f}, "
              f"worst {max(v):.4f}")
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    cli_main(["clutter", "--n", str(args.n), "--w", str(args.w), "--seed", "0",
              "--mc.samples", str(args.samples), "--out-dir", args.out_dir])


if __name__ == "__main__":
    main()
