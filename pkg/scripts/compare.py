"""Head-to-head comparison of the four engines on both phantoms via the CLI.

    python3 scripts/compare.py --seed 7 --out-dir results/compare
"""
import argparse
import sys

from splitep.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out-dir", default="results/compare")
    args = ap.parse_args()
    common = ["--seed", str(args.seed), "--model.regularizer", "identity", "--mc.learning_rate", "0.5"]
    for kind in ("cylinder", "four_circles"):
        print(f"== {kind}")
        rc = cli_main(["compare", "--kind", kind, *common, "--out-dir", f"{args.out_dir}/{kind}"])
        if rc:
            sys.exit(rc)


if __name__ == "__main__":
    main()
