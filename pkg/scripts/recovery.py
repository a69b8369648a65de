"""Hyperparameter recovery on the 64x64 cylinder field (precision 100, noise sd 0.1).

Runs EP-ADMM, EP-MC, EP-MCMC and the baseline sampler on one seed and writes
``recovery.csv`` plus the EP-MCMC chains to the output directory.

    python3 scripts/recovery.py --seed 7 --out-dir results/recovery
"""
import argparse
from pathlib import Path

import numpy as np

from splitep.diagnostics import psrf
from splitep.epadmm import epadmm_reconstruct
from splitep.epmc import McConfig, epmc_fit
from splitep.epmcmc import MhConfig, run_ep_mcmc
from splitep.imaging import relative_error
from splitep.mcmc_baseline import BaselineConfig, run_full_mcmc
from splitep.model import HierarchicalModel, LinearOperatorSpec
from splitep.phantoms_io import (PhantomSpec, prior_draw_phantom, simulate_observation,
                                 write_chains, write_table)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--precision", type=float, default=100.0)
    ap.add_argument("--noise-sd", type=float, default=0.1)
    ap.add_argument("--out-dir", default="results/recovery")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    model = HierarchicalModel(LinearOperatorSpec.blur(0.5), LinearOperatorSpec())
    s_texture, s_noise = np.random.SeedSequence(args.seed).spawn(2)
    x = prior_draw_phantom(PhantomSpec(), args.precision, s_texture)
    y = simulate_observation(x, model, args.noise_sd, s_noise)

    rows = []
    belief, rep = epadmm_reconstruct(y, model)
    rows.append(["ep-admm", rep.precision, rep.noise_sd, relative_error(belief.mean, x), rep.seconds])
    belief, rep = epmc_fit(y, model, McConfig(learning_rate=0.5))
    rows.append(["ep-mc", rep.precision, rep.noise_sd, relative_error(belief.mean, x), rep.seconds])
    chains, est, rep, mean = run_ep_mcmc(y, model, MhConfig())
    rows.append(["ep-mcmc", est.precision, est.noise_sd, relative_error(mean, x), rep.seconds])
    for name, c in chains.items():
        write_chains(out / f"chains_{name}.csv", c)
        r = psrf(c)
        print(f"ep-mcmc {name}: psrf {r.psrf_paper:.4f}")
    mean, _, rep = run_full_mcmc(y, model, BaselineConfig())
    rows.append(["mcmc", rep.precision, rep.noise_sd, relative_error(mean, x), rep.seconds])

    write_table(out / "recovery.csv", ["method", "precision", "noise_sd", "relative_error", "seconds"], rows)
    for r in rows:
        print(f"{r[0]:8s} precision {r[1]:7.2f}  noise sd {r[2]:.4f}  rel err {r[3]:.4f}  {r[4]:.1f}s")


if __name__ == "__main__":
    main()
