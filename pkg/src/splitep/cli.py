"""Command-line driver.

Subcommands: ``gen-phantom``, ``reconstruct``, ``diagnose``, ``clutter`` and
``compare``.  Engine settings live in a flat ``key = value`` config file
(``--config``); every key can also be given as a flag (``--mc.samples 4096``)
and flags win.  Exit codes: 0 success, 2 usage or input error, 3 numeric
failure.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import clutter as cl
from .diagnostics import ChainSet, report_lines
from .epadmm import AdmmConfig, HyperInit, epadmm_reconstruct
from .epcore import EpConfig
from .epmc import McConfig, epmc_fit
from .epmcmc import InnerConfig, MhConfig, run_ep_mcmc
from .imaging import relative_error
from .mcmc_baseline import BaselineConfig, run_full_mcmc
from .model import HierarchicalModel, LinearOperatorSpec, apply_operator
from .phantoms_io import (PhantomSpec, make_phantom, prior_draw_phantom, read_chains,
                          read_image, simulate_observation, write_chains, write_image,
                          write_table)
from .svgplot import line_plot

EXIT_USAGE = 2
EXIT_NUMERIC = 3

# key -> (type, default, help)
CONFIG_KEYS = {
    "model.blur_sigma": (float, 0.5, "Gaussian blur sd of G in pixels; 0 means G = I"),
    "model.regularizer": (str, "laplacian", "L operator: identity or laplacian"),
    "model.hyper_rate_tau": (float, 8.0, "exponential hyperprior rate of tau"),
    "model.hyper_rate_lambda": (float, 9.0, "exponential hyperprior rate of lambda"),
    "hyper.init_rate_tau": (float, 10.0, "initial belief rate of tau"),
    "hyper.init_rate_lambda": (float, 10.0, "initial belief rate of lambda"),
    "hyper.joint": (bool, True, "hyperparameter statistics under the joint Gaussian belief"),
    "ep.max_sweeps": (int, 200, "maximum EP sweeps"),
    "ep.tol": (float, 1e-6, "convergence tolerance"),
    "ep.damping": (float, 1.0, "site damping in (0, 1]"),
    "admm.rho": (float, 0.0, "ADMM penalty"),
    "admm.a": (float, 0.0, "initial mean multiplier"),
    "admm.b": (float, 1e-6, "variance floor"),
    "mc.samples": (int, 1024, "Monte Carlo samples K per site"),
    "mc.learning_rate": (float, 0.05, "EP-MC gradient step size"),
    "mc.seed": (int, None, "EP-MC seed (defaults to --seed)"),
    "mh.step_tau": (float, 1e-3, "initial random-walk step for tau"),
    "mh.step_lambda": (float, 1e-3, "initial random-walk step for lambda"),
    "mh.iters": (int, 1000, "MH iterations per replication"),
    "mh.replications": (int, 10, "independent replications"),
    "mh.target_acceptance": (float, 0.234, "step tuning target"),
    "mh.block": (int, 50, "draws between belief updates"),
    "mh.start": (float, 0.01, "starting tau and lambda"),
    "mh.warmup_sweeps": (int, 20, "EP-ADMM sweeps before sampling"),
    "mh.sweeps": (int, 3, "EP-ADMM sweeps after every block"),
    "baseline.iters": (int, 1000, "baseline MCMC iterations"),
    "baseline.burn_in": (int, 500, "baseline burn-in"),
    "baseline.thin": (int, 10, "baseline thinning"),
    "baseline.pixel_step": (float, 0.05, "initial pixel step"),
    "baseline.tau_step": (float, 1e-3, "initial tau step"),
    "baseline.lambda_step": (float, 1e-3, "initial lambda step"),
    "baseline.start": (float, 0.01, "starting tau and lambda"),
}

# reference values reported for the synthetic cylinder comparison
REFERENCE = {"ep": (100.0, 0.1), "mcmc": (85.0, 0.085)}


class UsageError(ValueError):
    pass


def _parse_value(key: str, raw):
    typ = CONFIG_KEYS[key][0]
    if raw is None:
        return None
    if typ is bool:
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise UsageError(f"{key}: expected {typ.__name__}, got {raw!r}") from None


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{n}: unknown config key {key!r}")
            out[key] = _parse_value(key, val)
    return out


def resolve_config(args) -> dict:
    cfg = {k: v[1] for k, v in CONFIG_KEYS.items()}
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for key in CONFIG_KEYS:
        raw = getattr(args, key, None)
        if raw is not None:
            cfg[key] = _parse_value(key, raw)
    return cfg


def build_model(cfg) -> HierarchicalModel:
    sigma = cfg["model.blur_sigma"]
    if sigma < 0:
        raise UsageError("model.blur_sigma must be nonnegative")
    g = LinearOperatorSpec.blur(sigma) if sigma > 0 else LinearOperatorSpec()
    if cfg["model.regularizer"] not in ("identity", "laplacian"):
        raise UsageError("model.regularizer must be identity or laplacian")
    return HierarchicalModel(g, LinearOperatorSpec(cfg["model.regularizer"]),
                             cfg["model.hyper_rate_tau"], cfg["model.hyper_rate_lambda"])


def _ep_cfg(cfg):
    return EpConfig(cfg["ep.damping"], cfg["ep.tol"], cfg["ep.max_sweeps"])


def _admm_cfg(cfg):
    return AdmmConfig(cfg["admm.rho"], cfg["admm.a"], cfg["admm.b"])


def _mc_cfg(cfg, seed):
    s = seed if cfg["mc.seed"] is None else cfg["mc.seed"]
    return McConfig(cfg["mc.samples"], cfg["mc.learning_rate"], s)


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_kv(path, items) -> None:
    with open(path, "w") as fh:
        for k, v in items:
            fh.write(f"{k}: {v!r}\n" if isinstance(v, float) else f"{k}: {v}\n")


def run_method(method: str, y, model, cfg, seed: int):
    """Run one engine; returns ``(mean_image, summary dict, extra outputs)``."""
    ep_cfg, admm_cfg = _ep_cfg(cfg), _admm_cfg(cfg)
    init = HyperInit(cfg["hyper.init_rate_tau"], cfg["hyper.init_rate_lambda"])
    joint = cfg["hyper.joint"]
    t0 = time.perf_counter()
    if method == "ep-admm":
        belief, rep = epadmm_reconstruct(y, model, admm_cfg, ep_cfg, True, init, joint)
        mean, info, extra = belief.mean, rep.summary(), {"report": rep}
    elif method == "ep-mc":
        belief, rep = epmc_fit(y, model, _mc_cfg(cfg, seed), ep_cfg, init, joint=joint)
        mean, info, extra = belief.mean, rep.summary(), {"report": rep}
    elif method == "ep-mcmc":
        mh = MhConfig(cfg["mh.step_tau"], cfg["mh.step_lambda"], cfg["mh.iters"],
                      cfg["mh.replications"], cfg["mh.target_acceptance"], seed,
                      cfg["mh.start"], cfg["mh.block"])
        inner = InnerConfig(admm_cfg, cfg["mh.warmup_sweeps"], cfg["mh.sweeps"], joint)
        chains, est, rep, mean = run_ep_mcmc(y, model, mh, inner)
        info = {"method": "ep-mcmc", "tau_mean": est.tau_mean, "lambda_mean": est.lambda_mean,
                "precision": est.precision, "noise_sd": est.noise_sd,
                "acceptance_tau": float(np.mean(rep.acceptance_tau)),
                "acceptance_lambda": float(np.mean(rep.acceptance_lambda)),
                "collapses": rep.collapses, "clamps": rep.clamps,
                "variance_violations": rep.variance_violations,
                "rate_violations": rep.rate_violations}
        extra = {"chains": chains}
    elif method == "mcmc":
        bc = BaselineConfig(cfg["baseline.iters"], cfg["baseline.burn_in"], cfg["baseline.thin"],
                            cfg["baseline.pixel_step"], cfg["baseline.tau_step"],
                            cfg["baseline.lambda_step"], seed, cfg["baseline.start"])
        mean, chains, rep = run_full_mcmc(y, model, bc)
        info = {"method": "mcmc", "tau_mean": rep.tau_mean, "lambda_mean": rep.lambda_mean,
                "precision": rep.precision, "noise_sd": rep.noise_sd, "kept": rep.kept,
                "acceptance_pixel": rep.acceptance_pixel, "acceptance_tau": rep.acceptance_tau,
                "acceptance_lambda": rep.acceptance_lambda,
                "nan_evaluations": rep.nan_evaluations}
        extra = {"chains": chains}
    else:
        raise UsageError(f"unknown method {method!r}")
    info["seconds"] = time.perf_counter() - t0
    return np.asarray(mean), info, extra


# ---------------------------------------------------------------- commands

def _simulate(args, cfg, model):
    spec = PhantomSpec(args.kind, args.rows, args.cols)
    s_texture, s_noise = np.random.SeedSequence(args.seed).spawn(2)
    if args.texture_precision is not None:
        x = prior_draw_phantom(spec, args.texture_precision, s_texture)
    else:
        x = make_phantom(spec)
    y = simulate_observation(x, model, args.noise_sd, s_noise)
    return x, y


def cmd_gen_phantom(args) -> int:
    cfg = resolve_config(args)
    model = build_model(cfg)
    x, y = _simulate(args, cfg, model)
    out = _out_dir(args)
    write_image(out / "truth.csv", x)
    write_image(out / "mean.csv", apply_operator(model.forward, x))
    write_image(out / "noisy.csv", y)
    if args.pgm:
        for name, g in (("truth", x), ("noisy", y)):
            write_image(out / f"{name}.pgm", g)
    return 0


def cmd_reconstruct(args) -> int:
    cfg = resolve_config(args)
    model = build_model(cfg)
    y = read_image(args.input)
    mean, info, extra = run_method(args.method, y, model, cfg, args.seed)
    out = _out_dir(args)
    write_image(out / "reconstruction.csv", mean)
    write_image(out / "residual.csv", y - apply_operator(model.forward, mean))
    items = list(info.items())
    if args.truth:
        truth = read_image(args.truth)
        items += [("relative_error", relative_error(mean, truth)),
                  ("noisy_relative_error", relative_error(y, truth))]
    rep = extra.get("report")
    if rep is not None:
        rows = [[k + 1, rep.tau_trace[k], rep.lambda_trace[k], 1.0 / rep.tau_trace[k],
                 math.sqrt(rep.lambda_trace[k]), rep.residual_trace[k], rep.change_trace[k]]
                for k in range(rep.sweeps)]
        write_table(out / "trace.csv", ["sweep", "tau", "lambda", "precision", "noise_sd",
                                        "relative_residual", "change"], rows)
        sweeps = np.arange(1, rep.sweeps + 1)
        line_plot(out / "trace.svg", {"relative residual": (sweeps, rep.residual_trace)},
                  f"{args.method} residual", "sweep", "||y - Gm|| / ||y||")
    for name, chain in extra.get("chains", {}).items():
        write_chains(out / f"chains_{name}.csv", chain)
    _write_kv(out / "report.txt", items)
    for k, v in items:
        print(f"{k}: {v}")
    return 0


def cmd_diagnose(args) -> int:
    c = read_chains(args.chains)
    if c.m < 2:
        raise UsageError("diagnose needs at least two chains")
    for line in report_lines(c, args.level):
        print(line)
    return 0


def cmd_clutter(args) -> int:
    cfg = resolve_config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("ep", "ep-mc", "ep-admm", "exact"):
            raise UsageError(f"unknown clutter method {m!r}")
    cm = cl.ClutterModel(args.w)
    data = cl.simulate_clutter(args.n, cm, args.theta, args.seed)
    grid = cl.default_grid(data, cm, args.points)
    if "exact" in methods or args.n <= cl.ENUM_CAP or args.approx_oracle:
        exact = cl.exact_posterior(data, cm, grid, args.approx_oracle)
    ep_cfg = _ep_cfg(cfg)
    curves = {}
    for m in methods:
        if m == "exact":
            curves[m] = exact.density
        elif m == "ep":
            curves[m] = cl.ep_clutter(data, cm, ep_cfg).density(grid)
        elif m == "ep-admm":
            curves[m] = cl.epadmm_clutter(data, cm, _admm_cfg(cfg), ep_cfg).density(grid)
        else:
            curves[m] = cl.epmc_clutter(data, cm, _mc_cfg(cfg, args.seed), ep_cfg).density(grid)
    out = _out_dir(args)
    for m, dens in curves.items():
        write_table(out / f"clutter_{m}.csv", ["theta", "density"],
                    [[float(a), float(b)] for a, b in zip(grid, dens)])
    line_plot(out / "clutter.svg", {m: (grid, d) for m, d in curves.items()},
              f"clutter posterior, n={args.n}, w={args.w}", "theta", "density")
    return 0


def cmd_compare(args) -> int:
    cfg = resolve_config(args)
    model = build_model(cfg)
    x, y = _simulate(args, cfg, model)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rows, timing = [], []
    for m in methods:
        mean, info, _ = run_method(m, y, model, cfg, args.seed)
        ref = REFERENCE["mcmc" if m == "mcmc" else "ep"]
        rows.append([m, relative_error(mean, x), info["precision"], info["noise_sd"],
                     info["tau_mean"], info["lambda_mean"], ref[0], ref[1]])
        timing.append((m, info["seconds"]))
        print(f"{m}: precision {info['precision']:.4g} noise_sd {info['noise_sd']:.4g} "
              f"seconds {info['seconds']:.1f}")
    rows.append(["noisy", relative_error(y, x), math.nan, math.nan, math.nan, math.nan,
                 math.nan, math.nan])
    out = _out_dir(args)
    write_table(out / "compare.csv", ["method", "relative_error", "precision", "noise_sd",
                                      "tau_mean", "lambda_mean", "reference_precision",
                                      "reference_noise_sd"], rows)
    # wall-clock times vary between runs, so they stay out of the CSV
    ep_total = sum(s for m, s in timing if m != "mcmc")
    _write_kv(out / "timing.txt", [(f"{m}_seconds", s) for m, s in timing]
              + [("ep_total_seconds", ep_total)])
    return 0


# ---------------------------------------------------------------- parser

def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    for key, (typ, default, text) in CONFIG_KEYS.items():
        p.add_argument(f"--{key}", dest=key, metavar=typ.__name__.upper(),
                       help=f"{text} (default {default})")


def _add_phantom_flags(p, kind_required: bool):
    p.add_argument("--kind", choices=["cylinder", "four_circles"], required=kind_required,
                   default=None if kind_required else "cylinder")
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--noise-sd", type=float, default=0.1)
    p.add_argument("--texture-precision", type=float, default=None,
                   help="fill the shapes with a white field of this grid-average precision")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="splitep", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-phantom", help="write truth, blurred mean and noisy images")
    _add_phantom_flags(p, True)
    p.add_argument("--pgm", action="store_true", help="also write PGM previews")
    p.set_defaults(func=cmd_gen_phantom)

    p = sub.add_parser("reconstruct", help="run one engine on an image")
    p.add_argument("--input", required=True)
    p.add_argument("--truth")
    p.add_argument("--method", required=True, choices=["ep-admm", "ep-mc", "ep-mcmc", "mcmc"])
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("diagnose", help="convergence report for a chains CSV")
    p.add_argument("--chains", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("clutter", help="posterior curves for the clutter problem")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--w", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--methods", default="ep,ep-mc,ep-admm,exact")
    p.add_argument("--points", type=int, default=1001)
    p.add_argument("--approx-oracle", action="store_true",
                   help="allow quadrature instead of enumeration above the cap")
    p.set_defaults(func=cmd_clutter)

    p = sub.add_parser("compare", help="run several engines on one synthetic phantom")
    _add_phantom_flags(p, False)
    p.add_argument("--methods", default="ep-admm,ep-mc,ep-mcmc,mcmc")
    p.set_defaults(func=cmd_compare, texture_precision=100.0)

    for name, sp_ in sub.choices.items():
        sp_.add_argument("--seed", type=int, default=0)
        sp_.add_argument("--out-dir", default=".")
        if name != "diagnose":
            _add_config_flags(sp_)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
