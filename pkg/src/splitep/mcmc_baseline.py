"""Full random-walk Metropolis-Hastings over ``(x, tau, lambda)``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import ChainSet
from .epmcmc import tune_step
from .imaging import ImageProblem
from .model import HierarchicalModel, as_grid


@dataclass(frozen=True)
class BaselineConfig:
    iters: int = 1000
    burn_in: int = 500
    thin: int = 10
    pixel_step: float = 0.05
    tau_step: float = 1e-3
    lambda_step: float = 1e-3
    seed: int = 0
    start: float = 0.01
    adapt_every: int = 50

    def __post_init__(self):
        if self.iters < 1 or self.thin < 1 or self.burn_in < 0:
            raise ValueError("iters, thin must be positive and burn_in nonnegative")
        if self.burn_in >= self.iters:
            raise ValueError("burn_in must be smaller than iters")
        if min(self.pixel_step, self.tau_step, self.lambda_step, self.start) <= 0:
            raise ValueError("steps and start must be positive")
        if self.kept < 1:
            raise ValueError("no samples would be kept")

    @property
    def kept(self) -> int:
        return (self.iters - self.burn_in) // self.thin


@dataclass
class BaselineReport:
    method: str = "mcmc"
    kept: int = 0
    acceptance_pixel: float = 0.0
    acceptance_tau: float = 0.0
    acceptance_lambda: float = 0.0
    nan_evaluations: int = 0
    tau_mean: float = math.nan
    lambda_mean: float = math.nan
    seconds: float = 0.0
    steps: dict = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return 1.0 / self.tau_mean

    @property
    def noise_sd(self) -> float:
        return math.sqrt(self.lambda_mean)


def _scale_logpdf(s, sum_sq, count, rate):
    if s <= 0:
        return -math.inf
    return -0.5 * count * math.log(s) - 0.5 * sum_sq / s - rate * s


def run_full_mcmc(y, model: HierarchicalModel, cfg: BaselineConfig = BaselineConfig()):
    """Systematic-scan single-site sampler.

    Pixels are visited by colour classes that share no factor, so each class
    is one vectorised batch of independent single-site updates.  Proposal
    scales adapt only during burn-in.  Returns ``(mean_image, chains, report)``
    with ``chains`` holding ``sigma_x = sqrt(tau)`` and ``sigma_eps = sqrt(lambda)``
    for the kept iterations.
    """
    t0 = time.perf_counter()
    y = as_grid(y, "y")
    prob = ImageProblem.build(y, model)
    rng = np.random.default_rng(cfg.seed)
    n = prob.size
    x = prob.y.copy()
    resid = prob.y - prob.G @ x
    fld = prob.L @ x
    tau = lam = cfg.start
    steps = {"pixel": cfg.pixel_step, "tau": cfg.tau_step, "lambda": cfg.lambda_step}
    acc = {"pixel": 0, "tau": 0, "lambda": 0}
    window = {"pixel": [], "tau": [], "lambda": []}
    sum_x = np.zeros(n)
    sx, se = [], []
    rep = BaselineReport()
    for t in range(1, cfg.iters + 1):
        for idx in prob.classes:
            d = steps["pixel"] * rng.standard_normal(idx.size)
            gr = prob.Gt[idx] @ resid
            lf = prob.Lt[idx] @ fld
            delta = ((2.0 * d * gr - d * d * prob.g2[idx]) / (2.0 * lam)
                     - (2.0 * d * lf + d * d * prob.l2[idx]) / (2.0 * tau))
            bad = ~np.isfinite(delta)
            rep.nan_evaluations += int(bad.sum())
            ok = (np.log(rng.random(idx.size)) < delta) & ~bad
            if np.any(ok):
                j, dj = idx[ok], d[ok]
                x[j] += dj
                resid -= prob.G[:, j] @ dj
                fld += prob.L[:, j] @ dj
            acc["pixel"] += int(ok.sum())
            window["pixel"].append(ok.mean())
        s_f, s_r = float(fld @ fld), float(resid @ resid)
        for name in ("tau", "lambda"):
            cur = tau if name == "tau" else lam
            ss = s_f if name == "tau" else s_r
            rate = model.hyper_rate_tau if name == "tau" else model.hyper_rate_lambda
            prop = abs(cur + steps[name] * rng.standard_normal())  # reflection at 0 keeps symmetry
            a = _scale_logpdf(prop, ss, n, rate) - _scale_logpdf(cur, ss, n, rate)
            if math.isnan(a):
                rep.nan_evaluations += 1
                ok = False
            else:
                ok = math.log(rng.random()) < a
            if ok:
                cur = prop
            acc[name] += int(ok)
            window[name].append(float(ok))
            if name == "tau":
                tau = cur
            else:
                lam = cur
        if t <= cfg.burn_in and t % cfg.adapt_every == 0:
            for k in steps:
                # every proposal is one-dimensional, where 0.44 acceptance is efficient
                steps[k] = tune_step(window[k], steps[k], 0.44)
                window[k] = []
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            sum_x += x
            sx.append(math.sqrt(tau))
            se.append(math.sqrt(lam))
    rep.kept = len(sx)
    rep.acceptance_pixel = acc["pixel"] / (cfg.iters * n)
    rep.acceptance_tau = acc["tau"] / cfg.iters
    rep.acceptance_lambda = acc["lambda"] / cfg.iters
    rep.tau_mean = float(np.mean(np.square(sx)))
    rep.lambda_mean = float(np.mean(np.square(se)))
    rep.steps = steps
    rep.seconds = time.perf_counter() - t0
    chains = {"sigma_x": ChainSet(np.array([sx])), "sigma_eps": ChainSet(np.array([se]))}
    return (sum_x / rep.kept).reshape(prob.shape), chains, rep
