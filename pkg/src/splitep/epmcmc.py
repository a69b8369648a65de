"""EP with Metropolis-Hastings estimates of the tau and lambda tilted moments."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import ChainSet
from .epadmm import AdmmConfig, AdmmState, SiteGrid, admm_sweep
from .hyper import tilted_logpdf
from .imaging import FieldState, ImageProblem, fresh_copy
from .model import HierarchicalModel, as_grid
from .parallel import worker_count


class InvalidStart(ValueError):
    """The chain started where the target density is zero."""


@dataclass(frozen=True)
class MhConfig:
    step_tau: float = 1e-3
    step_lambda: float = 1e-3
    iters: int = 1000
    replications: int = 10
    target_acceptance: float = 0.234
    seed: int = 0
    start: float = 0.01
    block: int = 50

    def __post_init__(self):
        if not (self.step_tau > 0 and self.step_lambda > 0):
            raise ValueError("steps must be positive")
        if self.iters < 1 or self.replications < 1 or self.block < 1:
            raise ValueError("iters, replications and block must be positive")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target acceptance must lie in (0, 1)")
        if not self.start > 0:
            raise ValueError("start must be positive")


@dataclass(frozen=True)
class InnerConfig:
    """EP-ADMM sweeps run before sampling and after every block."""

    admm: AdmmConfig = AdmmConfig()
    warmup_sweeps: int = 20
    sweeps: int = 3
    joint: bool = True


def tilted_log_density_tau(tau: float, cavity_rate: float, lx) -> float:
    """``sum log N(lx | 0, tau) + log Exp(tau | cavity_rate)``; ``-inf`` off support."""
    lx = np.asarray(lx, dtype=float)
    if not tau > 0:
        return -math.inf
    return tilted_logpdf(tau, float(np.sum(lx * lx)), lx.size, cavity_rate)


def _mh(current, log_target, step, rng, current_logp):
    prop = current + step * rng.standard_normal()
    lp = log_target(prop)
    if math.log(rng.random()) < lp - current_logp:
        return prop, True, lp
    return current, False, current_logp


def mh_step(current: float, log_target, step: float, rng):
    """Random-walk Metropolis step; returns ``(next, accepted)``."""
    if not step > 0:
        raise ValueError("step must be positive")
    lc = log_target(current)
    if lc == -math.inf:
        raise InvalidStart("log target is -inf at the current state")
    nxt, acc, _ = _mh(current, log_target, step, rng, lc)
    return nxt, acc


def tune_step(history, step: float, target: float = 0.234) -> float:
    """Scale ``step`` by ``exp(2 (acceptance - target))`` over the window ``history``."""
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        raise ValueError("empty acceptance window")
    return step * math.exp(2.0 * (float(h.mean()) - target))


@dataclass
class McmcReport:
    method: str = "ep-mcmc"
    rates_tau: list = field(default_factory=list)
    rates_lambda: list = field(default_factory=list)
    acceptance_tau: list = field(default_factory=list)
    acceptance_lambda: list = field(default_factory=list)
    collapses: int = 0
    clamps: int = 0
    variance_violations: int = 0
    rate_violations: int = 0
    seconds: float = 0.0


@dataclass
class Estimates:
    tau_mean: float
    lambda_mean: float
    rate_tau: float
    rate_lambda: float

    @property
    def precision(self) -> float:
        return 1.0 / self.tau_mean

    @property
    def noise_sd(self) -> float:
        return math.sqrt(self.lambda_mean)


def _replication(prob: ImageProblem, model, cfg: MhConfig, inner: InnerConfig, seq):
    rng = np.random.default_rng(seq)
    prob = fresh_copy(prob)
    n_pix = prob.size
    state = FieldState(prob, prob.y.reshape(prob.shape), np.full(n_pix, cfg.start))
    sites = SiteGrid(n_pix)
    admm = AdmmState.zeros(n_pix, inner.admm)
    # beliefs start at the sampler's starting point
    rate_tau = rate_lam = 1.0 / cfg.start
    for _ in range(inner.warmup_sweeps):
        admm_sweep(state, sites, admm, 1.0 / rate_tau, 1.0 / rate_lam)
    tau = lam = cfg.start
    step_t, step_l = cfg.step_tau, cfg.step_lambda
    chain_t = np.empty(cfg.iters)
    chain_l = np.empty(cfg.iters)
    acc_t = np.zeros(cfg.iters, dtype=bool)
    acc_l = np.zeros(cfg.iters, dtype=bool)
    collapses = 0
    violations = 0
    for lo in range(0, cfg.iters, cfg.block):
        hi = min(lo + cfg.block, cfg.iters)
        s_t, s_l = state.hyper_stats(1.0 / rate_tau, 1.0 / rate_lam, inner.joint)

        def target_t(s):
            return tilted_logpdf(s, s_t, n_pix, model.hyper_rate_tau) if s > 0 else -math.inf

        def target_l(s):
            return tilted_logpdf(s, s_l, n_pix, model.hyper_rate_lambda) if s > 0 else -math.inf

        lp_t, lp_l = target_t(tau), target_l(lam)
        for i in range(lo, hi):
            tau, acc_t[i], lp_t = _mh(tau, target_t, step_t, rng, lp_t)
            lam, acc_l[i], lp_l = _mh(lam, target_l, step_l, rng, lp_l)
            chain_t[i], chain_l[i] = tau, lam
        # moment match the exponential beliefs to the block's tilted draws
        new_t = 1.0 / chain_t[lo:hi].mean()
        new_l = 1.0 / chain_l[lo:hi].mean()
        if new_t - model.hyper_rate_tau <= -model.hyper_rate_tau or not math.isfinite(new_t):
            collapses += 1
        else:
            rate_tau = new_t
        if new_l - model.hyper_rate_lambda <= -model.hyper_rate_lambda or not math.isfinite(new_l):
            collapses += 1
        else:
            rate_lam = new_l
        step_t = tune_step(acc_t[lo:hi], step_t, cfg.target_acceptance)
        step_l = tune_step(acc_l[lo:hi], step_l, cfg.target_acceptance)
        for _ in range(inner.sweeps):
            admm_sweep(state, sites, admm, 1.0 / rate_tau, 1.0 / rate_lam)
        violations += int(np.count_nonzero(state.var < admm.b))
    return dict(chain_t=chain_t, chain_l=chain_l, rate_tau=rate_tau, rate_lam=rate_lam,
                acc_t=float(acc_t.mean()), acc_l=float(acc_l.mean()), mean=state.mean.copy(),
                var=state.var.copy(), collapses=collapses, clamps=admm.clamps, violations=violations)


def run_ep_mcmc(y, model: HierarchicalModel, cfg: MhConfig = MhConfig(),
                inner: InnerConfig = InnerConfig()):
    """Run ``cfg.replications`` independent EP-MCMC replications.

    Returns ``(chains, estimates, report, mean_image)`` where ``chains`` maps
    ``"tau"`` and ``"lambda"`` to ``ChainSet`` objects.  Estimates are the
    pooled chain means; every replication owns a spawned RNG stream.
    """
    t0 = time.perf_counter()
    y = as_grid(y, "y")
    prob = ImageProblem.build(y, model)
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    workers = min(worker_count(), cfg.replications)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outs = list(ex.map(lambda s: _replication(prob, model, cfg, inner, s), seqs))
    else:
        outs = [_replication(prob, model, cfg, inner, s) for s in seqs]
    chains = {"tau": ChainSet(np.array([o["chain_t"] for o in outs])),
              "lambda": ChainSet(np.array([o["chain_l"] for o in outs]))}
    rep = McmcReport()
    for o in outs:
        rep.rates_tau.append(o["rate_tau"])
        rep.rates_lambda.append(o["rate_lam"])
        rep.acceptance_tau.append(o["acc_t"])
        rep.acceptance_lambda.append(o["acc_l"])
        rep.collapses += o["collapses"]
        rep.clamps += o["clamps"]
        rep.variance_violations += o["violations"]
        rep.rate_violations += int(o["rate_tau"] <= 0) + int(o["rate_lam"] <= 0)
    est = Estimates(float(chains["tau"].samples.mean()), float(chains["lambda"].samples.mean()),
                    float(np.mean(rep.rates_tau)), float(np.mean(rep.rates_lambda)))
    mean_image = np.mean([o["mean"] for o in outs], axis=0).reshape(prob.shape)
    rep.seconds = time.perf_counter() - t0
    return chains, est, rep, mean_image
