"""EP with Monte Carlo tilted moments and stochastic gradient site updates."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .epcore import EpConfig, GaussianBeliefGrid
from .hyper import log_variance_factor
from .imaging import FieldState, ImageProblem
from .model import HierarchicalModel, as_grid

RATE_FLOOR = 1e-8


class DegenerateWeights(ArithmeticError):
    """All importance weights vanished."""


@dataclass(frozen=True)
class McConfig:
    samples: int = 1024
    learning_rate: float = 0.05
    seed: int = 0
    rate_rule: str = "log-gradient"

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample count K must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.rate_rule not in ("log-gradient", "additive"):
            raise ValueError(f"unknown rate rule {self.rate_rule!r}")


def _cavity_draws(cavity_rate: float, cfg: McConfig, rng=None) -> np.ndarray:
    if not cavity_rate > 0:
        raise ValueError("cavity rate must be positive")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    # scaling one standard-exponential stream gives common random numbers across rates
    return rng.standard_exponential(cfg.samples) / cavity_rate


def log_mc_normalizer(log_integrand: np.ndarray, log_proposal=None) -> float:
    """``log((1/K) sum_k f_k / r_k)`` evaluated stably."""
    lw = np.asarray(log_integrand, dtype=float)
    if log_proposal is not None:
        lw = lw - np.asarray(log_proposal, dtype=float)
    return float(logsumexp(lw) - math.log(lw.size))


def mc_normalizer_tau(lx, cavity_rate: float, cfg: McConfig, rng=None) -> float:
    """Estimate ``int prod_i N(lx_i | 0, tau) Exp(tau | cavity_rate) d tau``.

    ``lx`` may be a scalar or an array; draws come from the exponential cavity,
    so each weight is the Gaussian factor itself.
    """
    lx = np.asarray(lx, dtype=float)
    tau = _cavity_draws(cavity_rate, cfg, rng)
    return math.exp(log_mc_normalizer(log_variance_factor(tau, float(np.sum(lx * lx)), lx.size)))


def mc_normalizer_lambda(y, gx, cavity_rate: float, cfg: McConfig, rng=None) -> float:
    """As :func:`mc_normalizer_tau` with the residual ``y - gx``."""
    return mc_normalizer_tau(np.asarray(y, dtype=float) - np.asarray(gx, dtype=float),
                             cavity_rate, cfg, rng)


def grad_log_z_rate(samples) -> float:
    """Mean of tilted draws: ``d log Z / d(-rate)`` for the unnormalised cavity ``e^(-rate s)``."""
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ValueError("no samples")
    return float(s.mean())


def update_rate(cavity_rate: float, cavity_variance: float, zeta: float,
                rate_floor: float = RATE_FLOOR) -> float:
    """``cavity_rate + cavity_variance * zeta``, floored at ``rate_floor``."""
    if not cavity_rate > 0:
        raise ValueError("cavity rate must be positive")
    return max(cavity_rate + cavity_variance * zeta, rate_floor)


def snis_gradient(weights, grads) -> float:
    """Self-normalised estimate ``sum w g / sum w``."""
    w = np.asarray(weights, dtype=float)
    g = np.asarray(grads, dtype=float)
    if w.shape != g.shape:
        raise ValueError("weights and grads differ in length")
    tot = w.sum()
    if not tot > 0:
        raise DegenerateWeights("all weights are zero")
    return float(w @ g / tot)


def gradient_step(omega, lr: float, g):
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    return omega + lr * g


def rate_step(rate: float, prior_rate: float, sum_sq: float, count: int, cfg: McConfig, rng) -> float:
    """One stochastic update of an exponential belief against its aggregated factor.

    Draws come from the current belief ``Exp(rate)`` and are weighted by the
    exact factor over its site ``exp(-(rate - prior_rate) s)``.  The default
    rule is a gradient step on ``log rate`` along the SNIS estimate of
    ``E_tilted[d log q / d log rate] = 1 - rate * E_tilted[s]``, whose fixed
    point is exponential moment matching.
    """
    site = rate - prior_rate
    s = rng.standard_exponential(cfg.samples) / rate
    lw = log_variance_factor(s, sum_sq, count) + site * s
    w = np.exp(lw - lw.max())
    if cfg.rate_rule == "additive":
        zeta = snis_gradient(w, s)
        return update_rate(prior_rate, 1.0 / prior_rate ** 2, zeta)
    g = snis_gradient(w, 1.0 - rate * s)
    return max(math.exp(gradient_step(math.log(rate), cfg.learning_rate, g)), RATE_FLOOR)


@dataclass(frozen=True)
class Bounds:
    b: float = 1e-6


def epmc_fit(y, model: HierarchicalModel, cfg: McConfig = McConfig(), ep_cfg: EpConfig = EpConfig(),
             init=None, bounds: Bounds = Bounds(), joint: bool = True):
    """EP-MC reconstruction; returns ``(GaussianBeliefGrid, ReconstructionReport)``.

    Every pixel draws ``K`` samples from its current belief, weights them by the
    exact conditional likelihood over its site and moves the belief mean and
    variance along the Fisher-scaled SNIS gradient.  The tau and lambda beliefs
    move by :func:`rate_step` after each sweep.
    """
    from .epadmm import HyperInit, ReconstructionReport, SiteGrid

    init = HyperInit() if init is None else init
    t0 = time.perf_counter()
    y = as_grid(y, "y")
    prob = ImageProblem.build(y, model)
    rng = np.random.default_rng(cfg.seed)
    rate_tau, rate_lam = init.rate_tau, init.rate_lambda
    state = FieldState(prob, y, np.full(prob.size, 1.0 / rate_tau))
    sites = SiteGrid(prob.size)
    rep = ReconstructionReport("ep-mc")
    ynorm = float(np.linalg.norm(prob.y))
    lr, k = cfg.learning_rate, cfg.samples
    for sweep in range(1, ep_cfg.max_sweeps + 1):
        change = 0.0
        lam = 1.0 / rate_lam
        for idx in prob.classes:
            m_c, v_c = state.cavity(idx, 1.0 / rate_tau)
            y_eff, g = state.likelihood(idx)
            sp, ss = sites.prec[idx], sites.shift[idx]
            prec0 = 1.0 / v_c + sp
            bad = prec0 <= 0
            if np.any(bad):
                rep.collapses += int(bad.sum())
                sp = np.where(bad, 0.0, sp)
                ss = np.where(bad, 0.0, ss)
                prec0 = 1.0 / v_c + sp
            v0 = 1.0 / prec0
            m0 = (m_c / v_c + ss) * v0
            x = m0[:, None] + np.sqrt(v0)[:, None] * rng.standard_normal((idx.size, k))
            # log exact factor minus log site, both up to constants in x
            lw = (g * y_eff / lam - ss)[:, None] * x - 0.5 * (g * g / lam - sp)[:, None] * x * x
            w = np.exp(lw - lw.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            d = x - m0[:, None]
            dm = np.sum(w * d, axis=1) / v0
            dv = np.sum(w * (d * d - v0[:, None]), axis=1) / (2.0 * v0 * v0)
            m1 = gradient_step(m0, lr, v0 * dm)
            v1 = gradient_step(v0, lr, 2.0 * v0 * v0 * dv)
            low = v1 < bounds.b
            rep.clamps += int(low.sum())
            v1 = np.where(low, bounds.b, v1)
            m1, v1, c = sites.set_from(idx, m1, v1, m_c, v_c, ep_cfg.damping)
            change = max(change, c)
            state.var[idx] = v1
            state.set_mean(idx, m1)
        rep.variance_violations += int(np.count_nonzero(state.var < bounds.b))
        n = prob.size
        s_t, s_l = state.hyper_stats(1.0 / rate_tau, 1.0 / rate_lam, joint)
        new_tau = rate_step(rate_tau, model.hyper_rate_tau, s_t, n, cfg, rng)
        new_lam = rate_step(rate_lam, model.hyper_rate_lambda, s_l, n, cfg, rng)
        change = max(change, abs(math.log(new_tau / rate_tau)), abs(math.log(new_lam / rate_lam)))
        rate_tau, rate_lam = new_tau, new_lam
        rep.rate_violations += int(rate_tau < RATE_FLOOR) + int(rate_lam < RATE_FLOOR)
        rep.residual_trace.append(float(np.linalg.norm(state.resid)) / ynorm)
        rep.change_trace.append(float(change))
        rep.tau_trace.append(1.0 / rate_tau)
        rep.lambda_trace.append(1.0 / rate_lam)
        rep.sweeps = sweep
        if change < ep_cfg.tol:
            rep.converged = True
            break
    rep.rate_tau, rep.rate_lambda = rate_tau, rate_lam
    rep.seconds = time.perf_counter() - t0
    return GaussianBeliefGrid(state.grid(state.mean), state.grid(state.var)), rep
