"""The one-dimensional clutter problem.

Each observation is ``(1 - w) N(y; theta, 1) + w N(y; 0, clutter_var)`` and the
prior is ``N(0, prior_var)``.  The exact posterior is a mixture over which
observations are signal, enumerated for up to 20 observations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .epadmm import AdmmConfig, AdmmState, admm_correct, admm_dual_update
from .epcore import EpConfig, EpState, run_ep
from .epmc import McConfig

ENUM_CAP = 20


class EnumerationError(ValueError):
    """Too many observations for exact enumeration."""


@dataclass(frozen=True)
class ClutterModel:
    w: float = 0.5
    prior_var: float = 100.0
    clutter_var: float = 10.0
    dim: int = 1

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError("w must lie in [0, 1]")
        if not (self.prior_var > 0 and self.clutter_var > 0):
            raise ValueError("variances must be positive")
        if self.dim != 1:
            raise ValueError("only the one-dimensional problem is supported")


def _log_norm(x, m, v):
    return -0.5 * (math.log(2.0 * math.pi) + np.log(v)) - 0.5 * (x - m) ** 2 / v


def clutter_loglik(y, theta, cm: ClutterModel):
    """``log[(1-w) N(y; theta, 1) + w N(y; 0, clutter_var)]``."""
    a = _log_norm(y, theta, 1.0)
    b = _log_norm(y, 0.0, cm.clutter_var)
    if cm.w == 0:
        return a
    if cm.w == 1:
        return b + 0.0 * np.asarray(theta, dtype=float)
    return np.logaddexp(math.log1p(-cm.w) + a, math.log(cm.w) + b)


def simulate_clutter(n: int, cm: ClutterModel, theta: float = 2.0, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    clutter = rng.random(n) < cm.w
    return np.where(clutter, math.sqrt(cm.clutter_var) * rng.standard_normal(n),
                    theta + rng.standard_normal(n))


def default_grid(data, cm: ClutterModel, points: int = 1001) -> np.ndarray:
    centre = float(np.mean(data)) if len(data) else 0.0
    half = 6.0 * math.sqrt(cm.prior_var)
    return np.linspace(centre - half, centre + half, points)


@dataclass
class ExactPosterior:
    grid: np.ndarray
    density: np.ndarray
    mean: float
    variance: float
    log_evidence: float


def _log_unnormalised(theta, data, cm):
    out = _log_norm(theta, 0.0, cm.prior_var)
    for y in data:
        out = out + clutter_loglik(y, theta, cm)
    return out


def exact_posterior(data, cm: ClutterModel, grid=None, approx_oracle: bool = False) -> ExactPosterior:
    """Exact posterior by enumerating signal/clutter assignments.

    Moments and the evidence come from the ``2^n`` Gaussian components; the
    grid density is the pointwise product divided by the exact evidence.
    With ``approx_oracle`` and more than 20 observations, quadrature on a
    fine grid replaces the enumeration.
    """
    data = np.asarray(data, dtype=float).ravel()
    n = data.size
    grid = default_grid(data, cm) if grid is None else np.asarray(grid, dtype=float)
    if n > ENUM_CAP:
        if not approx_oracle:
            raise EnumerationError(f"n = {n} exceeds the enumeration cap {ENUM_CAP}")
        return _quadrature_posterior(data, cm, grid)
    if n == 0:
        lz = 0.0
        return ExactPosterior(grid, np.exp(_log_norm(grid, 0.0, cm.prior_var)), 0.0, cm.prior_var, lz)
    sig = np.array(list(itertools.product((0, 1), repeat=n)), dtype=bool)  # 1 = signal
    k = sig.sum(axis=1)
    sy = sig @ data
    syy = sig @ (data * data)
    prec = 1.0 / cm.prior_var + k
    mu = sy / prec
    # log of integral N(theta;0,s0) prod_{signal} N(y_i;theta,1) d theta
    log_z = (-0.5 * k * math.log(2.0 * math.pi) - 0.5 * np.log(cm.prior_var * prec)
             - 0.5 * (syy - sy * sy / prec))
    with np.errstate(divide="ignore"):
        lw_sig = math.log1p(-cm.w) if cm.w < 1 else -np.inf
        lw_clu = math.log(cm.w) if cm.w > 0 else -np.inf
    clutter_terms = _log_norm(data, 0.0, cm.clutter_var)
    with np.errstate(invalid="ignore"):
        lw = (np.where(k > 0, k * lw_sig, 0.0) + np.where(n - k > 0, (n - k) * lw_clu, 0.0)
              + (~sig) @ np.where(np.isfinite(clutter_terms), clutter_terms, 0.0) + log_z)
    lev = float(logsumexp(lw))
    p = np.exp(lw - lev)
    mean = float(p @ mu)
    var = float(p @ (1.0 / prec + mu * mu) - mean * mean)
    dens = np.exp(_log_unnormalised(grid, data, cm) - lev)
    return ExactPosterior(grid, dens, mean, var, lev)


def _quadrature_posterior(data, cm, grid):
    fine = np.linspace(grid[0], grid[-1], max(20001, grid.size))
    lf = _log_unnormalised(fine, data, cm)
    c = lf.max()
    f = np.exp(lf - c)
    z = np.trapezoid(f, fine)
    mean = float(np.trapezoid(fine * f, fine) / z)
    var = float(np.trapezoid((fine - mean) ** 2 * f, fine) / z)
    dens = np.exp(_log_unnormalised(grid, data, cm) - c) / z
    return ExactPosterior(grid, dens, mean, var, float(c + math.log(z)))


def tilted_moments(y: float, m_c: float, v_c: float, cm: ClutterModel):
    """Mean and variance of ``N(theta; m_c, v_c) * clutter likelihood``."""
    s = v_c + 1.0
    la = math.log1p(-cm.w) + _log_norm(y, m_c, s) if cm.w < 1 else -math.inf
    lb = math.log(cm.w) + _log_norm(y, 0.0, cm.clutter_var) if cm.w > 0 else -math.inf
    r = 1.0 / (1.0 + math.exp(lb - la)) if la > -math.inf else 0.0
    d = y - m_c
    mean = m_c + r * v_c * d / s
    var = v_c - r * v_c * v_c / s + r * (1.0 - r) * (v_c * d / s) ** 2
    return mean, var


@dataclass
class GaussianFit:
    mean: float
    variance: float
    sweeps: int
    converged: bool
    collapses: int
    failures: int

    def density(self, grid):
        return np.exp(_log_norm(np.asarray(grid, dtype=float), self.mean, self.variance))


def _state(data, cm):
    n = len(data)
    if n < 1:
        raise ValueError("need at least one observation")
    return EpState([0.0], [cm.prior_var], np.zeros(n, dtype=int))


def _fit(data, cm, hook, ep_cfg) -> GaussianFit:
    run = run_ep(_state(data, cm), (np.asarray(data, dtype=float), cm), hook, ep_cfg)
    m, v = run.state.belief()
    st = run.state
    if st.collapses + st.failures >= run.sweeps * st.n_sites:
        raise ArithmeticError("every site update failed")
    return GaussianFit(float(m[0]), float(v[0]), run.sweeps, run.converged, st.collapses, st.failures)


def ep_clutter(data, cm: ClutterModel, ep_cfg: EpConfig = EpConfig()) -> GaussianFit:
    """Classic EP with closed-form tilted moments."""

    def hook(s, m_c, v_c, model):
        ys, c = model
        return tilted_moments(float(ys[s]), m_c, v_c, c)

    return _fit(data, cm, hook, ep_cfg)


def epadmm_clutter(data, cm: ClutterModel, admm_cfg: AdmmConfig = AdmmConfig(),
                   ep_cfg: EpConfig = EpConfig()) -> GaussianFit:
    """EP whose tilted moments receive the multiplier/penalty corrections."""
    admm = AdmmState.zeros(len(data), admm_cfg)

    def hook(s, m_c, v_c, model):
        ys, c = model
        m_t, v_t = tilted_moments(float(ys[s]), m_c, v_c, c)
        m_new, v_new = admm_correct(m_t, v_t, m_c, v_c, admm, s)
        admm_dual_update(admm, m_new, v_new, s)
        return float(m_new), float(v_new)

    return _fit(data, cm, hook, ep_cfg)


def snis_tilted_moments(y, m_c, v_c, cm, rng, k: int, rao_blackwell: bool = True):
    """Tilted moments from ``k`` cavity draws, self-normalised.

    With ``rao_blackwell`` the draws only estimate the signal responsibility;
    the moments given signal or clutter are analytic, so the estimate is exact
    when ``w`` is 0 or 1.
    """
    theta = m_c + math.sqrt(v_c) * rng.standard_normal(k)
    a = (1.0 - cm.w) * np.exp(_log_norm(y, theta, 1.0))
    b = cm.w * math.exp(_log_norm(y, 0.0, cm.clutter_var))
    if not rao_blackwell:
        wts = a + b
        if not np.sum(wts) > 0:
            raise FloatingPointError("degenerate weights")
        mean = float(wts @ theta / wts.sum())
        return mean, float(wts @ (theta - mean) ** 2 / wts.sum())
    sa = float(np.mean(a))
    if not sa + b > 0:
        raise FloatingPointError("degenerate weights")
    r = sa / (sa + b)
    s = v_c + 1.0
    m1 = m_c + v_c * (y - m_c) / s
    v1 = v_c / s
    mean = r * m1 + (1.0 - r) * m_c
    var = r * (v1 + m1 * m1) + (1.0 - r) * (v_c + m_c * m_c) - mean * mean
    return mean, var


def epmc_clutter(data, cm: ClutterModel, mc_cfg: McConfig = McConfig(),
                 ep_cfg: EpConfig = EpConfig(), rao_blackwell: bool = True) -> GaussianFit:
    """EP with tilted moments estimated from cavity samples."""
    rng = np.random.default_rng(mc_cfg.seed)

    def hook(s, m_c, v_c, model):
        ys, c = model
        return snis_tilted_moments(float(ys[s]), m_c, v_c, c, rng, mc_cfg.samples, rao_blackwell)

    return _fit(data, cm, hook, ep_cfg)
