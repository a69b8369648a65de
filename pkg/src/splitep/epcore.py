"""Generic Gaussian/exponential EP machinery.

Sites are stored in natural parameters (precision, precision times mean); a
vacuous site has both equal to zero.  Moment-form sites use ``inf`` as the
vacuous variance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class CavityCollapse(ArithmeticError):
    """Division produced a nonpositive precision or rate."""

    def __init__(self, message: str, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


@dataclass(frozen=True)
class EpConfig:
    damping: float = 1.0
    tol: float = 1e-6
    max_sweeps: int = 200

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.tol <= 0 or self.max_sweeps < 1:
            raise ValueError("tol must be positive and max_sweeps >= 1")


@dataclass
class GaussianBeliefGrid:
    """Per-pixel Gaussian beliefs."""

    mean: np.ndarray
    variance: np.ndarray


@dataclass
class ExponentialBelief:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate


def gaussian_cavity(belief, site, index=None):
    """Remove ``site = (m~, v~)`` from ``belief = (m, v)``.

    Works elementwise on arrays; ``v~ = inf`` marks a vacuous site.
    """
    m, v = (np.asarray(a, dtype=float) for a in belief)
    ms, vs = (np.asarray(a, dtype=float) for a in site)
    if np.any(v <= 0):
        raise ValueError("belief variance must be positive")
    site_prec = 1.0 / vs
    site_shift = np.where(np.isinf(vs), 0.0, ms * site_prec)
    prec = 1.0 / v - site_prec
    if np.any(prec <= 0):
        bad = np.flatnonzero(np.atleast_1d(prec <= 0))
        if index is not None:
            bad = np.atleast_1d(index)[bad] if np.ndim(index) else (index,)
        raise CavityCollapse("cavity precision is not positive", bad)
    shift = m / v - site_shift
    vc = 1.0 / prec
    mc = shift * vc
    if mc.ndim == 0:
        return float(mc), float(vc)
    return mc, vc


def exponential_cavity(rate: float, site_rate: float) -> float:
    if not rate > 0:
        raise ValueError("rate must be positive")
    r = rate - site_rate
    if r <= 0:
        raise CavityCollapse(f"cavity rate {r} is not positive")
    return r


def moment_match_gaussian(tilted_mean: float, tilted_variance: float):
    """Gaussian minimising KL(tilted || q): the first two moments."""
    if not tilted_variance > 0:
        raise ValueError("tilted variance must be positive")
    return tilted_mean, tilted_variance


def gaussian_site_update(new_belief, cavity):
    """Site ``(m~, v~)`` such that cavity times site equals ``new_belief``."""
    m, v = (np.asarray(a, dtype=float) for a in new_belief)
    mc, vc = (np.asarray(a, dtype=float) for a in cavity)
    if np.any(v <= 0) or np.any(vc <= 0):
        raise ValueError("variances must be positive")
    prec = 1.0 / v - 1.0 / vc
    shift = m / v - mc / vc
    with np.errstate(divide="ignore", invalid="ignore"):
        vs = np.where(prec == 0, np.inf, 1.0 / prec)
        ms = np.where(prec == 0, 0.0, shift / prec)
    if ms.ndim == 0:
        return float(ms), float(vs)
    return ms, vs


@dataclass
class EpState:
    """Sites over a set of variables plus a Gaussian prior on each variable.

    ``site_var[s]`` indexes the variable that site ``s`` touches.  Beliefs are
    recomputed from prior and sites in natural parameters.
    """

    prior_mean: np.ndarray
    prior_var: np.ndarray
    site_var: np.ndarray
    site_prec: np.ndarray = None
    site_shift: np.ndarray = None
    collapses: int = 0
    failures: int = 0

    def __post_init__(self):
        self.prior_mean = np.atleast_1d(np.asarray(self.prior_mean, dtype=float)).copy()
        self.prior_var = np.atleast_1d(np.asarray(self.prior_var, dtype=float)).copy()
        self.site_var = np.asarray(self.site_var, dtype=int)
        if self.site_prec is None:
            self.site_prec = np.zeros(self.site_var.size)
        if self.site_shift is None:
            self.site_shift = np.zeros(self.site_var.size)

    @property
    def n_sites(self) -> int:
        return self.site_var.size

    def natural(self):
        prec = 1.0 / self.prior_var + np.bincount(self.site_var, self.site_prec,
                                                   minlength=self.prior_var.size)
        shift = self.prior_mean / self.prior_var + np.bincount(
            self.site_var, self.site_shift, minlength=self.prior_var.size)
        return prec, shift

    def belief(self):
        prec, shift = self.natural()
        return shift / prec, 1.0 / prec

    def site(self, s: int):
        p = self.site_prec[s]
        if p == 0:
            return 0.0, math.inf
        return self.site_shift[s] / p, 1.0 / p

    def cavity(self, s: int):
        prec, shift = self.natural()
        j = self.site_var[s]
        cp = prec[j] - self.site_prec[s]
        if cp <= 0:
            raise CavityCollapse("cavity precision is not positive", (s,))
        return (shift[j] - self.site_shift[s]) / cp, 1.0 / cp

    def copy(self) -> "EpState":
        return EpState(self.prior_mean, self.prior_var, self.site_var.copy(),
                       self.site_prec.copy(), self.site_shift.copy(),
                       self.collapses, self.failures)


@dataclass
class SweepResult:
    state: EpState
    max_change: float
    collapses: int
    failures: int


Hook = Callable[[int, float, float, object], tuple]


def ep_sweep(state: EpState, model, schedule: Sequence[int] | None, engine_hook: Hook,
             damping: float = 1.0) -> SweepResult:
    """One pass over the sites in ``schedule`` (row-major ``range`` by default).

    ``engine_hook(s, cavity_mean, cavity_var, model)`` returns the tilted
    ``(mean, variance)`` at site ``s``.  Collapsed cavities and hook failures
    skip the site and are counted.
    """
    st = state.copy()
    order = range(st.n_sites) if schedule is None else list(schedule)
    if sorted(order) != list(range(st.n_sites)):
        raise ValueError("schedule must visit every site exactly once")
    change = 0.0
    collapses = failures = 0
    for s in order:
        try:
            mc, vc = st.cavity(s)
        except CavityCollapse:
            collapses += 1
            continue
        try:
            mt, vt = moment_match_gaussian(*engine_hook(s, mc, vc, model))
            if not (math.isfinite(mt) and math.isfinite(vt)):
                raise FloatingPointError("non-finite tilted moments")
        except (ArithmeticError, ValueError) as exc:
            log.debug("site %d skipped: %s", s, exc)
            failures += 1
            continue
        new_prec = 1.0 / vt - 1.0 / vc
        new_shift = mt / vt - mc / vc
        new_prec = (1.0 - damping) * st.site_prec[s] + damping * new_prec
        new_shift = (1.0 - damping) * st.site_shift[s] + damping * new_shift
        change = max(change, abs(new_prec - st.site_prec[s]), abs(new_shift - st.site_shift[s]))
        st.site_prec[s] = new_prec
        st.site_shift[s] = new_shift
    st.collapses += collapses
    st.failures += failures
    return SweepResult(st, change, collapses, failures)


def converged(prev_state: EpState, next_state: EpState, tol: float) -> bool:
    """True iff every site natural parameter moved by strictly less than ``tol``."""
    if prev_state.n_sites != next_state.n_sites:
        raise ValueError("states differ in shape")
    if prev_state.n_sites == 0:
        return True
    d = max(np.max(np.abs(prev_state.site_prec - next_state.site_prec)),
            np.max(np.abs(prev_state.site_shift - next_state.site_shift)))
    return bool(d < tol)


@dataclass
class EpRun:
    state: EpState
    sweeps: int
    converged: bool
    changes: list = field(default_factory=list)


def run_ep(state: EpState, model, engine_hook: Hook, cfg: EpConfig = EpConfig(),
           schedule=None) -> EpRun:
    """Iterate ``ep_sweep`` until ``converged`` or ``cfg.max_sweeps``."""
    changes = []
    for k in range(1, cfg.max_sweeps + 1):
        res = ep_sweep(state, model, schedule, engine_hook, cfg.damping)
        changes.append(res.max_change)
        done = converged(state, res.state, cfg.tol)
        state = res.state
        if done:
            return EpRun(state, k, True, changes)
    return EpRun(state, cfg.max_sweeps, False, changes)
