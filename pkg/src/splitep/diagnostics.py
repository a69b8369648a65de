"""Brooks-Gelman convergence diagnostics, sample ACF and credible intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIVERGENT = math.inf
DEGENERATE = math.nan


class ChainSet:
    """``m`` chains of ``n`` scalar samples, stored as an ``(m, n)`` array."""

    def __init__(self, samples):
        s = np.asarray(samples, dtype=float)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2:
            raise ValueError("chains must be rectangular")
        self.samples = s

    @classmethod
    def from_lists(cls, chains) -> "ChainSet":
        lengths = {len(c) for c in chains}
        if len(lengths) != 1:
            raise ValueError("ragged chains")
        return cls(np.array([list(c) for c in chains], dtype=float))

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]


def between_chain_var(c: ChainSet) -> float:
    """B/n: sample variance (divisor m-1) of the chain means."""
    if c.m < 2:
        raise ValueError("need at least two chains")
    return float(np.var(c.samples.mean(axis=1), ddof=1))


def within_chain_var(c: ChainSet) -> float:
    """W: mean of the per-chain sample variances (divisor n-1)."""
    if c.n < 2:
        raise ValueError("need at least two samples per chain")
    return float(np.mean(np.var(c.samples, axis=1, ddof=1)))


def pooled_estimates(b_over_n: float, w: float, m: int, n: int):
    """Return ``(sigma2_plus, V_hat)``."""
    if m < 2 or n < 2:
        raise ValueError("m and n must be >= 2")
    sigma2_plus = (n - 1) / n * w + b_over_n
    return sigma2_plus, sigma2_plus + b_over_n / m


@dataclass(frozen=True)
class PsrfReport:
    b_over_n: float
    w: float
    sigma2_plus: float
    v_hat: float
    psrf_paper: float
    psrf_ratio: float


def psrf(c: ChainSet) -> PsrfReport:
    """PSRF as ``(m+1)/m * sigma2_plus / W - (n-1)/(m n)`` plus the plain ``V_hat / W``."""
    m, n = c.m, c.n
    b = between_chain_var(c)
    w = within_chain_var(c)
    s2, v = pooled_estimates(b, w, m, n)
    if w == 0:
        r = DIVERGENT if b > 0 else DEGENERATE
        return PsrfReport(b, w, s2, v, r, r)
    r_formula = (m + 1) / m * s2 / w - (n - 1) / (m * n)
    return PsrfReport(b, w, s2, v, r_formula, v / w)


def autocorrelation(chain, lag: int) -> float:
    """Sample autocovariance at ``lag`` over the lag-0 autocovariance."""
    x = np.asarray(chain, dtype=float)
    n = x.size
    if not 0 <= lag < n:
        raise ValueError("lag must satisfy 0 <= lag < n")
    d = x - x.mean()
    c0 = float(np.dot(d, d))
    if c0 == 0:
        return DEGENERATE
    return float(np.dot(d[: n - lag], d[lag:])) / c0


def credible_interval(samples, level: float = 0.95):
    """Equal-tailed interval with linear interpolation between order statistics."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    lo, hi = np.quantile(x, [(1 - level) / 2, (1 + level) / 2], method="linear")
    return float(lo), float(hi)


def report_lines(c: ChainSet, level: float = 0.95, lags=(1, 5, 10, 50)) -> list:
    """``key: value`` lines for a chain set."""
    r = psrf(c)
    lines = [f"m: {c.m}", f"n: {c.n}", f"W: {r.w!r}", f"B_over_n: {r.b_over_n!r}",
             f"sigma2_plus: {r.sigma2_plus!r}", f"V_hat: {r.v_hat!r}",
             f"psrf_paper: {r.psrf_paper!r}", f"psrf_ratio: {r.psrf_ratio!r}"]
    pooled = c.samples.ravel()
    lo, hi = credible_interval(pooled, level)
    lines += [f"posterior_mean: {float(pooled.mean())!r}", f"ci_level: {level!r}",
              f"ci_lo: {lo!r}", f"ci_hi: {hi!r}"]
    for j in range(c.m):
        lo, hi = credible_interval(c.samples[j], level)
        lines += [f"chain{j + 1}_ci_lo: {lo!r}", f"chain{j + 1}_ci_hi: {hi!r}"]
    for lag in lags:
        if lag < c.n:
            acf = np.mean([autocorrelation(ch, lag) for ch in c.samples])
            lines.append(f"acf_lag{lag}: {float(acf)!r}")
    return lines
