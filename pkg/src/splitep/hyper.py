"""Aggregated variance factors for the hyperparameters tau and lambda.

All pixels share one field variance ``tau`` and one noise variance ``lam``, so
the product of their Gaussian factors is a single factor in the variance:

    t(s) = prod_k N(e_k | 0, s) = (2 pi s)^(-count/2) exp(-sum_sq / (2 s)),

with ``sum_sq`` the (expected) sum of squares.  With an exponential cavity of
rate ``a`` the tilted density is a generalised inverse Gaussian.
"""
from __future__ import annotations

import math

import numpy as np

from .model import LOG_2PI


def log_variance_factor(s, sum_sq: float, count: int):
    """``log t(s)``; ``-inf`` for ``s <= 0``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -0.5 * count * (LOG_2PI + np.log(s)) - 0.5 * sum_sq / s
    out = np.where(s > 0, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def tilted_logpdf(s, sum_sq: float, count: int, cavity_rate: float):
    """Unnormalised log tilted density ``log t(s) + log Exp(s | cavity_rate)``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(invalid="ignore"):
        out = log_variance_factor(s, sum_sq, count) + math.log(cavity_rate) - cavity_rate * s
    out = np.where(s > 0, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def tilted_mode(sum_sq: float, count: int, cavity_rate: float) -> float:
    """Maximiser of the tilted density (positive root of a quadratic)."""
    a, h = cavity_rate, 0.5 * count
    if sum_sq <= 0:
        return 0.0
    # a s^2 + h s - sum_sq/2 = 0, written to avoid cancellation
    return sum_sq / (h + math.sqrt(h * h + 2.0 * a * sum_sq))


def tilted_mean(sum_sq: float, count: int, cavity_rate: float, points: int = 4001) -> float:
    """Tilted mean by trapezoid quadrature in ``u = log s`` around the mode.

    The integrand in ``u`` is ``exp((1 - count/2) u - sum_sq e^-u / 2 - a e^u)``;
    a window of +-14 curvature widths holds essentially all of its mass.
    """
    a = cavity_rate
    if sum_sq <= 0 and count >= 2:
        raise ValueError("tilted density is improper for a zero sum of squares")

    def f(u):
        return (1.0 - 0.5 * count) * u - 0.5 * sum_sq * np.exp(-u) - a * np.exp(u)

    # f is strictly concave in u, so damped Newton finds its mode
    u0 = math.log(sum_sq / max(count, 1)) if sum_sq > 0 else -math.log(a)
    for _ in range(50):
        e = math.exp(u0)
        d1 = (1.0 - 0.5 * count) + 0.5 * sum_sq / e - a * e
        d2 = -0.5 * sum_sq / e - a * e
        step = d1 / d2
        u0 -= max(min(step, 2.0), -2.0)
        if abs(step) < 1e-13:
            break
    e = math.exp(u0)
    width = 1.0 / math.sqrt(0.5 * sum_sq / e + a * e)
    u = np.linspace(u0 - 14.0 * width, u0 + 14.0 * width, points)
    lw = f(u)
    w = np.exp(lw - lw.max())
    return float(np.trapezoid(w * np.exp(u), u) / np.trapezoid(w, u))
