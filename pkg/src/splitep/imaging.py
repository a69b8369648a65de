"""Per-pixel conditional factors shared by the image engines.

Each pixel ``p`` is refined against its conditional factors given the other
pixels at their current belief means.  The field prior then gives a Gaussian
cavity and the likelihood reduces exactly to one scalar Gaussian factor
``N(y_eff | g_eff x_p, lam)`` with ``g_eff = ||G[:, p]||``.

Pixels are visited by colour classes: pixels whose row and column indices
agree modulo ``2r + 1`` (``r`` the larger operator radius) share no factor, so
updating a class at once equals updating its pixels one after another.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .model import HierarchicalModel, as_grid, operator_matrix


def colour_classes(shape, radius: int) -> list:
    """Row-major-ordered list of flat index arrays partitioning the grid."""
    rows, cols = shape
    period = 2 * radius + 1
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    label = ((ii % period) * period + (jj % period)).ravel()
    return [np.flatnonzero(label == c) for c in range(period * period) if np.any(label == c)]


def _sparse(op, shape):
    return sp.csr_matrix(operator_matrix(op, shape))


def block_cg(matvec, b: np.ndarray, x0=None, tol: float = 1e-9, maxiter: int = 2000) -> np.ndarray:
    """Conjugate gradients run independently on every column of ``b``."""
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    p = r.copy()
    rs = np.sum(r * r, axis=0)
    bn = np.maximum(np.sum(b * b, axis=0), 1e-300)
    for _ in range(maxiter):
        if np.sqrt(np.max(rs / bn)) < tol:
            break
        ap = matvec(p)
        alpha = rs / np.sum(p * ap, axis=0)
        x += alpha * p
        r -= alpha * ap
        rs_new = np.sum(r * r, axis=0)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


@dataclass
class ImageProblem:
    """Data and sparse operators for one reconstruction."""

    y: np.ndarray
    shape: tuple
    G: sp.csc_matrix
    Gt: sp.csr_matrix
    L: sp.csc_matrix
    Lt: sp.csr_matrix
    g2: np.ndarray
    l2: np.ndarray
    classes: list
    probes: int = 64
    probe_seed: int = 0
    _warm: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, y, model: HierarchicalModel) -> "ImageProblem":
        y = as_grid(y, "y")
        G = _sparse(model.forward, y.shape)
        L = _sparse(model.regularizer, y.shape)
        g2 = np.asarray(G.multiply(G).sum(axis=0)).ravel()
        l2 = np.asarray(L.multiply(L).sum(axis=0)).ravel()
        if np.any(g2 <= 0) or np.any(l2 <= 0):
            raise ValueError("every pixel must enter both G and L")
        r = max(model.forward.radius, model.regularizer.radius)
        return cls(y.ravel().copy(), y.shape, G.tocsc(), G.T.tocsr(), L.tocsc(), L.T.tocsr(),
                   g2, l2, colour_classes(y.shape, r))

    @property
    def size(self) -> int:
        return self.y.size

    def joint_traces(self, tau: float, lam: float):
        """``(tr(L'L S), tr(G'G S))`` for ``S = (G'G/lam + L'L/tau)^-1``.

        ``tr(G'G S)`` is a Hutchinson estimate over fixed Rademacher probes
        with block-CG solves; ``tr(L'L S)`` follows from the exact identity
        ``tr(L'L S)/tau + tr(G'G S)/lam = N``.
        """
        if "z" not in self._warm:
            rng = np.random.default_rng(self.probe_seed)
            self._warm["z"] = rng.choice([-1.0, 1.0], size=(self.size, self.probes))
        z = self._warm["z"]
        G, L = self.G, self.L

        def matvec(v):
            return (G.T @ (G @ v)) / lam + (L.T @ (L @ v)) / tau

        # the previous solve, rescaled by lambda, is a close starting point
        prev = self._warm.get("w")
        x0 = None if prev is None else prev[0] * (lam / prev[1])
        w = block_cg(matvec, z, x0=x0)
        self._warm["w"] = (w, lam)
        t_g = float(np.sum((G @ z) * (G @ w))) / self.probes
        t_g = min(max(t_g, 0.0), lam * self.size)
        return tau * (self.size - t_g / lam), t_g


class FieldState:
    """Belief means/variances together with the running residuals ``y - Gm`` and ``Lm``."""

    def __init__(self, prob: ImageProblem, mean, var):
        self.prob = prob
        self.mean = np.asarray(mean, dtype=float).ravel().copy()
        self.var = np.asarray(var, dtype=float).ravel().copy()
        self.resid = prob.y - prob.G @ self.mean
        self.field = prob.L @ self.mean

    def cavity(self, idx, tau):
        """Conditional field prior of the pixels ``idx`` given the others' means."""
        p = self.prob
        l2 = p.l2[idx]
        mc = self.mean[idx] - (p.Lt[idx] @ self.field) / l2
        return mc, tau / l2

    def likelihood(self, idx):
        """``(y_eff, g_eff)`` of the conditional likelihood of pixels ``idx``."""
        p = self.prob
        g = np.sqrt(p.g2[idx])
        return ((p.Gt[idx] @ self.resid) + p.g2[idx] * self.mean[idx]) / g, g

    def set_mean(self, idx, new_mean):
        d = new_mean - self.mean[idx]
        self.mean[idx] = new_mean
        self.resid -= self.prob.G[:, idx] @ d
        self.field += self.prob.L[:, idx] @ d

    def sum_sq_field(self) -> float:
        """Expected ``sum_k (Lx)_k^2`` under the factorised belief."""
        return float(self.field @ self.field + self.prob.l2 @ self.var)

    def sum_sq_resid(self) -> float:
        """Expected ``sum_k (y - Gx)_k^2`` under the factorised belief."""
        return float(self.resid @ self.resid + self.prob.g2 @ self.var)

    def hyper_stats(self, tau: float, lam: float, joint: bool = True):
        """Expected sums of squares for the tau and lambda factors.

        With ``joint`` the expectation is under the joint Gaussian whose
        precision is the prior plus the (exact) likelihood sites; otherwise
        under the product of the per-pixel beliefs, which understates the
        spread whenever neighbouring pixels are strongly coupled.
        """
        if not joint:
            return self.sum_sq_field(), self.sum_sq_resid()
        t_l, t_g = self.prob.joint_traces(tau, lam)
        return (float(self.field @ self.field) + t_l, float(self.resid @ self.resid) + t_g)

    def grid(self, a):
        return np.asarray(a).reshape(self.prob.shape)


def relative_error(estimate, truth) -> float:
    t = np.asarray(truth, dtype=float)
    return float(np.linalg.norm(np.asarray(estimate, dtype=float) - t) / np.linalg.norm(t))


def fresh_copy(prob: ImageProblem) -> ImageProblem:
    """Shallow copy sharing operators but owning its own solver warm start."""
    return replace(prob, _warm={})
