"""Hierarchical Gaussian image model and its linear operators.

The latent image ``x`` and the data ``y`` are 2-D float arrays.  The second
parameter of every Gaussian (``lam``, ``tau``, ``v``) is a variance; report
helpers convert to precision and standard deviation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

LOG_2PI = math.log(2.0 * math.pi)


class DomainError(ValueError):
    """A density was evaluated with a parameter outside its domain."""


class ShapeError(ValueError):
    """Operator and image shapes are incompatible."""


def as_grid(x, name: str = "grid") -> np.ndarray:
    """Validate and return ``x`` as a finite 2-D float64 array."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class LinearOperatorSpec:
    """A linear map on images.

    ``kind`` is one of ``identity``, ``scalar``, ``convolution`` or
    ``laplacian``.  ``kernel`` is stored as a tuple of row tuples so the operator
    is hashable and operator matrices can be cached.
    """

    kind: str = "identity"
    gain: float = 1.0
    kernel: tuple = ()
    boundary: str = "reflect"

    def __post_init__(self):
        if self.kind not in ("identity", "scalar", "convolution", "laplacian"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.boundary not in ("reflect", "zero"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.kind == "scalar" and (self.gain == 0 or not math.isfinite(self.gain)):
            raise ValueError("scalar gain must be finite and nonzero")
        if self.kind == "convolution":
            k = np.asarray(self.kernel, dtype=float)
            if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
                raise ValueError("convolution kernel must be 2-D with odd dimensions")
            if not np.all(np.isfinite(k)):
                raise ValueError("convolution kernel entries must be finite")

    @classmethod
    def convolution(cls, kernel, boundary: str = "reflect") -> "LinearOperatorSpec":
        k = np.asarray(kernel, dtype=float)
        return cls("convolution", kernel=tuple(tuple(float(v) for v in row) for row in k),
                   boundary=boundary)

    @classmethod
    def blur(cls, sigma: float, boundary: str = "reflect") -> "LinearOperatorSpec":
        return cls.convolution(gaussian_kernel(sigma), boundary)

    def stencil(self) -> np.ndarray:
        """Convolution kernel equivalent to this operator."""
        if self.kind == "identity":
            return np.ones((1, 1))
        if self.kind == "scalar":
            return np.full((1, 1), float(self.gain))
        if self.kind == "laplacian":
            return np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
        return np.asarray(self.kernel, dtype=float)

    @property
    def radius(self) -> int:
        k = self.stencil()
        return max(k.shape) // 2


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Normalised isotropic Gaussian kernel truncated at ``ceil(3 sigma)``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = int(math.ceil(3.0 * sigma)) if radius is None else int(radius)
    t = np.arange(-r, r + 1, dtype=float)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric extension: -1 -> 0, n -> n-1
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


@lru_cache(maxsize=64)
def operator_matrix(op: LinearOperatorSpec, shape: tuple) -> sp.csr_matrix:
    """Sparse matrix of ``op`` acting on row-major flattened images of ``shape``."""
    rows, cols = shape
    k = op.stencil()
    kh, kw = k.shape
    if kh > rows or kw > cols:
        raise ShapeError(f"kernel {k.shape} larger than image {shape}")
    ch, cw = kh // 2, kw // 2
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    out_idx = (ii * cols + jj).ravel()
    r_list, c_list, v_list = [], [], []
    for a in range(kh):
        for b in range(kw):
            w = k[a, b]
            if w == 0.0:
                continue
            # true convolution: (Gx)[p] = sum_q k[q] x[p - (q - c)]
            si = ii - (a - ch)
            sj = jj - (b - cw)
            if op.boundary == "reflect":
                si, sj = _reflect_index(si, rows), _reflect_index(sj, cols)
                keep = np.ones(si.shape, dtype=bool)
            else:
                keep = (si >= 0) & (si < rows) & (sj >= 0) & (sj < cols)
            keep = keep.ravel()
            r_list.append(out_idx[keep])
            c_list.append((si * cols + sj).ravel()[keep])
            v_list.append(np.full(int(keep.sum()), w))
    n = rows * cols
    m = sp.coo_matrix((np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
                      shape=(n, n))
    m = m.tocsr()
    m.sum_duplicates()
    return m


def apply_operator(op: LinearOperatorSpec, x) -> np.ndarray:
    """Apply ``op`` to image ``x``; the result has the shape of ``x``."""
    x = as_grid(x, "x")
    if op.kind == "identity":
        return x.copy()
    if op.kind == "scalar":
        return op.gain * x
    return (operator_matrix(op, x.shape) @ x.ravel()).reshape(x.shape)


def _gauss_logpdf_sum(r: np.ndarray, var: float) -> float:
    return float(-0.5 * r.size * (LOG_2PI + math.log(var)) - 0.5 * np.sum(r * r) / var)


def log_likelihood(y, x, g: LinearOperatorSpec, lam: float) -> float:
    """Sum over pixels of ``log N(y | Gx, lam)``."""
    if not lam > 0:
        raise DomainError("noise variance lambda must be positive")
    y = as_grid(y, "y")
    x = as_grid(x, "x")
    if y.shape != x.shape:
        raise ShapeError("y and x must have the same shape")
    return _gauss_logpdf_sum(y - apply_operator(g, x), lam)


def log_prior_field(x, l: LinearOperatorSpec, tau: float) -> float:
    """Sum over pixels of ``log N((Lx) | 0, tau)``."""
    if not tau > 0:
        raise DomainError("field variance tau must be positive")
    return _gauss_logpdf_sum(apply_operator(l, x), tau)


def log_exponential(theta: float, rate: float) -> float:
    """Log density of the rate-parameterised exponential."""
    if not rate > 0:
        raise DomainError("exponential rate must be positive")
    if theta < 0:
        return -math.inf
    return math.log(rate) - rate * theta


@dataclass(frozen=True)
class HierarchicalModel:
    """Forward operator ``G``, regulariser ``L`` and exponential hyperprior rates.

    The default rates 8 and 9 are the cavity rates left when sites of rate 2
    (tau) and 1 (lambda) are removed from beliefs of rate 10.
    """

    forward: LinearOperatorSpec = field(default_factory=LinearOperatorSpec)
    regularizer: LinearOperatorSpec = field(default_factory=LinearOperatorSpec)
    hyper_rate_tau: float = 8.0
    hyper_rate_lambda: float = 9.0

    def __post_init__(self):
        if self.forward.kind == "scalar" and self.forward.gain == 0:
            raise ValueError("forward gain must be nonzero")
        if not (self.hyper_rate_tau > 0 and self.hyper_rate_lambda > 0):
            raise ValueError("hyperprior rates must be positive")


def log_joint(y, x, lam: float, tau: float, model: HierarchicalModel) -> float:
    """Unnormalised log posterior of ``(x, lam, tau)``."""
    if lam <= 0 or tau <= 0:
        return -math.inf
    return (log_likelihood(y, x, model.forward, lam)
            + log_prior_field(x, model.regularizer, tau)
            + log_exponential(lam, model.hyper_rate_lambda)
            + log_exponential(tau, model.hyper_rate_tau))


def precision_from_variance(v: float) -> float:
    return 1.0 / v


def sd_from_variance(v: float) -> float:
    return math.sqrt(v)
