"""Synthetic phantoms, noisy observations and file formats.

Image CSV: one line per grid row, comma separated, no header, values written
with ``repr`` so the round trip is exact.  PGM (P2, maxval 65535) maps
``[min, max]`` affinely onto ``[0, 65535]``; the map is stored in a comment
line ``# range <min> <max>`` so reading restores intensities to within one
quantisation step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import ChainSet
from .model import HierarchicalModel, apply_operator, as_grid


class ParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True)
class PhantomSpec:
    """Binary phantom.  ``centers``/``radii`` default to the kind's layout."""

    kind: str = "cylinder"
    rows: int = 64
    cols: int = 64
    intensity: float = 1.0
    centers: tuple = field(default=())
    radii: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("cylinder", "four_circles"):
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1 or not self.intensity > 0:
            raise ValueError("rows, cols and intensity must be positive")

    def geometry(self):
        """``(centers, radii)`` in pixel units, centres as (row, col)."""
        if self.centers:
            return tuple(self.centers), tuple(self.radii)
        s = min(self.rows, self.cols)
        cr, cc = (self.rows - 1) / 2.0, (self.cols - 1) / 2.0
        if self.kind == "cylinder":
            return ((cr, cc),), (0.3 * s,)
        qr, qc = self.rows / 4.0, self.cols / 4.0
        centres = tuple((cr + dr * qr, cc + dc * qc) for dr in (-1, 1) for dc in (-1, 1))
        return centres, (0.12 * s,) * 4


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    """Intensity inside the disks, zero elsewhere."""
    centres, radii = spec.geometry()
    if len(centres) != len(radii):
        raise ValueError("centers and radii differ in length")
    ii, jj = np.meshgrid(np.arange(spec.rows), np.arange(spec.cols), indexing="ij")
    x = np.zeros((spec.rows, spec.cols))
    for (r0, c0), rad in zip(centres, radii):
        if (rad <= 0 or r0 - rad < -0.5 or c0 - rad < -0.5
                or r0 + rad > spec.rows - 0.5 or c0 + rad > spec.cols - 0.5):
            raise ValueError("shape does not fit inside the grid")
        x[(ii - r0) ** 2 + (jj - c0) ** 2 <= rad * rad] = spec.intensity
    return x


def prior_draw_phantom(spec: PhantomSpec, precision: float, seed: int) -> np.ndarray:
    """Shape-supported white field draw with grid-average variance ``1/precision``.

    Inside the shapes the field is ``N(0, (1/precision) * N / n_lit)``; outside
    it is zero, so ``mean(x**2)`` has expectation ``1/precision``.
    """
    mask = make_phantom(spec) > 0
    n_lit = int(mask.sum())
    var = (1.0 / precision) * mask.size / n_lit
    z = np.random.default_rng(seed).standard_normal(mask.shape)
    return np.where(mask, math.sqrt(var) * z, 0.0)


def simulate_observation(x, model: HierarchicalModel, noise_sd: float, seed: int) -> np.ndarray:
    """``y = G x + N(0, noise_sd^2)`` i.i.d. per pixel."""
    if not noise_sd > 0:
        raise ValueError("noise_sd must be positive")
    gx = apply_operator(model.forward, x)
    return gx + noise_sd * np.random.default_rng(seed).standard_normal(gx.shape)


# ---------------------------------------------------------------- image files

def write_image(path, grid) -> None:
    path = Path(path)
    g = as_grid(grid)
    if path.suffix.lower() == ".pgm":
        _write_pgm(path, g)
        return
    with open(path, "w", newline="") as fh:
        for row in g:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    rows = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise ParseError(path, n, "non-numeric value") from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(path, n, "ragged row")
    if not rows:
        raise ParseError(path, 1, "empty image")
    return np.array(rows)


def _write_pgm(path: Path, g: np.ndarray) -> None:
    lo, hi = float(g.min()), float(g.max())
    span = hi - lo
    q = np.zeros(g.shape, dtype=int) if span == 0 else np.rint((g - lo) / span * 65535).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n# range {lo!r} {hi!r}\n{g.shape[1]} {g.shape[0]}\n65535\n")
        for row in q:
            fh.write(" ".join(str(v) for v in row) + "\n")


def _read_pgm(path: Path) -> np.ndarray:
    lo = hi = None
    tokens = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if line.startswith("#"):
                parts = line.split()
                if len(parts) == 4 and parts[1] == "range":
                    lo, hi = float(parts[2]), float(parts[3])
                continue
            tokens += [(n, t) for t in line.split()]
    if not tokens or tokens[0][1] != "P2":
        raise ParseError(path, 1, "not a P2 PGM file")
    try:
        w, h, maxval = (int(t) for _, t in tokens[1:4])
        vals = np.array([int(t) for _, t in tokens[4:]], dtype=float)
    except ValueError:
        raise ParseError(path, tokens[min(len(tokens) - 1, 4)][0], "bad integer") from None
    if vals.size != w * h:
        raise ParseError(path, tokens[-1][0], f"expected {w * h} pixels, got {vals.size}")
    if lo is None:
        lo, hi = 0.0, float(maxval)
    return (lo + vals / maxval * (hi - lo)).reshape(h, w)


# ---------------------------------------------------------------- chains

def write_chains(path, chains: ChainSet) -> None:
    """CSV ``chain,iter,value`` with 1-based chain and iteration numbers."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iter", "value"])
        for j, chain in enumerate(chains.samples, 1):
            for t, v in enumerate(chain, 1):
                w.writerow([j, t, repr(float(v))])


def read_chains(path) -> ChainSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["chain", "iter", "value"]:
            raise ParseError(path, 1, "missing header chain,iter,value")
        data: dict = {}
        for n, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                j, t, v = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError):
                raise ParseError(path, n, "malformed row") from None
            data.setdefault(j, []).append((t, v))
    if not data:
        raise ParseError(path, 2, "no samples")
    chains = []
    for j in sorted(data):
        pts = sorted(data[j])
        if [t for t, _ in pts] != list(range(1, len(pts) + 1)):
            raise ParseError(path, 2, f"chain {j} iterations are not 1..n")
        chains.append([v for _, v in pts])
    return ChainSet.from_lists(chains)


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
