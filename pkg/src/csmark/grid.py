"""Rectangular bin partitions and piecewise-constant densities on them.

Bins are indexed row-major over mark rows: bin ``(j, k)`` (time column
``j``, mark row ``k``) has linear index ``k * J + j``.  Every other module
relies on this ordering.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidArgumentError, NumericalError

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Partition of ``[0, m1] x [0, m2]`` into ``j_bins x k_bins`` equal cells."""

    m1: float
    m2: float
    j_bins: int
    k_bins: int

    def __post_init__(self):
        if not (self.m1 > 0 and self.m2 > 0):
            raise InvalidArgumentError(f"support bounds must be positive, got m1={self.m1}, m2={self.m2}")
        if int(self.j_bins) != self.j_bins or int(self.k_bins) != self.k_bins:
            raise InvalidArgumentError("bin counts must be integers")
        if self.j_bins < 1 or self.k_bins < 1:
            raise InvalidArgumentError(f"bin counts must be >= 1, got {self.j_bins}x{self.k_bins}")
        object.__setattr__(self, "m1", float(self.m1))
        object.__setattr__(self, "m2", float(self.m2))
        object.__setattr__(self, "j_bins", int(self.j_bins))
        object.__setattr__(self, "k_bins", int(self.k_bins))

    @property
    def dx(self) -> float:
        return self.m1 / self.j_bins

    @property
    def dy(self) -> float:
        return self.m2 / self.k_bins

    @property
    def p(self) -> int:
        return self.j_bins * self.k_bins

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def x_edges(self) -> np.ndarray:
        return self.m1 * np.arange(self.j_bins + 1) / self.j_bins

    @property
    def y_edges(self) -> np.ndarray:
        return self.m2 * np.arange(self.k_bins + 1) / self.k_bins

    def index_of(self, j: int, k: int) -> int:
        if not (0 <= j < self.j_bins and 0 <= k < self.k_bins):
            raise InvalidArgumentError(f"bin ({j}, {k}) outside a {self.j_bins}x{self.k_bins} grid")
        return k * self.j_bins + j

    def coords_of(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.p:
            raise InvalidArgumentError(f"bin index {index} outside [0, {self.p})")
        k, j = divmod(int(index), self.j_bins)
        return j, k

    def column_of(self, x):
        """Time column containing ``x`` (half-open bins, last one closed)."""
        j = np.searchsorted(self.x_edges, x, side="right") - 1
        return np.minimum(j, self.j_bins - 1)

    def row_of(self, y):
        """Mark row containing ``y`` (half-open bins, last one closed)."""
        k = np.searchsorted(self.y_edges, y, side="right") - 1
        return np.minimum(k, self.k_bins - 1)

    def check_support(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)):
            raise DomainError("non-finite coordinate")
        if np.any(x < 0) or np.any(x > self.m1) or np.any(y < 0) or np.any(y > self.m2):
            raise DomainError(f"point outside support [0, {self.m1}] x [0, {self.m2}]")
        return x, y


def make_grid(m1: float, m2: float, j_bins: int, k_bins: int) -> GridSpec:
    return GridSpec(m1, m2, j_bins, k_bins)


@dataclass(frozen=True)
class BinWeights:
    """Probability vector over the bins of a grid."""

    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if theta.size == 0:
            raise InvalidArgumentError("empty weight vector")
        if not np.all(np.isfinite(theta)) or np.any(theta < 0):
            raise InvalidArgumentError("weights must be finite and nonnegative")
        total = theta.sum()
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvalidArgumentError(f"weights sum to {total!r}, not 1")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def normalized(cls, values) -> "BinWeights":
        values = np.asarray(values, dtype=float)
        if np.any(values < 0):
            raise InvalidArgumentError("weights must be nonnegative")
        total = values.sum()
        if not total > 0:
            raise InvalidArgumentError("weights have zero total mass")
        return cls(values / total)

    @classmethod
    def uniform(cls, p: int) -> "BinWeights":
        return cls(np.full(p, 1.0 / p))

    def __len__(self):
        return self.theta.size

    def as_grid(self, grid: GridSpec) -> np.ndarray:
        """Weights laid out as a ``(k_bins, j_bins)`` array, mark row first."""
        check_same_grid(grid, self)
        return self.theta.reshape(grid.k_bins, grid.j_bins)


def check_same_grid(grid: GridSpec, w: BinWeights):
    if len(w) != grid.p:
        raise InvalidArgumentError(f"weight vector has {len(w)} entries, grid has {grid.p} bins")


def density_at(grid: GridSpec, w: BinWeights, x, y):
    """Value of the piecewise-constant density ``theta_l / (dx * dy)`` at ``(x, y)``."""
    check_same_grid(grid, w)
    x, y = grid.check_support(x, y)
    idx = grid.row_of(y) * grid.j_bins + grid.column_of(x)
    out = w.theta[idx] / grid.cell_area
    return float(out) if out.ndim == 0 else out


def _overlap_fractions(edges: np.ndarray, upper) -> np.ndarray:
    """Fraction of each cell ``[edges[i], edges[i+1])`` lying below ``upper``."""
    upper = np.asarray(upper, dtype=float)[..., None]
    widths = np.diff(edges)
    return np.clip((upper - edges[:-1]) / widths, 0.0, 1.0)


def cdf_at(grid: GridSpec, w: BinWeights, x, y):
    """Joint distribution function ``F(x, y)``, exact for the piecewise-constant density."""
    check_same_grid(grid, w)
    x, y = grid.check_support(x, y)
    fx = _overlap_fractions(grid.x_edges, x)
    fy = _overlap_fractions(grid.y_edges, y)
    table = w.theta.reshape(grid.k_bins, grid.j_bins)
    out = np.einsum("...k,kj,...j->...", fy, table, fx)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _midpoint_row(f, grid: GridSpec, k: int, n: int) -> np.ndarray:
    """Midpoint-rule integrals of ``f`` over every bin of mark row ``k``."""
    xe, ye = grid.x_edges, grid.y_edges
    sub = (np.arange(n) + 0.5) / n
    xs = (xe[:-1, None] + np.diff(xe)[:, None] * sub[None, :]).ravel()
    ys = ye[k] + (ye[k + 1] - ye[k]) * sub
    vals = np.asarray(f(xs[None, :], ys[:, None]), dtype=float)
    vals = np.broadcast_to(vals, (n, xs.size)).reshape(n, grid.j_bins, n)
    return vals.mean(axis=(0, 2)) * grid.cell_area


def true_bin_masses(grid: GridSpec, f: Callable, tol: float = 1e-9) -> BinWeights:
    """Integrate a density over every bin of ``grid``.

    Uses tensor-product midpoint rules with 16, 32 and 64 points per axis
    and per bin, Richardson-extrapolated (exact for polynomials of degree
    three per axis).  ``f`` must accept broadcastable numpy arrays.

    Raises
    ------
    NumericalError
        If two successive extrapolants differ by more than ``tol`` in
        total, or ``f`` returns negative / non-finite values.
    """
    masses = np.empty(grid.p)
    err = np.empty(grid.p)
    for k in range(grid.k_bins):
        m16, m32, m64 = (_midpoint_row(f, grid, k, n) for n in (16, 32, 64))
        r_coarse = (4.0 * m32 - m16) / 3.0
        r_fine = (4.0 * m64 - m32) / 3.0
        sl = slice(k * grid.j_bins, (k + 1) * grid.j_bins)
        masses[sl] = r_fine
        err[sl] = np.abs(r_fine - r_coarse)
    if not np.all(np.isfinite(masses)):
        raise NumericalError("density returned non-finite values")
    if err.sum() > tol:
        worst = int(np.argmax(err))
        raise NumericalError(
            f"bin-mass quadrature did not converge: total error estimate {err.sum():.3e} > {tol:.1e}, "
            f"worst bin {grid.coords_of(worst)} with {err[worst]:.3e}"
        )
    if np.any(masses < -tol):
        raise NumericalError("density integrates to a negative mass on some bin")
    masses = np.clip(masses, 0.0, None)
    total = masses.sum()
    if abs(total - 1.0) > 1e-6:
        logger.warning("density integrates to %.9f over the support; renormalising", total)
    return BinWeights.normalized(masses)
