"""Current-status observations, their shaded-area vectors and the likelihood.

An observation ``(t, z)`` with ``z > 0`` says the event happened before
``t`` with mark ``z``; ``z == 0`` says it had not happened by ``t``.  On a
grid, either case restricts the latent ``(x, y)`` to a union of (partial)
bins.  The fraction of each bin that is compatible is stored sparsely in a
:class:`CensoringInfo`, so that ``theta @ a`` is the likelihood contribution
up to factors that do not depend on ``theta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_legendre

from .errors import DataValidationError, DomainError, InvalidArgumentError
from .grid import BinWeights, GridSpec, cdf_at, check_same_grid


@dataclass(frozen=True)
class Observation:
    t: float
    z: float

    def __post_init__(self):
        if not (np.isfinite(self.t) and np.isfinite(self.z)):
            raise DomainError(f"non-finite observation ({self.t}, {self.z})")
        if self.t < 0 or self.z < 0:
            raise DomainError(f"negative observation ({self.t}, {self.z})")


@dataclass(frozen=True)
class CensoringInfo:
    """Sparse vector of shaded-area fractions, indexed by linear bin index."""

    indices: np.ndarray = field(repr=False)
    fractions: np.ndarray = field(repr=False)

    def dot(self, theta) -> float:
        return float(np.dot(np.asarray(theta)[self.indices], self.fractions))

    def __len__(self):
        return self.indices.size


def _check_observation(grid: GridSpec, t: float, z: float):
    if t < 0 or t > grid.m1:
        raise DomainError(f"inspection time t={t} outside [0, {grid.m1}]")
    if z < 0 or z > grid.m2:
        raise DomainError(f"mark z={z} outside [0, {grid.m2}]")


def censoring_info(grid: GridSpec, obs: Observation) -> CensoringInfo:
    """Shaded-area fractions of ``obs`` on ``grid``.

    For ``z > 0`` the shaded region is ``{x <= t}`` inside the mark row
    containing ``z``; for ``z == 0`` it is ``{x > t}`` over all rows.
    """
    t, z = float(obs.t), float(obs.z)
    _check_observation(grid, t, z)
    xe = grid.x_edges
    widths = np.diff(xe)
    below = np.clip((t - xe[:-1]) / widths, 0.0, 1.0)
    if z > 0:
        cols = np.flatnonzero(below > 0)
        k = int(grid.row_of(z))
        indices = k * grid.j_bins + cols
        fractions = below[cols]
    else:
        above = 1.0 - below
        cols = np.flatnonzero(above > 0)
        rows = np.arange(grid.k_bins)
        indices = (rows[:, None] * grid.j_bins + cols[None, :]).ravel()
        fractions = np.tile(above[cols], grid.k_bins)
    return CensoringInfo(indices.astype(np.int64), fractions.astype(float))


class ShadingMatrix:
    """Observations' shaded-area vectors stacked as a CSR matrix (n x p)."""

    def __init__(self, infos: Sequence[CensoringInfo], p: int):
        n = len(infos)
        indptr = np.zeros(n + 1, dtype=np.int64)
        if n:
            indptr[1:] = np.cumsum([len(a) for a in infos])
            indices = np.concatenate([a.indices for a in infos])
            data = np.concatenate([a.fractions for a in infos])
        else:
            indices = np.zeros(0, dtype=np.int64)
            data = np.zeros(0)
        if indices.size and (indices.min() < 0 or indices.max() >= p):
            raise InvalidArgumentError("censoring info refers to a bin outside the grid")
        self.p = p
        self.matrix = sp.csr_matrix((data, indices, indptr), shape=(n, p))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def masses(self, theta: np.ndarray) -> np.ndarray:
        """``theta @ a_i`` for every observation."""
        return self.matrix @ theta

    def empty_rows(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.matrix.indptr) == 0)


def compile_infos(infos, p: int) -> ShadingMatrix:
    if isinstance(infos, ShadingMatrix):
        if infos.p != p:
            raise InvalidArgumentError(f"shading matrix built for {infos.p} bins, weights have {p}")
        return infos
    return ShadingMatrix(list(infos), p)


def build_shading(grid: GridSpec, data: Sequence[Observation]) -> ShadingMatrix:
    """Compile a dataset for the samplers, rejecting impossible observations.

    An observation whose shaded region is empty (``t = 0`` with a mark, or
    ``t = m1`` without one) has zero likelihood under every weight vector.
    """
    infos = []
    for row, obs in enumerate(data):
        try:
            infos.append(censoring_info(grid, obs))
        except DomainError as exc:
            raise DataValidationError(f"observation {row} ({obs.t}, {obs.z}): {exc}") from exc
    shading = ShadingMatrix(infos, grid.p)
    empty = shading.empty_rows()
    if empty.size:
        obs = data[int(empty[0])]
        raise DataValidationError(
            f"observation {int(empty[0])} ({obs.t}, {obs.z}) has zero probability under any density on the grid"
        )
    return shading


def loglik(w, infos) -> float:
    """Sum over observations of ``log(theta @ a_i)``.

    This is the log-likelihood up to an additive constant that does not
    depend on ``theta``: the censoring density terms ``sum(log g(t_i))``
    and ``-log(dy)`` for every observation with a mark.  Returns ``-inf``
    if any observation has zero probability.
    """
    theta = w.theta if isinstance(w, BinWeights) else np.asarray(w, dtype=float)
    shading = compile_infos(infos, theta.size)
    if shading.n == 0:
        return 0.0
    m = shading.masses(theta)
    if np.any(m <= 0):
        return -np.inf
    return float(np.sum(np.log(m)))


def mu_density(grid: GridSpec, w: BinWeights, g: Callable, t: float, z: float) -> float:
    """Density of ``(T, Z)`` with respect to Lebesgue measure plus the ``z = 0`` line.

    Computed from the joint distribution function: the survival part is
    ``1 - F(t, m2)`` and the mark part is the slope of ``F(t, .)`` across the
    mark row containing ``z`` (``F`` is linear in ``z`` within a row).
    """
    check_same_grid(grid, w)
    t, z = float(t), float(z)
    _check_observation(grid, t, z)
    gt = float(g(t))
    if z == 0:
        return gt * (1.0 - cdf_at(grid, w, t, grid.m2))
    k = int(grid.row_of(z))
    lo, hi = grid.y_edges[k], grid.y_edges[k + 1]
    slope = (cdf_at(grid, w, t, hi) - cdf_at(grid, w, t, lo)) / (hi - lo)
    return gt * max(slope, 0.0)


def l1_mu_distance(grid: GridSpec, w1: BinWeights, w2: BinWeights, g: Callable,
                   nodes: int = 32, return_error: bool = False):
    """L1 distance between the observation densities induced by two weight vectors.

    The integral runs over the ``z > 0`` sheet (Lebesgue) plus the ``z = 0``
    line.  Both pieces reduce to one-dimensional integrals of ``g`` times a
    piecewise-linear function of ``t``; each linear piece is split at its
    root so Gauss-Legendre integrates a smooth integrand.  ``g`` must accept
    numpy arrays.  With ``return_error`` the difference to a half-order rule
    is returned as well.
    """
    check_same_grid(grid, w1)
    check_same_grid(grid, w2)
    diff = (w1.theta - w2.theta).reshape(grid.k_bins, grid.j_bins)
    # one profile per mark row (integrated over the row the dy factors cancel),
    # plus the column sums for the z = 0 line
    delta = np.vstack([diff, diff.sum(axis=0, keepdims=True)])
    a = np.cumsum(delta, axis=1) - delta
    b = delta
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(b != 0, -a / b, np.inf)
    split = np.where((root > 0) & (root < 1), root, 1.0)

    def integrate(order):
        x, wq = roots_legendre(order)
        u = (x + 1) / 2
        wq = wq / 2
        xe = grid.x_edges
        width = np.diff(xe)
        total = 0.0
        for lo, hi in ((np.zeros_like(split), split), (split, np.ones_like(split))):
            s = lo[..., None] + (hi - lo)[..., None] * u
            t = xe[:-1][None, :, None] + s * width[None, :, None]
            h = np.abs(a[..., None] + b[..., None] * s)
            gv = np.asarray(g(t), dtype=float)
            total += np.sum(gv * h * wq * ((hi - lo) * width[None, :])[..., None])
        return float(total)

    value = integrate(nodes)
    if return_error:
        return value, abs(value - integrate(max(nodes // 2, 2)))
    return value
