"""Grid graph Laplacian, the smoothing precision and its Cholesky factor.

The precision ``L + p**-2 I`` is banded with half-bandwidth ``J`` under the
row-major bin ordering, so it is factorised once with LAPACK's banded
Cholesky and every whitening is a banded triangular solve.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .errors import InvalidArgumentError, NumericalError
from .grid import BinWeights, GridSpec


@dataclass(frozen=True)
class GridLaplacian:
    """Graph Laplacian of the 4-neighbour bin graph plus its precision factor.

    ``chol_band`` holds the upper factor ``U`` (``upsilon = U.T @ U``) in
    LAPACK upper band storage with ``bandwidth`` superdiagonals.
    """

    l: sp.csr_matrix
    p: int
    bandwidth: int
    upsilon: Optional[sp.csr_matrix] = None
    chol_band: Optional[np.ndarray] = None

    def _require_factor(self):
        if self.chol_band is None:
            raise InvalidArgumentError("precision not built; call build_precision first")

    def chol_upper(self) -> sp.csr_matrix:
        """The Cholesky factor ``U`` as a sparse upper-triangular matrix."""
        self._require_factor()
        u = self.bandwidth
        offsets = list(range(u + 1))
        diags = [self.chol_band[u - d, d:] for d in offsets]
        return sp.diags(diags, offsets, shape=(self.p, self.p), format="csr")

    def whiten(self, z: np.ndarray) -> np.ndarray:
        """Solve ``U x = z`` (``z`` may hold several right-hand sides as columns)."""
        self._require_factor()
        z = np.asarray(z, dtype=float)
        b = z.reshape(self.p, -1)
        x, info = lapack.dtbtrs(self.chol_band, b, uplo="U", trans="N", diag="N")
        if info != 0:
            raise NumericalError(f"banded triangular solve failed (info={info})")
        return x.reshape(z.shape)


def build_laplacian(grid: GridSpec) -> GridLaplacian:
    """Laplacian of the graph joining horizontally and vertically adjacent bins."""
    J, K = grid.j_bins, grid.k_bins
    idx = np.arange(grid.p).reshape(K, J)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    edges = np.hstack([horiz, vert])
    rows = np.concatenate([edges[0], edges[1]])
    cols = np.concatenate([edges[1], edges[0]])
    adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(grid.p, grid.p))
    degree = np.asarray(adj.sum(axis=1)).ravel()
    lap = (sp.diags(degree) - adj).tocsr()
    lap.sort_indices()
    bandwidth = J if K > 1 else min(1, J - 1)
    return GridLaplacian(l=lap, p=grid.p, bandwidth=bandwidth)


def build_precision(lap: GridLaplacian, grid: GridSpec) -> GridLaplacian:
    """Add ``p**-2 I`` to the Laplacian and factorise the result once."""
    if lap.p != grid.p:
        raise InvalidArgumentError(f"Laplacian has {lap.p} nodes, grid has {grid.p} bins")
    p = grid.p
    upsilon = (lap.l + sp.identity(p, format="csr") / p**2).tocsr()
    u = lap.bandwidth
    band = np.zeros((u + 1, p))
    coo = upsilon.tocoo()
    upper = coo.col >= coo.row
    r, c = coo.row[upper], coo.col[upper]
    if np.any(c - r > u):
        raise NumericalError("precision matrix exceeds the expected bandwidth")
    band[u + r - c, c] = coo.data[upper]
    chol, info = lapack.dpbtrf(band, lower=0)
    if info != 0:
        raise NumericalError(f"Cholesky factorisation of the precision failed (info={info})")
    return replace(lap, upsilon=upsilon, chol_band=chol)


def grid_precision(grid: GridSpec) -> GridLaplacian:
    return build_precision(build_laplacian(grid), grid)


def softmax(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    # a shifted entry may overflow to -inf, whose exponential is the correct 0
    with np.errstate(over="ignore"):
        e = np.exp(h - h.max(axis=0))
    return e / e.sum(axis=0)


def theta_from_latent(lap: GridLaplacian, zvec, tau: float) -> BinWeights:
    """Map whitened coordinates to bin weights: ``softmax(U^{-1} z sqrt(tau))``."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    zvec = np.asarray(zvec, dtype=float)
    if zvec.shape != (lap.p,):
        raise InvalidArgumentError(f"latent vector must have length {lap.p}")
    return BinWeights(softmax(lap.whiten(zvec) * np.sqrt(tau)))
