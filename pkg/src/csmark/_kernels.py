"""Compiled inner loops."""
import numpy as np
from numba import njit


@njit(cache=True)
def impute_csr(data, indices, indptr, theta, u):
    """Pick one entry per CSR row with probability proportional to ``data * theta``.

    ``u`` holds one uniform per row.  Returns the chosen column per row, or
    ``-(row + 1)`` for the first row whose total mass is zero.
    """
    n = indptr.size - 1
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo = indptr[i]
        hi = indptr[i + 1]
        total = 0.0
        for k in range(lo, hi):
            total += data[k] * theta[indices[k]]
        if not total > 0.0:
            out[0] = -(i + 1)
            return out[:1]
        target = u[i] * total
        acc = 0.0
        chosen = -1
        for k in range(lo, hi):
            w = data[k] * theta[indices[k]]
            if w > 0.0:
                chosen = k
                acc += w
                if acc > target:
                    break
        out[i] = indices[chosen]
    return out
