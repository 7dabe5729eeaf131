"""Numba kernels for the matrix-free hot path.

All kernels treat the state as a (dim, m) complex array whose columns are
independent trajectories.  Per-column arithmetic never mixes columns and
accumulates in a fixed order, so a column computed inside a batch is
bit-identical to the same column computed alone.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def h_apply(diag, omega, indptr, indices, psi, out):
    """out = diag * psi - omega * (sum of psi over flip partners)."""
    n, m = psi.shape
    for i in range(n):
        for c in range(m):
            out[i, c] = 0.0 + 0.0j
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            for c in range(m):
                out[i, c] += psi[j, c]
        for c in range(m):
            out[i, c] = diag[i] * psi[i, c] - omega * out[i, c]


@njit(cache=True, nogil=True)
def gather_flips(indptr, indices, psi, out):
    """out = sum of psi over flip partners (unit weights)."""
    n, m = psi.shape
    for i in range(n):
        for c in range(m):
            out[i, c] = 0.0 + 0.0j
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            for c in range(m):
                out[i, c] += psi[j, c]


@njit(cache=True, nogil=True)
def col_norms(psi, out):
    """Squared norm of every column, accumulated in row order."""
    n, m = psi.shape
    for c in range(m):
        out[c] = 0.0
    for i in range(n):
        for c in range(m):
            v = psi[i, c]
            out[c] += v.real * v.real + v.imag * v.imag


@njit(cache=True, nogil=True)
def block_sums(p2, offsets, out):
    """Per-column sums of a real array over contiguous index blocks."""
    nblocks = offsets.shape[0] - 1
    m = p2.shape[1]
    for b in range(nblocks):
        for c in range(m):
            out[b, c] = 0.0
        for i in range(offsets[b], offsets[b + 1]):
            for c in range(m):
                out[b, c] += p2[i, c]
