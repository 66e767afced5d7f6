"""Symmetric-matrix vectorization helpers shared across modules.

Symmetric matrices are vectorized over their upper triangle in
column-major order, i.e. entries (0,0), (0,1), (1,1), (0,2), ... .
The *scaled* form multiplies off-diagonal entries by sqrt(2) so that
the Euclidean inner product of two vectors equals the trace inner
product of the matrices.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

SQRT2 = np.sqrt(2.0)


def svec_len(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=64)
def triu_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the vectorization order."""
    cols = np.concatenate([np.full(j + 1, j) for j in range(n)]) if n else np.zeros(0, int)
    rows = np.concatenate([np.arange(j + 1) for j in range(n)]) if n else np.zeros(0, int)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def svec_pos(i, j):
    """Position of entry (i, j) in the vectorization (order of i, j irrelevant)."""
    i, j = np.minimum(i, j), np.maximum(i, j)
    return j * (j + 1) // 2 + i


@lru_cache(maxsize=64)
def _scale(n: int) -> np.ndarray:
    r, c = triu_indices(n)
    s = np.where(r == c, 1.0, SQRT2)
    s.setflags(write=False)
    return s


def svec(M: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    r, c = triu_indices(M.shape[0])
    return M[r, c] * _scale(M.shape[0])


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    n = int(round((np.sqrt(8 * len(v) + 1) - 1) / 2))
    r, c = triu_indices(n)
    M = np.zeros((n, n))
    M[r, c] = v / _scale(n)
    M[c, r] = M[r, c]
    return M


def uvec(M: np.ndarray) -> np.ndarray:
    """Unscaled upper-triangle vectorization."""
    M = np.asarray(M, dtype=float)
    r, c = triu_indices(M.shape[0])
    return M[r, c].copy()


def umat(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`uvec`."""
    v = np.asarray(v, dtype=float)
    n = int(round((np.sqrt(8 * len(v) + 1) - 1) / 2))
    r, c = triu_indices(n)
    M = np.zeros((n, n))
    M[r, c] = v
    M[c, r] = v
    return M


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def sym_outer_svec(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sparse scaled svec of 0.5*(a b' + b a') as (positions, values)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sup = np.flatnonzero((a != 0) | (b != 0))
    if sup.size == 0:
        return np.zeros(0, int), np.zeros(0)
    aa, bb = a[sup], b[sup]
    M = 0.5 * (np.outer(aa, bb) + np.outer(bb, aa))
    iu, ju = np.triu_indices(sup.size)
    vals = M[iu, ju]
    gi, gj = sup[iu], sup[ju]
    vals = np.where(gi == gj, vals, vals * SQRT2)
    keep = vals != 0
    return svec_pos(gi[keep], gj[keep]), vals[keep]


def dense_svec_sparse(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero entries of svec(M) as (positions, values)."""
    v = svec(M)
    nz = np.flatnonzero(v)
    return nz, v[nz]


class TripletBuilder:
    """Accumulates (row, col, value) triplets for a sparse matrix."""

    def __init__(self) -> None:
        self._r: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self._v: list[np.ndarray] = []

    def add(self, rows, col_or_cols, vals) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            return
        cols = np.broadcast_to(np.asarray(col_or_cols, dtype=np.int64), rows.shape)
        self._r.append(rows)
        self._c.append(np.array(cols))
        self._v.append(np.asarray(vals, dtype=float))

    def tocsc(self, shape) -> sp.csc_matrix:
        if not self._r:
            return sp.csc_matrix(shape)
        r = np.concatenate(self._r)
        c = np.concatenate(self._c)
        v = np.concatenate(self._v)
        return sp.csc_matrix((v, (r, c)), shape=shape)
