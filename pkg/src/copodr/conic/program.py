"""Standard-form conic programs.

A :class:`ConicProgram` is ``min c'z + offset  s.t.  A z = b`` with ``z``
partitioned into consecutive blocks: free, nonnegative, second-order cones
(radius first) and positive semidefinite matrices stored as scaled
upper-triangle vectors (see :mod:`copodr._linalg`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .._linalg import svec_len

KINDS = ("free", "nonneg", "soc", "psd")


@dataclass(eq=False)
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    n_free: int
    n_nonneg: int
    soc: tuple[int, ...] = ()
    psd: tuple[int, ...] = ()
    offset: float = 0.0
    labels: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.soc = tuple(int(d) for d in self.soc)
        self.psd = tuple(int(d) for d in self.psd)
        if self.A.shape != (self.b.size, self.c.size):
            raise ValueError(f"A has shape {self.A.shape}, expected {(self.b.size, self.c.size)}")
        if self.n != self.c.size:
            raise ValueError(f"cone sizes add up to {self.n}, but c has length {self.c.size}")
        if any(d < 1 for d in self.soc) or any(d < 1 for d in self.psd):
            raise ValueError("cone dimensions must be positive")

    @property
    def n(self) -> int:
        return self.n_free + self.n_nonneg + sum(self.soc) + sum(svec_len(d) for d in self.psd)

    @property
    def m(self) -> int:
        return self.b.size

    def cone_slices(self):
        """Yield ``(kind, dim, slice)`` for every cone block after the free part."""
        pos = self.n_free
        if self.n_nonneg:
            yield "nonneg", self.n_nonneg, slice(pos, pos + self.n_nonneg)
        pos += self.n_nonneg
        for d in self.soc:
            yield "soc", d, slice(pos, pos + d)
            pos += d
        for d in self.psd:
            L = svec_len(d)
            yield "psd", d, slice(pos, pos + L)
            pos += L

    def objective(self, z) -> float:
        return float(self.c @ z + self.offset)

    def summary(self) -> str:
        return (f"{self.m} rows, {self.n} vars (free {self.n_free}, nonneg {self.n_nonneg}, "
                f"soc {len(self.soc)}, psd {len(self.psd)}"
                + (f" max side {max(self.psd)}" if self.psd else "") + f"), nnz {self.A.nnz}")


@dataclass
class Solution:
    status: str
    z: np.ndarray
    y: np.ndarray
    s: np.ndarray
    objective: float
    dual_objective: float
    residuals: dict
    iterations: int = 0
    solve_time: float = 0.0
    backend: str = ""
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class ConicBuilder:
    """Incremental construction of a :class:`ConicProgram`.

    Variables are created as blocks of a given kind; equality rows are added
    as sums of sparse blocks ``sum_k M_k z_k = rhs``.  ``build`` orders the
    blocks by kind and returns the program with a label map.
    """

    def __init__(self) -> None:
        self._blocks: list[tuple[str, int, str | None]] = []
        self._cost: dict[int, np.ndarray] = {}
        self._rows = 0
        self._r: list[np.ndarray] = []
        self._b: list[np.ndarray] = []
        self._bc: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.offset = 0.0

    def var(self, kind: str, size: int, name: str | None = None) -> int:
        if kind not in KINDS:
            raise ValueError(f"unknown cone kind {kind!r}")
        if size < 0 or (kind in ("soc", "psd") and size < 1):
            raise ValueError("invalid block size")
        self._blocks.append((kind, int(size), name))
        return len(self._blocks) - 1

    def length(self, h: int) -> int:
        kind, size, _ = self._blocks[h]
        return svec_len(size) if kind == "psd" else size

    def cost(self, h: int, vec) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.length(h),):
            raise ValueError("cost vector has wrong length")
        self._cost[h] = self._cost.get(h, 0) + vec

    def rows(self, terms, rhs) -> slice:
        rhs = np.asarray(rhs, dtype=float).ravel()
        r = rhs.size
        for h, Mat in terms:
            Mat = sp.coo_matrix(Mat)
            if Mat.shape != (r, self.length(h)):
                raise ValueError(f"block term has shape {Mat.shape}, expected {(r, self.length(h))}")
            if Mat.nnz:
                self._r.append(Mat.row.astype(np.int64) + self._rows)
                self._b.append(np.full(Mat.nnz, h, dtype=np.int64))
                self._bc.append(Mat.col.astype(np.int64))
                self._v.append(Mat.data.astype(float))
        self._rhs.append(rhs)
        out = slice(self._rows, self._rows + r)
        self._rows += r
        return out

    def build(self) -> tuple[ConicProgram, dict[int, np.ndarray]]:
        order = []
        for kind in KINDS:
            order += [h for h, blk in enumerate(self._blocks) if blk[0] == kind]
        start = np.zeros(len(self._blocks), dtype=np.int64)
        pos = 0
        for h in order:
            start[h] = pos
            pos += self.length(h)
        n = pos
        if self._r:
            rows = np.concatenate(self._r)
            cols = start[np.concatenate(self._b)] + np.concatenate(self._bc)
            vals = np.concatenate(self._v)
            A = sp.csr_matrix((vals, (rows, cols)), shape=(self._rows, n))
        else:
            A = sp.csr_matrix((self._rows, n))
        b = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        c = np.zeros(n)
        for h, vec in self._cost.items():
            c[start[h]:start[h] + self.length(h)] += vec
        index = {h: np.arange(start[h], start[h] + self.length(h)) for h in range(len(self._blocks))}
        labels = {}
        for h, (kind, size, name) in enumerate(self._blocks):
            if name is not None:
                labels[name] = index[h]
        count = {k: [blk for blk in self._blocks if blk[0] == k] for k in KINDS}
        prog = ConicProgram(
            c=c, A=A, b=b,
            n_free=sum(s for _, s, _ in count["free"]),
            n_nonneg=sum(s for _, s, _ in count["nonneg"]),
            soc=tuple(s for _, s, _ in count["soc"]),
            psd=tuple(s for _, s, _ in count["psd"]),
            offset=self.offset,
            labels=labels,
        )
        return prog, index
