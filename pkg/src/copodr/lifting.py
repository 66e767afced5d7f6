"""Piecewise-linear liftings of uncertainty sets.

A fold ``f = (g, -h)`` adds the parameter ``w = max{0, f'u}``.  Over the
lifted vector ``v = (w, u, 1)`` the graph of the folds is the cone slice

    0 <= w <= wbar,   w >= f'u,   w (w - f'u) = 0,

where ``wbar = max f'u`` over the set without quadratic equalities.  Linear
rules in ``v`` are piecewise linear in ``u``.

In multi-stage problems each fold belongs to the latest stage it reads, and
the lifted vector keeps the stage order: stage ``t`` contributes
``(w_t, u_t)``, the constant comes last.

Axial segmentations (breakpoints per coordinate) are folds ``(e_k, -h)``;
for them this module also builds the linear outer set ``U**`` and the set
``U*`` with 3x3 moment blocks, both as :class:`~copodr.geometry.ConicSet`
objects over the lifted vector, for use as robust-counterpart sets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._linalg import svec_len, svec_pos
from .geometry import ConicSet, bounding_box, support
from .model import ConeK, ModelError, MsroProblem, UncertaintySet


# ---------------------------------------------------------------------------
# fold liftings

@dataclass(eq=False)
class Lifting:
    base: UncertaintySet
    base_dims: tuple
    f_vecs: np.ndarray
    w_upper: np.ndarray
    fold_stage: np.ndarray
    dims: tuple
    pos_u: np.ndarray
    pos_w: np.ndarray
    uncertainty: UncertaintySet | None = None
    comp_mats: tuple = ()
    hull_status: str = "none"

    @property
    def L(self) -> int:
        return self.f_vecs.shape[0]

    @property
    def dim(self) -> int:
        return int(sum(self.dims)) + 1

    def embed_index(self) -> np.ndarray:
        """Lifted position of every base coordinate (constant included)."""
        return np.r_[self.pos_u, self.dim - 1]

    def fold_values(self, u) -> np.ndarray:
        return np.maximum(0.0, self.f_vecs @ np.asarray(u, dtype=float))

    def lift(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.zeros(self.dim)
        v[self.embed_index()] = u
        v[self.pos_w] = self.fold_values(u)
        return v

    def project(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float)[self.embed_index()]


def _layout(base_dims: Sequence[int], fold_stage: np.ndarray):
    T = len(base_dims)
    Kb = int(sum(base_dims))
    dims, pos_u, pos_w = [], np.zeros(Kb, dtype=np.int64), np.zeros(fold_stage.size, dtype=np.int64)
    pos = 0
    off = 0
    for t in range(1, T + 1):
        ws = np.flatnonzero(fold_stage == t)
        pos_w[ws] = pos + np.arange(ws.size)
        pos += ws.size
        kt = base_dims[t - 1]
        pos_u[off:off + kt] = pos + np.arange(kt)
        pos += kt
        off += kt
        dims.append(ws.size + kt)
    return tuple(dims), pos_u, pos_w


def make_lifting(U: UncertaintySet, f_vecs, stage_dims: Sequence[int] | None = None,
                 hull: bool = True) -> Lifting:
    """Lift ``U`` by the folds ``max{0, f'u}`` (rows of ``f_vecs``).

    ``wbar`` is computed by one support problem per fold over the set
    without quadratic equalities.  With ``hull`` the exact convex hull of
    the lifted set is attached when it can be built and every facet is
    verified to be certifiable in the inner cone (box sets with axis folds).
    """
    f_vecs = np.atleast_2d(np.asarray(f_vecs, dtype=float)).reshape(-1, U.dim)
    stage_dims = tuple(stage_dims) if stage_dims is not None else (U.K,)
    if sum(stage_dims) != U.K:
        raise ModelError("stage dimensions do not add up to the set dimension")
    L = f_vecs.shape[0]
    wbar = np.zeros(L)
    S = ConicSet.from_uncertainty(U, use_hull=False)
    for ell in range(L):
        val, _, status = S.support(f_vecs[ell])
        if status == "unbounded":
            raise ModelError(f"fold {ell} is unbounded over the set; wbar does not exist")
        if status == "infeasible":
            raise ModelError("the uncertainty set is empty")
        wbar[ell] = max(val, 0.0)
    ends = np.cumsum(stage_dims)
    stage = np.ones(L, dtype=np.int64)
    for ell in range(L):
        nz = np.flatnonzero(f_vecs[ell, :-1])
        if nz.size:
            stage[ell] = int(np.searchsorted(ends, nz.max(), side="right")) + 1
    dims, pos_u, pos_w = _layout(stage_dims, stage)
    lf = Lifting(U, stage_dims, f_vecs, wbar, stage, dims, pos_u, pos_w)
    n2 = lf.dim
    emb = lf.embed_index()
    base_cone = U.cone.embed(emb, n2)
    rows = [base_cone.P_rows]
    comp = []
    for ell in range(L):
        fe = np.zeros(n2)
        fe[emb] = f_vecs[ell]
        ew = np.zeros(n2)
        ew[pos_w[ell]] = 1.0
        up = -ew.copy()
        up[-1] = wbar[ell]
        rows += [ew[None], up[None], (ew - fe)[None]]
        comp.append(np.outer(ew, ew) - 0.5 * (np.outer(ew, fe) + np.outer(fe, ew)))
    cone = ConeK(np.vstack(rows), base_cone.soc_blocks)
    quads = []
    for C in U.quad_mats:
        Cn = np.zeros((n2, n2))
        Cn[np.ix_(emb, emb)] = C
        quads.append(Cn)
    lf.comp_mats = tuple(comp)
    H = None
    if hull:
        H, lf.hull_status = _hull_rows(lf)
    lf.uncertainty = UncertaintySet(cone, tuple(quads) + tuple(comp), H, origin=lf)
    return lf


# ---------------------------------------------------------------------------
# hull rows for box sets with axis folds

_HULL_CACHE: dict = {}


def _axis_folds(lf: Lifting):
    """Per axis the list of folds ``(ell, slope, kink)``, or None if not axial."""
    K = lf.base.K
    per = {k: [] for k in range(K)}
    for ell, f in enumerate(lf.f_vecs):
        nz = np.flatnonzero(f[:-1])
        if nz.size != 1:
            return None
        k = int(nz[0])
        per[k].append((ell, f[k], -f[-1] / f[k]))
    return per


def _is_box(U: UncertaintySet) -> bool:
    if U.cone.soc_blocks or U.quad_mats:
        return False
    return bool(np.all(np.count_nonzero(U.cone.P_rows[:, :-1], axis=1) <= 1))


def _hull_rows(lf: Lifting):
    from .cones import certify

    U = lf.base
    if not _is_box(U):
        return None, "not a box"
    per = _axis_folds(lf)
    if per is None:
        return None, "non-axial folds"
    lo, hi = bounding_box(U)
    n2 = lf.dim
    rows = []
    for k in range(U.K):
        folds = per[k]
        uk = lf.pos_u[k]
        if not folds:
            for s, b in ((1.0, -lo[k]), (-1.0, hi[k])):
                r = np.zeros(n2)
                r[uk] = s
                r[-1] = b
                rows.append(r)
            continue
        kinks = np.array([kk for _, _, kk in folds])
        if np.any(kinks <= lo[k] + 1e-12) or np.any(kinks >= hi[k] - 1e-12) or \
                np.unique(np.round(kinks, 12)).size != kinks.size:
            return None, f"degenerate folds on axis {k}"
        key = (lo[k], hi[k], tuple((s, kk) for _, s, kk in folds))
        facets = _HULL_CACHE.get(key)
        if facets is None:
            facets = _axis_hull(lo[k], hi[k], [(s, kk) for _, s, kk in folds])
            if facets is None:
                return None, f"degenerate hull on axis {k}"
            # certify every facet on the one-axis lifted set
            sub = _axis_set(lo[k], hi[k], [(s, kk) for _, s, kk in folds])
            for h in facets:
                V = 0.5 * (np.outer(h, _e(h.size)) + np.outer(_e(h.size), h))
                res = certify(V, sub, "IA")
                if res["status"] != "optimal" or res["t"] < -1e-7:
                    _HULL_CACHE[key] = False
                    return None, f"facet not certifiable on axis {k}"
            _HULL_CACHE[key] = facets
        if facets is False:
            return None, f"facet not certifiable on axis {k}"
        idx = np.r_[uk, lf.pos_w[[ell for ell, _, _ in folds]], n2 - 1]
        for h in facets:
            r = np.zeros(n2)
            r[idx] = h
            rows.append(r)
    e = _e(n2)
    rows.append(e)
    return np.array(rows), "verified"


def _e(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[-1] = 1.0
    return e


def _axis_nodes(lo, hi, folds):
    pts = np.unique(np.r_[lo, [kk for _, kk in folds], hi])
    out = []
    for u in pts:
        w = [max(0.0, s * u - s * kk) for s, kk in folds]
        out.append(np.r_[u, w, 1.0])
    return np.array(out)


def _axis_hull(lo, hi, folds):
    """Facets ``h' (u, w, 1) >= 0`` of the simplex spanned by the curve nodes."""
    Mn = _axis_nodes(lo, hi, folds)
    if Mn.shape[0] != Mn.shape[1] or np.linalg.matrix_rank(Mn) < Mn.shape[0]:
        return None
    H = np.linalg.inv(Mn.T)  # barycentric coordinates: H @ x = lambda
    H /= np.abs(H).max(axis=1, keepdims=True)
    return H


def _axis_set(lo, hi, folds) -> UncertaintySet:
    """One-axis lifted set over ``(u, w_1..w_m, 1)``."""
    m = len(folds)
    n = m + 2
    rows = []
    r = np.zeros(n); r[0] = 1; r[-1] = -lo; rows.append(r)
    r = np.zeros(n); r[0] = -1; r[-1] = hi; rows.append(r)
    comp = []
    for i, (s, kk) in enumerate(folds):
        f = np.zeros(n)
        f[0] = s
        f[-1] = -s * kk
        wbar = max(s * lo - s * kk, s * hi - s * kk, 0.0)
        ew = np.zeros(n)
        ew[1 + i] = 1
        up = -ew.copy()
        up[-1] = wbar
        rows += [ew, up, ew - f]
        comp.append(np.outer(ew, ew) - 0.5 * (np.outer(ew, f) + np.outer(f, ew)))
    return UncertaintySet(ConeK(np.array(rows)), tuple(comp))


def lifted_problem(P: MsroProblem, lf: Lifting) -> MsroProblem:
    """The problem restated over the lifted parameter (data do not depend on ``w``)."""
    if lf.base.dim != P.uncertainty.dim:
        raise ModelError("lifting was built for a different uncertainty set")
    if tuple(lf.base_dims) != tuple(P.stage_dims):
        if lf.base_dims == (P.K,) and P.T == 1:
            pass
        else:
            raise ModelError("lifting stage layout does not match the problem")
    if lf.L == 0:
        return P
    n2 = lf.dim
    emb = lf.embed_index()

    def widen(arr, axis=0):
        arr = np.asarray(arr)
        shape = list(arr.shape)
        shape[axis] = n2
        out = np.zeros(shape)
        sl = [slice(None)] * arr.ndim
        sl[axis] = emb
        out[tuple(sl)] = arr
        return out

    return MsroProblem(
        stage_dims=lf.dims,
        N=P.N,
        c=P.c,
        A_hat=widen(P.A_hat, 0),
        B_hat=tuple(widen(B, 0) for B in P.B_hat),
        D_hat=tuple(widen(D, 1) for D in P.D_hat),
        H_hat=widen(P.H_hat, 1),
        uncertainty=lf.uncertainty,
        X_G=P.X_G,
        X_g=P.X_g,
        sense=P.sense,
        d0=widen(P.d0, 0),
        names=dict(P.names),
    )


def midpoint_folds(U: UncertaintySet, axes: Sequence[int] | None = None) -> np.ndarray:
    """One fold ``max{0, u_k - m_k}`` per axis at the middle of its range."""
    lo, hi = bounding_box(U)
    axes = range(U.K) if axes is None else axes
    F = []
    for k in axes:
        f = np.zeros(U.dim)
        f[k] = 1.0
        f[-1] = -0.5 * (lo[k] + hi[k])
        F.append(f)
    return np.array(F).reshape(-1, U.dim)


# ---------------------------------------------------------------------------
# axial segmentation

@dataclass(eq=False)
class AxialSegmentation:
    """Breakpoints ``h_{k,1} = lo_k < h_{k,2} < ... < h_{k,L_k} < hi_k`` per axis."""

    breakpoints: list
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        self.breakpoints = [np.asarray(b, dtype=float).ravel() for b in self.breakpoints]
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        K = len(self.breakpoints)
        if self.lower.shape != (K,) or self.upper.shape != (K,):
            raise ModelError("bounds must have one entry per axis")
        for k, h in enumerate(self.breakpoints):
            if h.size == 0:
                raise ModelError(f"axis {k} needs at least the lower bound as breakpoint")
            if np.any(np.diff(h) <= 0):
                raise ModelError(f"breakpoints of axis {k} must be strictly increasing")
            if abs(h[0] - self.lower[k]) > 1e-9:
                raise ModelError(f"first breakpoint of axis {k} must equal its lower bound {self.lower[k]}")
            if h[-1] >= self.upper[k] and h.size > 1:
                raise ModelError(f"breakpoints of axis {k} must lie below the upper bound {self.upper[k]}")

    @classmethod
    def for_set(cls, U: UncertaintySet, breakpoints) -> "AxialSegmentation":
        lo, hi = bounding_box(U)
        return cls(breakpoints, lo, hi)

    @property
    def K(self) -> int:
        return len(self.breakpoints)

    def h(self, k: int) -> np.ndarray:
        """Breakpoints of axis ``k`` with ``h_{L+1} = hi_k`` appended."""
        return np.r_[self.breakpoints[k], self.upper[k]]

    def z_of(self, u) -> list[np.ndarray]:
        """``z_{k,l} = max(0, u_k - h_{k,l})`` for ``l = 1..L+1`` (last is 0)."""
        u = np.asarray(u, dtype=float)
        out = []
        for k in range(self.K):
            z = np.maximum(0.0, u[k] - self.h(k))
            z[0] = u[k] - self.lower[k]
            z[-1] = 0.0
            out.append(z)
        return out

    def w_of(self, u) -> list[np.ndarray]:
        return [z[:-1] - z[1:] for z in self.z_of(u)]


@dataclass(eq=False)
class AxialLift:
    """Axial segmentation realized as a fold lifting at ``h_{k,2..L}``."""

    seg: AxialSegmentation
    lifting: Lifting
    fold_of: dict = field(default_factory=dict)

    @property
    def uncertainty(self) -> UncertaintySet:
        return self.lifting.uncertainty

    @property
    def dim(self) -> int:
        return self.lifting.dim

    def zrow(self, k: int, ell: int) -> np.ndarray:
        """Linear form of ``z_{k,ell}`` (one-based ``ell``) over the lifted vector."""
        r = np.zeros(self.dim)
        L = self.seg.breakpoints[k].size
        if ell == 1:
            r[self.lifting.pos_u[k]] = 1.0
            r[-1] = -self.seg.lower[k]
        elif ell <= L:
            r[self.lifting.pos_w[self.fold_of[(k, ell)]]] = 1.0
        return r

    def wrow(self, k: int, ell: int) -> np.ndarray:
        return self.zrow(k, ell) - self.zrow(k, ell + 1)

    def lift(self, u) -> np.ndarray:
        return self.lifting.lift(u)

    def residual(self, v) -> float:
        """Violation of the z-form description of the lifted set at ``v``."""
        v = np.asarray(v, dtype=float)
        u = self.lifting.project(v)
        worst = 0.0
        for k in range(self.seg.K):
            h = self.seg.h(k)
            for ell in range(1, h.size + 1):
                z = self.zrow(k, ell) @ v
                worst = max(worst, -z, (u[k] - h[ell - 1]) - z, z - (self.seg.upper[k] - h[ell - 1]),
                            abs(z * (z - u[k] + h[ell - 1])))
        return float(worst)


def axial_lift(U: UncertaintySet, seg: AxialSegmentation, stage_dims=None, hull: bool = True) -> AxialLift:
    """Lift ``U`` along an axial segmentation.

    ``z_{k,1} = u_k - lo_k`` and ``z_{k,L+1} = 0`` are affine, the remaining
    ``z_{k,l} = max(0, u_k - h_{k,l})`` become lifted coordinates, and
    ``w_{k,l} = z_{k,l} - z_{k,l+1}``.  The upper bound of ``z_{k,l}`` is
    ``hi_k - h_{k,l}``, the largest value it takes on the set.
    """
    if seg.K != U.K:
        raise ModelError("segmentation and set have different dimensions")
    lo, hi = bounding_box(U)
    if np.any(seg.lower < lo - 1e-7) or np.any(seg.upper > hi + 1e-7) or np.any(seg.upper < hi - 1e-7):
        raise ModelError("breakpoints do not match the marginal support of the set")
    F, fold_of = [], {}
    for k in range(seg.K):
        for ell, h in enumerate(seg.breakpoints[k][1:], start=2):
            f = np.zeros(U.dim)
            f[k] = 1.0
            f[-1] = -h
            fold_of[(k, ell)] = len(F)
            F.append(f)
    lf = make_lifting(U, np.array(F).reshape(-1, U.dim), stage_dims, hull=hull)
    return AxialLift(seg, lf, fold_of)


def _base_rows(al: AxialLift, S: ConicSet) -> None:
    emb = al.lifting.embed_index()
    cone = al.lifting.base.cone.embed(emb, al.dim)
    S.add("nonneg", cone.P_rows)
    for R in cone.soc_blocks:
        S.add("soc", np.vstack([R[-1:], R[:-1]]))


def build_GWK_outer(al: AxialLift) -> ConicSet:
    """The linear outer approximation ``U**`` over the lifted vector.

    Besides the base set it contains ``w_{k,1} <= h_{k,2} - lo_k`` and
    ``(h_{l+1} - h_l) w_{l-1} >= (h_l - h_{l-1}) w_l`` for ``l >= 2`` with
    ``h_{L+1} = hi_k``, plus ``w_{k,L} >= 0``; the sum condition
    ``sum_l w_{k,l} = u_k - lo_k`` holds identically in these coordinates.
    """
    S = ConicSet(al.dim, name="U**")
    _base_rows(al, S)
    e = _e(al.dim)
    rows = []
    for k in range(al.seg.K):
        h = al.seg.h(k)
        L = al.seg.breakpoints[k].size
        if L < 2:
            continue
        rows.append((h[1] - h[0]) * e - al.wrow(k, 1))
        for ell in range(2, L + 1):
            rows.append((h[ell] - h[ell - 1]) * al.wrow(k, ell - 1) - (h[ell - 1] - h[ell - 2]) * al.wrow(k, ell))
        rows.append(al.wrow(k, L))
    if rows:
        S.add("nonneg", np.array(rows))
    return S


_M_ENTRIES = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def build_Ustar(al: AxialLift) -> ConicSet:
    """The set ``U*`` with one 3x3 moment block per axis and inner breakpoint.

    For ``l = 2..L`` the block ``Z^{k,l}`` stands for the moments of
    ``(z_{l-1}, z_l, z_{l+1})``; entries involving ``z_{L+1} = 0`` are fixed
    to zero.  The five linear inequalities tie the blocks to ``z``; the
    bounds ``u_k - h_l <= z_l <= hi_k - h_l`` and ``z >= 0`` are included.
    """
    # auxiliary layout: for each (k, l) the free entries of Z^{k,l}
    aux = {}
    n_aux = 0
    for k in range(al.seg.K):
        L = al.seg.breakpoints[k].size
        for ell in range(2, L + 1):
            for (a, b) in _M_ENTRIES:
                if ell == L and 2 in (a, b):
                    continue
                aux[(k, ell, a, b)] = n_aux
                n_aux += 1
    S = ConicSet(al.dim, n_aux=n_aux, name="U*")
    emb = al.lifting.embed_index()
    cone = al.lifting.base.cone.embed(emb, al.dim)
    S.add("nonneg", cone.P_rows)
    for R in cone.soc_blocks:
        S.add("soc", np.vstack([R[-1:], R[:-1]]))
    e = _e(al.dim)
    Fr, Gr = [], []

    def add(frow, gidx=(), gval=()):
        g = np.zeros(n_aux)
        for i, v in zip(gidx, gval):
            g[i] += v
        Fr.append(frow)
        Gr.append(g)

    for k in range(al.seg.K):
        h = al.seg.h(k)
        L = al.seg.breakpoints[k].size
        uk = np.zeros(al.dim)
        uk[al.lifting.pos_u[k]] = 1.0
        for ell in range(1, L + 1):
            z = al.zrow(k, ell)
            add(z)
            add(z - uk + h[ell - 1] * e)
            add((al.seg.upper[k] - h[ell - 1]) * e - z)
        for ell in range(2, L + 1):
            z1, z2, z3 = al.zrow(k, ell - 1), al.zrow(k, ell), al.zrow(k, ell + 1)
            hm, h0, hp = h[ell - 2], h[ell - 1], h[ell]

            def Z(a, b):
                return aux.get((k, ell, min(a, b), max(a, b)))

            def terms(*pairs):
                idx, val = [], []
                for (a, b), s in pairs:
                    i = Z(a, b)
                    if i is not None:
                        idx.append(i)
                        val.append(s)
                return idx, val

            add(z3 * (hm - hp), *terms(((0, 2), 1.0), ((2, 2), -1.0)))
            add(z3 * (h0 - hp), *terms(((1, 2), 1.0), ((2, 2), -1.0)))
            add(z1 * (hp - hm) + z2 * (h0 - hp), *terms(((0, 2), 1.0), ((0, 0), -1.0), ((1, 1), 1.0), ((1, 2), -1.0)))
            add(z3 * (hp - hm) + z2 * (hm - h0), *terms(((2, 2), 1.0), ((0, 2), -1.0), ((0, 1), 1.0), ((1, 1), -1.0)))
            add(z2 * (hp - h0), *terms(((1, 2), 1.0), ((1, 1), -1.0)))
    if Fr:
        S.add("nonneg", np.array(Fr), np.array(Gr))
    # PSD blocks
    for k in range(al.seg.K):
        L = al.seg.breakpoints[k].size
        for ell in range(2, L + 1):
            G = np.zeros((svec_len(3), n_aux))
            for (a, b) in _M_ENTRIES:
                i = aux.get((k, ell, a, b))
                if i is not None:
                    G[svec_pos(a, b), i] = 1.0 if a == b else np.sqrt(2.0)
            S.add("psd", np.zeros((svec_len(3), al.dim)), G, size=3)
    S.aux_index = aux
    return S


def ustar_point(al: AxialLift, u) -> tuple[np.ndarray, np.ndarray]:
    """Lifted point with moment blocks from exact outer products."""
    S_aux = {}
    v = al.lift(u)
    z = al.seg.z_of(u)
    for k in range(al.seg.K):
        L = al.seg.breakpoints[k].size
        for ell in range(2, L + 1):
            trip = np.array([z[k][ell - 2], z[k][ell - 1], z[k][ell]])
            for (a, b) in _M_ENTRIES:
                S_aux[(k, ell, a, b)] = trip[a] * trip[b]
    return v, S_aux


def check_dual_certificate(h1: float, h2: float, h3: float, tol: float = 1e-9) -> bool:
    """Verify the closed-form multipliers that imply the U** ratio inequality.

    ``a = c = (h3-h2)/(h3-h1)``, ``b = (h3-h1)/(h3-h2)``, ``d = 2`` and
    ``e = (h2-h1)^2 / ((h3-h1)(h3-h2))`` must satisfy three linear
    equalities and make the 3x3 matrix below PSD.
    """
    if not (h1 < h2 < h3):
        raise ValueError("breakpoints must be strictly increasing")
    a = c = (h3 - h2) / (h3 - h1)
    b = (h3 - h1) / (h3 - h2)
    d = 2.0
    e = (h2 - h1) ** 2 / ((h3 - h1) * (h3 - h2))
    M = np.array([
        [c, -d / 2, (d - a - c) / 2],
        [-d / 2, -c + d + e, (-b + c - e) / 2],
        [(d - a - c) / 2, (-b + c - e) / 2, a + b - d],
    ])
    scale = max(1.0, abs(h1), abs(h2), abs(h3))
    eqs = [
        (h3 - h1) * c - (h3 - h2),
        (h2 - h1) * d + (h3 - h2) * c - (h3 - h1) - (h3 - h2) * e,
        (h2 - h1) + (h3 - h1) * a + (h3 - h2) * b - (h3 - h1) * d,
    ]
    psd = np.linalg.eigvalsh(M).min() >= -tol * max(1.0, np.abs(M).max())
    return bool(psd and max(abs(x) for x in eqs) <= tol * scale)
