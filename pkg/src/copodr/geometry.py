"""Convex-geometry utilities for uncertainty sets.

* :class:`ConicSet` -- ``{v : F v + G xi in C, v[-1] = 1}`` with auxiliary
  variables ``xi``; the common currency for robust counterparts of
  constraints that are linear in the parameter.
* support functions, bounding boxes and emptiness checks (HiGHS for purely
  polyhedral sets, the conic solver otherwise);
* vertex enumeration of polytopes by the double-description method;
* point samplers used by validation and by the verification oracles.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ._linalg import smat, svec_len
from .conic import ConicBuilder, solve
from .model import ModelError, UncertaintySet

BLOCK_KINDS = ("zero", "nonneg", "soc", "psd")


@dataclass(eq=False)
class ConicSet:
    """Projection onto ``v`` of ``{(v, xi) : F_b v + G_b xi in C_b, v[-1] = 1}``.

    ``blocks`` holds ``(kind, F, G, size)``; SOC blocks are radius first and
    PSD blocks map to scaled upper-triangle vectors of side ``size``.
    """

    dim: int
    n_aux: int = 0
    blocks: list = field(default_factory=list)
    name: str = ""

    def add(self, kind: str, F, G=None, size: int | None = None) -> None:
        if kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {kind!r}")
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[1] != self.dim:
            raise ValueError(f"F has {F.shape[1]} columns, expected {self.dim}")
        G = np.zeros((F.shape[0], self.n_aux)) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape != (F.shape[0], self.n_aux):
            raise ValueError("G has the wrong shape")
        if kind == "psd":
            if size is None or svec_len(size) != F.shape[0]:
                raise ValueError("psd block needs a side length matching the row count")
        else:
            size = F.shape[0]
        self.blocks.append((kind, F, G, int(size)))

    @classmethod
    def from_uncertainty(cls, U: UncertaintySet, use_hull: bool = True) -> "ConicSet":
        """Conic description of the set with quadratic equalities dropped.

        With ``use_hull`` and available hull rows, those rows replace the cone
        description, giving the convex hull of the full set.
        """
        S = cls(U.dim, name="hull" if (use_hull and U.hull_rows is not None) else "relaxed")
        if use_hull and U.hull_rows is not None:
            S.add("nonneg", U.hull_rows)
            return S
        S.add("nonneg", U.cone.P_rows)
        for R in U.cone.soc_blocks:
            S.add("soc", np.vstack([R[-1:], R[:-1]]))
        return S

    @property
    def polyhedral(self) -> bool:
        return self.n_aux == 0 and all(k in ("zero", "nonneg") for k, *_ in self.blocks)

    def residual(self, v, xi=None) -> float:
        """Largest violation of the constraints at ``(v, xi)``."""
        v = np.asarray(v, dtype=float)
        xi = np.zeros(self.n_aux) if xi is None else np.asarray(xi, dtype=float)
        worst = abs(v[-1] - 1.0)
        for kind, F, G, size in self.blocks:
            r = F @ v + G @ xi
            if kind == "zero":
                worst = max(worst, np.abs(r).max(initial=0.0))
            elif kind == "nonneg":
                worst = max(worst, -r.min(initial=0.0))
            elif kind == "soc":
                worst = max(worst, np.linalg.norm(r[1:]) - r[0])
            else:
                worst = max(worst, -np.linalg.eigvalsh(smat(r)).min())
        return float(max(worst, 0.0))

    def _program(self, d: np.ndarray):
        """Conic program ``min -d'v`` over the set (v, xi free)."""
        B = ConicBuilder()
        hv = B.var("free", self.dim, "v")
        hx = B.var("free", self.n_aux, "xi")
        B.cost(hv, -d)
        e = np.zeros((1, self.dim))
        e[0, -1] = 1
        B.rows([(hv, e)], [1.0])
        for kind, F, G, size in self.blocks:
            r = F.shape[0]
            if kind == "zero":
                B.rows([(hv, F), (hx, G)], np.zeros(r))
                continue
            hs = B.var(kind, size if kind == "psd" else r)
            B.rows([(hv, F), (hx, G), (hs, -sp.identity(r))], np.zeros(r))
        return B.build(), hv

    def support(self, d, tol: float = 1e-9) -> tuple[float, np.ndarray | None, str]:
        """``max d'v`` over the set: ``(value, maximizer, status)``.

        Status is ``optimal``, ``unbounded`` or ``infeasible``; the value is
        ``+inf``/``-inf`` accordingly.
        """
        d = np.asarray(d, dtype=float)
        if self.polyhedral:
            return _support_lp(self, d)
        (prog, index), hv = self._program(d)
        sol = solve(prog, tol=tol)
        if sol.status == "optimal":
            v = sol.z[index[hv]]
            return float(d @ v), v, "optimal"
        if sol.status == "unbounded":
            return np.inf, None, "unbounded"
        if sol.status == "infeasible":
            return -np.inf, None, "infeasible"
        raise RuntimeError(f"support problem failed with status {sol.status}")


def _support_lp(S: ConicSet, d: np.ndarray):
    Aub, bub, Aeq, beq = [], [], [], []
    for kind, F, G, size in S.blocks:
        if kind == "nonneg":
            Aub.append(-F)
        else:
            Aeq.append(F)
    n = S.dim
    e = np.zeros((1, n))
    e[0, -1] = 1
    Aeq.append(e)
    beq = np.zeros(sum(a.shape[0] for a in Aeq))
    beq[-1] = 1.0
    A_ub = np.vstack(Aub) if Aub else None
    b_ub = np.zeros(A_ub.shape[0]) if A_ub is not None else None
    res = linprog(-d, A_ub=A_ub, b_ub=b_ub, A_eq=np.vstack(Aeq), b_eq=beq,
                  bounds=[(None, None)] * n, method="highs")
    if res.status == 0:
        return float(d @ res.x), res.x, "optimal"
    if res.status == 3:
        return np.inf, None, "unbounded"
    if res.status == 2:
        return -np.inf, None, "infeasible"
    raise RuntimeError(f"support LP failed: {res.message}")


# ---------------------------------------------------------------------------
# set-level helpers

def support(U: UncertaintySet, d, use_hull: bool = False):
    """``max d'u`` over the set with quadratic equalities dropped."""
    return ConicSet.from_uncertainty(U, use_hull=use_hull).support(d)


def is_nonempty(U: UncertaintySet) -> bool:
    _, _, status = support(U, np.zeros(U.dim))
    return status != "infeasible"


def bounding_box(U: UncertaintySet) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate-wise bounds of the relaxed set (``inf`` when unbounded)."""
    S = ConicSet.from_uncertainty(U, use_hull=False)
    K = U.K
    lo, hi = np.empty(K), np.empty(K)
    for k in range(K):
        e = np.zeros(U.dim)
        e[k] = 1
        hi[k] = S.support(e)[0]
        lo[k] = -S.support(-e)[0]
    return lo, hi


def recession_is_trivial(U: UncertaintySet, tol: float = 1e-8) -> bool:
    """True when the cone has no nonzero direction with last coordinate 0.

    Maximizes each signed coordinate over the direction cone intersected
    with the unit box; compactness of the slice forces all maxima to zero.
    """
    n = U.dim
    S = ConicSet(n)
    S.add("nonneg", U.cone.P_rows[:, :])
    for R in U.cone.soc_blocks:
        S.add("soc", np.vstack([R[-1:], R[:-1]]))
    # direction d = v[:-1]; use the last slot as the constant 1 for the box
    box = np.zeros((2 * (n - 1), n))
    box[:, -1] = 1.0
    box[: n - 1, : n - 1] = -np.eye(n - 1)
    box[n - 1:, : n - 1] = np.eye(n - 1)
    D = ConicSet(n)
    for kind, F, G, size in S.blocks:
        Fd = F.copy()
        Fd[:, -1] = 0.0  # cone constraints on (d, 0)
        D.add(kind, Fd)
    D.add("nonneg", box)
    for k in range(n - 1):
        for s in (1.0, -1.0):
            e = np.zeros(n)
            e[k] = s
            val, _, status = D.support(e)
            if status != "optimal" or val > tol:
                return False
    return True


# ---------------------------------------------------------------------------
# double description

def extreme_rays(A: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Extreme rays of the pointed cone ``{x : A x >= 0}`` (one per row).

    Incremental double-description method with the algebraic adjacency
    test; rays are normalized to unit infinity norm.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    scale = np.linalg.norm(A, axis=1)
    scale[scale == 0] = 1.0
    A = A / scale[:, None]
    # initial basis of n independent rows
    import scipy.linalg as sla

    _, Rq, piv = sla.qr(A.T, mode="economic", pivoting=True)
    dg = np.abs(np.diag(Rq))
    rank = int(np.sum(dg > 1e-10 * dg.max(initial=1.0)))
    if rank < n:
        raise ModelError("cone is not pointed (constraint matrix rank deficient)")
    basis = list(piv[:n])
    R = np.linalg.inv(A[basis]).T  # rows are rays
    R /= np.abs(R).max(axis=1, keepdims=True)
    done = list(basis)
    for i in [k for k in range(m) if k not in set(basis)]:
        a = A[i]
        val = R @ a
        pos = val > tol
        neg = val < -tol
        zero = ~(pos | neg)
        if not neg.any():
            done.append(i)
            continue
        Ad = A[done]
        act = np.abs(R @ Ad.T) <= tol  # rays x processed rows
        new = [R[pos], R[zero]]
        P_idx, N_idx = np.flatnonzero(pos), np.flatnonzero(neg)
        for p in P_idx:
            common_all = act[p] & act[N_idx]
            counts = common_all.sum(axis=1)
            for k, q in enumerate(N_idx):
                if counts[k] < n - 2:
                    continue
                common = common_all[k]
                if np.linalg.matrix_rank(Ad[common], tol=1e-9) != n - 2:
                    continue
                r = val[p] * R[q] - val[q] * R[p]
                new.append((r / np.abs(r).max())[None, :])
        R = np.vstack(new)
        done.append(i)
    return _dedupe(R)


def _dedupe(R: np.ndarray, digits: int = 9) -> np.ndarray:
    if R.shape[0] == 0:
        return R
    _, idx = np.unique(np.round(R, digits), axis=0, return_index=True)
    return R[np.sort(idx)]


def vertices(U: UncertaintySet, use_hull: bool = False, tol: float = 1e-9) -> np.ndarray:
    """Homogenized vertices (rows, last entry 1) of the polyhedral relaxation."""
    if U.cone.soc_blocks and not (use_hull and U.hull_rows is not None):
        raise ModelError("vertex enumeration needs a polyhedral set")
    H = U.hull_rows if (use_hull and U.hull_rows is not None) else U.cone.P_rows
    R = extreme_rays(H, tol)
    last = R[:, -1]
    if np.any(np.abs(last) <= tol):
        raise ModelError("polyhedron is unbounded")
    V = R[last > tol] / last[last > tol, None]
    return _dedupe(V)


# ---------------------------------------------------------------------------
# sampling

def _support_points(S: ConicSet, n_dir: int, rng) -> np.ndarray:
    pts = []
    for _ in range(n_dir):
        d = rng.standard_normal(S.dim)
        d[-1] = 0.0
        _, v, status = S.support(d)
        if status == "optimal":
            pts.append(v)
    return np.array(pts).reshape(-1, S.dim)


def sample_relaxed(U: UncertaintySet, n: int, seed: int = 0, max_vertex_dim: int = 10) -> np.ndarray:
    """Points of the set with quadratic equalities dropped.

    Combines vertices (polytopes with ``K <= max_vertex_dim``) or support
    points, random convex combinations of them, and rejection samples from
    the bounding box.  Every returned point is checked for membership.
    """
    rng = np.random.default_rng(seed)
    cone = U.cone
    anchors = None
    if not cone.soc_blocks and U.K <= max_vertex_dim:
        try:
            anchors = vertices(U)
        except ModelError:
            anchors = None
    if anchors is None:
        anchors = _support_points(ConicSet.from_uncertainty(U, use_hull=False), min(4 * U.K + 8, 200), rng)
    if anchors.shape[0] == 0:
        return anchors
    out = [anchors]
    n_mix = max(n - anchors.shape[0], 0)
    if n_mix:
        k = anchors.shape[0]
        W = rng.dirichlet(np.full(k, 0.5), size=n_mix // 2 + 1)
        out.append(W @ anchors)
        lo, hi = anchors[:, :-1].min(axis=0), anchors[:, :-1].max(axis=0)
        box = rng.uniform(lo, hi, size=(4 * n_mix, U.K))
        box = np.hstack([box, np.ones((box.shape[0], 1))])
        ok = cone.contains_many(box, 1e-12)
        out.append(box[ok][: n_mix - (n_mix // 2 + 1) + 1])
    pts = np.vstack(out)
    pts[:, -1] = 1.0
    pts = pts[cone.contains_many(pts, 1e-9)]
    return pts


def sample(U: UncertaintySet, n: int, seed: int = 0) -> np.ndarray:
    """Points of the full set, quadratic equalities included.

    Lifted sets carry an ``origin`` with ``base`` (the primitive set) and a
    ``lift`` map; points are generated on the base and lifted exactly.
    Otherwise the relaxed samples are filtered by the quadratic equalities,
    which only keeps vertices or other special points.
    """
    origin = U.origin
    if origin is not None and hasattr(origin, "lift") and hasattr(origin, "base"):
        base = sample(origin.base, n, seed)
        return np.array([origin.lift(u) for u in base]).reshape(-1, U.dim)
    pts = sample_relaxed(U, n, seed)
    if U.quad_mats:
        keep = np.ones(pts.shape[0], dtype=bool)
        for C in U.quad_mats:
            keep &= np.abs(np.einsum("ij,jk,ik->i", pts, C, pts)) <= 1e-9 * (1 + np.abs(C).sum())
        pts = pts[keep]
    return pts


def probe_points(U: UncertaintySet, n: int, seed: int = 0) -> np.ndarray:
    """Sample points used for advisory checks (alias of relaxed sampling)."""
    return sample_relaxed(U, n, seed)
