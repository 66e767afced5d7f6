"""Problem data for multi-stage robust linear programs in homogenized form.

The uncertain parameter vector is ``u = (u_1, ..., u_T, 1)`` where ``u_t``
collects the ``K_t`` parameters revealed at stage ``t`` and the trailing
scalar is the homogenization coordinate.  The uncertainty set is the slice
``{u in K : u[-1] = 1, u' C_i u = 0}`` of a closed convex cone ``K`` given by
polyhedral rows and second-order-cone blocks.

All coefficient tensors are stored at full width ``K + 1`` even when the
corresponding data only depends on a stage prefix; the constructors accept
either width and pad with zeros.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = "copodr-v1"


class ModelError(ValueError):
    """Raised for malformed problem or uncertainty-set data."""


def _as2d(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ModelError(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class ConeK:
    """Closed convex cone ``{v : P v >= 0, R_b v in SOC for each block b}``.

    In each SOC block the last row is the radius row, so ``R_b v`` belongs to
    the cone when the norm of its leading entries is at most its last entry.
    """

    P_rows: np.ndarray
    soc_blocks: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        P = _as2d(self.P_rows, "P_rows")
        n = P.shape[1]
        if n < 1:
            raise ModelError("cone dimension must be at least 1")
        last = np.zeros(n)
        last[-1] = 1.0
        if not np.any(np.all(P == last, axis=1)):
            P = np.vstack([P, last])
        blocks = []
        for b, R in enumerate(self.soc_blocks):
            R = _as2d(R, f"soc_blocks[{b}]")
            if R.shape[1] != n:
                raise ModelError(f"soc block {b} has {R.shape[1]} columns, expected {n}")
            if R.shape[0] < 2:
                raise ModelError(f"soc block {b} needs at least 2 rows")
            blocks.append(R)
        object.__setattr__(self, "P_rows", P)
        object.__setattr__(self, "soc_blocks", tuple(blocks))

    @property
    def dim(self) -> int:
        return self.P_rows.shape[1]

    @property
    def K(self) -> int:
        return self.dim - 1

    @property
    def n_poly(self) -> int:
        return self.P_rows.shape[0]

    def contains(self, v, tol: float = 1e-10) -> bool:
        v = np.asarray(v, dtype=float)
        if np.min(self.P_rows @ v) < -tol:
            return False
        for R in self.soc_blocks:
            r = R @ v
            if np.linalg.norm(r[:-1]) > r[-1] + tol:
                return False
        return True

    def contains_many(self, V: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Row-wise membership of the points stacked in ``V``."""
        V = np.atleast_2d(V)
        ok = np.all(V @ self.P_rows.T >= -tol, axis=1)
        for R in self.soc_blocks:
            r = V @ R.T
            ok &= np.linalg.norm(r[:, :-1], axis=1) <= r[:, -1] + tol
        return ok

    def embed(self, index: np.ndarray, dim: int) -> "ConeK":
        """Cone on a larger space; column ``i`` moves to ``index[i]``."""
        P = np.zeros((self.n_poly, dim))
        P[:, index] = self.P_rows
        blocks = []
        for R in self.soc_blocks:
            Rn = np.zeros((R.shape[0], dim))
            Rn[:, index] = R
            blocks.append(Rn)
        return ConeK(P, tuple(blocks))


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """Slice ``u[-1] = 1`` of a cone intersected with quadratic level sets.

    ``hull_rows`` optionally holds polyhedral rows ``H`` such that
    ``{v : H v >= 0, v[-1] = 1}`` is exactly the convex hull of the set and
    every row is certifiable in the semidefinite inner cone; it enables the
    exact treatment of constraints that are linear in ``u``.  ``origin``
    records how a lifted set was generated so samplers can build exact
    points instead of rejecting on measure-zero quadratic constraints.
    """

    cone: ConeK
    quad_mats: tuple[np.ndarray, ...] = ()
    hull_rows: np.ndarray | None = None
    origin: Any = None

    def __post_init__(self) -> None:
        n = self.cone.dim
        mats = []
        for i, C in enumerate(self.quad_mats):
            C = _as2d(C, f"quad_mats[{i}]")
            if C.shape != (n, n):
                raise ModelError(f"quad_mats[{i}] has shape {C.shape}, expected {(n, n)}")
            if np.max(np.abs(C - C.T), initial=0.0) > 1e-12:
                raise ModelError(f"quad_mats[{i}] is not symmetric")
            mats.append(0.5 * (C + C.T))
        object.__setattr__(self, "quad_mats", tuple(mats))
        if self.hull_rows is not None:
            H = _as2d(self.hull_rows, "hull_rows")
            if H.shape[1] != n:
                raise ModelError("hull_rows has the wrong number of columns")
            object.__setattr__(self, "hull_rows", H)

    @property
    def K(self) -> int:
        return self.cone.K

    @property
    def dim(self) -> int:
        return self.cone.dim

    @property
    def is_polyhedral(self) -> bool:
        return not self.cone.soc_blocks and not self.quad_mats

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        if abs(u[-1] - 1.0) > tol or not self.cone.contains(u, tol):
            return False
        return all(abs(u @ C @ u) <= tol * (1 + np.abs(C).sum()) for C in self.quad_mats)

    def relaxed(self) -> "UncertaintySet":
        """The set with its quadratic equalities dropped."""
        return UncertaintySet(self.cone)


def cone_from_polytope(P, q) -> ConeK:
    """Cone whose unit slice is the polytope ``{u : P u >= q}``."""
    P = _as2d(P, "P")
    q = np.asarray(q, dtype=float).ravel()
    if q.shape[0] != P.shape[0]:
        raise ModelError(f"q has length {q.shape[0]} but P has {P.shape[0]} rows")
    return ConeK(np.hstack([P, -q[:, None]]))


def cone_from_box(lo, hi) -> ConeK:
    """Cone for the box ``lo <= u <= hi``."""
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ModelError("box bounds must have equal length with lo <= hi")
    K = lo.size
    I = np.eye(K)
    return cone_from_polytope(np.vstack([I, -I]), np.concatenate([lo, -hi]))


def cone_from_ellipsoids(F_l: Sequence, g_l: Sequence, h_l: Sequence, eig_tol: float = 1e-12) -> ConeK:
    """Cone whose unit slice is the intersection of ellipsoids.

    Ellipsoid ``l`` is ``{xi : xi' F xi + 2 g' xi <= h}`` with ``F`` PSD.
    Writing ``F = P' P`` it becomes the SOC constraint
    ``||(P xi, (1-h)/2 tau + g' xi)|| <= (1+h)/2 tau - g' xi``.
    """
    if not (len(F_l) == len(g_l) == len(h_l)) or len(F_l) == 0:
        raise ModelError("need matching, non-empty lists of F, g, h")
    K = np.asarray(F_l[0]).shape[0]
    blocks = []
    for ell, (F, g, h) in enumerate(zip(F_l, g_l, h_l)):
        F = _as2d(F, "F")
        if F.shape != (K, K):
            raise ModelError(f"F[{ell}] has shape {F.shape}, expected {(K, K)}")
        F = 0.5 * (F + F.T)
        g = np.asarray(g, dtype=float).ravel()
        lam, V = np.linalg.eigh(F)
        if lam.min(initial=0.0) < -1e-10:
            raise ModelError(f"F[{ell}] is not positive semidefinite (min eigenvalue {lam.min():.3g})")
        keep = lam > eig_tol
        Pf = (np.sqrt(lam[keep])[:, None] * V[:, keep].T)
        h = float(h)
        rows = [np.r_[g, 0.5 * (1 - h)]]
        rows += [np.r_[p, 0.0] for p in Pf]
        rows.append(np.r_[-g, 0.5 * (1 + h)])
        R = np.array(rows)
        nz = np.any(R != 0, axis=1)
        nz[-1] = True
        blocks.append(R[nz])
    return ConeK(np.zeros((0, K + 1)), tuple(blocks))


def lift_stage_index(stage_dims: Sequence[int], t: int) -> np.ndarray:
    """Zero-based coordinates of ``u^t = (u_1, ..., u_t, 1)`` inside ``u``.

    ``t`` is one-based.  The homogenization coordinate of ``u^t`` maps to the
    last coordinate of ``u``.
    """
    T = len(stage_dims)
    if not 1 <= t <= T:
        raise ModelError(f"stage {t} out of range 1..{T}")
    K = int(np.sum(stage_dims))
    Kt = int(np.sum(stage_dims[:t]))
    return np.r_[np.arange(Kt), K]


def truncation_matrix(stage_dims: Sequence[int], t: int) -> np.ndarray:
    """The matrix of the truncation map ``u -> u^t``."""
    idx = lift_stage_index(stage_dims, t)
    K = int(np.sum(stage_dims))
    Pi = np.zeros((idx.size, K + 1))
    Pi[np.arange(idx.size), idx] = 1.0
    return Pi


def _widen(vec_list, stage_idx: np.ndarray, K: int, name: str) -> np.ndarray:
    """Place data given over ``u^t`` (or already over ``u``) at full width."""
    arr = np.asarray(vec_list, dtype=float)
    w = arr.shape[0]
    if w == K + 1:
        return arr
    if w == stage_idx.size:
        out = np.zeros((K + 1,) + arr.shape[1:])
        out[stage_idx] = arr
        return out
    raise ModelError(f"{name}: leading dimension {w} matches neither {stage_idx.size} nor {K + 1}")


@dataclass(frozen=True, eq=False)
class MsroProblem:
    """Multi-stage robust linear program in the homogenized standard form.

    Data (full width, ``n = K + 1``)::

        A_hat : (n, J, M)        A(u) = sum_k u_k A_hat[k]
        B_hat : [ (n, J, N_t) ]  B_t(u) = sum_k u_k B_hat[t][k]
        D_hat : [ (N_t, n) ]     d_t(u) = D_hat[t] u
        H_hat : (J, n)           h(u) = H_hat u
        d0    : (n,)             objective offset d0' u inside the sup

    Constraints read ``A(u) x + sum_t B_t(u) y_t(u^t) >= h(u)`` for all
    ``u`` in the uncertainty set, with ``G x >= g`` for the first stage.
    ``sense`` is the user's optimization sense; data are stored as given.
    """

    stage_dims: tuple[int, ...]
    N: tuple[int, ...]
    c: np.ndarray
    A_hat: np.ndarray
    B_hat: tuple[np.ndarray, ...]
    D_hat: tuple[np.ndarray, ...]
    H_hat: np.ndarray
    uncertainty: UncertaintySet
    X_G: np.ndarray
    X_g: np.ndarray
    sense: str = "min"
    d0: np.ndarray | None = None
    names: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sense not in ("min", "max"):
            raise ModelError("sense must be 'min' or 'max'")
        T = len(self.stage_dims)
        if T < 1 or len(self.N) != T:
            raise ModelError("stage_dims and N must have equal positive length")
        if any(k < 0 for k in self.stage_dims) or any(n < 0 for n in self.N):
            raise ModelError("stage dimensions must be nonnegative")
        K = int(sum(self.stage_dims))
        n = K + 1
        if self.uncertainty.dim != n:
            raise ModelError(f"uncertainty set has dimension {self.uncertainty.dim}, expected {n}")
        c = np.asarray(self.c, dtype=float).ravel()
        M = c.size
        A = np.asarray(self.A_hat, dtype=float)
        if A.size == 0:
            A = np.zeros((n, self.H_hat.shape[0] if np.ndim(self.H_hat) == 2 else 0, M))
        if A.ndim != 3:
            raise ModelError("A_hat must be a 3-way array (k, J, M)")
        A = _widen(A, lift_stage_index(self.stage_dims, 1), K, "A_hat")
        J = A.shape[1]
        if A.shape[2] != M:
            raise ModelError(f"A_hat has {A.shape[2]} columns, expected M={M}")
        H = np.asarray(self.H_hat, dtype=float).reshape(J, n)
        H = _widen(H.T, np.arange(n), K, "H_hat").T
        B, D = [], []
        for t in range(T):
            idx = lift_stage_index(self.stage_dims, t + 1)
            Bt = np.asarray(self.B_hat[t], dtype=float)
            if Bt.size == 0:
                Bt = np.zeros((n, J, self.N[t]))
            Bt = _widen(Bt, idx, K, f"B_hat[{t}]")
            if Bt.shape[1:] != (J, self.N[t]):
                raise ModelError(f"B_hat[{t}] has shape {Bt.shape}, expected (*, {J}, {self.N[t]})")
            Dt = np.asarray(self.D_hat[t], dtype=float)
            if Dt.size == 0:
                Dt = np.zeros((self.N[t], n))
            Dt = _widen(Dt.T, idx, K, f"D_hat[{t}]").T
            if Dt.shape != (self.N[t], n):
                raise ModelError(f"D_hat[{t}] has shape {Dt.shape}")
            B.append(Bt)
            D.append(Dt)
        G = np.asarray(self.X_G, dtype=float)
        G = G.reshape(-1, M) if G.size else np.zeros((0, M))
        g = np.asarray(self.X_g, dtype=float).ravel()
        if g.size != G.shape[0]:
            raise ModelError("X_g length must match the rows of X_G")
        d0 = np.zeros(n) if self.d0 is None else np.asarray(self.d0, dtype=float).ravel()
        d0 = _widen(d0, np.arange(n), K, "d0")
        for name, arr in (("A_hat", A), ("H_hat", H), ("X_G", G), ("X_g", g), ("d0", d0)):
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} contains non-finite entries")
        object.__setattr__(self, "stage_dims", tuple(int(k) for k in self.stage_dims))
        object.__setattr__(self, "N", tuple(int(k) for k in self.N))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_hat", A)
        object.__setattr__(self, "H_hat", H)
        object.__setattr__(self, "B_hat", tuple(B))
        object.__setattr__(self, "D_hat", tuple(D))
        object.__setattr__(self, "X_G", G)
        object.__setattr__(self, "X_g", g)
        object.__setattr__(self, "d0", d0)

    @property
    def T(self) -> int:
        return len(self.stage_dims)

    @property
    def K(self) -> int:
        return int(sum(self.stage_dims))

    @property
    def J(self) -> int:
        return self.A_hat.shape[1]

    @property
    def M(self) -> int:
        return self.c.size

    def stage_index(self, t: int) -> np.ndarray:
        return lift_stage_index(self.stage_dims, t)

    def fixed_mask(self, t: int) -> np.ndarray:
        """Per variable of stage ``t`` (one-based): coefficients independent of ``u``."""
        K = self.K
        Bt, Dt = self.B_hat[t - 1], self.D_hat[t - 1]
        b_ok = np.all(Bt[:K] == 0, axis=(0, 1))
        d_ok = np.all(Dt[:, :K] == 0, axis=1)
        return b_ok & d_ok

    def fixed_recourse(self, t: int | None = None) -> bool:
        stages = range(1, self.T + 1) if t is None else [t]
        return all(bool(np.all(self.fixed_mask(s))) for s in stages)

    def with_sense_min(self) -> tuple[np.ndarray, tuple[np.ndarray, ...], np.ndarray, float]:
        """Objective data in minimization form and the sign that maps back."""
        if self.sense == "min":
            return self.c, self.D_hat, self.d0, 1.0
        return -self.c, tuple(-D for D in self.D_hat), -self.d0, -1.0


# ---------------------------------------------------------------------------
# JSON interchange

def _tolist(a) -> Any:
    return np.asarray(a, dtype=float).tolist()


def uncertainty_to_json(U: UncertaintySet) -> dict:
    out = {"P_rows": _tolist(U.cone.P_rows), "soc_blocks": [_tolist(R) for R in U.cone.soc_blocks]}
    if U.quad_mats:
        out["quad_mats"] = [_tolist(C) for C in U.quad_mats]
    if U.hull_rows is not None:
        out["hull_rows"] = _tolist(U.hull_rows)
    return out


def uncertainty_from_json(d: dict, K: int | None = None) -> UncertaintySet:
    if not isinstance(d, dict):
        raise ModelError("uncertainty must be an object")
    if "box" in d:
        cone = cone_from_box(d["box"]["lo"], d["box"]["hi"])
    elif "polytope" in d:
        cone = cone_from_polytope(d["polytope"]["P"], d["polytope"]["q"])
    elif "ellipsoids" in d:
        E = d["ellipsoids"]
        cone = cone_from_ellipsoids([e["F"] for e in E], [e["g"] for e in E], [e["h"] for e in E])
    elif "P_rows" in d:
        cone = ConeK(np.asarray(d["P_rows"], dtype=float), tuple(np.asarray(R, dtype=float) for R in d.get("soc_blocks", [])))
    else:
        raise ModelError("uncertainty needs one of: box, polytope, ellipsoids, P_rows")
    quads = tuple(np.asarray(C, dtype=float) for C in d.get("quad_mats", []))
    hull = d.get("hull_rows")
    U = UncertaintySet(cone, quads, None if hull is None else np.asarray(hull, dtype=float))
    if K is not None and U.K != K:
        raise ModelError(f"uncertainty set has K={U.K}, problem expects K={K}")
    return U


def problem_to_json(P: MsroProblem) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "sense": P.sense,
        "stage_dims": list(P.stage_dims),
        "N": list(P.N),
        "c": _tolist(P.c),
        "A_hat": _tolist(P.A_hat),
        "B_hat": [_tolist(B) for B in P.B_hat],
        "D_hat": [_tolist(D) for D in P.D_hat],
        "H_hat": _tolist(P.H_hat),
        "d0": _tolist(P.d0),
        "X": {"G": _tolist(P.X_G), "g": _tolist(P.X_g)},
        "uncertainty": uncertainty_to_json(P.uncertainty),
        "names": P.names,
    }


def problem_from_json(d: dict) -> MsroProblem:
    if not isinstance(d, dict):
        raise ModelError("problem must be a JSON object")
    if d.get("schema") != SCHEMA_VERSION:
        raise ModelError(f"unsupported schema {d.get('schema')!r}; expected {SCHEMA_VERSION!r}")
    try:
        stage_dims = tuple(int(k) for k in d["stage_dims"])
        N = tuple(int(n) for n in d["N"])
        K = sum(stage_dims)
        U = uncertainty_from_json(d["uncertainty"], K)
        c = np.asarray(d.get("c", []), dtype=float)
        X = d.get("X", {})
        M = c.size
        J = len(d["H_hat"])
        A = np.asarray(d.get("A_hat", []), dtype=float)
        if A.size == 0:
            A = np.zeros((K + 1, J, M))
        return MsroProblem(
            stage_dims=stage_dims,
            N=N,
            c=c,
            A_hat=A,
            B_hat=tuple(np.asarray(B, dtype=float) for B in d["B_hat"]),
            D_hat=tuple(np.asarray(D, dtype=float) for D in d["D_hat"]),
            H_hat=np.asarray(d["H_hat"], dtype=float),
            uncertainty=U,
            X_G=np.asarray(X.get("G", np.zeros((0, M))), dtype=float),
            X_g=np.asarray(X.get("g", []), dtype=float),
            sense=d.get("sense", "min"),
            d0=None if d.get("d0") is None else np.asarray(d["d0"], dtype=float),
            names=dict(d.get("names", {})),
        )
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelError(f"malformed problem: {exc}") from exc


def load_problem(path) -> MsroProblem:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"invalid JSON: {exc}") from exc
    return problem_from_json(d)


def save_problem(P: MsroProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_json(P), fh, indent=1)


# ---------------------------------------------------------------------------
# Validation

@dataclass
class ValidationReport:
    nonempty: bool
    bounded: bool
    lower: np.ndarray
    upper: np.ndarray
    quad_status: list[str]
    messages: list[str]

    @property
    def ok(self) -> bool:
        return self.nonempty and self.bounded

    def to_dict(self) -> dict:
        return {
            "nonempty": self.nonempty,
            "bounded": self.bounded,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "quad_status": self.quad_status,
            "messages": self.messages,
        }


def validate(U: UncertaintySet, n_samples: int = 2000, seed: int = 0) -> ValidationReport:
    """Check nonemptiness, compactness and the quadratic-minimum condition.

    Nonemptiness and boundedness are decided by linear (conic) programs over
    the slice without quadratic equalities.  The condition that each
    quadratic function is nonnegative on that slice with minimum zero is
    NP-hard to decide, so it is checked on vertices, support points and
    random samples and reported as ``OK`` or ``UNVERIFIED``.  Nothing is
    ever rejected here.
    """
    from . import geometry

    msgs: list[str] = []
    K = U.K
    lo = np.full(K, -np.inf)
    hi = np.full(K, np.inf)
    nonempty = geometry.is_nonempty(U)
    if not nonempty:
        msgs.append("the cone slice is empty")
        return ValidationReport(False, False, lo, hi, ["UNVERIFIED"] * len(U.quad_mats), msgs)
    lo, hi = geometry.bounding_box(U)
    bounded = bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))
    if not bounded:
        bad = np.flatnonzero(~(np.isfinite(lo) & np.isfinite(hi)))
        msgs.append(f"unbounded coordinates: {bad.tolist()}")
    status = []
    if U.quad_mats:
        pts = geometry.probe_points(U.relaxed(), n_samples, seed) if bounded else np.zeros((0, U.dim))
        for i, C in enumerate(U.quad_mats):
            if pts.shape[0] == 0:
                status.append("UNVERIFIED")
                continue
            vals = np.einsum("ij,jk,ik->i", pts, C, pts)
            ok = vals.min() >= -1e-8 and np.any(vals <= 1e-8)
            status.append("OK" if ok else "UNVERIFIED")
            if not ok:
                msgs.append(f"quadratic {i}: sampled minimum {vals.min():.3g} (advisory)")
    return ValidationReport(nonempty, bounded, lo, hi, status, msgs)
