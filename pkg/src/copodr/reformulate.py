"""Copositive reformulations of decision-rule problems.

Each stage-``t`` recourse variable ``y_{t,n}`` follows either a linear rule
``Y_t[n] @ u^t`` or a quadratic rule ``u^t' Q_{t,n} u^t`` on the truncated
parameter ``u^t``.  Substituting the rules turns every semi-infinite row
into ``u' Omega_j u >= 0`` on the uncertainty set and the worst-case
objective into ``lambda >= u' Gamma u``; both become memberships in the
copositive cone of the uncertainty cone after adding the multiples of the
quadratic equality matrices.

All matrices are handled as scaled upper-triangle vectors (``svec``); a
constraint is ``svec(V(d)) = base + coef @ d`` for the stacked decision
vector ``d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._linalg import TripletBuilder, smat, svec, svec_len, svec_pos, triu_indices, umat
from .cones import last_only_mask
from .model import ModelError, MsroProblem, UncertaintySet

RULES = ("ldr", "qdr", "lqdr")
_ISQ2 = 1.0 / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# decision variables

@dataclass
class VarBlock:
    name: str
    start: int
    size: int
    kind: str
    shape: tuple

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)

    def take(self, d: np.ndarray) -> np.ndarray:
        return np.asarray(d[self.start:self.start + self.size]).reshape(self.shape)


class VarSpace:
    """Named blocks of scalar decision variables (``free`` or ``nonneg``)."""

    def __init__(self) -> None:
        self.blocks: dict[str, VarBlock] = {}
        self.n = 0

    def add(self, name: str, size: int, kind: str = "free", shape: tuple | None = None) -> VarBlock:
        if name in self.blocks:
            raise ValueError(f"duplicate variable block {name!r}")
        if kind not in ("free", "nonneg"):
            raise ValueError("kind must be 'free' or 'nonneg'")
        blk = VarBlock(name, self.n, int(size), kind, shape or (int(size),))
        self.blocks[name] = blk
        self.n += int(size)
        return blk

    def __getitem__(self, name: str) -> VarBlock:
        return self.blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self.blocks

    def kinds(self) -> np.ndarray:
        out = np.empty(self.n, dtype=object)
        for b in self.blocks.values():
            out[b.start:b.start + b.size] = b.kind
        return out


# ---------------------------------------------------------------------------
# constraints and programs

@dataclass(eq=False)
class CopConstraint:
    """``base + coef @ d`` (scaled svec) must be copositive on the cone.

    ``mult_cols`` lists the decision columns multiplying the quadratic
    equality matrices; they are dropped when the constraint is handled by
    the robust counterpart of a linear form.
    """

    label: str
    dim: int
    base: np.ndarray
    coef: sp.csc_matrix
    mult_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    row: int | None = None

    def matrix(self, d) -> np.ndarray:
        return smat(self.base + self.coef @ np.asarray(d, dtype=float))

    @property
    def terms(self) -> list[tuple[int, np.ndarray]]:
        """``(variable index, symmetric matrix)`` pairs of the affine map."""
        C = self.coef.tocsc()
        out = []
        for j in range(C.shape[1]):
            lo, hi = C.indptr[j], C.indptr[j + 1]
            if hi > lo:
                v = np.zeros(C.shape[0])
                v[C.indices[lo:hi]] = C.data[lo:hi]
                out.append((j, smat(v)))
        return out

    def core_coef(self) -> sp.csc_matrix:
        C = self.coef.tocsc(copy=True)
        if self.mult_cols.size:
            keep = np.ones(C.shape[1])
            keep[self.mult_cols] = 0.0
            C = C @ sp.diags(keep)
        return C.tocsc()

    def is_linear(self) -> bool:
        """True when the map (without multipliers) lives in the last row/column."""
        mask = last_only_mask(self.dim)
        if np.any(self.base[mask] != 0):
            return False
        C = self.core_coef().tocsr()
        C.eliminate_zeros()
        return C[mask].nnz == 0


@dataclass
class StageRule:
    """Rule layout of one stage: which variables are linear or quadratic."""

    t: int
    idx: np.ndarray
    ldr: np.ndarray
    qdr: np.ndarray

    @property
    def width(self) -> int:
        return self.idx.size


@dataclass(eq=False)
class CopositiveProgram:
    """``min cost @ d`` subject to copositivity constraints and ``G d >= g``.

    ``sign`` maps the minimization value back to the user's sense.
    """

    problem: MsroProblem
    uncertainty: UncertaintySet
    vars: VarSpace
    cost: np.ndarray
    constraints: list
    lin_G: sp.csr_matrix
    lin_g: np.ndarray
    stages: list
    rule: str
    sign: float = 1.0

    @property
    def dim(self) -> int:
        return self.uncertainty.dim

    def value(self, d) -> float:
        return float(self.sign * (self.cost @ d))

    def summary(self) -> dict:
        return {
            "rule": self.rule,
            "n_vars": self.vars.n,
            "n_cop": len(self.constraints),
            "cone_dim": self.dim,
            "n_linear": sum(c.is_linear() for c in self.constraints),
        }

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "sign": self.sign,
            "vars": {k: [b.start, b.size, b.kind, list(b.shape)] for k, b in self.vars.blocks.items()},
            "cost": self.cost.tolist(),
            "constraints": [
                {"label": c.label, "base": c.base.tolist(),
                 "coef": {"row": c.coef.tocoo().row.tolist(), "col": c.coef.tocoo().col.tolist(),
                          "val": c.coef.tocoo().data.tolist()}}
                for c in self.constraints
            ],
        }


# ---------------------------------------------------------------------------
# index helpers

def theta_lambda(P: MsroProblem, j: int, t: int | None = None):
    """``Theta_j`` (``n x M``) or ``Lambda_{j,t}`` (``n x N_t``), ``t`` one-based.

    Row ``k`` holds row ``j`` of the ``k``-th coefficient matrix, so
    ``u' Theta_j x`` is row ``j`` of ``A(u) x``.
    """
    if not 0 <= j < P.J:
        raise IndexError(f"row {j} out of range 0..{P.J - 1}")
    if t is None:
        return P.A_hat[:, j, :]
    if not 1 <= t <= P.T:
        raise IndexError(f"stage {t} out of range 1..{P.T}")
    return P.B_hat[t - 1][:, j, :]


def _outer_last(vec: np.ndarray, n: int):
    """svec positions/values of ``(vec e' + e vec') / 2`` with ``e = e_last``."""
    nz = np.flatnonzero(vec)
    pos = svec_pos(nz, np.full(nz.size, n - 1))
    val = np.where(nz == n - 1, vec[nz], vec[nz] * _ISQ2)
    return pos, val


def _ldr_triplets(tb: TripletBuilder, Lam: np.ndarray, blk: VarBlock, rows: np.ndarray,
                  idx: np.ndarray, scale: float) -> None:
    """Add ``scale * sym(Lam[:, rows] Y Pi)`` for the LDR block ``Y``.

    ``Lam`` is ``n x N_t``; ``rows`` selects the variables ruled linearly and
    their order in ``Y``.
    """
    sub = Lam[:, rows]
    I, R = np.nonzero(sub)
    if I.size == 0:
        return
    w = idx.size
    vals = scale * sub[I, R]
    g = idx[None, :]
    pos = svec_pos(I[:, None], g)
    v = np.where(I[:, None] == g, vals[:, None], vals[:, None] * _ISQ2)
    col = blk.start + R[:, None] * w + np.arange(w)[None, :]
    tb.add(pos.ravel(), col.ravel(), v.ravel())


def _qdr_triplets(tb: TripletBuilder, coeff: float, blk: VarBlock, idx: np.ndarray) -> None:
    """Add ``coeff * Pi' Q Pi`` where ``Q`` is stored as unscaled upper triangle."""
    if coeff == 0:
        return
    r, c = triu_indices(idx.size)
    pos = svec_pos(idx[r], idx[c])
    val = np.where(r == c, coeff, coeff * np.sqrt(2.0))
    tb.add(pos, blk.start + np.arange(r.size), val)


# ---------------------------------------------------------------------------
# builders

def _stage_layout(P: MsroProblem, rule: str, quadratic=None) -> list[StageRule]:
    out = []
    for t in range(1, P.T + 1):
        fixed = P.fixed_mask(t)
        if rule == "ldr":
            q = np.zeros(P.N[t - 1], dtype=bool)
        elif rule == "qdr":
            if not fixed.all():
                raise ModelError(f"quadratic rules need fixed recourse; stage {t} has "
                                 f"uncertainty-dependent variables {np.flatnonzero(~fixed).tolist()}")
            q = fixed
        else:
            q = fixed.copy()
            if quadratic is not None:
                want = np.asarray(quadratic[t - 1], dtype=bool)
                if np.any(want & ~fixed):
                    raise ModelError(f"stage {t}: quadratic rules requested for uncertainty-dependent variables")
                q = want
        out.append(StageRule(t, P.stage_index(t), np.flatnonzero(~q), np.flatnonzero(q)))
    return out


def build(P: MsroProblem, rule: str = "ldr", quadratic=None) -> CopositiveProgram:
    """Copositive program for ``P`` under the given rule family.

    ``ldr``: linear rules for every variable.  ``qdr``: quadratic rules for
    every variable (fixed recourse required).  ``lqdr``: quadratic rules for
    the variables whose coefficients do not depend on the parameter and
    linear rules for the rest; ``quadratic`` (one boolean mask per stage)
    narrows that choice to a subset of the fixed variables.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; choose from {RULES}")
    U = P.uncertainty
    n = U.dim
    L = svec_len(n)
    nq = len(U.quad_mats)
    Cq = np.array([svec(C) for C in U.quad_mats]).reshape(nq, L)
    c_min, D_min, d0_min, sign = P.with_sense_min()
    stages = _stage_layout(P, rule, quadratic)

    V = VarSpace()
    xb = V.add("x", P.M)
    lam = V.add("lambda", 1)
    alpha = V.add("alpha", nq)
    pi = V.add("pi", P.J, "nonneg")
    beta = V.add("beta", P.J * nq, shape=(P.J, nq))
    Yb, Qb = {}, {}
    for st in stages:
        if st.ldr.size:
            Yb[st.t] = V.add(f"Y[{st.t}]", st.ldr.size * st.width, shape=(st.ldr.size, st.width))
        for nv in st.qdr:
            Qb[(st.t, int(nv))] = V.add(f"Q[{st.t},{nv}]", svec_len(st.width), shape=(svec_len(st.width),))

    cost = np.zeros(V.n)
    cost[xb.start:xb.start + P.M] = c_min
    cost[lam.start] = 1.0
    E_pos = svec_pos(n - 1, n - 1)
    constraints = []

    # worst-case objective: lambda E - sym(sum_t D_t' y_t) - sym(d0 e') + sum alpha_i C_i
    tb = TripletBuilder()
    tb.add([E_pos], lam.start, [1.0])
    for i in range(nq):
        nz = np.flatnonzero(Cq[i])
        tb.add(nz, alpha.start + i, Cq[i][nz])
    for st in stages:
        D = D_min[st.t - 1]
        if st.ldr.size:
            _ldr_triplets(tb, D.T, Yb[st.t], st.ldr, st.idx, -1.0)
        for nv in st.qdr:
            _qdr_triplets(tb, -D[nv, -1], Qb[(st.t, int(nv))], st.idx)
    base = np.zeros(L)
    pos, val = _outer_last(d0_min, n)
    base[pos] -= val
    constraints.append(CopConstraint("objective", n, base, tb.tocsc((L, V.n)), alpha.index.copy(), None))

    # rows j: Omega_j - pi_j E - sum_i beta_ji C_i
    for j in range(P.J):
        tb = TripletBuilder()
        Th = theta_lambda(P, j)
        for m in np.flatnonzero(np.any(Th != 0, axis=0)):
            pos, val = _outer_last(Th[:, m], n)
            tb.add(pos, xb.start + m, val)
        for st in stages:
            Lam = theta_lambda(P, j, st.t)
            if st.ldr.size:
                _ldr_triplets(tb, Lam, Yb[st.t], st.ldr, st.idx, 1.0)
            for nv in st.qdr:
                _qdr_triplets(tb, Lam[-1, nv], Qb[(st.t, int(nv))], st.idx)
        tb.add([E_pos], pi.start + j, [-1.0])
        bcols = beta.start + j * nq + np.arange(nq)
        for i in range(nq):
            nz = np.flatnonzero(Cq[i])
            tb.add(nz, bcols[i], -Cq[i][nz])
        base = np.zeros(L)
        pos, val = _outer_last(P.H_hat[j], n)
        base[pos] -= val
        label = P.names.get("rows", [None] * P.J)[j] if isinstance(P.names.get("rows"), list) else None
        constraints.append(CopConstraint(label or f"row[{j}]", n, base, tb.tocsc((L, V.n)), bcols, j))

    G = sp.lil_matrix((P.X_G.shape[0], V.n))
    if P.X_G.shape[0]:
        G[:, xb.start:xb.start + P.M] = P.X_G
    return CopositiveProgram(P, U, V, cost, constraints, G.tocsr(), P.X_g.copy(), stages, rule, sign)


def build_ldr(P: MsroProblem) -> CopositiveProgram:
    """Linear decision rules for a two-stage problem."""
    if P.T != 1:
        raise ModelError("build_ldr expects a single recourse stage; use build_ms_ldr")
    return build(P, "ldr")


def build_qdr(P: MsroProblem) -> CopositiveProgram:
    """Quadratic decision rules for a two-stage fixed-recourse problem."""
    if P.T != 1:
        raise ModelError("build_qdr expects a single recourse stage; use build_ms_qdr")
    return build(P, "qdr")


def build_ms_ldr(P: MsroProblem) -> CopositiveProgram:
    return build(P, "ldr")


def build_ms_qdr(P: MsroProblem, quadratic=None) -> CopositiveProgram:
    """Quadratic rules where the recourse is fixed, linear rules elsewhere."""
    return build(P, "lqdr", quadratic)


# ---------------------------------------------------------------------------
# decision rules

@dataclass
class DecisionRule:
    """Solved rule: ``x`` and per-stage ``Y_t`` / ``Q_{t,n}`` over ``u^t``."""

    x: np.ndarray
    stages: list
    Y: dict
    Q: dict
    N: tuple
    value: float = np.nan

    def stage(self, t: int, u) -> np.ndarray:
        """Recourse decisions of stage ``t`` (one-based) at the full parameter ``u``."""
        u = np.asarray(u, dtype=float)
        st = self.stages[t - 1]
        ut = u[st.idx]
        y = np.zeros(self.N[t - 1])
        if st.ldr.size:
            y[st.ldr] = self.Y[t] @ ut
        for nv in st.qdr:
            y[nv] = ut @ self.Q[(t, int(nv))] @ ut
        return y

    def evaluate(self, u) -> list[np.ndarray]:
        return [self.stage(t, u) for t in range(1, len(self.stages) + 1)]


def extract_rule(cp: CopositiveProgram, d) -> DecisionRule:
    """Decision rule encoded by the decision vector ``d`` of ``cp``."""
    d = np.asarray(d, dtype=float)
    if d.shape != (cp.vars.n,) or not np.all(np.isfinite(d)):
        raise ValueError("decision vector has the wrong size or non-finite entries")
    Y, Q = {}, {}
    for st in cp.stages:
        if st.ldr.size:
            Y[st.t] = cp.vars[f"Y[{st.t}]"].take(d)
        for nv in st.qdr:
            Q[(st.t, int(nv))] = umat(cp.vars[f"Q[{st.t},{nv}]"].take(d))
    return DecisionRule(cp.vars["x"].take(d), cp.stages, Y, Q, cp.problem.N, cp.value(d))
