"""Independent checks of computed rules and bounds.

* :func:`worst_case_eval` evaluates a solved rule on sampled parameters and
  reports constraint violations and the realized objective.
* :func:`brute_force_small` maximizes a function over a low-dimensional set
  by a grid with local refinement, vertex enumeration and a final polish.
* :func:`certificate_soundness` samples ``v' V v`` for every certified matrix.
* :func:`gap` and :func:`percentile` are the statistics used in reports.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .geometry import sample, sample_relaxed, support, vertices
from .model import ModelError, MsroProblem, UncertaintySet

TOL = 1e-6


# ---------------------------------------------------------------------------
# rule evaluation

def rule_values(rule, points: np.ndarray) -> list[np.ndarray]:
    """Recourse decisions for each row of ``points``: one ``(S, N_t)`` array per stage."""
    out = []
    for st in rule.stages:
        ut = points[:, st.idx]
        y = np.zeros((points.shape[0], rule.N[st.t - 1]))
        if st.ldr.size:
            y[:, st.ldr] = ut @ rule.Y[st.t].T
        for nv in st.qdr:
            Q = rule.Q[(st.t, int(nv))]
            y[:, nv] = np.einsum("si,ij,sj->s", ut, Q, ut)
        out.append(y)
    return out


def _bilinear(Bt: np.ndarray, U: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``sum_k u_k B[k] y`` row by row, for ``B`` of shape ``(n, J, N)``."""
    n, J, N = Bt.shape
    if N == 0:
        return np.zeros((U.shape[0], J))
    Bs = sp.csr_matrix(Bt.reshape(n * J, N))
    BY = np.asarray((Bs @ Y.T).T).reshape(U.shape[0], n, J)
    return np.einsum("sk,skj->sj", U, BY)


def evaluate_points(P: MsroProblem, rule, points: np.ndarray) -> dict:
    """Row residuals (scaled) and objective values (minimization form) at ``points``."""
    pts = np.atleast_2d(points)
    Ys = rule_values(rule, pts)
    lhs = pts @ np.tensordot(P.A_hat, rule.x, axes=([2], [0])) if P.M else np.zeros((pts.shape[0], P.J))
    scale = np.abs(lhs)
    for Bt, Y in zip(P.B_hat, Ys):
        term = _bilinear(Bt, pts, Y)
        lhs = lhs + term
        scale = np.maximum(scale, np.abs(term))
    rhs = pts @ P.H_hat.T
    scale = np.maximum(np.maximum(scale, np.abs(rhs)), 1.0)
    resid = (lhs - rhs) / scale
    c, D, d0, _ = P.with_sense_min()
    obj = np.full(pts.shape[0], float(c @ rule.x)) + pts @ d0
    for Dt, Y in zip(D, Ys):
        obj += np.einsum("sn,sn->s", pts @ Dt.T, Y)
    return {"residual": resid, "objective": obj}


def worst_case_eval(P: MsroProblem, rule, n: int = 2000, seed: int = 0,
                    points: np.ndarray | None = None, bound: float | None = None,
                    tol: float = TOL) -> dict:
    """Sample-based conservativeness check of a solved rule.

    Points come from :func:`copodr.geometry.sample` (vertices of polytopes,
    mixtures, rejection samples; lifted sets are sampled on the base and
    lifted exactly).  Violations are scaled by the magnitude of the terms in
    each row.  ``verdict`` holds when no row is violated beyond ``tol`` and
    the realized objective does not exceed the reported bound.
    """
    if points is None:
        points = sample(P.uncertainty, n, seed)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ModelError("sampler returned no points of the uncertainty set")
    if points.shape[1] != P.K + 1:
        raise ModelError("points have the wrong dimension for this problem")
    ev = evaluate_points(P, rule, points)
    viol = float(max(0.0, -ev["residual"].min()))
    _, _, _, sign = P.with_sense_min()
    worst_min = float(ev["objective"].max())
    realized = sign * worst_min
    bound = rule.value if bound is None else bound
    ok_bound = True
    if bound is not None and np.isfinite(bound):
        ok_bound = worst_min <= sign * bound + tol * max(1.0, abs(bound))
    return {
        "violation": viol,
        "realized": realized,
        "bound": None if bound is None else float(bound),
        "verdict": bool(viol <= tol and ok_bound),
        "n_points": int(points.shape[0]),
    }


# ---------------------------------------------------------------------------
# brute force

def _affine_frame(U: UncertaintySet, anchors: np.ndarray, tol: float = 1e-9):
    """Base point and orthonormal directions of the affine hull of the set."""
    X = anchors[:, :-1]
    x0 = X.mean(axis=0)
    if X.shape[0] <= 1:
        return x0, np.zeros((U.K, 0))
    _, s, Vt = np.linalg.svd(X - x0, full_matrices=False)
    r = int(np.sum(s > tol * max(1.0, s.max(initial=0.0))))
    return x0, Vt[:r].T


def _frame_anchors(U: UncertaintySet) -> np.ndarray:
    pts = [sample_relaxed(U, 64, seed=0)]
    for k in range(U.K):
        for s in (1.0, -1.0):
            d = np.zeros(U.dim)
            d[k] = s
            val, v, status = support(U, d)
            if status != "optimal":
                raise ModelError("brute force needs a bounded nonempty set")
            pts.append(v[None])
    A = np.vstack(pts)
    A[:, -1] = 1.0
    return A


def _member(U: UncertaintySet, X: np.ndarray, tol: float) -> np.ndarray:
    V = np.hstack([X, np.ones((X.shape[0], 1))])
    ok = U.cone.contains_many(V, tol)
    for C in U.quad_mats:
        ok &= np.abs(np.einsum("si,ij,sj->s", V, C, V)) <= tol
    return ok


def brute_force_small(target, U: UncertaintySet | None = None, step: float = 1e-3,
                      rule=None, max_points: int = 2_000_000, polish: bool = True) -> dict:
    """Maximum of a function over a set of dimension at most 3.

    ``target`` is a callable on homogenized points ``(S, K+1) -> (S,)``, a
    symmetric matrix ``Q`` (maximizes ``v' Q v``) or a problem together with
    ``rule`` (maximizes the realized objective of the rule, minimization
    form).  The search combines vertices (polyhedral sets), a grid over the
    affine hull with spacing ``step`` (coarser first when the grid would
    exceed ``max_points``, then refined around the best cells down to
    ``step``) and a local polish of the best candidates.
    """
    if isinstance(target, MsroProblem):
        P = target
        if rule is None:
            raise ValueError("a rule is required when the target is a problem")
        U = P.uncertainty if U is None else U
        if U.origin is not None and hasattr(U.origin, "lift"):
            origin = U.origin
            base = origin.base

            def fn(V):
                lifted = np.array([origin.lift(v) for v in V])
                return evaluate_points(P, rule, lifted)["objective"]

            return brute_force_small(fn, base, step, max_points=max_points, polish=polish)

        def fn(V):
            return evaluate_points(P, rule, V)["objective"]
    elif callable(target):
        fn = target
    else:
        Q = np.asarray(target, dtype=float)

        def fn(V):
            return np.einsum("si,ij,sj->s", V, Q, V)
    if U is None:
        raise ValueError("an uncertainty set is required")
    if U.K > 3:
        raise ModelError("brute force is limited to K <= 3")
    mtol = 1e-9
    cands = []
    if U.is_polyhedral or not U.cone.soc_blocks:
        try:
            cands.append(vertices(U))
        except ModelError:
            pass
    anchors = _frame_anchors(U)
    x0, Bm = _affine_frame(U, anchors)
    d = Bm.shape[1]
    if d:
        T = (anchors[:, :-1] - x0) @ Bm
        lo, hi = T.min(axis=0), T.max(axis=0)
        h = step
        while np.prod(np.floor((hi - lo) / h) + 1) > max_points:
            h *= 2
        centers, width = None, None
        while True:
            if centers is None:
                axes = [np.arange(lo[i], hi[i] + 0.5 * h, h) for i in range(d)]
                G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
            else:
                offs = np.arange(-width, width + 0.5 * h, h)
                local = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
                G = (centers[:, None, :] + local[None]).reshape(-1, d)
                G = np.clip(G, lo, hi)
            X = x0 + G @ Bm.T
            X = X[_member(U, X, mtol)]
            if X.shape[0]:
                V = np.hstack([X, np.ones((X.shape[0], 1))])
                vals = fn(V)
                top = np.argsort(vals)[-8:]
                cands.append(V[top])
                centers = (X[top] - x0) @ Bm
            if h <= step * (1 + 1e-12) or centers is None:
                break
            width = 2 * h
            h = max(h / 4, step)
    cands = np.vstack(cands) if cands else np.zeros((0, U.dim))
    if cands.shape[0] == 0:
        raise ModelError("no feasible point found")
    vals = fn(cands)
    best = int(np.argmax(vals))
    bv, bx = float(vals[best]), cands[best]
    if polish and d:
        for i in np.argsort(vals)[-5:]:
            v, x = _polish(fn, U, cands[i], x0, Bm)
            if v > bv:
                bv, bx = v, x
    return {"value": bv, "argmax": bx}


def _polish(fn, U: UncertaintySet, v0: np.ndarray, x0, Bm):
    def point(t):
        return np.r_[x0 + Bm @ t, 1.0]

    cons = []
    P = U.cone.P_rows
    cons.append({"type": "ineq", "fun": lambda t: P @ point(t)})
    for R in U.cone.soc_blocks:
        cons.append({"type": "ineq", "fun": lambda t, R=R: (R @ point(t))[-1] ** 2 - np.sum((R @ point(t))[:-1] ** 2)})
        cons.append({"type": "ineq", "fun": lambda t, R=R: (R @ point(t))[-1]})
    t0 = (v0[:-1] - x0) @ Bm
    res = minimize(lambda t: -float(fn(point(t)[None])[0]), t0, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-12, "maxiter": 200})
    v = point(res.x)
    if _member(U, v[None, :-1], 1e-9)[0]:
        return float(fn(v[None])[0]), v
    return -np.inf, v


# ---------------------------------------------------------------------------
# certificates

def certificate_soundness(assembly, sol, n: int = 10_000, seed: int = 0) -> dict:
    """Sample ``v' V v`` over the cone for every certified matrix.

    Both the projected certificate matrix and the constraint matrix at the
    solution are checked; quotients are scaled by ``|v|^2 max(1, |V|)``.
    """
    cp = assembly.cp
    U = cp.uncertainty
    pts = sample_relaxed(U, n, seed)
    lifted = sample(U, min(n, 2000), seed) if U.quad_mats else np.zeros((0, U.dim))
    d = assembly.decision(sol)
    worst_cert, worst_cons, count = math.inf, math.inf, 0
    for c, exp, W, aux in assembly.certificates(sol):
        Vc = exp.matrix(W, aux, project=True)
        sc = max(1.0, np.abs(Vc).max())
        q = np.einsum("si,ij,sj->s", pts, Vc, pts) / (np.sum(pts ** 2, axis=1) * sc)
        worst_cert = min(worst_cert, float(q.min()))
        if lifted.shape[0]:
            M = c.matrix(d)
            sm = max(1.0, np.abs(M).max())
            qm = np.einsum("si,ij,sj->s", lifted, M, lifted) / (np.sum(lifted ** 2, axis=1) * sm)
            worst_cons = min(worst_cons, float(qm.min()))
        count += 1
    return {
        "n_matrices": count,
        "n_points": int(pts.shape[0]),
        "min_certificate": worst_cert if count else 0.0,
        "min_constraint": worst_cons if np.isfinite(worst_cons) else None,
        "ok": bool(count == 0 or worst_cert >= -1e-8),
    }


# ---------------------------------------------------------------------------
# statistics

def gap(a: float, b: float, sense: str = "min") -> float:
    """Relative gap of ``a`` against the reference ``b`` in percent.

    Positive means ``a`` is worse: larger for minimization, smaller for
    maximization.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    if b == 0:
        raise ZeroDivisionError("reference value is zero")
    g = 100.0 * (a - b) / abs(b)
    return g if sense == "min" else -g


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: the smallest value with at least ``p`` percent at or below it."""
    x = np.sort(np.asarray(values, dtype=float))
    x = x[np.isfinite(x)]
    if x.size == 0:
        return math.nan
    if not 0 <= p <= 100:
        raise ValueError("p must lie in [0, 100]")
    rank = max(1, math.ceil(p / 100.0 * x.size))
    return float(x[rank - 1])


def verdict_json(res: dict) -> dict:
    return {k: res[k] for k in ("violation", "realized", "bound", "verdict")}
