"""Interior-point solution of standard-form conic programs.

Two backends are wired in: Clarabel (default; homogeneous embedding,
Nesterov-Todd scaling on symmetric cones, Mehrotra-type predictor-corrector,
sparse LDL) and CVXOPT's ``conelp`` (same algorithm family with dense or
CHOLMOD factorizations), used as an independent cross-check.  Both receive
the same presolved program; residuals are always recomputed here in the
standard form so that the reported numbers do not depend on the backend.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .._linalg import smat, svec, svec_len, triu_indices
from .program import ConicProgram, Solution

STATUSES = ("optimal", "infeasible", "unbounded", "max_iter", "numerical")


@dataclass
class SolveOptions:
    tol: float = 1e-8
    max_iter: int = 200
    backend: str = "clarabel"
    verbose: bool = False
    report_tol: float = 1e-7
    presolve: bool = True


# ---------------------------------------------------------------------------
# presolve

@dataclass
class _Presolved:
    prog: ConicProgram
    keep_rows: np.ndarray
    keep_cols: np.ndarray
    status: str | None = None


def _row_keys(A: sp.csr_matrix, b: np.ndarray):
    """Canonical hashable key per row (pattern plus normalized values)."""
    keys = []
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        idx = A.indices[lo:hi]
        val = A.data[lo:hi]
        order = np.argsort(idx)
        idx, val = idx[order], val[order]
        nz = val != 0
        idx, val = idx[nz], val[nz]
        if idx.size == 0:
            keys.append(None)
            continue
        scale = val[0]
        keys.append((idx.tobytes(), np.round(val / scale, 14).tobytes(), scale))
    return keys


def presolve(prog: ConicProgram, rank_repair: bool = False, tol: float = 1e-10) -> _Presolved:
    """Zero-row, duplicate-row and empty-column elimination.

    Columns are only removed from the free and nonnegative parts so that the
    cone structure is unchanged.  ``rank_repair`` additionally removes rows
    that are linear combinations of others (dense QR, small programs only)
    after checking consistency of the right-hand side.
    """
    A = prog.A.tocsr()
    A.sum_duplicates()
    b = prog.b
    m, n = A.shape
    keep = np.ones(m, dtype=bool)
    keys = _row_keys(A, b)
    seen: dict = {}
    bscale = 1.0 + np.abs(b).max(initial=0.0)
    for i, k in enumerate(keys):
        if k is None:
            keep[i] = False
            if abs(b[i]) > tol * bscale:
                return _Presolved(prog, np.arange(m), np.arange(n), "infeasible")
            continue
        key = (k[0], k[1])
        if key in seen:
            j = seen[key]
            ratio = k[2] / keys[j][2]
            if abs(b[i] - ratio * b[j]) > tol * bscale:
                return _Presolved(prog, np.arange(m), np.arange(n), "infeasible")
            keep[i] = False
        else:
            seen[key] = i
    rows = np.flatnonzero(keep)
    A = A[rows]
    b = b[rows]
    if rank_repair and A.shape[0] and A.shape[0] * A.shape[1] <= 4e7:
        Ad = A.toarray()
        _, R, piv = sla.qr(Ad.T, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        r = int(np.sum(d > 1e-10 * max(d.max(initial=0.0), 1.0)))
        if r < Ad.shape[0]:
            sel = np.sort(piv[:r])
            coef, *_ = np.linalg.lstsq(Ad[sel].T, Ad.T, rcond=None)
            if np.max(np.abs(coef.T @ b[sel] - b), initial=0.0) > 1e-8 * bscale:
                return _Presolved(prog, np.arange(m), np.arange(n), "infeasible")
            rows = rows[sel]
            A = A[sel]
            b = b[sel]
    colnnz = np.diff(A.tocsc().indptr)
    drop = np.zeros(n, dtype=bool)
    nf, nn = prog.n_free, prog.n_nonneg
    cscale = 1.0 + np.abs(prog.c).max(initial=0.0)
    for j in range(nf + nn):
        if colnnz[j] == 0:
            cj = prog.c[j]
            if (j < nf and abs(cj) > tol * cscale) or (j >= nf and cj < -tol * cscale):
                return _Presolved(prog, np.arange(m), np.arange(n), "unbounded")
            drop[j] = True
    cols = np.flatnonzero(~drop)
    labels = {}
    newpos = -np.ones(n, dtype=np.int64)
    newpos[cols] = np.arange(cols.size)
    for k, v in prog.labels.items():
        labels[k] = newpos[v]
    reduced = ConicProgram(
        c=prog.c[cols], A=A[:, cols], b=b,
        n_free=int(np.sum(~drop[:nf])), n_nonneg=int(np.sum(~drop[nf:nf + nn])),
        soc=prog.soc, psd=prog.psd, offset=prog.offset, labels=labels,
    )
    return _Presolved(reduced, rows, cols)


# ---------------------------------------------------------------------------
# residuals

def cone_violation(prog: ConicProgram, z: np.ndarray) -> float:
    """Largest violation of cone membership of ``z`` (0 when inside)."""
    worst = 0.0
    for kind, dim, sl in prog.cone_slices():
        v = z[sl]
        if kind == "nonneg":
            worst = max(worst, -v.min(initial=0.0))
        elif kind == "soc":
            worst = max(worst, np.linalg.norm(v[1:]) - v[0])
        else:
            worst = max(worst, -np.linalg.eigvalsh(smat(v)).min())
    return float(max(worst, 0.0))


def residuals(prog: ConicProgram, z, y, s) -> dict:
    bn = np.abs(prog.b).max(initial=0.0)
    cn = np.abs(prog.c).max(initial=0.0)
    pobj = float(prog.c @ z)
    dobj = float(prog.b @ y)
    rp = np.abs(prog.A @ z - prog.b).max(initial=0.0) / (1 + bn)
    rd = np.abs(prog.A.T @ y + s - prog.c).max(initial=0.0) / (1 + cn)
    gap = abs(pobj - dobj) / (1 + abs(pobj))
    return {
        "primal": float(rp),
        "dual": float(rd),
        "gap": float(gap),
        "cone_primal": cone_violation(prog, z) / (1 + np.abs(z).max(initial=0.0)),
        "cone_dual": cone_violation(prog, s) / (1 + np.abs(s).max(initial=0.0)),
    }


# ---------------------------------------------------------------------------
# backends

def _solve_clarabel(prog: ConicProgram, opts: SolveOptions):
    import clarabel

    m, n = prog.m, prog.n
    nc = n - prog.n_free
    E = sp.hstack([sp.csc_matrix((nc, prog.n_free)), -sp.identity(nc, format="csc")], format="csc")
    Acl = sp.vstack([prog.A.tocsc(), E], format="csc")
    bcl = np.concatenate([prog.b, np.zeros(nc)])
    cones = []
    if m:
        cones.append(clarabel.ZeroConeT(m))
    if prog.n_nonneg:
        cones.append(clarabel.NonnegativeConeT(prog.n_nonneg))
    cones += [clarabel.SecondOrderConeT(d) for d in prog.soc]
    cones += [clarabel.PSDTriangleConeT(d) for d in prog.psd]
    st = clarabel.DefaultSettings()
    st.verbose = opts.verbose
    st.max_iter = opts.max_iter
    st.tol_gap_abs = opts.tol
    st.tol_gap_rel = opts.tol
    st.tol_feas = opts.tol
    st.tol_ktratio = 1e-7
    P = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(P, prog.c, Acl, bcl, cones, st)
    sol = solver.solve()
    z = np.asarray(sol.x, dtype=float)
    zz = np.asarray(sol.z, dtype=float)
    y = -zz[:m]
    s = np.concatenate([np.zeros(prog.n_free), zz[m:]])
    name = str(sol.status).split(".")[-1]
    status = {
        "Solved": "optimal",
        "AlmostSolved": "almost",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "unbounded",
        "AlmostDualInfeasible": "unbounded",
        "MaxIterations": "max_iter",
        "MaxTime": "max_iter",
    }.get(name, "numerical")
    return status, z, y, s, int(sol.iterations), name


def _cvx_s_rows(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map scaled svec entries to cvxopt's column-major full-matrix storage."""
    r, c = triu_indices(d)
    k = np.arange(r.size)
    diag = r == c
    rows = [(c * d + r)[diag]]
    cols = [k[diag]]
    vals = [np.ones(diag.sum())]
    off = ~diag
    inv = 1.0 / np.sqrt(2.0)
    rows += [(c * d + r)[off], (r * d + c)[off]]
    cols += [k[off], k[off]]
    vals += [np.full(off.sum(), inv), np.full(off.sum(), inv)]
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _solve_cvxopt(prog: ConicProgram, opts: SolveOptions):
    import cvxopt
    from cvxopt import solvers

    n = prog.n
    nf = prog.n_free
    # s = E z_cone in cvxopt storage; G = -E, h = 0.
    blocks = []
    rowpos = 0
    colpos = nf
    R, C, V = [], [], []
    if prog.n_nonneg:
        k = np.arange(prog.n_nonneg)
        R.append(k)
        C.append(k + colpos)
        V.append(np.ones(k.size))
        rowpos += k.size
        colpos += k.size
    for d in prog.soc:
        k = np.arange(d)
        R.append(k + rowpos)
        C.append(k + colpos)
        V.append(np.ones(d))
        rowpos += d
        colpos += d
    for d in prog.psd:
        r, cidx, v = _cvx_s_rows(d)
        R.append(r + rowpos)
        C.append(cidx + colpos)
        V.append(v)
        rowpos += d * d
        colpos += svec_len(d)
    E = sp.coo_matrix((np.concatenate(V) if V else [], (np.concatenate(R) if R else [], np.concatenate(C) if C else [])),
                      shape=(rowpos, n))

    def spm(M):
        M = sp.coo_matrix(M)
        return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), M.shape)

    G = spm(-E)
    h = cvxopt.matrix(np.zeros(rowpos))
    dims = {"l": prog.n_nonneg, "q": list(prog.soc), "s": list(prog.psd)}
    A = spm(prog.A)
    b = cvxopt.matrix(prog.b)
    c = cvxopt.matrix(prog.c)
    solvers.options.update({
        "show_progress": opts.verbose, "maxiters": opts.max_iter,
        "abstol": opts.tol, "reltol": opts.tol, "feastol": opts.tol,
    })
    res = solvers.conelp(c, G, h, dims, A, b)
    z = np.array(res["x"]).ravel() if res["x"] is not None else np.zeros(n)
    y = -np.array(res["y"]).ravel() if res["y"] is not None else np.zeros(prog.m)
    zc = np.array(res["z"]).ravel() if res["z"] is not None else np.zeros(rowpos)
    s = np.asarray(E.T @ zc).ravel()
    # E' maps the full-matrix dual back to scaled svec, doubling off-diagonals
    # split across the two triangles; that is exactly the svec inner product.
    st = res["status"]
    status = {"optimal": "optimal", "primal infeasible": "infeasible", "dual infeasible": "unbounded"}.get(st, "almost")
    if st == "unknown" and res.get("iterations", 0) >= opts.max_iter:
        status = "max_iter"
    return status, z, y, s, int(res.get("iterations", 0)), st


def solve(prog: ConicProgram, opts: SolveOptions | None = None, **kw) -> Solution:
    """Solve ``prog`` and return primal, dual and slack vectors.

    The status is ``optimal`` only when the backend converged and the
    recomputed residuals are within ``opts.report_tol``; a converged solve
    with larger residuals is reported as ``numerical``.
    """
    opts = opts or SolveOptions()
    for k, v in kw.items():
        setattr(opts, k, v)
    t0 = time.perf_counter()
    n, m = prog.n, prog.m
    pre = presolve(prog, rank_repair=(opts.backend == "cvxopt")) if opts.presolve else _Presolved(prog, np.arange(m), np.arange(n))
    if pre.status is not None:
        z = np.zeros(n)
        return Solution(pre.status, z, np.zeros(m), prog.c.copy(), np.nan, np.nan, {}, 0,
                        time.perf_counter() - t0, opts.backend, "detected in presolve")
    red = pre.prog
    try:
        if opts.backend == "clarabel":
            status, zr, yr, sr, iters, msg = _solve_clarabel(red, opts)
        elif opts.backend == "cvxopt":
            status, zr, yr, sr, iters, msg = _solve_cvxopt(red, opts)
        else:
            raise ValueError(f"unknown backend {opts.backend!r}")
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, ValueError) and "backend" in str(exc):
            raise
        return Solution("numerical", np.zeros(n), np.zeros(m), prog.c.copy(), np.nan, np.nan, {}, 0,
                        time.perf_counter() - t0, opts.backend, f"backend failure: {exc}")
    z = np.zeros(n)
    z[pre.keep_cols] = zr
    y = np.zeros(m)
    y[pre.keep_rows] = yr
    s = prog.c - prog.A.T @ y
    res = residuals(prog, z, y, s)
    if status in ("optimal", "almost"):
        good = max(res["primal"], res["dual"], res["gap"]) <= opts.report_tol and \
            res["cone_primal"] <= opts.report_tol and res["cone_dual"] <= opts.report_tol
        status = "optimal" if good else "numerical"
    pobj = prog.objective(z)
    dobj = float(prog.b @ y + prog.offset)
    return Solution(status, z, y, s, pobj, dobj, res, iters, time.perf_counter() - t0, opts.backend, msg)


def project_psd(v: np.ndarray) -> np.ndarray:
    """Scaled-vector projection onto the PSD cone."""
    w, U = np.linalg.eigh(smat(v))
    return svec((U * np.maximum(w, 0)) @ U.T)
