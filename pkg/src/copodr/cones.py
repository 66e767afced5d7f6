"""Semidefinite inner approximations of copositive cones.

For a cone ``K = {u : P u >= 0, R_b u in SOC}`` the inner approximation IA
certifies ``V in COP(K)`` through

    V = W + sum_b tau_b S_b + P' Sigma P + sum_b (P' Phi_b R_b + R_b' Phi_b' P) / 2

with ``W`` PSD, ``Sigma`` entrywise nonnegative, ``tau_b >= 0`` and every row
of ``Phi_b`` in the second-order cone.  The approximate S-lemma cone AS uses

    V = W + sum_b tau_b S_b + (P' theta e' + e theta' P) / 2,   theta >= 0.

Both are linear in the certificate, so each is stored once per cone as a
sparse *template* mapping the non-``W`` certificate variables to the scaled
vectorization of their contribution.  Cones with several SOC blocks get one
``(tau_b, S_b, Phi_b)`` per block; cross products between blocks are left
out, which keeps the approximation inner.

Constraints that are linear in the parameter (their matrix only lives in the
last row and column) are better served by :func:`robust_expand`, the exact
conic-duality counterpart over an explicit :class:`~copodr.geometry.ConicSet`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._linalg import TripletBuilder, smat, svec, svec_len, svec_pos, sym_outer_svec
from .model import ConeK, UncertaintySet

APPROX = ("IA", "AS")


def build_shat(R: np.ndarray) -> np.ndarray:
    """``R' e_r e_r' R - sum_{l<r} R' e_l e_l' R`` for the SOC rows ``R``."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] < 2:
        raise ValueError("an SOC block needs at least two rows")
    return np.outer(R[-1], R[-1]) - R[:-1].T @ R[:-1]


@dataclass(eq=False)
class ConeExpansion:
    """Template of an inner approximation for a fixed cone.

    ``template @ aux`` is the scaled vectorization of every certificate term
    except ``W``.  ``aux`` is laid out as the concatenation of ``blocks``,
    each ``(kind, size, name)`` with kind ``nonneg`` or ``soc`` (radius first).
    """

    kind: str
    dim: int
    blocks: list
    template: sp.csc_matrix
    names: dict = field(default_factory=dict)

    @property
    def n_aux(self) -> int:
        return self.template.shape[1]

    def slices(self):
        pos = 0
        for kind, size, name in self.blocks:
            yield kind, size, name, slice(pos, pos + size)
            pos += size

    def matrix(self, W_svec: np.ndarray, aux: np.ndarray, project: bool = True) -> np.ndarray:
        """Rebuild ``V`` from a certificate, optionally projecting it first.

        With ``project`` the parts are mapped into their cones (PSD part
        eigen-clipped, nonnegative parts clipped, SOC rows projected), so the
        result is copositive by construction whenever the template is right.
        """
        aux = np.array(aux, dtype=float)
        W = smat(W_svec)
        if project:
            lam, Q = np.linalg.eigh(W)
            W = (Q * np.maximum(lam, 0)) @ Q.T
            for kind, size, name, sl in self.slices():
                if kind == "nonneg":
                    aux[sl] = np.maximum(aux[sl], 0)
                else:
                    aux[sl] = project_soc(aux[sl])
        return W + smat(self.template @ aux)


def project_soc(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{(t, y) : ||y|| <= t}``."""
    t, y = x[0], x[1:]
    ny = np.linalg.norm(y)
    if ny <= t:
        return x.copy()
    if ny <= -t:
        return np.zeros_like(x)
    a = 0.5 * (t + ny)
    return np.r_[a, a * y / ny]


def _cone_key(K: ConeK):
    return (K.P_rows.tobytes(), K.P_rows.shape, tuple((R.tobytes(), R.shape) for R in K.soc_blocks))


_CACHE: dict = {}


def _cached(kind: str, K: ConeK, builder):
    key = (kind, _cone_key(K))
    hit = _CACHE.get(key)
    if hit is None:
        if len(_CACHE) > 64:
            _CACHE.clear()
        hit = builder(K)
        _CACHE[key] = hit
    return hit


def _build_ia(K: ConeK) -> ConeExpansion:
    n = K.dim
    P = K.P_rows
    p = P.shape[0]
    L = svec_len(n)
    tb = TripletBuilder()
    col = 0
    blocks = []
    nb = len(K.soc_blocks)
    for b, R in enumerate(K.soc_blocks):
        v = svec(build_shat(R))
        nz = np.flatnonzero(v)
        tb.add(nz, col, v[nz])
        col += 1
    if nb:
        blocks.append(("nonneg", nb, "tau"))
    # Sigma, upper triangle a <= b
    ia, ib = np.triu_indices(p)
    sig0 = col
    for a, b_ in zip(ia, ib):
        pos, val = sym_outer_svec(P[a], P[b_])
        tb.add(pos, col, val if a == b_ else 2.0 * val)
        col += 1
    blocks.append(("nonneg", ia.size, "sigma"))
    for b, R in enumerate(K.soc_blocks):
        r = R.shape[0]
        order = np.r_[r - 1, np.arange(r - 1)]
        for a in range(p):
            for ell in order:
                pos, val = sym_outer_svec(P[a], R[ell])
                tb.add(pos, col, val)
                col += 1
            blocks.append(("soc", r, f"phi[{b}][{a}]"))
    T = tb.tocsc((L, col))
    names = {"sigma_pairs": (ia, ib), "sigma_start": sig0}
    return ConeExpansion("IA", n, blocks, T, names)


def _build_as(K: ConeK) -> ConeExpansion:
    n = K.dim
    P = K.P_rows
    L = svec_len(n)
    e = np.zeros(n)
    e[-1] = 1.0
    tb = TripletBuilder()
    col = 0
    blocks = []
    nb = len(K.soc_blocks)
    for R in K.soc_blocks:
        v = svec(build_shat(R))
        nz = np.flatnonzero(v)
        tb.add(nz, col, v[nz])
        col += 1
    if nb:
        blocks.append(("nonneg", nb, "tau"))
    for a in range(P.shape[0]):
        pos, val = sym_outer_svec(P[a], e)
        tb.add(pos, col, val)
        col += 1
    blocks.append(("nonneg", P.shape[0], "theta"))
    return ConeExpansion("AS", n, blocks, tb.tocsc((L, col)))


def ia_expand(K: ConeK) -> ConeExpansion:
    """Template of the IA certificate for ``K``."""
    return _cached("IA", K, _build_ia)


def as_expand(K: ConeK) -> ConeExpansion:
    """Template of the approximate S-lemma certificate for ``K``."""
    return _cached("AS", K, _build_as)


def expansion(K: ConeK, kind: str) -> ConeExpansion:
    if kind == "IA":
        return ia_expand(K)
    if kind == "AS":
        return as_expand(K)
    raise ValueError(f"unknown approximation {kind!r}; choose from {APPROX}")


def as_to_ia(K: ConeK, theta: np.ndarray, tau: np.ndarray | None = None) -> np.ndarray:
    """Map an AS certificate to IA auxiliaries (``Sigma`` from ``theta``, ``Phi = 0``)."""
    ia = ia_expand(K)
    aux = np.zeros(ia.n_aux)
    nb = len(K.soc_blocks)
    if nb and tau is not None:
        aux[:nb] = tau
    ia_i, ib_i = ia.names["sigma_pairs"]
    s0 = ia.names["sigma_start"]
    e = np.zeros(K.dim)
    e[-1] = 1.0
    last = int(np.flatnonzero(np.all(K.P_rows == e, axis=1))[0])
    for k, (a, b) in enumerate(zip(ia_i, ib_i)):
        if a == b == last:
            aux[s0 + k] = theta[last]
        elif b == last:
            aux[s0 + k] = 0.5 * theta[a]
        elif a == last:
            aux[s0 + k] = 0.5 * theta[b]
    return aux


# ---------------------------------------------------------------------------
# robust counterpart of linear forms

@dataclass(eq=False)
class RobustExpansion:
    """Dual certificate of ``a' v >= 0`` on a :class:`ConicSet`.

    ``a = Fmat @ mu`` together with ``Gmat @ mu = 0`` and ``mu`` in the dual
    cones listed in ``blocks`` (zero-cone blocks give free multipliers).
    A trailing nonnegative slack multiplies ``e_last`` unless the set already
    contains the row ``v[-1] >= 0``.
    """

    dim: int
    blocks: list
    Fmat: sp.csc_matrix
    Gmat: sp.csc_matrix

    @property
    def n_aux(self) -> int:
        return self.Fmat.shape[1]


def robust_expand(S) -> RobustExpansion:
    n = S.dim
    Fcols, Gcols, blocks = [], [], []
    has_last = False
    e = np.zeros(n)
    e[-1] = 1.0
    for kind, F, G, size in S.blocks:
        Fcols.append(sp.csc_matrix(F.T))
        Gcols.append(sp.csc_matrix(G.T))
        dk = "free" if kind == "zero" else kind
        blocks.append((dk, size if kind != "psd" else size, kind))
        if kind == "nonneg" and np.any(np.all(F == e, axis=1)):
            has_last = True
    if not has_last:
        Fcols.append(sp.csc_matrix(e[:, None]))
        Gcols.append(sp.csc_matrix((S.n_aux, 1)))
        blocks.append(("nonneg", 1, "nonneg"))
    return RobustExpansion(n, blocks, sp.hstack(Fcols, format="csc"), sp.hstack(Gcols, format="csc"))


def linear_form(n: int) -> sp.csr_matrix:
    """Rows of scaled svec that hold the last column, mapped to ``a``.

    If ``V`` only lives in its last row and column then
    ``u' V u = a' u`` with ``a_i = 2 V[i, n-1]`` and ``a_{n-1} = V[n-1, n-1]``.
    Returns the selection matrix ``Tsel`` with ``a = Tsel @ svec(V)``.
    """
    rows = np.arange(n)
    pos = svec_pos(rows, np.full(n, n - 1))
    vals = np.where(rows == n - 1, 1.0, np.sqrt(2.0))
    return sp.csr_matrix((vals, (rows, pos)), shape=(n, svec_len(n)))


def last_only_mask(n: int) -> np.ndarray:
    """Boolean mask over svec positions outside the last row/column."""
    mask = np.ones(svec_len(n), dtype=bool)
    mask[svec_pos(np.arange(n), np.full(n, n - 1))] = False
    return mask


# ---------------------------------------------------------------------------
# exactness flags

def exactness_flags(K: ConeK, tol: float = 1e-7) -> dict:
    """Detect cones on which IA equals the copositive cone.

    ``pure_soc``: no polyhedral rows besides ``u_last >= 0`` and one SOC
    block.  ``facet_disjoint``: a single SOC block and no hyperplane
    ``p_l' u = 0`` meets the SOC cone outside ``K``, checked per pair of rows
    by minimizing ``p_m' u`` over the SOC slice on the hyperplane.
    """
    from .geometry import ConicSet

    e = np.zeros(K.dim)
    e[-1] = 1.0
    P = K.P_rows
    poly = [i for i in range(P.shape[0]) if not np.array_equal(P[i], e)]
    single = len(K.soc_blocks) == 1
    pure = single and not poly
    disjoint = single
    if single and poly:
        R = K.soc_blocks[0]
        for ell in poly:
            S = ConicSet(K.dim)
            S.add("soc", np.vstack([R[-1:], R[:-1]]))
            S.add("zero", P[ell][None, :])
            for m in poly:
                if m == ell:
                    continue
                val, _, status = S.support(-P[m])
                if status == "infeasible":
                    break
                if status != "optimal" or -val < -tol:
                    disjoint = False
                    break
            if not disjoint:
                break
    elif not single:
        disjoint = False
    return {"pure_soc": bool(pure), "facet_disjoint": bool(disjoint or pure)}


# ---------------------------------------------------------------------------
# standalone certificate

def certify(V: np.ndarray, U: UncertaintySet | ConeK, kind: str = "IA", tol: float = 1e-9) -> dict:
    """Largest ``t`` with ``V - t E - sum_i beta_i C_i`` in the inner cone.

    ``E = e_last e_last'``.  Since ``u' E u = 1`` on the set, ``t`` is a
    certified lower bound on ``min u' V u``; ``V`` is certified copositive on
    the set when ``t >= 0``.  Returns ``t``, the status and the certificate.
    """
    from .conic import ConicBuilder, solve

    if isinstance(U, ConeK):
        U = UncertaintySet(U)
    K = U.cone
    n = K.dim
    exp = expansion(K, kind)
    L = svec_len(n)
    B = ConicBuilder()
    ht = B.var("free", 1, "t")
    hb = B.var("free", len(U.quad_mats), "beta")
    hW = B.var("psd", n, "W")
    hs = [B.var(k, s, name) for k, s, name in exp.blocks]
    B.cost(ht, [-1.0])
    E = np.zeros((n, n))
    E[-1, -1] = 1.0
    Cm = np.array([svec(C) for C in U.quad_mats]).reshape(-1, L).T
    terms = [(ht, svec(E)[:, None]), (hb, Cm), (hW, sp.identity(L))]
    for (k, s, name, sl), h in zip(exp.slices(), hs):
        terms.append((h, exp.template[:, sl]))
    B.rows(terms, svec(V))
    prog, index = B.build()
    sol = solve(prog, tol=tol)
    out = {"status": sol.status, "t": -sol.objective if sol.ok else np.nan}
    if sol.ok:
        out["W"] = sol.z[index[hW]]
        out["aux"] = np.concatenate([sol.z[index[h]] for h in hs]) if hs else np.zeros(0)
        out["beta"] = sol.z[index[hb]]
    return out
