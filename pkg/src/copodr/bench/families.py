"""Random instances of the three experiment families.

All generators accept anything :func:`numpy.random.default_rng` accepts as
seed and return a :class:`~copodr.model.MsroProblem`.  Factor models with
``||zeta||_inf <= 1, ||zeta||_1 <= rho`` use the split ``zeta = zp - zm``
with ``zp, zm >= 0``, ``zp_k + zm_k <= 1`` and ``sum(zp + zm) <= rho``,
which keeps the set polyhedral; the parameter vector holds ``(zp, zm)``.
"""
from __future__ import annotations

import numpy as np

from ..model import MsroProblem, UncertaintySet, cone_from_polytope


def split_l1_box(dim: int, rho: float, stages: int = 1) -> UncertaintySet:
    """Product over stages of the split description of the l1/l_inf ball."""
    K = 2 * dim * stages
    rows, rhs = [], []
    for t in range(stages):
        off = 2 * dim * t
        for k in range(2 * dim):
            r = np.zeros(K)
            r[off + k] = 1.0
            rows.append(r)
            rhs.append(0.0)
        for k in range(dim):
            r = np.zeros(K)
            r[off + k] = r[off + dim + k] = -1.0
            rows.append(r)
            rhs.append(-1.0)
        r = np.zeros(K)
        r[off:off + 2 * dim] = -1.0
        rows.append(r)
        rhs.append(-float(rho))
    return UncertaintySet(cone_from_polytope(np.array(rows), np.array(rhs)))


def _factor_map(F: np.ndarray, offset: int, K: int) -> np.ndarray:
    """Matrix ``M`` with ``F zeta = M u`` for the split coordinates at ``offset``."""
    m, d = F.shape
    M = np.zeros((m, K + 1))
    M[:, offset:offset + d] = F
    M[:, offset + d:offset + 2 * d] = -F
    return M


# ---------------------------------------------------------------------------
# multi-item newsvendor

def gen_newsvendor(seed=0, N: int = 5, rho: float = 4.0, r: float = 80.0, s: float = 60.0) -> MsroProblem:
    """Two-stage newsvendor in the profit-maximizing epigraph form.

    ``max sum_n y_n`` subject to ``y_n <= r_n xi_n - c_n x_n`` and
    ``y_n <= (r_n - c_n + s_n) x_n - s_n xi_n`` for all
    ``xi = xibar + diag(xihat) F zeta``, ``x >= 0``.
    """
    rng = np.random.default_rng(seed)
    c = rng.uniform(40.0, 60.0, N)
    xihat = rng.uniform(50.0, 60.0, N)
    F = rng.uniform(-1.0, 1.0, (N, N))
    F = F / F.sum(axis=1, keepdims=True)
    xibar = np.full(N, 60.0)
    rr, ss = np.full(N, r), np.full(N, s)
    U = split_l1_box(N, rho)
    K = 2 * N
    n = K + 1
    Xi = xihat[:, None] * _factor_map(F, 0, K)
    Xi[:, -1] = xibar
    J = 2 * N
    A = np.zeros((n, J, N))
    B = np.zeros((n, J, N))
    H = np.zeros((J, n))
    for i in range(N):
        A[-1, 2 * i, i] = -c[i]
        B[-1, 2 * i, i] = -1.0
        H[2 * i] = -rr[i] * Xi[i]
        A[-1, 2 * i + 1, i] = rr[i] - c[i] + ss[i]
        B[-1, 2 * i + 1, i] = -1.0
        H[2 * i + 1] = ss[i] * Xi[i]
    D = np.zeros((N, n))
    D[:, -1] = 1.0
    return MsroProblem(
        stage_dims=(K,), N=(N,), c=np.zeros(N), A_hat=A, B_hat=(B,), D_hat=(D,), H_hat=H,
        uncertainty=U, X_G=np.eye(N), X_g=np.zeros(N), sense="max",
        names={"family": "newsvendor", "c": c.tolist(), "xihat": xihat.tolist(), "xibar": xibar.tolist(), "F": F.tolist(),
               "xi_map": Xi.tolist()},
    )


def newsvendor_demand(P: MsroProblem, u) -> np.ndarray:
    return np.asarray(P.names["xi_map"]) @ np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# inventory control with backlogging

def _season(t: int, p: int, P: int) -> float:
    ang = 2 * np.pi * (t - 1) / 12.0
    return float(np.sin(ang) if p < P // 2 else np.cos(ang))


def inventory_demand(P: MsroProblem, t: int, u) -> np.ndarray:
    """Demand of every product at stage ``t`` (one-based) for parameter ``u``."""
    return np.asarray(P.names["demand_maps"][t - 1]) @ np.asarray(u, dtype=float)


def gen_inventory(seed=0, T: int = 1, P: int = 4, Cb: float = 0.2, Ch: float = 0.2,
                  I0: float = 0.0, Ibar: float = 24.0, eliminate_balances: bool = True) -> MsroProblem:
    """Multi-stage inventory control, profit maximization.

    Parameters ``xi_t in [-1, 1]^4`` per stage; prices
    ``R_tp = 4 + alpha_p' xi_t`` and demands
    ``D_tp = 2 + season(t, p) + beta_p' xi_t / 2``.  The first order
    ``o_1`` is here-and-now; ``o_t`` for ``t >= 2`` is chosen at stage
    ``t - 1``; sales ``s_t`` at stage ``t``.  With ``eliminate_balances``
    the inventory ``I_t = I0 + sum (o - s)`` and backlog
    ``b_t = sum (D - s)`` are substituted into the bounds and the
    objective; otherwise they are stage variables tied by paired
    inequalities.
    """
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(-1.0, 1.0, (P, 4))
    beta = rng.uniform(-1.0, 1.0, (P, 4))
    Kt = 4
    K = Kt * T
    n = K + 1

    def coords(t):
        return slice(Kt * (t - 1), Kt * t)

    def price_row(t, p):
        r = np.zeros(n)
        r[coords(t)] = alpha[p]
        r[-1] = 4.0
        return r

    def demand_row(t, p):
        r = np.zeros(n)
        r[coords(t)] = 0.5 * beta[p]
        r[-1] = 2.0 + _season(t, p, P)
        return r

    U = UncertaintySet(cone_from_polytope(np.vstack([np.eye(K), -np.eye(K)]), -np.ones(2 * K)))
    # stage variable layout
    layout = []
    for t in range(1, T + 1):
        names = [("s", t, p) for p in range(P)]
        if t < T:
            names += [("o", t + 1, p) for p in range(P)]
        if not eliminate_balances:
            names += [("I", t, p) for p in range(P)] + [("b", t, p) for p in range(P)]
        layout.append(names)
    where = {v: (t, i) for t, names in enumerate(layout, start=1) for i, v in enumerate(names)}
    N = tuple(len(x) for x in layout)
    rows = []  # (A coefficient on o_1 (P,), {(stage, idx): coeff}, h row)

    def add(x_coef, terms, h):
        rows.append((x_coef, terms, h))

    def order(t, p):
        return None if t == 1 else where[("o", t, p)]

    for t in range(1, T + 1):
        for p in range(P):
            xz = np.zeros(P)
            add(xz, {where[("s", t, p)]: 1.0}, np.zeros(n))
            if t >= 2:
                add(xz, {order(t, p): 1.0}, np.zeros(n))
            if eliminate_balances:
                # backlog b_tp = sum_{tau <= t} (D - s) >= 0
                h = np.zeros(n)
                terms = {}
                for tau in range(1, t + 1):
                    h -= demand_row(tau, p)
                    terms[where[("s", tau, p)]] = -1.0
                add(xz, terms, h)
                # inventory I_tp = I0 + o_1 + sum_{2 <= tau <= t} o - sum s, within [0, Ibar]
                terms = {}
                for tau in range(1, t + 1):
                    terms[where[("s", tau, p)]] = -1.0
                    if tau >= 2:
                        terms[order(tau, p)] = 1.0
                xo = np.zeros(P)
                xo[p] = 1.0
                h = np.zeros(n)
                h[-1] = -I0
                add(xo, terms, h)
                h = np.zeros(n)
                h[-1] = I0 - Ibar
                add(-xo, {k: -v for k, v in terms.items()}, h)
            else:
                Iv, bv = where[("I", t, p)], where[("b", t, p)]
                add(xz, {bv: 1.0}, np.zeros(n))
                add(xz, {Iv: 1.0}, np.zeros(n))
                h = np.zeros(n)
                h[-1] = -Ibar
                add(xz, {Iv: -1.0}, h)
                # I_t - I_{t-1} - o_t + s_t = 0 (paired)
                terms = {Iv: 1.0, where[("s", t, p)]: 1.0}
                xo = np.zeros(P)
                h = np.zeros(n)
                if t == 1:
                    xo[p] = -1.0
                    h[-1] = I0
                else:
                    terms[where[("I", t - 1, p)]] = -1.0
                    terms[order(t, p)] = -1.0
                add(xo, terms, h)
                add(-xo, {k: -v for k, v in terms.items()}, -h)
                # b_t - b_{t-1} + s_t - D_t = 0 (paired)
                terms = {bv: 1.0, where[("s", t, p)]: 1.0}
                if t >= 2:
                    terms[where[("b", t - 1, p)]] = -1.0
                h = demand_row(t, p)
                add(np.zeros(P), terms, h)
                add(np.zeros(P), {k: -v for k, v in terms.items()}, -h)
    J = len(rows)
    A = np.zeros((n, J, P))
    B = [np.zeros((n, J, N[t])) for t in range(T)]
    H = np.zeros((J, n))
    for j, (xc, terms, h) in enumerate(rows):
        A[-1, j] = xc
        for (t, i), v in terms.items():
            B[t - 1][-1, j, i] += v
        H[j] = h
    # objective (maximize): prices times sales minus backlog and holding costs
    D = [np.zeros((N[t], n)) for t in range(T)]
    c = np.zeros(P)
    d0 = np.zeros(n)
    for t in range(1, T + 1):
        for p in range(P):
            si = where[("s", t, p)][1]
            D[t - 1][si] += price_row(t, p)
            if eliminate_balances:
                rem = T - t + 1  # stages whose backlog/inventory include stage t
                D[t - 1][si, -1] += (Cb + Ch) * rem
                d0 -= Cb * rem * demand_row(t, p)
                if t >= 2:
                    st, i = where[("o", t, p)]
                    D[st - 1][i, -1] -= Ch * rem
            else:
                D[t - 1][where[("b", t, p)][1], -1] -= Cb
                D[t - 1][where[("I", t, p)][1], -1] -= Ch
    if eliminate_balances:
        c[:] = -Ch * T
        d0[-1] -= Ch * T * P * I0
    return MsroProblem(
        stage_dims=(Kt,) * T, N=N, c=c, A_hat=A, B_hat=tuple(B), D_hat=tuple(D), H_hat=H,
        uncertainty=U, X_G=np.eye(P), X_g=np.zeros(P), sense="max", d0=d0,
        names={"family": "inventory", "alpha": alpha.tolist(), "beta": beta.tolist(),
               "variables": [[f"{v[0]}[{v[1]},{v[2] + 1}]" for v in st] for st in layout],
               "demand_maps": [[demand_row(t, p).tolist() for p in range(P)] for t in range(1, T + 1)]},
    )


def inventory_folds(P: MsroProblem) -> np.ndarray:
    """Folds ``max{0, xi_tk}`` for every factor coordinate."""
    K = P.K
    return np.hstack([np.eye(K), np.zeros((K, 1))])


# ---------------------------------------------------------------------------
# index tracking

def gen_index(seed=0, T: int = 1, rho: float = 2.0, n_assets: int = 4, n_factors: int = 3) -> MsroProblem:
    """Dynamic index tracking with absolute-deviation epigraphs, minimization.

    Returns ``xi_t = 1 + F zeta_t`` (assets first, target index last).
    Here-and-now ``x_0 >= 0`` with ``e'x_0 <= 1``; stage ``t`` chooses the
    portfolio value ``s_t = xi_t' x_{t-1}`` (paired inequalities), the
    allocation ``x_t >= 0`` with ``e'x_t <= s_t`` and the epigraph
    ``w_t >= |xi_t5 - s_t|``.
    """
    rng = np.random.default_rng(seed)
    m = n_assets + 1
    F = rng.uniform(-1.0, 1.0, (m, n_factors))
    F = F / np.abs(F).sum(axis=1, keepdims=True)
    d = n_factors
    Kt = 2 * d
    K = Kt * T
    n = K + 1
    U = split_l1_box(d, rho, T)

    def xi(t):
        M = _factor_map(F, Kt * (t - 1), K)
        M[:, -1] += 1.0
        return M

    # stage t variables: s_t, w_t, x_t (n_assets)
    Nt = 2 + n_assets
    S_, W_, X_ = 0, 1, 2
    A_rows, B_rows, H_rows = [], [], []

    def row():
        A = np.zeros((n, n_assets))
        Bs = [np.zeros((n, Nt)) for _ in range(T)]
        return A, Bs, np.zeros(n)

    for t in range(1, T + 1):
        Xt = xi(t)
        # s_t - xi_t[:4]' x_{t-1} = 0
        A, Bs, h = row()
        Bs[t - 1][-1, S_] = 1.0
        if t == 1:
            A[:, :] = -Xt[:n_assets].T
        else:
            Bs[t - 2][:, X_:X_ + n_assets] = -Xt[:n_assets].T
        for sgn in (1.0, -1.0):
            A_rows.append(sgn * A)
            B_rows.append([sgn * b for b in Bs])
            H_rows.append(sgn * h)
        # s_t - e'x_t >= 0, x_t >= 0
        A, Bs, h = row()
        Bs[t - 1][-1, S_] = 1.0
        Bs[t - 1][-1, X_:] = -1.0
        A_rows.append(A); B_rows.append(Bs); H_rows.append(h)
        for a in range(n_assets):
            A, Bs, h = row()
            Bs[t - 1][-1, X_ + a] = 1.0
            A_rows.append(A); B_rows.append(Bs); H_rows.append(h)
        # w_t + s_t >= xi_t5 and w_t - s_t >= -xi_t5
        for sgn in (1.0, -1.0):
            A, Bs, h = row()
            Bs[t - 1][-1, W_] = 1.0
            Bs[t - 1][-1, S_] = sgn
            h = sgn * Xt[n_assets]
            A_rows.append(A); B_rows.append(Bs); H_rows.append(h)
    J = len(A_rows)
    A_hat = np.stack(A_rows, axis=1)
    B_hat = tuple(np.stack([B_rows[j][t] for j in range(J)], axis=1) for t in range(T))
    H_hat = np.array(H_rows)
    D = []
    for t in range(T):
        Dt = np.zeros((Nt, n))
        Dt[W_, -1] = 1.0
        D.append(Dt)
    G = np.vstack([np.eye(n_assets), -np.ones((1, n_assets))])
    g = np.r_[np.zeros(n_assets), -1.0]
    return MsroProblem(
        stage_dims=(Kt,) * T, N=(Nt,) * T, c=np.zeros(n_assets), A_hat=A_hat, B_hat=B_hat,
        D_hat=tuple(D), H_hat=H_hat, uncertainty=U, X_G=G, X_g=g, sense="min",
        names={"family": "index", "F": F.tolist(), "rho": rho,
               "returns": [xi(t).tolist() for t in range(1, T + 1)]},
    )


def index_quadratic_mask(P: MsroProblem) -> list[np.ndarray]:
    """Quadratic rules for ``s_t`` and ``w_t``, linear rules for the allocations."""
    out = []
    for Nt in P.N:
        q = np.zeros(Nt, dtype=bool)
        q[:2] = True
        out.append(q)
    return out


# ---------------------------------------------------------------------------
# partition instance

def gen_partition(c=(2.0, 2.0, 3.0)) -> MsroProblem:
    """``max sum |u_l|`` over ``{u in [-1,1]^K : c'u = 0}`` as a robust problem.

    The epigraph variables ``y_l >= |u_l|`` are wait-and-see, so the optimal
    value is ``K`` exactly when ``c`` admits a partition into equal halves.
    """
    c = np.asarray(c, dtype=float).ravel()
    K = c.size
    n = K + 1
    P = np.vstack([np.eye(K), -np.eye(K), c, -c])
    q = np.r_[-np.ones(2 * K), 0.0, 0.0]
    U = UncertaintySet(cone_from_polytope(P, q))
    J = 2 * K
    B = np.zeros((n, J, K))
    H = np.zeros((J, n))
    for k in range(K):
        B[-1, 2 * k, k] = B[-1, 2 * k + 1, k] = 1.0
        H[2 * k, k] = 1.0
        H[2 * k + 1, k] = -1.0
    D = np.zeros((K, n))
    D[:, -1] = 1.0
    return MsroProblem((K,), (K,), np.zeros(0), np.zeros((n, J, 0)), (B,), (D,), H, U,
                       np.zeros((0, 0)), np.zeros(0), names={"family": "partition", "c": c.tolist()})
