"""Assembly of copositive programs into standard-form conic programs.

Every copositivity constraint is replaced by one of

* ``IA`` / ``AS``: the semidefinite inner approximation of the cone,
  ``coef @ d - svec(W) - T @ aux = -base`` with ``W`` PSD and the template
  auxiliaries in their cones;
* ``robust``: for constraints whose matrix lives in the last row and column
  only (linear in the parameter), the conic-duality counterpart over an
  explicit set, ``Tsel (base + coef @ d) = F' mu``, ``G' mu = 0``.

The robust form is used automatically (``reduce_linear``) where it gives the
same value as the inner approximation: on polyhedral sets without quadratic
equalities, and for ``IA`` on sets carrying verified hull rows.  Passing
``robust_set`` forces it for every constraint (the outer-approximation
pipelines for piecewise rules).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .._linalg import svec_len
from ..cones import ConeExpansion, RobustExpansion, expansion, linear_form, robust_expand
from ..reformulate import CopositiveProgram
from .program import ConicBuilder, ConicProgram, Solution


@dataclass(eq=False)
class Assembly:
    """Assembled program plus the maps needed to read a solution back."""

    program: ConicProgram
    cp: CopositiveProgram
    approx: str
    dec_index: np.ndarray
    modes: list
    certs: list = field(default_factory=list)

    def decision(self, sol: Solution) -> np.ndarray:
        return sol.z[self.dec_index]

    def value(self, sol: Solution) -> float:
        """Optimal value in the user's sense."""
        return self.cp.value(self.decision(sol))

    def certificates(self, sol: Solution):
        """Yield ``(constraint, expansion, W svec, aux)`` for cone-mode constraints."""
        for c, mode, cert in zip(self.cp.constraints, self.modes, self.certs):
            if mode in ("IA", "AS"):
                yield c, cert["exp"], sol.z[cert["W"]], sol.z[cert["aux"]]


def assemble(cp: CopositiveProgram, approx: str = "IA", robust_set=None,
             reduce_linear: bool = True) -> Assembly:
    """Build the conic program for ``cp`` under the chosen approximation."""
    from ..geometry import ConicSet

    if approx not in ("IA", "AS"):
        raise ValueError("approx must be 'IA' or 'AS'")
    U = cp.uncertainty
    n = U.dim
    L = svec_len(n)
    kinds = cp.vars.kinds()
    free_cols = np.flatnonzero(kinds == "free")
    nn_cols = np.flatnonzero(kinds == "nonneg")

    B = ConicBuilder()
    hf = B.var("free", free_cols.size, "decision_free")
    hn = B.var("nonneg", nn_cols.size, "decision_nonneg")
    B.cost(hf, cp.cost[free_cols])
    B.cost(hn, cp.cost[nn_cols])

    def dec_terms(M: sp.spmatrix):
        M = sp.csc_matrix(M)
        return [(hf, M[:, free_cols]), (hn, M[:, nn_cols])]

    auto_set = None
    if robust_set is None and reduce_linear:
        if U.is_polyhedral:
            auto_set = ConicSet.from_uncertainty(U, use_hull=False)
        elif approx == "IA" and U.hull_rows is not None:
            auto_set = ConicSet.from_uncertainty(U, use_hull=True)
    rob: RobustExpansion | None = None
    rob_set = None
    Tsel = linear_form(n)
    modes, certs = [], []
    exp: ConeExpansion | None = None
    for c in cp.constraints:
        S = robust_set if robust_set is not None else auto_set
        use_robust = S is not None and c.is_linear()
        if robust_set is not None and not use_robust:
            raise ValueError(f"constraint {c.label!r} is not linear in the parameter; "
                             "an outer-approximation set only applies to linear forms")
        if use_robust:
            if rob is None or rob_set is not S:
                rob = robust_expand(S)
                rob_set = S
            hs = []
            for kind, size, _ in rob.blocks:
                hs.append(B.var(kind, size))
            Fm = rob.Fmat.tocsc()
            terms = dec_terms(Tsel @ c.core_coef())
            pos = 0
            for (kind, size, _), h in zip(rob.blocks, hs):
                length = svec_len(size) if kind == "psd" else size
                terms.append((h, -Fm[:, pos:pos + length]))
                pos += length
            B.rows(terms, -(Tsel @ c.base))
            if rob.Gmat.shape[0]:
                Gm = rob.Gmat.tocsc()
                gterms = []
                pos = 0
                for (kind, size, _), h in zip(rob.blocks, hs):
                    length = svec_len(size) if kind == "psd" else size
                    gterms.append((h, Gm[:, pos:pos + length]))
                    pos += length
                B.rows(gterms, np.zeros(rob.Gmat.shape[0]))
            modes.append("robust")
            certs.append({"mu": hs})
        else:
            if exp is None:
                exp = expansion(U.cone, approx)
            hW = B.var("psd", n)
            terms = dec_terms(c.coef)
            terms.append((hW, -sp.identity(L, format="csc")))
            haux = []
            for kind, size, name, sl in exp.slices():
                h = B.var(kind, size)
                haux.append(h)
                terms.append((h, -exp.template[:, sl]))
            B.rows(terms, -c.base)
            modes.append(approx)
            certs.append({"exp": exp, "W": hW, "aux": haux})
    if cp.lin_G.shape[0]:
        r = cp.lin_G.shape[0]
        hs = B.var("nonneg", r)
        B.rows(dec_terms(cp.lin_G) + [(hs, -sp.identity(r))], cp.lin_g)
    prog, index = B.build()
    dec = np.empty(cp.vars.n, dtype=np.int64)
    dec[free_cols] = index[hf]
    dec[nn_cols] = index[hn]
    for cert in certs:
        if "W" in cert:
            cert["W"] = index[cert["W"]]
            cert["aux"] = np.concatenate([index[h] for h in cert["aux"]]) if cert["aux"] else np.zeros(0, dtype=np.int64)
        else:
            cert["mu"] = np.concatenate([index[h] for h in cert["mu"]])
    return Assembly(prog, cp, approx, dec, modes, certs)
