"""SDPA sparse, CBF v3 and solution-text interchange for :class:`ConicProgram`.

A standard-form program ``min c'z, A z = b`` maps to the SDPA/CBF "matrix
variable" form: each equality row becomes a constraint ``<F_i, Y> = b_i``.
PSD entries stored in scaled vectors appear in the files as plain symmetric
matrices, so off-diagonal coefficients are divided by sqrt(2) on export and
multiplied back on import.

SDPA has neither free variables nor second-order cones.  Free variables are
written as differences of two LP-block entries and announced in a comment
line so that import restores the original layout; SOC blocks are rejected.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .._linalg import SQRT2, svec_len, svec_pos, triu_indices
from .program import ConicProgram, Solution

_TAG = "*copodr"


class FormatError(ValueError):
    """Raised for unsupported programs or malformed files."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _psd_offsets(prog: ConicProgram) -> list[int]:
    off = []
    pos = prog.n_free + prog.n_nonneg + sum(prog.soc)
    for d in prog.psd:
        off.append(pos)
        pos += svec_len(d)
    return off


def _entry_maps(prog: ConicProgram):
    """Per z index: (block kind tag, block number, i, j, factor to matrix entry)."""
    n = prog.n
    kind = np.zeros(n, dtype=np.int64)  # 0 lp, 1 psd
    blk = np.zeros(n, dtype=np.int64)
    ii = np.zeros(n, dtype=np.int64)
    jj = np.zeros(n, dtype=np.int64)
    fac = np.ones(n)
    lp = prog.n_free + prog.n_nonneg
    ii[:lp] = np.arange(lp)
    jj[:lp] = np.arange(lp)
    for b, (d, off) in enumerate(zip(prog.psd, _psd_offsets(prog))):
        r, c = triu_indices(d)
        sl = slice(off, off + r.size)
        kind[sl] = 1
        blk[sl] = b
        ii[sl] = r
        jj[sl] = c
        fac[sl] = np.where(r == c, 1.0, 1.0 / SQRT2)
    return kind, blk, ii, jj, fac


# ---------------------------------------------------------------------------
# SDPA sparse

def export_sdpa(prog: ConicProgram, path) -> None:
    """Write ``prog`` as SDPA sparse (.dat-s).

    The LP block comes first and is written with a negative block size.
    Free variable ``k`` becomes LP entries ``k`` and ``n_free + k`` with
    opposite signs.
    """
    if prog.soc:
        raise FormatError("SDPA format cannot represent second-order cone blocks; use CBF")
    nf, nn = prog.n_free, prog.n_nonneg
    n_lp = 2 * nf + nn
    kind, blk, ii, jj, fac = _entry_maps(prog)
    lp_pos = np.arange(prog.n)
    lp_pos[nf:nf + nn] += nf  # nonneg after the two free halves
    blocks = ([-n_lp] if n_lp else []) + list(prog.psd)
    psd_blkno = (2 if n_lp else 1) + blk

    lines = [f'"copodr conic program: {prog.m} rows, {prog.n} variables"',
             f"{_TAG} n_free {nf}", f"{_TAG} n_nonneg {nn}", f"{_TAG} offset {_fmt(prog.offset)}"]
    for name, idx in sorted(prog.labels.items()):
        idx = np.asarray(idx)
        if idx.size:
            lines.append(f"{_TAG} label {name} {int(idx.min())} {int(idx.max()) + 1}")
    lines.append(str(prog.m))
    lines.append(str(len(blocks)))
    lines.append(" ".join(str(b) for b in blocks) if blocks else "0")
    lines.append(" ".join(_fmt(v) for v in prog.b) if prog.m else "")

    def emit(matno: int, cols: np.ndarray, vals: np.ndarray) -> None:
        for j, v in zip(cols, vals):
            if v == 0:
                continue
            if kind[j] == 0:
                p = lp_pos[j]
                lines.append(f"{matno} 1 {p + 1} {p + 1} {_fmt(v)}")
                if j < nf:
                    lines.append(f"{matno} 1 {p + nf + 1} {p + nf + 1} {_fmt(-v)}")
            else:
                lines.append(f"{matno} {psd_blkno[j]} {ii[j] + 1} {jj[j] + 1} {_fmt(v * fac[j])}")

    # SDPA maximizes <F0, Y>; we minimize c'z.
    nzc = np.flatnonzero(prog.c)
    emit(0, nzc, -prog.c[nzc])
    A = prog.A.tocsr()
    for i in range(prog.m):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        order = np.argsort(A.indices[lo:hi], kind="stable")
        emit(i + 1, A.indices[lo:hi][order], A.data[lo:hi][order])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _numbers(line: str) -> list[str]:
    for ch in ",{}()":
        line = line.replace(ch, " ")
    return line.split()


def import_sdpa(path) -> ConicProgram:
    """Read an SDPA sparse file written by :func:`export_sdpa` or another tool."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    meta = {"n_free": 0, "offset": 0.0}
    labels = {}
    body = []
    for ln in raw:
        s = ln.strip()
        if not s:
            continue
        if s.startswith(_TAG):
            parts = s.split()
            if parts[1] == "n_free":
                meta["n_free"] = int(parts[2])
            elif parts[1] == "offset":
                meta["offset"] = float(parts[2])
            elif parts[1] == "label":
                labels[parts[2]] = (int(parts[3]), int(parts[4]))
            continue
        if s[0] in '"*':
            continue
        body.append(s)
    try:
        m = int(_numbers(body[0])[0])
        nblocks = int(_numbers(body[1])[0])
        sizes = [int(float(x)) for x in _numbers(body[2])][:nblocks]
        pos = 3
        bvals: list[str] = []
        while len(bvals) < m:
            bvals += _numbers(body[pos])
            pos += 1
        b = np.array([float(x) for x in bvals[:m]])
        entries = [_numbers(s) for s in body[pos:]]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed SDPA header: {exc}") from exc
    lp_sizes = [-s for s in sizes if s < 0]
    psd_sizes = [s for s in sizes if s > 0]
    n_lp = sum(lp_sizes)
    nf = meta["n_free"]
    if 2 * nf > n_lp:
        raise FormatError("free-variable count exceeds LP block size")
    nn = n_lp - 2 * nf
    # column of every (block, i, j)
    lp_base, psd_base = {}, {}
    acc = 0
    for bno, s in enumerate(sizes, start=1):
        if s < 0:
            lp_base[bno] = acc
            acc += -s
    col0 = nf + nn
    pk = 0
    for bno, s in enumerate(sizes, start=1):
        if s > 0:
            psd_base[bno] = (col0, s)
            col0 += svec_len(s)
            pk += 1
    n = nf + nn + sum(svec_len(s) for s in psd_sizes)
    rows, cols, vals = [], [], []
    c = np.zeros(n)
    for e in entries:
        if len(e) < 5:
            raise FormatError(f"bad entry line: {' '.join(e)}")
        matno, bno, i, j = int(e[0]), int(e[1]), int(e[2]) - 1, int(e[3]) - 1
        v = float(e[4])
        if bno in lp_base:
            if i != j:
                raise FormatError("off-diagonal entry in an LP block")
            p = lp_base[bno] + i
            if p < nf:
                col, coef = p, v
            elif p < 2 * nf:
                continue  # mirror half of a free variable
            else:
                col, coef = p - nf, v
        elif bno in psd_base:
            base, d = psd_base[bno]
            col = base + int(svec_pos(i, j))
            coef = v if i == j else v * SQRT2
        else:
            raise FormatError(f"block {bno} out of range")
        if matno == 0:
            c[col] = -coef
        else:
            rows.append(matno - 1)
            cols.append(col)
            vals.append(coef)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    lab = {k: np.arange(a, bnd) for k, (a, bnd) in labels.items()}
    return ConicProgram(c=c, A=A, b=b, n_free=nf, n_nonneg=nn, soc=(), psd=tuple(psd_sizes),
                        offset=meta["offset"], labels=lab)


# ---------------------------------------------------------------------------
# CBF v3

def export_cbf(prog: ConicProgram, path) -> None:
    """Write ``prog`` in Conic Benchmark Format version 3."""
    kind, blk, ii, jj, fac = _entry_maps(prog)
    nscal = prog.n_free + prog.n_nonneg + sum(prog.soc)
    is_scal = np.arange(prog.n) < nscal
    out = ["VER", "3", "", "OBJSENSE", "MIN", ""]
    cones = []
    if prog.n_free:
        cones.append(f"F {prog.n_free}")
    if prog.n_nonneg:
        cones.append(f"L+ {prog.n_nonneg}")
    cones += [f"Q {d}" for d in prog.soc]
    if nscal:
        out += ["VAR", f"{nscal} {len(cones)}", *cones, ""]
    if prog.psd:
        out += ["PSDVAR", str(len(prog.psd)), *[str(d) for d in prog.psd], ""]
    if prog.m:
        out += ["CON", f"{prog.m} 1", f"L= {prog.m}", ""]

    def psd_line(j: int, v: float) -> str:
        # CBF stores the lower triangle: row >= column
        return f"{blk[j]} {jj[j]} {ii[j]} {_fmt(v * fac[j])}"

    nz = np.flatnonzero(prog.c)
    fo = [psd_line(j, prog.c[j]) for j in nz if not is_scal[j]]
    ao = [f"{j} {_fmt(prog.c[j])}" for j in nz if is_scal[j]]
    if fo:
        out += ["OBJFCOORD", str(len(fo)), *fo, ""]
    if ao:
        out += ["OBJACOORD", str(len(ao)), *ao, ""]
    if prog.offset != 0:
        out += ["OBJBCOORD", _fmt(prog.offset), ""]
    A = prog.A.tocoo()
    order = np.lexsort((A.col, A.row))
    r, cidx, v = A.row[order], A.col[order], A.data[order]
    keep = v != 0
    r, cidx, v = r[keep], cidx[keep], v[keep]
    sc = is_scal[cidx]
    fl = [f"{i} {psd_line(j, x)}" for i, j, x in zip(r[~sc], cidx[~sc], v[~sc])]
    al = [f"{i} {j} {_fmt(x)}" for i, j, x in zip(r[sc], cidx[sc], v[sc])]
    if fl:
        out += ["FCOORD", str(len(fl)), *fl, ""]
    if al:
        out += ["ACOORD", str(len(al)), *al, ""]
    bn = np.flatnonzero(prog.b)
    if bn.size:
        # CBF constraints read A z + b in cone; here A z - b = 0.
        out += ["BCOORD", str(bn.size), *[f"{i} {_fmt(-prog.b[i])}" for i in bn], ""]
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def import_cbf(path) -> ConicProgram:
    """Read a CBF v3 file with a single ``L=`` constraint block."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    it = iter(lines)
    sense = "MIN"
    var_cones: list[tuple[str, int]] = []
    psd: list[int] = []
    m = 0
    objA, objF, Acoo, Fcoo, Bcoo = [], [], [], [], []
    offset = 0.0
    try:
        for key in it:
            if key == "VER":
                if int(next(it)) > 3:
                    raise FormatError("unsupported CBF version")
            elif key == "OBJSENSE":
                sense = next(it)
            elif key == "VAR":
                _, k = map(int, next(it).split())
                for _ in range(k):
                    t, d = next(it).split()
                    var_cones.append((t, int(d)))
            elif key == "PSDVAR":
                psd = [int(next(it)) for _ in range(int(next(it)))]
            elif key == "CON":
                m, k = map(int, next(it).split())
                for _ in range(k):
                    t, _d = next(it).split()
                    if t != "L=":
                        raise FormatError(f"constraint cone {t} not supported (only L=)")
            elif key in ("OBJACOORD", "OBJFCOORD", "ACOORD", "FCOORD", "BCOORD"):
                tgt = {"OBJACOORD": objA, "OBJFCOORD": objF, "ACOORD": Acoo, "FCOORD": Fcoo, "BCOORD": Bcoo}[key]
                for _ in range(int(next(it))):
                    tgt.append(next(it).split())
            elif key == "OBJBCOORD":
                offset = float(next(it))
            else:
                raise FormatError(f"unsupported CBF section {key}")
    except StopIteration as exc:
        raise FormatError("truncated CBF file") from exc
    kinds = [t for t, _ in var_cones]
    order = {"F": 0, "L+": 1, "Q": 2}
    if any(t not in order for t in kinds) or kinds != sorted(kinds, key=order.get):
        raise FormatError("scalar cones must be F, L+, Q in that order")
    nf = sum(d for t, d in var_cones if t == "F")
    nn = sum(d for t, d in var_cones if t == "L+")
    soc = tuple(d for t, d in var_cones if t == "Q")
    nscal = nf + nn + sum(soc)
    base = []
    pos = nscal
    for d in psd:
        base.append(pos)
        pos += svec_len(d)
    n = pos
    sgn = 1.0 if sense == "MIN" else -1.0

    def fcol(b, i, j):
        b, i, j = int(b), int(i), int(j)
        return base[b] + int(svec_pos(i, j)), (1.0 if i == j else SQRT2)

    c = np.zeros(n)
    for j, v in objA:
        c[int(j)] += sgn * float(v)
    for b, i, j, v in objF:
        col, s = fcol(b, i, j)
        c[col] += sgn * float(v) * s
    rows, cols, vals = [], [], []
    for i, j, v in Acoo:
        rows.append(int(i))
        cols.append(int(j))
        vals.append(float(v))
    for r, b, i, j, v in Fcoo:
        col, s = fcol(b, i, j)
        rows.append(int(r))
        cols.append(col)
        vals.append(float(v) * s)
    bvec = np.zeros(m)
    for i, v in Bcoo:
        bvec[int(i)] = -float(v)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return ConicProgram(c=c, A=A, b=bvec, n_free=nf, n_nonneg=nn, soc=soc, psd=tuple(psd), offset=sgn * offset)


# ---------------------------------------------------------------------------
# solution text

def format_solution(sol: Solution) -> str:
    def num(x):
        return f"{float(x):.17g}"

    out = [f"status {sol.status}", f"objective {num(sol.objective)}", f"z {sol.z.size}"]
    out += [num(v) for v in sol.z]
    out.append(f"y {sol.y.size}")
    out += [num(v) for v in sol.y]
    return "\n".join(out) + "\n"


def write_solution(sol: Solution, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_solution(sol))


def read_solution(path) -> dict:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    status = lines[0].split()[1]
    obj = float(lines[1].split()[1])
    nz = int(lines[2].split()[1])
    z = np.array([float(x) for x in lines[3:3 + nz]])
    ny = int(lines[3 + nz].split()[1])
    y = np.array([float(x) for x in lines[4 + nz:4 + nz + ny]])
    return {"status": status, "objective": obj, "z": z, "y": y}
