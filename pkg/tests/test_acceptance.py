"""Acceptance criteria, one test and one PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -v`` (the lines are printed in the
terminal summary) or ``python tests/test_acceptance.py``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from copodr._linalg import svec  # noqa: E402
from copodr.bench import gen_index, gen_inventory, gen_newsvendor, gen_partition  # noqa: E402
from copodr.bench.families import index_quadratic_mask, inventory_folds  # noqa: E402
from copodr.bench.suite import ExperimentConfig, generate, instance_seeds, run_suite  # noqa: E402
from copodr.cones import certify, exactness_flags  # noqa: E402
from copodr.conic import ConicBuilder, ConicProgram, SolveOptions, assemble, solve  # noqa: E402
from copodr.conic.io import export_cbf, export_sdpa, import_cbf, import_sdpa  # noqa: E402
from copodr.lifting import (AxialSegmentation, axial_lift, build_GWK_outer, build_Ustar,  # noqa: E402
                            check_dual_certificate, lifted_problem, make_lifting)
from copodr.model import ConeK, UncertaintySet, cone_from_box, cone_from_ellipsoids  # noqa: E402
from copodr.reformulate import build, extract_rule  # noqa: E402
from copodr.verify import brute_force_small, certificate_soundness, gap, worst_case_eval  # noqa: E402


def record(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line, flush=True)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def solve_cp(cp, approx="IA", robust_set=None, tol=1e-8):
    A = assemble(cp, approx, robust_set=robust_set)
    sol = solve(A.program, SolveOptions(tol=tol, max_iter=500))
    return A, sol


def partition_values(c):
    P = gen_partition(c)
    U = P.uncertainty
    al = axial_lift(U, AxialSegmentation.for_set(U, [[-1.0, 0.0]] * 3))
    Pl = lifted_problem(P, al.lifting)
    out = {}
    out["brute"] = timed(lambda: brute_force_small(lambda V: np.abs(V[:, :3]).sum(axis=1), U)["value"])
    for name, rule, kw in (("GWK", "ldr", {"robust_set": build_GWK_outer(al)}),
                           ("PLDR-IA", "ldr", {}), ("PQDR-IA", "qdr", {})):
        def run(rule=rule, kw=kw):
            A, sol = solve_cp(build(Pl, rule), **kw)
            assert sol.ok, sol.message
            return A.value(sol)
        out[name] = timed(run)
    return out


# ---------------------------------------------------------------------------

def test_criterion_01_partition():
    v = partition_values((2.0, 2.0, 3.0))
    checks = {
        "brute": abs(v["brute"][0] - 2.5) <= 1e-6,
        "GWK": abs(v["GWK"][0] - 3.0) <= 1e-6,
        "PLDR-IA": 2.50 - 1e-9 <= v["PLDR-IA"][0] <= 2.60,
        "PQDR-IA": abs(v["PQDR-IA"][0] - 2.5) <= 1e-3,
    }
    fast = all(t < 10.0 for _, t in v.values())
    ok = all(checks.values()) and fast
    record(1, ok, "  ".join(f"{k}={v[k][0]:.6f} ({v[k][1]:.2f}s)" for k in v))
    assert ok, checks


def test_criterion_02_partition_feasible():
    v = partition_values((1.0, 2.0, 3.0))
    ok = abs(v["PQDR-IA"][0] - 3.0) <= 1e-3 and abs(v["brute"][0] - 3.0) <= 1e-3 \
        and v["PQDR-IA"][1] < 10 and v["brute"][1] < 10
    record(2, ok, f"PQDR-IA={v['PQDR-IA'][0]:.6f}  brute={v['brute'][0]:.6f}")
    assert ok


@pytest.mark.slow
def test_criterion_03_ia_not_worse_than_as():
    opts = SolveOptions(tol=1e-14, max_iter=500)

    def min_value(cp, approx):
        A = assemble(cp, approx)
        sol = solve(A.program, opts)
        assert sol.ok, sol.message
        return float(cp.cost @ A.decision(sol))

    worst, count = -np.inf, 0
    cases = [("newsvendor", 1, 20), ("inventory", 1, 10), ("inventory", 3, 10)]
    for fam, T, n in cases:
        cfg = ExperimentConfig(fam, T, n, 0)
        seeds = instance_seeds(0, n)
        for i in range(n):
            P = generate(cfg, i, seeds[i])
            rules = {"ldr": build(P, "ldr")}
            if fam == "newsvendor":
                rules["qdr"] = build(P, "qdr")
            else:
                lf = make_lifting(P.uncertainty, inventory_folds(P), P.stage_dims)
                rules["pldr"] = build(lifted_problem(P, lf), "ldr")
            for cp in rules.values():
                worst = max(worst, min_value(cp, "IA") - min_value(cp, "AS"))
                count += 1
    ok = worst <= 1e-7
    record(3, ok, f"max IA-AS (min sense) = {worst:.2e} over {count} rule/instance pairs")
    assert ok


@pytest.mark.slow
def test_criterion_04_newsvendor():
    tab, secs = timed(lambda: run_suite(ExperimentConfig("newsvendor", 1, 20, 0), jobs=1))
    g = tab.gaps("QDR-AS")
    mean = float(np.mean(g))
    ok = bool(np.all(np.isfinite(g))) and 20 <= mean <= 95 and g.min() >= -1e-6 and secs <= 300
    record(4, ok, f"mean BGGN gap {mean:.2f}%  min {g.min():.2e}  runtime {secs:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_05_inventory():
    means, t0 = [], time.perf_counter()
    for T in (1, 3, 6):
        g = run_suite(ExperimentConfig("inventory", T, 10, 0), jobs=1).gaps("LDR-AS")
        assert np.all(np.isfinite(g))
        means.append(float(np.mean(g)))
    secs = time.perf_counter() - t0
    inversions = sum(b < a for a, b in zip(means, means[1:]))
    ok = all(m > 0 for m in means) and inversions <= 1 and secs <= 900
    record(5, ok, "mean BGGN gaps T=1,3,6: " + ", ".join(f"{m:.2f}%" for m in means)
           + f"  inversions {inversions}  runtime {secs:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_06_index():
    t0 = time.perf_counter()
    g1 = run_suite(ExperimentConfig("index", 1, 10, 0), jobs=1).gaps("LDR-AS")
    g3 = run_suite(ExperimentConfig("index", 3, 10, 0), jobs=1).gaps("LDR-AS")
    secs = time.perf_counter() - t0
    m3 = float(np.mean(g3))
    ok = bool(np.all(np.abs(g1) <= 1e-3)) and 0.5 <= m3 <= 25 and secs <= 900
    record(6, ok, f"T=1 max|gap| {np.abs(g1).max():.2e}%  T=3 mean gap {m3:.2f}%  runtime {secs:.1f}s")
    assert ok


def test_criterion_07_exact_cases():
    rng = np.random.default_rng(7)
    errs = []

    def ellipsoid(K):
        A = rng.normal(size=(K, K))
        return cone_from_ellipsoids([A @ A.T + 0.5 * np.eye(K)], [0.3 * rng.normal(size=K)], [1.0 + rng.random()])

    def parallel():
        ball = cone_from_ellipsoids([np.eye(2)], [np.zeros(2)], [1.0])
        a = rng.uniform(0.2, 0.7)
        return ConeK(np.array([[1.0, 0.0, a], [-1.0, 0.0, a]]), ball.soc_blocks)

    cones = [ellipsoid(1 + i % 2) for i in range(5)] + [parallel() for _ in range(3)]
    flags_ok = all(exactness_flags(C)["pure_soc"] for C in cones[:5]) and \
        all(exactness_flags(C)["facet_disjoint"] for C in cones[5:])
    for C in cones:
        V = rng.normal(size=(C.dim, C.dim))
        V = V + V.T
        U = UncertaintySet(C)
        t = certify(V, U, "IA")["t"]
        brute = -brute_force_small(-V, U)["value"]
        errs.append(abs(t - brute))
    ok = flags_ok and max(errs) <= 1e-3
    record(7, ok, f"max |IA - grid| = {max(errs):.2e} on 5 pure-SOC and 3 parallel-facet sets")
    assert ok


def _cert_cases():
    P = gen_partition((2.0, 2.0, 3.0))
    lf = make_lifting(P.uncertainty, np.hstack([np.eye(3), np.zeros((3, 1))]))
    yield P, build(P, "ldr"), "IA"
    yield P, build(P, "qdr"), "AS"
    Pl = lifted_problem(P, lf)
    yield Pl, build(Pl, "qdr"), "IA"
    yield Pl, build(Pl, "ldr"), "IA"
    for s in range(3):
        Q = gen_newsvendor(s)
        yield Q, build(Q, "qdr"), "IA"
        yield Q, build(Q, "qdr"), "AS"
    for s in range(2):
        Q = gen_inventory(s, T=2)
        Ql = lifted_problem(Q, make_lifting(Q.uncertainty, inventory_folds(Q), Q.stage_dims))
        yield Ql, build(Ql, "ldr"), "IA"
        yield Q, build(Q, "ldr"), "AS"
    Q = gen_index(0, T=2)
    yield Q, build(Q, "lqdr", index_quadratic_mask(Q)), "IA"


def test_criterion_08_certificates_and_rules():
    worst, n_mats, verdicts = np.inf, 0, []
    for P, cp, approx in _cert_cases():
        A, sol = solve_cp(cp, approx)
        assert sol.ok, sol.message
        rep = certificate_soundness(A, sol, n=10_000)
        if rep["n_matrices"]:
            worst = min(worst, rep["min_certificate"])
            n_mats += rep["n_matrices"]
        verdicts.append(worst_case_eval(P, extract_rule(cp, A.decision(sol)))["verdict"])
    ok = worst >= -1e-8 and all(verdicts)
    record(8, ok, f"min v'Vv (scaled) {worst:.2e} over {n_mats} matrices; "
                  f"{sum(verdicts)}/{len(verdicts)} rule verdicts true")
    assert ok


def test_criterion_09_outer_sets():
    rng = np.random.default_rng(9)
    trips = [np.sort(rng.uniform(-10, 10, 3)) for _ in range(100)]
    dual_ok = all(check_dual_certificate(*h) for h in trips)
    U = UncertaintySet(cone_from_box([0, 0], [2, 2]))
    al = axial_lift(U, AxialSegmentation.for_set(U, [[0, 0.5, 1.2]] * 2))
    S1, S2 = build_Ustar(al), build_GWK_outer(al)
    gaps = []
    for _ in range(20):
        d = rng.normal(size=al.dim)
        d[-1] = 0.0
        gaps.append(S2.support(d)[0] - S1.support(d)[0])
    ok = dual_ok and min(gaps) >= -1e-7
    record(9, ok, f"dual certificates {'all true' if dual_ok else 'FAILED'} (100); "
                  f"min U** - U* support gap {min(gaps):.2e} (20)")
    assert ok


def test_criterion_10_solver_and_io(tmp_path):
    rng = np.random.default_rng(10)
    err, kkt = 0.0, 0.0
    for _ in range(100):
        C = rng.standard_normal((6, 6))
        C = C + C.T
        B = ConicBuilder()
        X = B.var("psd", 6)
        B.cost(X, -svec(C))
        B.rows([(X, svec(np.eye(6))[None, :])], [1.0])
        prog, _ = B.build()
        sol = solve(prog)
        err = max(err, abs(-sol.objective - np.linalg.eigvalsh(C).max()))
        kkt = max(kkt, max(sol.residuals[k] for k in ("primal", "dual", "gap")))
    import scipy.sparse as sp
    io_err = 0.0
    for i in range(10):
        nf, nn = int(rng.integers(0, 3)), int(rng.integers(0, 4))
        socs = tuple(int(k) for k in rng.integers(2, 4, size=int(rng.integers(0, 2))))
        psd = tuple(int(k) for k in rng.integers(1, 4, size=int(rng.integers(1, 3))))
        n = nf + nn + sum(socs) + sum(k * (k + 1) // 2 for k in psd)
        m = int(rng.integers(1, 5))
        A = sp.random(m, n, 0.5, random_state=i, format="csr")
        p = ConicProgram(rng.standard_normal(n), A, rng.standard_normal(m), nf, nn, socs, psd,
                         offset=float(rng.standard_normal()))
        pairs = [(export_cbf, import_cbf, "x.cbf")]
        if not socs:
            pairs.append((export_sdpa, import_sdpa, "x.dat-s"))
        for ex, im, name in pairs:
            ex(p, tmp_path / name)
            q = im(tmp_path / name)
            d = abs(q.A - p.A)
            io_err = max(io_err, d.max() if d.nnz else 0.0, np.abs(q.b - p.b).max(),
                         np.abs(q.c - p.c).max(), abs(q.offset - p.offset))
    ok = err <= 1e-6 and kkt <= 1e-7 and io_err <= 1e-15
    record(10, ok, f"lambda_max error {err:.2e}  KKT residual {kkt:.2e}  round-trip error {io_err:.1e}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
