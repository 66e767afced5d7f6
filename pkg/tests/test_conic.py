import numpy as np
import pytest
import scipy.sparse as sp

from conftest import solve_value
from copodr._linalg import svec
from copodr.conic import ConicBuilder, ConicProgram, SolveOptions, assemble, solve
from copodr.conic.io import (FormatError, export_cbf, export_sdpa, import_cbf, import_sdpa, read_solution,
                             write_solution)
from copodr.lifting import lifted_problem, make_lifting, midpoint_folds
from copodr.model import MsroProblem, UncertaintySet, cone_from_box
from copodr.reformulate import build


@pytest.mark.parametrize("backend", ["clarabel", "cvxopt"])
def test_lp_bound(backend):
    B = ConicBuilder()
    x = B.var("free", 1)
    s = B.var("nonneg", 1)
    B.cost(x, [1.0])
    B.rows([(x, np.ones((1, 1))), (s, -np.ones((1, 1)))], [1.0])
    prog, _ = B.build()
    assert solve(prog, backend=backend).objective == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("backend", ["clarabel", "cvxopt"])
def test_trace_sdp(backend):
    B = ConicBuilder()
    X = B.var("psd", 2)
    B.cost(X, svec(np.eye(2)))
    rows = [svec(np.diag([1.0, 0.0])), svec(np.diag([0.0, 1.0])), svec(np.array([[0, 0.5], [0.5, 0]]))]
    B.rows([(X, np.array(rows))], [1.0, 1.0, 0.9])
    prog, _ = B.build()
    assert solve(prog, backend=backend).objective == pytest.approx(2.0, abs=1e-7)


def test_soc_program():
    B = ConicBuilder()
    x = B.var("free", 2)
    q = B.var("soc", 3)
    B.cost(q, [1.0, 0.0, 0.0])
    B.rows([(x, -np.eye(2)), (q, np.c_[np.zeros(2), np.eye(2)])], [-1.0, -2.0])
    prog, _ = B.build()
    sol = solve(prog)
    assert sol.ok and sol.objective == pytest.approx(0.0, abs=1e-7)


def test_infeasible_status():
    B = ConicBuilder()
    s = B.var("nonneg", 1)
    B.rows([(s, np.ones((1, 1)))], [-1.0])
    prog, _ = B.build()
    assert solve(prog).status == "infeasible"


def test_empty_constraint_list_is_lp_over_X():
    U = UncertaintySet(cone_from_box([-1], [1]))
    P = MsroProblem((1,), (0,), np.array([1.0, 2.0]), np.zeros((2, 0, 2)), (np.zeros((2, 0, 0)),),
                    (np.zeros((0, 2)),), np.zeros((0, 2)), U, np.eye(2), np.array([1.0, 0.5]))
    val, A, _ = solve_value(build(P, "ldr"))
    assert val == pytest.approx(2.0, abs=1e-7)
    assert A.modes == ["robust"] and A.program.psd == ()


def test_partition_assembles_to_two_and_a_half(partition):
    lf = make_lifting(partition.uncertainty, midpoint_folds(partition.uncertainty))
    cp = build(lifted_problem(partition, lf), "qdr")
    val, A, _ = solve_value(cp)
    assert val == pytest.approx(2.5, abs=1e-3)
    n_cone = sum(m in ("IA", "AS") for m in A.modes)
    assert len(A.program.psd) == n_cone  # one W per copositive constraint
    assert n_cone + A.modes.count("robust") == len(cp.constraints)


def test_psd_block_count_without_reduction(partition):
    cp = build(partition, "qdr")
    A = assemble(cp, "IA", reduce_linear=False)
    assert len(A.program.psd) == len(cp.constraints)


def _random_program(rng, soc=True):
    nf, nn = int(rng.integers(0, 3)), int(rng.integers(0, 4))
    socs = tuple(int(k) for k in rng.integers(2, 4, size=int(rng.integers(0, 2)))) if soc else ()
    psd = tuple(int(k) for k in rng.integers(1, 4, size=int(rng.integers(1, 3))))
    n = nf + nn + sum(socs) + sum(k * (k + 1) // 2 for k in psd)
    m = int(rng.integers(1, 5))
    A = sp.random(m, n, 0.5, random_state=int(rng.integers(1_000_000)), format="csr")
    c = rng.standard_normal(n) * (rng.random(n) < 0.7)
    return ConicProgram(c, A, rng.standard_normal(m), nf, nn, socs, psd, offset=float(rng.standard_normal()))


def _diff(p, q):
    d = abs(q.A - p.A)
    return max(d.max() if d.nnz else 0.0, np.abs(q.b - p.b).max(), np.abs(q.c - p.c).max(), abs(q.offset - p.offset))


def test_sdpa_round_trip(tmp_path, rng):
    for _ in range(10):
        p = _random_program(rng, soc=False)
        export_sdpa(p, tmp_path / "a.dat-s")
        q = import_sdpa(tmp_path / "a.dat-s")
        assert (q.n_free, q.n_nonneg, q.psd) == (p.n_free, p.n_nonneg, p.psd)
        assert _diff(p, q) <= 1e-15


def test_cbf_round_trip(tmp_path, rng):
    for _ in range(10):
        p = _random_program(rng, soc=True)
        export_cbf(p, tmp_path / "a.cbf")
        q = import_cbf(tmp_path / "a.cbf")
        assert (q.n_free, q.n_nonneg, q.soc, q.psd) == (p.n_free, p.n_nonneg, p.soc, p.psd)
        assert _diff(p, q) <= 1e-15


def test_sdpa_rejects_soc(tmp_path):
    p = ConicProgram(np.zeros(3), sp.csr_matrix((1, 3)), np.zeros(1), 0, 0, (3,), ())
    with pytest.raises(FormatError):
        export_sdpa(p, tmp_path / "x.dat-s")


def test_lp_only_program_is_one_diagonal_block(tmp_path):
    p = ConicProgram(np.ones(3), sp.csr_matrix(np.ones((1, 3))), np.ones(1), 0, 3)
    path = tmp_path / "lp.dat-s"
    export_sdpa(p, path)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith(("*", '"'))]
    assert lines[1].strip() == "1" and lines[2].split()[0] == "-3"


def test_solution_file_round_trip(tmp_path):
    B = ConicBuilder()
    X = B.var("psd", 2)
    B.cost(X, svec(np.eye(2)))
    B.rows([(X, svec(np.diag([1.0, 0.0]))[None, :])], [1.0])
    prog, _ = B.build()
    sol = solve(prog)
    write_solution(sol, tmp_path / "s.txt")
    back = read_solution(tmp_path / "s.txt")
    assert back["status"] == sol.status
    np.testing.assert_array_equal(back["z"], sol.z)
    np.testing.assert_array_equal(back["y"], sol.y)


def test_backends_agree(partition):
    cp = build(partition, "qdr")
    A = assemble(cp, "IA")
    v1 = A.value(solve(A.program, SolveOptions(backend="clarabel")))
    v2 = A.value(solve(A.program, SolveOptions(backend="cvxopt")))
    assert v1 == pytest.approx(v2, abs=1e-5)


@pytest.mark.parametrize("seed", [0, 1])
def test_reduced_linear_rows_match_full_ia_on_inventory(seed):
    from copodr.bench import gen_inventory
    from copodr.bench.families import inventory_folds

    P = gen_inventory(seed, T=1)
    cp = build(lifted_problem(P, make_lifting(P.uncertainty, inventory_folds(P), P.stage_dims)), "ldr")
    reduced, _, _ = solve_value(cp, tol=1e-10)
    A = assemble(cp, "IA", reduce_linear=False)
    full = A.value(solve(A.program, SolveOptions(tol=1e-10)))
    assert reduced == pytest.approx(full, rel=1e-7)
