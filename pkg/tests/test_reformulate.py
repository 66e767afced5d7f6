import numpy as np
import pytest

from conftest import solve_value
from copodr.bench import gen_index, gen_inventory, gen_newsvendor, gen_partition
from copodr.bench.families import index_quadratic_mask
from copodr.lifting import lifted_problem, make_lifting, midpoint_folds
from copodr.model import ModelError, MsroProblem, UncertaintySet, cone_from_box
from copodr.reformulate import build, build_ms_ldr, build_ms_qdr, build_qdr, extract_rule, theta_lambda
from copodr.verify import rule_values


def random_problem(rng, K=2, J=3, M=2, N=2, fixed=False):
    n = K + 1
    U = UncertaintySet(cone_from_box([-1] * K, [1] * K))
    A = rng.normal(size=(n, J, M))
    B = rng.normal(size=(n, J, N))
    if fixed:
        B[:-1] = 0.0
    D = rng.normal(size=(N, n))
    if fixed:
        D[:, :-1] = 0.0
    H = rng.normal(size=(J, n))
    return MsroProblem((K,), (N,), rng.normal(size=M), A, (B,), (D,), H, U, np.zeros((0, M)), np.zeros(0))


def test_theta_lambda_single_stage():
    A = np.zeros((2, 1, 2))
    A[0, 0] = [1, 2]
    A[1, 0] = [3, 4]
    B = np.zeros((2, 1, 1))
    P = MsroProblem((1,), (1,), np.zeros(2), A, (B,), (np.zeros((1, 2)),), np.zeros((1, 2)),
                    UncertaintySet(cone_from_box([-1], [1])), np.zeros((0, 2)), np.zeros(0))
    np.testing.assert_array_equal(theta_lambda(P, 0), [[1, 2], [3, 4]])


def test_theta_zero_when_A_zero(rng):
    P = random_problem(rng)
    P.A_hat[:] = 0.0
    assert not np.any(theta_lambda(P, 1))


def test_theta_matches_matrix_product(rng):
    P = random_problem(rng, J=4, M=3)
    for _ in range(100):
        u = np.r_[rng.uniform(-1, 1, 2), 1.0]
        x = rng.normal(size=3)
        Au = np.einsum("k,kjm->jm", u, P.A_hat)
        for j in range(4):
            assert u @ theta_lambda(P, j) @ x == pytest.approx(Au[j] @ x, abs=1e-12)


def test_zero_problem_gives_zero_epigraph():
    K, n = 1, 2
    U = UncertaintySet(cone_from_box([-1], [1]))
    P = MsroProblem((K,), (1,), np.array([1.0]), np.zeros((n, 1, 1)), (np.zeros((n, 1, 1)),),
                    (np.zeros((1, n)),), np.zeros((1, n)), U, np.array([[1.0]]), np.array([2.0]))
    cp = build(P, "ldr")
    val, A, sol = solve_value(cp)
    d = A.decision(sol)
    assert cp.vars["lambda"].take(d)[0] == pytest.approx(0.0, abs=1e-7)
    assert val == pytest.approx(2.0, abs=1e-7)


def test_constraint_count_lifted_partition(partition):
    lf = make_lifting(partition.uncertainty, np.hstack([np.eye(3), np.zeros((3, 1))]))
    cp = build(lifted_problem(partition, lf), "ldr")
    assert len(cp.constraints) == 2 * 3 + 1


def test_fixed_recourse_rule_terms_in_last_row(rng):
    P = random_problem(rng, fixed=True)
    cp = build(P, "ldr")
    st = cp.stages[0]
    Yb = cp.vars["Y[1]"]
    for c in cp.constraints[1:]:
        for col, M in c.terms:
            if Yb.start <= col < Yb.start + Yb.size:
                assert not np.any(M[:-1, :-1])


def test_row_matrix_equals_row_residual(rng):
    """u' Omega_j u is the constraint residual of the rule at u."""
    P = random_problem(rng, fixed=False)
    cp = build(P, "ldr")
    d = rng.normal(size=cp.vars.n)
    d[cp.vars["pi"].start:cp.vars["pi"].start + P.J] = 0.0
    rule = extract_rule(cp, d)
    for _ in range(50):
        u = np.r_[rng.uniform(-1, 1, 2), 1.0]
        y = rule.evaluate(u)[0]
        Au = np.einsum("k,kjm->jm", u, P.A_hat)
        Bu = np.einsum("k,kjn->jn", u, P.B_hat[0])
        resid = Au @ rule.x + Bu @ y - P.H_hat @ u
        for j, c in enumerate(cp.constraints[1:]):
            assert u @ c.matrix(d) @ u == pytest.approx(resid[j], abs=1e-9)


def test_qdr_value_not_worse_than_ldr():
    for seed in range(20):
        P = gen_newsvendor(seed, N=3)
        ldr, _, _ = solve_value(build(P, "ldr"))
        qdr, _, _ = solve_value(build(P, "qdr"))
        assert qdr >= ldr - 1e-6 * max(1, abs(ldr))  # profit: larger is better


def test_qdr_requires_fixed_recourse():
    with pytest.raises(ModelError):
        build_qdr(gen_inventory(0, T=1))


def test_partition_pqdr_value(partition):
    lf = make_lifting(partition.uncertainty, midpoint_folds(partition.uncertainty))
    val, _, _ = solve_value(build(lifted_problem(partition, lf), "qdr"))
    assert val == pytest.approx(2.5, abs=1e-3)


def test_piecewise_not_worse_than_linear(partition):
    lf = make_lifting(partition.uncertainty, midpoint_folds(partition.uncertainty))
    pl, _, _ = solve_value(build(lifted_problem(partition, lf), "ldr"))
    l, _, _ = solve_value(build(partition, "ldr"))
    assert pl <= l + 1e-7


def _same(a, b):
    assert np.array_equal(a.cost, b.cost)
    assert len(a.constraints) == len(b.constraints)
    for c1, c2 in zip(a.constraints, b.constraints):
        assert np.array_equal(c1.base, c2.base)
        assert (c1.coef != c2.coef).nnz == 0


def test_multistage_ldr_at_one_stage_is_ldr(rng):
    P = random_problem(rng)
    _same(build_ms_ldr(P), build(P, "ldr"))


def test_ms_qdr_reduces_to_ldr_without_fixed_variables(rng):
    P = random_problem(rng)
    assert not P.fixed_mask(1).any()
    _same(build_ms_qdr(P), build(P, "ldr"))


def test_ms_qdr_reduces_to_qdr_when_all_fixed():
    P = gen_newsvendor(2, N=3)
    _same(build_ms_qdr(P), build(P, "qdr"))


def test_multistage_constraint_count():
    P = gen_inventory(1, T=2)
    cp = build(P, "ldr")
    assert len(cp.constraints) == P.J + 1


def test_nonanticipativity():
    P = gen_inventory(1, T=3)
    cp = build(P, "ldr")
    for st in cp.stages:
        np.testing.assert_array_equal(st.idx, P.stage_index(st.t))
        assert st.idx.max() == P.K  # only the constant beyond the observed stages
        assert st.idx.size == sum(P.stage_dims[:st.t]) + 1


def test_quadratic_mask_rejects_nonfixed():
    P = gen_inventory(1, T=1)
    mask = [np.ones(P.N[0], dtype=bool)]
    with pytest.raises(ModelError):
        build(P, "lqdr", mask)


def test_index_mask_classification():
    P = gen_index(0, T=2)
    cp = build(P, "lqdr", index_quadratic_mask(P))
    for st in cp.stages:
        assert set(st.qdr.tolist()) == {0, 1}  # tracking error and its bound
        assert set(st.ldr.tolist()) == set(range(2, P.N[st.t - 1]))


def test_extract_zero_rule(partition):
    cp = build(partition, "qdr")
    rule = extract_rule(cp, np.zeros(cp.vars.n))
    for y in rule.evaluate(np.r_[0.5, 0.5, -2 / 3, 1.0]):
        assert not np.any(y)


def test_extract_rejects_bad_vector(partition):
    cp = build(partition, "ldr")
    with pytest.raises(ValueError):
        extract_rule(cp, np.zeros(cp.vars.n + 1))


def test_rule_evaluation_paths_agree(rng, partition):
    cp = build(partition, "qdr")
    _, A, sol = solve_value(cp)
    rule = extract_rule(cp, A.decision(sol))
    pts = np.c_[rng.uniform(-1, 1, (100, 3)), np.ones(100)]
    vec = rule_values(rule, pts)[0]
    for p, row in zip(pts, vec):
        direct = [p @ rule.Q[(1, k)] @ p for k in range(3)]
        np.testing.assert_allclose(row, direct, atol=1e-10)
