import math

import numpy as np
import pytest

from conftest import solve_value
from copodr.bench import gen_newsvendor, gen_partition
from copodr.lifting import lifted_problem, make_lifting
from copodr.model import MsroProblem, UncertaintySet, cone_from_box, cone_from_polytope
from copodr.reformulate import DecisionRule, build, extract_rule
from copodr.verify import brute_force_small, certificate_soundness, gap, percentile, worst_case_eval


def abs_rule(c):
    P = gen_partition(c)
    lf = make_lifting(P.uncertainty, np.hstack([np.eye(3), np.zeros((3, 1))]))
    Pl = lifted_problem(P, lf)
    cp = build(Pl, "ldr")
    idx = list(cp.stages[0].idx)
    Y = np.zeros((3, len(idx)))
    for k in range(3):
        Y[k, idx.index(lf.pos_u[k])] = -1.0
        Y[k, idx.index(lf.pos_w[k])] = 2.0
    return Pl, DecisionRule(np.zeros(0), cp.stages, {1: Y}, {}, Pl.N, 3.0)


def test_zero_problem_zero_violation():
    U = UncertaintySet(cone_from_box([-1, -1], [1, 1]))
    P = MsroProblem((2,), (1,), np.zeros(1), np.zeros((3, 2, 1)), (np.zeros((3, 2, 1)),),
                    (np.zeros((1, 3)),), np.zeros((2, 3)), U, np.zeros((0, 1)), np.zeros(0))
    cp = build(P, "ldr")
    rule = extract_rule(cp, np.zeros(cp.vars.n))
    res = worst_case_eval(P, rule, n=200)
    assert res["violation"] == 0.0 and res["verdict"]


def test_absolute_rule_realizes_three_when_partition_exists():
    Pl, rule = abs_rule((1.0, 2.0, 3.0))
    res = worst_case_eval(Pl, rule, n=500)
    assert res["violation"] <= 1e-12
    assert res["realized"] == pytest.approx(3.0, abs=1e-9)


def test_solved_newsvendor_verdict():
    P = gen_newsvendor(4)
    cp = build(P, "qdr")
    val, A, sol = solve_value(cp)
    res = worst_case_eval(P, extract_rule(cp, A.decision(sol)))
    assert res["verdict"]
    assert res["realized"] >= val - 1e-6 * abs(val)  # profit realized is at least the bound


def test_verdict_fails_for_overstated_bound():
    Pl, rule = abs_rule((1.0, 2.0, 3.0))
    res = worst_case_eval(Pl, rule, bound=2.0)
    assert not res["verdict"]


def test_brute_force_simplex_product():
    U = UncertaintySet(cone_from_polytope([[1, 0], [0, 1], [1, 1], [-1, -1]], [0, 0, 1, -1]))
    Q = np.zeros((3, 3))
    Q[0, 1] = Q[1, 0] = 0.5
    assert brute_force_small(Q, U)["value"] == pytest.approx(0.25, abs=1e-6)


def test_brute_force_partition(partition):
    res = brute_force_small(lambda V: np.abs(V[:, :3]).sum(axis=1), partition.uncertainty)
    assert res["value"] == pytest.approx(2.5, abs=1e-6)
    assert partition.uncertainty.contains(res["argmax"], 1e-7)


def test_brute_force_rejects_large_dimension():
    U = UncertaintySet(cone_from_box([0] * 4, [1] * 4))
    with pytest.raises(ValueError):
        brute_force_small(np.eye(5), U)


def test_certificate_soundness(partition):
    cp = build(partition, "qdr")
    _, A, sol = solve_value(cp)
    rep = certificate_soundness(A, sol, n=2000)
    assert rep["ok"] and rep["min_certificate"] >= -1e-8


def test_gap_examples():
    assert gap(5.0, 5.0) == 0.0
    assert gap(1.52 * 40.0, 40.0, "min") == pytest.approx(52.0)
    assert gap(0.8 * 10.0, 10.0, "max") == pytest.approx(20.0)


def test_gap_sense_flip(rng):
    for a, b in rng.normal(size=(20, 2)):
        assert gap(a, b, "min") == pytest.approx(-gap(a, b, "max"))
        assert math.copysign(1, gap(a, b)) == math.copysign(1, (a - b))


def test_gap_zero_reference():
    with pytest.raises(ZeroDivisionError):
        gap(1.0, 0.0)


def test_nearest_rank_percentile():
    x = list(range(1, 21))
    assert percentile(x, 10) == 2
    assert percentile(x, 90) == 18
    assert percentile(x, 100) == 20
    assert percentile([3.0, float("nan"), 1.0], 50) == 1.0
