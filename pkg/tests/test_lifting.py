import numpy as np
import pytest

from conftest import solve_value
from copodr.bench import gen_partition
from copodr.geometry import sample
from copodr.lifting import (AxialSegmentation, axial_lift, build_GWK_outer, build_Ustar, check_dual_certificate,
                            lifted_problem, make_lifting, midpoint_folds, ustar_point)
from copodr.model import ModelError, UncertaintySet, cone_from_box, cone_from_polytope
from copodr.reformulate import DecisionRule, build
from copodr.verify import brute_force_small, worst_case_eval


def box(K, lo=-1.0, hi=1.0):
    return UncertaintySet(cone_from_box([lo] * K, [hi] * K))


def positive_part_folds(K):
    return np.hstack([np.eye(K), np.zeros((K, 1))])


def test_upper_bound_single_fold():
    lf = make_lifting(box(1), [[1.0, 0.0]])
    np.testing.assert_allclose(lf.w_upper, [1.0], atol=1e-7)


def test_upper_bounds_positive_parts():
    lf = make_lifting(box(3), positive_part_folds(3))
    np.testing.assert_allclose(lf.w_upper, np.ones(3), atol=1e-7)


def test_upper_bound_on_partition_set(partition):
    lf = make_lifting(partition.uncertainty, [[1.0, 0.0, 0.0, 0.0]])
    np.testing.assert_allclose(lf.w_upper, [1.0], atol=1e-7)


def test_unbounded_fold_rejected():
    U = UncertaintySet(cone_from_polytope(np.eye(1), [0.0]))
    with pytest.raises(ModelError):
        make_lifting(U, [[1.0, 0.0]])


def test_lifted_points_belong_to_lifted_set(rng):
    U = box(2)
    lf = make_lifting(U, midpoint_folds(U))
    for _ in range(200):
        u = np.r_[rng.uniform(-1, 1, 2), 1.0]
        v = lf.lift(u)
        assert lf.uncertainty.contains(v, 1e-10)
        np.testing.assert_allclose(lf.project(v), u)


def test_complementarity_matrix_structure():
    lf = make_lifting(box(2), positive_part_folds(2))
    for ell, C in enumerate(lf.comp_mats):
        assert np.linalg.matrix_rank(C) <= 3
        np.testing.assert_allclose(C, C.T)
        v = lf.lift(np.array([0.3, -0.4, 1.0]))
        assert abs(v @ C @ v) < 1e-12


def test_zero_folds_return_same_problem(partition):
    lf = make_lifting(partition.uncertainty, np.zeros((0, 4)))
    assert lifted_problem(partition, lf) is partition


def test_lifted_dimensions(partition):
    lf = make_lifting(partition.uncertainty, positive_part_folds(3))
    Pl = lifted_problem(partition, lf)
    assert Pl.K == partition.K + 3
    assert Pl.J == partition.J and Pl.M == partition.M


def test_absolute_value_rule_is_linear_in_lifted_parameter(partition):
    lf = make_lifting(partition.uncertainty, positive_part_folds(3))
    Pl = lifted_problem(partition, lf)
    cp = build(Pl, "ldr")
    st = cp.stages[0]
    Y = np.zeros((3, st.width))
    for k in range(3):
        Y[k, list(st.idx).index(lf.pos_u[k])] = -1.0
        Y[k, list(st.idx).index(lf.pos_w[k])] = 2.0
    rule = DecisionRule(np.zeros(0), cp.stages, {1: Y}, {}, Pl.N, 2.5)
    res = worst_case_eval(Pl, rule, n=500)
    assert res["violation"] <= 1e-12 and res["verdict"]
    assert brute_force_small(Pl, rule=rule, step=0.05)["value"] == pytest.approx(2.5, abs=1e-6)


def test_axial_maps():
    U = box(1)
    seg = AxialSegmentation.for_set(U, [[-1.0, 0.0]])
    np.testing.assert_allclose(seg.w_of([0.5, 1.0])[0], [1.0, 0.5])
    np.testing.assert_allclose(seg.z_of([0.5, 1.0])[0], [1.5, 0.5, 0.0])


def test_single_breakpoint_is_affine():
    seg = AxialSegmentation.for_set(box(1), [[-1.0]])
    np.testing.assert_allclose(seg.w_of([0.25, 1.0])[0], [1.25])


def test_axial_segmentation_validation():
    with pytest.raises(ModelError):
        AxialSegmentation([[0.0, -0.5]], [-1.0], [1.0])
    with pytest.raises(ModelError):
        AxialSegmentation([[-0.5]], [-1.0], [1.0])


def test_axial_lift_membership(rng):
    U = UncertaintySet(cone_from_box([0, 0], [2, 2]))
    al = axial_lift(U, AxialSegmentation.for_set(U, [[0, 0.5, 1.2]] * 2))
    for u in rng.uniform(0, 2, (300, 2)):
        v = al.lift(np.r_[u, 1.0])
        assert al.residual(v) <= 1e-10


def test_gwk_contains_lifted_points():
    U = UncertaintySet(cone_from_box([0, 0], [2, 2]))
    al = axial_lift(U, AxialSegmentation.for_set(U, [[0, 0.5, 1.2]] * 2))
    S = build_GWK_outer(al)
    pts = sample(al.uncertainty, 1000, 1)
    assert max(S.residual(v) for v in pts) <= 1e-9


def test_gwk_excludes_point_outside():
    U = box(1)
    al = axial_lift(U, AxialSegmentation.for_set(U, [[-1.0, 0.0]]))
    S = build_GWK_outer(al)
    v = np.zeros(al.dim)
    v[al.lifting.pos_w[0]] = 0.9
    v[al.lifting.pos_u[0]] = 1.1
    v[-1] = 1.0
    assert S.residual(v) > 1e-3


def test_gwk_partition_value(partition):
    U = partition.uncertainty
    al = axial_lift(U, AxialSegmentation.for_set(U, [[-1.0, 0.0]] * 3))
    cp = build(lifted_problem(partition, al.lifting), "ldr")
    val, _, _ = solve_value(cp, "IA", robust_set=build_GWK_outer(al))
    assert val == pytest.approx(3.0, abs=1e-6)


def _ustar_aux(S, moments):
    xi = np.zeros(S.n_aux)
    for key, i in S.aux_index.items():
        xi[i] = moments[key]
    return xi


def test_ustar_contains_moment_points(rng):
    U = UncertaintySet(cone_from_box([0, 0], [2, 2]))
    al = axial_lift(U, AxialSegmentation.for_set(U, [[0, 0.5, 1.2]] * 2))
    S = build_Ustar(al)
    for u in rng.uniform(0, 2, (200, 2)):
        v, mom = ustar_point(al, np.r_[u, 1.0])
        assert S.residual(v, _ustar_aux(S, mom)) <= 1e-9


def test_ustar_inside_gwk(rng):
    U = UncertaintySet(cone_from_box([0, 0], [2, 2]))
    al = axial_lift(U, AxialSegmentation.for_set(U, [[0, 0.5, 1.2]] * 2))
    S1, S2 = build_Ustar(al), build_GWK_outer(al)
    for _ in range(20):
        d = rng.normal(size=al.dim)
        d[-1] = 0.0
        assert S2.support(d)[0] - S1.support(d)[0] >= -1e-7


def test_ustar_partition_equals_gwk(partition):
    # with one inner breakpoint per axis both outer sets coincide
    U = partition.uncertainty
    al = axial_lift(U, AxialSegmentation.for_set(U, [[-1.0, 0.0]] * 3))
    cp = build(lifted_problem(partition, al.lifting), "ldr")
    val, _, _ = solve_value(cp, "IA", robust_set=build_Ustar(al))
    assert val == pytest.approx(3.0, abs=1e-5)


@pytest.mark.xfail(strict=True, reason="with one inner breakpoint the U* projection equals U**; bound is 3")
def test_ustar_partition_below_2_6(partition):
    U = partition.uncertainty
    al = axial_lift(U, AxialSegmentation.for_set(U, [[-1.0, 0.0]] * 3))
    cp = build(lifted_problem(partition, al.lifting), "ldr")
    val, _, _ = solve_value(cp, "IA", robust_set=build_Ustar(al))
    assert val <= 2.6


@pytest.mark.parametrize("h", [(-1, 0, 1), (0, 1, 10), (0, 1e-3, 1), (-5, -4.9, 100)])
def test_dual_certificate(h):
    assert check_dual_certificate(*h)


def test_dual_certificate_rejects_ties():
    with pytest.raises(ValueError):
        check_dual_certificate(0, 1, 1)


def test_hull_rows_status():
    U = box(2)
    lf = make_lifting(U, midpoint_folds(U))
    assert lf.hull_status == "verified"
    assert lf.uncertainty.hull_rows is not None
    lf = make_lifting(U, [[1.0, 1.0, 0.0]])
    assert lf.uncertainty.hull_rows is None
