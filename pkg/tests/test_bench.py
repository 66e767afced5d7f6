import csv
import io

import numpy as np
import pytest

from copodr.bench import gen_index, gen_inventory, gen_newsvendor
from copodr.bench.families import index_quadratic_mask, inventory_demand, inventory_folds, newsvendor_demand
from copodr.bench.suite import (CSV_COLUMNS, ExperimentConfig, run_scheme, run_suite, sweep_markdown)
from copodr.reformulate import DecisionRule, build
from copodr.verify import evaluate_points


def nominal(P):
    u = np.zeros(P.K + 1)
    u[-1] = 1.0
    return u


def test_newsvendor_structure():
    P = gen_newsvendor(0, N=5)
    assert P.J == 10 and P.fixed_recourse() and P.sense == "max"


def test_newsvendor_seed_determinism():
    a, b = gen_newsvendor(7), gen_newsvendor(7)
    np.testing.assert_array_equal(a.H_hat, b.H_hat)
    np.testing.assert_array_equal(a.c, b.c)
    assert not np.array_equal(a.H_hat, gen_newsvendor(8).H_hat)


def test_newsvendor_nominal_demand():
    P = gen_newsvendor(3)
    np.testing.assert_allclose(newsvendor_demand(P, nominal(P)), P.names["xibar"])


def test_inventory_structure():
    P = gen_inventory(0, T=1)
    assert P.K == 4 and not P.fixed_recourse()
    assert inventory_folds(P).shape == (4, 5)


def test_inventory_nominal_demand():
    P = gen_inventory(0, T=1)
    np.testing.assert_allclose(inventory_demand(P, 1, nominal(P)), [2.0, 2.0, 3.0, 3.0])


def test_index_nominal_tracking_is_perfect():
    P = gen_index(0, T=1)
    cp = build(P, "ldr")
    st = cp.stages[0]
    Y = np.zeros((P.N[0], st.width))
    Y[:, -1] = np.r_[1.0, 0.0, [0.25] * 4]
    rule = DecisionRule(np.full(4, 0.25), cp.stages, {1: Y}, {}, P.N)
    ev = evaluate_points(P, rule, nominal(P)[None, :])
    assert ev["residual"].min() >= -1e-12
    assert ev["objective"][0] == pytest.approx(0.0, abs=1e-12)


def test_index_variable_classes():
    P = gen_index(0, T=2)
    for t, q in enumerate(index_quadratic_mask(P), start=1):
        assert q.tolist() == [True, True, False, False, False, False]
        assert P.fixed_mask(t)[:2].all()


def test_run_scheme_reports_failure_as_nan():
    r = run_scheme(gen_inventory(0, T=1), "GWK", "inventory")
    assert np.isnan(r.value) and r.status == "error"


def test_identical_schemes_zero_gaps():
    tab = run_suite(ExperimentConfig("newsvendor", 1, 2, 0, ("QDR-IA",)), jobs=1)
    assert np.all(tab.gaps("QDR-IA") == 0.0)


def test_csv_is_byte_identical_per_seed():
    cfg = ExperimentConfig("inventory", 1, 3, 11, timing=False)
    a = run_suite(cfg, jobs=1).to_csv()
    b = run_suite(ExperimentConfig("inventory", 1, 3, 11, timing=False), jobs=2).to_csv()
    assert a == b
    rows = list(csv.reader(io.StringIO(a)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 3 * 2


def test_ia_column_not_worse_than_as():
    tab = run_suite(ExperimentConfig("inventory", 1, 3, 5, ("LDR-IA", "LDR-AS")), jobs=1)
    ia, as_ = tab.values("LDR-IA"), tab.values("LDR-AS")
    assert np.all(ia >= as_ - 1e-7 * np.maximum(1, np.abs(as_)))  # profit: IA bound is higher


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("nope")
    with pytest.raises(ValueError):
        ExperimentConfig("newsvendor", T=2)
    with pytest.raises(ValueError):
        ExperimentConfig("inventory", schemes=("XDR",))
    cfg = ExperimentConfig("index", schemes=("ldr-as",))
    assert cfg.schemes == ("LQDR-IA", "LDR-AS")


def test_reports_written(tmp_path):
    tabs = [run_suite(ExperimentConfig("inventory", T, 2, 0), jobs=1) for T in (1, 2)]
    paths = tabs[0].write(tmp_path)
    assert paths["csv"].exists() and paths["figure"].stat().st_size > 0
    md = paths["markdown"].read_text()
    assert "LDR-AS (BGGN)" in md and "Mean" in md
    sweep = sweep_markdown(tabs)
    assert "| 1 | 2 |" in sweep
    st = tabs[0].stats()
    assert st["LDR-AS"]["n_ok"] == 2 and st["LDR-AS"]["mean"] >= 0
