import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdcms import regions, search, shannon
from mdcms.model import AuxModel, joint_from_tensor
from mdcms.probability import mutual_information

FAST = search.SearchConfig(seed=3, restarts=8, max_iters=30, ec_grid_step=0)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_projection_lands_on_simplex(v):
    p = search.project_simplex(np.array(v))
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-12
    # points already on the simplex stay put
    assert np.allclose(search.project_simplex(p), p, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_fast_objective_matches_region_code(seed):
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.ones(12), size=2)
    model = search.rows_to_model(rows, (3, 2, 2), with_shared=True)
    rate, d1, d2 = search.two_description_terms(0.5 * rows.reshape(1, 2, 3, 2, 2))
    value, dist = search.evaluate_cross_section(model)
    assert abs(rate[0] - value) <= 1e-9
    assert abs(d1[0] - dist[frozenset({1})]) <= 1e-12
    assert abs(d2[0] - dist[frozenset({2})]) <= 1e-12
    assert dist[frozenset({1, 2})] == 0.0


def bsc_model(a):
    t = 0.5 * np.array([[1 - a, a], [a, 1 - a]])
    return AuxModel.build(2, "EC", joint_from_tensor(["X", "U_1"], t), None, {1: "U_1"})


def test_local_search_quadratic_surrogate():
    cfg = search.SearchConfig(seed=0, restarts=1, max_iters=200, tol=1e-12)

    def objective(m):
        # convex in the crossover; minimum at P(U_1 != X) = 0.3
        t = m.joint.marginal_table(["X", "U_1"])
        return (t[0, 1] + t[1, 0] - 0.3) ** 2

    model, value = search.local_search(objective, bsc_model(0.05), cfg)
    assert value <= 1e-8
    t = model.joint.marginal_table(["X", "U_1"])
    assert t[0, 1] + t[1, 0] == pytest.approx(0.3, abs=1e-4)


def test_local_search_constant_and_deterministic():
    init = bsc_model(0.2)
    model, value = search.local_search(lambda m: 1.5, init, FAST)
    assert model is init and value == 1.5

    def objective(m):
        return float(m.joint.marginal_table(["U_1"])[0] ** 2)

    a = search.local_search(objective, init, FAST)
    b = search.local_search(objective, init, FAST)
    assert a[1] == b[1] and np.array_equal(a[0].joint.table, b[0].joint.table)
    with pytest.raises(ValueError, match="non-finite"):
        search.local_search(lambda m: float("nan"), init, FAST)


def test_config_validation():
    for bad in (dict(restarts=0), dict(tol=0), dict(step_shrink=1.0), dict(aux_alphabet_sizes={"U": 0})):
        with pytest.raises(ValueError):
            search.SearchConfig(**bad)


def test_cross_section_limits():
    with pytest.raises(ValueError):
        search.cross_section_ec(0.5, FAST)
    value, _ = search.cross_section_ec(0.49, FAST)
    assert value == pytest.approx(1.0, abs=1e-6)
    value, _ = search.cross_section_ec(0.001, FAST)
    assert 1.95 <= value <= 2.0 + 1e-9
    value, _ = search.cross_section_zb(0.49, FAST)
    assert value == pytest.approx(1.0, abs=1e-6)


def test_results_are_feasible_and_reproduce():
    for fn in (search.cross_section_ec, search.cross_section_zb):
        value, model = fn(0.12, FAST)
        re_value, dist = search.evaluate_cross_section(model)
        assert abs(re_value - value) <= 1e-9
        assert dist[frozenset({1})] + dist[frozenset({2})] <= 0.24 + search.FEAS_TOL
        assert dist[frozenset({1, 2})] == 0.0


def test_constant_shared_variable_recovers_ec():
    cfg = search.SearchConfig(seed=3, restarts=8, max_iters=30, ec_grid_step=0, aux_alphabet_sizes={"U": 2, "V": 1})
    ec, _ = search.cross_section_ec(0.1, cfg)
    zb, _ = search.cross_section_zb(0.1, cfg)
    assert zb == ec


def test_zb_warm_started_never_worse():
    ec_cs = search._ec_section(0.1, FAST)
    zb_cs = search._zb_section(0.1, FAST, ec_cs.rows)
    assert zb_cs.value <= ec_cs.value + 1e-6


def test_ec_grid_is_exact_and_feasible():
    cfg = search.SearchConfig(seed=0, restarts=1, ec_grid_step=8)
    table = search.ec_grid_table(cfg, [0.1, 0.3])
    for D, (value, rows) in table.items():
        model = search.rows_to_model(rows, (1, 2, 2), with_shared=False)
        v, dist = search.evaluate_cross_section(model)
        assert abs(v - value) <= 1e-9
        assert dist[frozenset({1})] + dist[frozenset({2})] <= 2 * D + 1e-12
    assert len(search._simplex_grid(4, 8)) == 165


def test_separation_report_contract():
    rep = search.separation_zb(search.SearchConfig(seed=1, restarts=1, max_iters=10, ec_grid_step=0), [0.2, 0.45])
    assert rep.gap == rep.value_ec - rep.value_cms_or_zb
    assert len(rep.per_restart_trace) == 1
    doc = rep.to_json()
    assert "wall_time" not in doc
    assert {"D_star", "value_ec", "value_cms_or_zb", "gap", "best_model"} <= set(doc)


def test_trivial_distortion_has_no_gap():
    rep = search.separation_zb(FAST, [0.45])
    assert abs(rep.gap) <= 1e-6


def test_reports_byte_identical_and_independent_of_jobs():
    a = search.separation_zb(FAST, [0.1]).dumps()
    b = search.separation_zb(FAST, [0.1]).dumps()
    cfg2 = search.SearchConfig(seed=3, restarts=8, max_iters=30, ec_grid_step=0, jobs=2)
    c = search.separation_zb(cfg2, [0.1]).dumps()
    assert a == b == c


def test_parse_grid():
    assert search.parse_grid("0.05:0.45:0.05") == [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45]
    assert search.parse_grid("0.2:0.2:0.1") == [0.2]
    for bad in ("1:2", "a:b:c", "0.3:0.1:0.1", "0:1:0"):
        with pytest.raises(ValueError):
            search.parse_grid(bad)


# --- L = 3 and L = 4 constructions --------------------------------------------


def witness():
    """A small hand-made ZB model with an informative shared variable."""
    a = np.array([[0.8, 0.2], [0.2, 0.8]])
    t = np.einsum("x,xv,xa,xb->xvab", [0.5, 0.5], a, a, a)[..., None] * np.eye(2).reshape(2, 1, 1, 1, 2)
    joint = joint_from_tensor(["X", "V_12", "U_1", "U_2", "U_12"], t)
    return AuxModel.build(2, "ZB", joint, {(1, 2): "V_12"}, {1: "U_1", 2: "U_2"}, {(1, 2): "U_12"})


def test_l4_assembly():
    zb = witness()
    cms, ds = search.build_l4_cms(zb, 0.25, 0.1)
    assert list(ds.measures) == [frozenset(s) for s in ({1}, {2}, {3}, {1, 2}, {3, 4})]
    assert [n for S, n in cms.shared_vars.items() if not cms.is_constant(n)] == ["V_12"]
    group = ["V_12", "U_1", "U_2", "U_12"]
    assert mutual_information(cms.joint, group, ["U_3", "U_34"], ["X"]) <= 1e-12
    assert regions.min_rates(cms, [0, 0, 1, 0]).value == pytest.approx(shannon.rd_binary(0.25), abs=1e-9)
    assert regions.min_rates(cms, [0, 0, 1, 1]).value == pytest.approx(shannon.rd_binary(0.1), abs=1e-9)
    assert regions.min_rates(cms, [1, 1, 0, 0]).value == pytest.approx(
        regions.min_rates(zb, [1, 1]).value, abs=1e-9
    )
    vkg = search.vkg_variant(cms)
    assert regions.min_rates(vkg, [0, 0, 1, 1]).value > shannon.rd_binary(0.1) + 1e-6
    with pytest.raises(ValueError):
        search.build_l4_cms(zb, 0.1, 0.25)
    with pytest.raises(ValueError):
        search.build_l4_cms(zb, 0.5, 0.1)


def test_l3_gap_equals_common_rate():
    zb = witness()
    pair = regions.min_rates(zb, [1, 1])
    caps = {1: pair.rates[0], 2: pair.rates[1]}
    cms, _ = search.build_l3_cms(zb, 0.0)
    r_c = regions.alpha(cms, 2, [{1, 2}])
    r3_cms = regions.min_rates(cms, [0, 0, 1], caps=caps).value
    r3_vkg = regions.min_rates(search.vkg_variant(cms), [0, 0, 1], caps=caps).value
    assert r_c > 0.1
    assert r3_cms == pytest.approx(r3_vkg - r_c, abs=1e-9)


def test_l3_degenerate_shared_variable():
    zb = witness()
    t = zb.joint.marginal_table(["X", "U_1", "U_2", "U_12"])
    flat = AuxModel.build(2, "ZB", joint_from_tensor(["X", "V_12", "U_1", "U_2", "U_12"], t[:, None]),
                          {(1, 2): "V_12"}, {1: "U_1", 2: "U_2"}, {(1, 2): "U_12"})
    pair = regions.min_rates(flat, [1, 1])
    caps = {1: pair.rates[0], 2: pair.rates[1]}
    cms, _ = search.build_l3_cms(flat, 0.0)
    r3_cms = regions.min_rates(cms, [0, 0, 1], caps=caps).value
    r3_vkg = regions.min_rates(search.vkg_variant(cms), [0, 0, 1], caps=caps).value
    assert r3_cms == pytest.approx(r3_vkg, abs=1e-9)
    # no refinement on {1,3}: description 3 is free under CMS
    pair = regions.min_rates(zb, [1, 1])
    caps = {1: pair.rates[0], 2: pair.rates[1]}
    cms, _ = search.build_l3_cms(zb, None)
    assert regions.min_rates(cms, [0, 0, 1], caps=caps).value == pytest.approx(0.0, abs=1e-9)


def test_l3_without_witness_flags_it():
    rep = search.SeparationReport("zb", 0.45, 1.0, 1.0, 0.0, None, [(0, 1.0)])
    out = search.separation_l3(FAST, rep)
    assert out.details["status"] == "no separation witness"
    assert not out.witness
