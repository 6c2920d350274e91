import itertools

import numpy as np
import pytest

from mdcms import regions, sim
from mdcms.model import AuxModel, DistortionSpec, joint_from_tensor


def bsc(a):
    return np.array([[1 - a, a], [a, 1 - a]])


def shared_private(with_refinement=False):
    t = np.einsum("x,xv,xa->xva", [0.5, 0.5], bsc(0.25), bsc(0.1))
    if with_refinement:
        # U_12 = X exactly
        t = t[..., None] * np.eye(2).reshape(2, 1, 1, 2)
        joint = joint_from_tensor(["X", "V_12", "U_1", "U_12"], t)
        return AuxModel.build(2, "ZB", joint, {(1, 2): "V_12"}, {1: "U_1"}, {(1, 2): "U_12"})
    joint = joint_from_tensor(["X", "V_12", "U_1"], t)
    return AuxModel.build(2, "ZB", joint, {(1, 2): "V_12"}, {1: "U_1"})


def brute_force_encode(x, suite, eps, model):
    base = suite.base
    ranges = [range(suite.codebooks[b].size) for b in base]
    for combo in itertools.product(*ranges):
        idx = dict(zip(base, combo))
        if sim.joint_type_deviation(model, suite, x, idx) <= eps + 1e-12:
            return idx
    return None


def test_codebook_sizes():
    model = shared_private()
    suite = sim.generate_codebooks(model, regions.RateAllocation({}), 8, 0)
    assert all(s == 1 for s in suite.sizes().values())
    alloc = regions.RateAllocation({1: 0.0, 2: 0.0}, {(1, 2): 0.25})
    suite = sim.generate_codebooks(model, alloc, 8, 0)
    v = suite.codebooks["V_12"]
    assert v.size == 4 and v.words.shape == (4, 8)
    assert suite.effective_rates()["V_12"] == 0.25
    # U_1 codewords are drawn conditionally on every V_12 codeword
    alloc = regions.RateAllocation({1: 0.25}, {(1, 2): 0.25})
    suite = sim.generate_codebooks(model, alloc, 8, 0)
    assert suite.codebooks["U_1"].words.shape == (4, 4, 8)
    assert suite.codebooks["U_2"].size == 1


def test_generation_is_seeded():
    model = shared_private(True)
    alloc = regions.RateAllocation({1: 0.3}, {(1, 2): 0.3})
    a = sim.generate_codebooks(model, alloc, 6, [5, 0])
    b = sim.generate_codebooks(model, alloc, 6, [5, 0])
    c = sim.generate_codebooks(model, alloc, 6, [5, 1])
    assert a.order == b.order
    assert a.order.index("V_12") < a.order.index("U_1") < a.order.index("U_12")
    assert all(np.array_equal(a.codebooks[k].words, b.codebooks[k].words) for k in a.order)
    assert not all(np.array_equal(a.codebooks[k].words, c.codebooks[k].words) for k in a.order)


def test_refinement_follows_its_law():
    model = shared_private(True)
    alloc = regions.RateAllocation({1: 0.5}, {(1, 2): 0.5})
    suite = sim.generate_codebooks(model, alloc, 10, 3)
    # one refinement word per (V_12, U_1, U_2) index triple, and U_12 = X is
    # a deterministic function of nothing here, so its law stays fair
    words = suite.codebooks["U_12"].words
    assert words.shape == (32, 32, 1, 10)
    assert 0.4 < words.mean() < 0.6


@pytest.mark.parametrize("seed", range(8))
def test_encoder_matches_brute_force(seed):
    model = shared_private()
    alloc = regions.RateAllocation({1: 0.5}, {(1, 2): 0.5})
    suite = sim.generate_codebooks(model, alloc, 6, [seed, 0])
    x = np.random.default_rng([seed, 1]).integers(0, 2, 6)
    for eps in (0.1, 0.15, 0.25):
        got = sim.encode(x, suite, eps, model)
        want = brute_force_encode(x, suite, eps, model)
        assert (got is None) == (want is None)
        if got is not None:
            assert {k: got[k] for k in want} == want
            assert sim.joint_type_deviation(model, suite, x, got) <= eps + 1e-12


def test_trivial_encodings():
    const = AuxModel.build(2, "CMS", joint_from_tensor(["X"], [0.5, 0.5]))
    suite = sim.generate_codebooks(const, regions.RateAllocation({1: 1.0}), 5, 0)
    idx = sim.encode(np.array([0, 1, 1, 0, 1]), suite, 0.2, const)
    assert idx is not None and set(idx.values()) == {0}
    # epsilon >= 1 accepts every joint type
    model = shared_private()
    suite = sim.generate_codebooks(model, regions.RateAllocation({1: 0.2}, {(1, 2): 0.2}), 5, 0)
    assert sim.encode(np.zeros(5, int), suite, 1.0, model) == {"V_12": 0, "U_1": 0, "U_2": 0}
    with pytest.raises(ValueError):
        sim.encode(np.zeros(5, int), suite, 0.0, model)
    with pytest.raises(ValueError):
        sim.encode(np.zeros(4, int), suite, 0.1, model)


def test_copy_variable_agrees_with_source():
    t = np.zeros((2, 2))
    t[0, 0] = t[1, 1] = 0.5
    model = AuxModel.build(2, "CMS", joint_from_tensor(["X", "U_1"], t), None, {1: "U_1"})
    eps = 0.25
    suite = sim.generate_codebooks(model, regions.RateAllocation({1: 1.0}), 8, 2)
    for s in range(10):
        x = np.random.default_rng(s).permutation([0, 1] * 4)
        idx = sim.encode(x, suite, eps, model)
        assert idx is not None
        u = suite.word("U_1", idx)
        assert np.mean(u == x) >= 1 - 2 * eps


def test_missing_index_and_limits():
    model = shared_private()
    suite = sim.generate_codebooks(model, regions.RateAllocation({1: 0.25}, {(1, 2): 0.25}), 8, 0)
    with pytest.raises(ValueError, match="needs indices"):
        suite.word("U_1", {"U_1": 0})
    with pytest.raises(ValueError):
        sim.generate_codebooks(model, regions.RateAllocation({}), sim.MAX_N + 1, 0)
    with pytest.raises(ValueError, match="codewords"):
        sim.generate_codebooks(model, regions.RateAllocation({1: 1.1}), 12, 0)
    with pytest.raises(ValueError):
        sim.run_trials(model, regions.RateAllocation({}), 4, 0, 0.1, 0)
    with pytest.raises(ValueError):
        sim.as_cms(AuxModel.build(3, "EC", joint_from_tensor(["X"], [0.5, 0.5])))


def test_run_trials_reproducible():
    model = shared_private()
    alloc = regions.margin_allocation(sim.as_cms(model), 0.1)
    ds = DistortionSpec.hamming([{1}, {2}, {1, 2}])
    a = sim.run_trials(model, alloc, 6, 20, 0.1, 4, ds)
    b = sim.run_trials(model, alloc, 6, 20, 0.1, 4, ds, jobs=2)
    assert a.to_json() == b.to_json()
    assert a.trials == 20 and 0 <= a.failure_rate <= 1
    assert a.analytic_distortions[frozenset({2})] == pytest.approx(0.25)
