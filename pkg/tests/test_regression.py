"""Frozen numbers from seeded searches; a change here means the search changed."""

import json
from pathlib import Path

import pytest

from mdcms import search

EXPECTED = json.loads((Path(__file__).parents[1] / "regression" / "expected.json").read_text())


def test_small_separation():
    ref = EXPECTED["separation_zb_small"]
    c = ref["config"]
    cfg = search.SearchConfig(seed=c["seed"], restarts=c["restarts"], ec_grid_step=c["ec_grid_step"])
    rep = search.separation_zb(cfg, c["grid"])
    assert rep.D_star == ref["D_star"]
    assert rep.value_ec == pytest.approx(ref["value_ec"], abs=ref["tolerance"])
    assert rep.value_cms_or_zb == pytest.approx(ref["value_zb"], abs=ref["tolerance"])
    assert rep.gap == pytest.approx(ref["gap"], abs=ref["tolerance"])


def test_ec_cross_section():
    ref = EXPECTED["cross_section_ec"]
    c = ref["config"]
    cfg = search.SearchConfig(seed=c["seed"], restarts=c["restarts"], ec_grid_step=c["ec_grid_step"])
    value, _ = search.cross_section_ec(c["D"], cfg)
    assert value == pytest.approx(ref["value"], abs=ref["tolerance"])
