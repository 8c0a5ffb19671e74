from fractions import Fraction as F

import pytest

from heisfinner.examples import (
    BUILTIN_NAMES,
    COUNTEREXAMPLES,
    builtin_config,
    counterexample_set,
    default_h,
    sweep,
    table_report,
)
from heisfinner.exponents import check_conditions, solve_polytope
from heisfinner.lattice import ConfigError
from heisfinner.voxels import ResolutionError


def test_builtin_names_resolve():
    for name in BUILTIN_NAMES[:5]:
        assert builtin_config(name).config.n >= 1
    assert builtin_config("ex2_4.json").name == "ex2_4"
    assert builtin_config("holder(3,4)").config.m == 2
    assert builtin_config("loomis_whitney_flat(3)").flat_p.inv_p == (F(1, 2),) * 3
    with pytest.raises(KeyError):
        builtin_config("ex9_9")
    with pytest.raises(ConfigError):
        builtin_config("holder(0,2)")


def test_loomis_whitney_flat_unique_point():
    ex = builtin_config("loomis_whitney_flat(3)")
    P = solve_polytope(ex.config)
    assert P.is_singleton and check_conditions(ex.config, P.vertices[0]).all_hold


def test_table_report_ex2_5_carries_note():
    t = table_report("ex2_5")
    assert t["balanced"] and t["matches_expected"]
    assert t["rows"][4]["p"] == F(43, 12) and t["rows"][5]["p"] == F(43, 18)
    assert t["notes"]


def test_table_report_needs_singleton():
    with pytest.raises(ValueError):
        table_report("holder(2,3)")


def test_counterexample_names_and_resolution_guard():
    assert set(COUNTEREXAMPLES) == {"A1", "A2", "A3", "A4"}
    assert default_h(16) == 2.0**-14
    with pytest.raises(ResolutionError):
        counterexample_set("A1", 16, h=1 / 32)
    with pytest.raises(ValueError):
        counterexample_set("A1", 1)
    with pytest.raises(KeyError):
        counterexample_set("A9", 16)


def test_a2_grid_ratio_tracks_exact_value():
    r = counterexample_set("A2", 8)
    assert r.quantities["ratio_exact"] == 9
    assert r.quantities["grid_ratio"] == pytest.approx(9 - 8 * r.h)


def test_a3_literal_reading_is_flat():
    lit = counterexample_set("A3", 16, literal=True)
    rep = counterexample_set("A3", 16)
    assert lit.target == pytest.approx(1, rel=0.05)
    assert rep.target > 8 and any("not nested" in f for f in rep.flags)


def test_a1_measure_grows_like_log():
    vals = [counterexample_set("A1", N).quantities["measure_over_logN"] for N in (16, 32)]
    assert 0.5 < vals[1] / vals[0] < 1.5


def test_sweep_custom_range():
    s = sweep("A2", [4, 8])
    assert [r.target for r in s.records] == [5.0, 9.0]
    assert s.monotone and s.to_dict()["N"] == [4, 8]
