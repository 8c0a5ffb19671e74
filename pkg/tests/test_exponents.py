from fractions import Fraction as F

import pytest

from heisfinner.examples import builtin_config
from heisfinner.exponents import (
    BaseCase,
    ExponentVector,
    ScaffoldError,
    assert_scaffold,
    check_conditions,
    classify_base_case,
    derive_arithmetic,
    rref,
    solve_polytope,
    solve_square,
    weights,
)
from heisfinner.lattice import CoordSubspace, ProjectionConfig


def test_exponent_vector_basics():
    p = ExponentVector.of("2/7", "2/7", "2/7", "4/7")
    assert p.q == 7 and p.q_j == (2, 2, 2, 4)
    assert p.p[3] == F(7, 4)
    assert ExponentVector.from_p([2, float("inf")]).inv_p == (F(1, 2), F(0))
    with pytest.raises(ValueError):
        ExponentVector.of(F(3, 2))


def test_rref_and_square_solve_are_exact():
    R, piv = rref([[F(2), F(4)], [F(1), F(3)]])
    assert piv == [0, 1] and R == [[1, 0], [0, 1]]
    assert solve_square([[F(1), F(2)], [F(3), F(4)]], [F(5), F(6)]) == [F(-4), F(9, 2)]
    assert solve_square([[F(1), F(2)], [F(2), F(4)]], [F(1), F(2)]) is None


@pytest.mark.parametrize("name", ["ex2_2", "ex2_3", "ex2_4", "ex2_5", "heis1"])
def test_builtin_exponents_satisfy_conditions(name):
    ex = builtin_config(name)
    rep = check_conditions(ex.config, ex.expected)
    assert rep.all_hold and rep.B_twiddle_holds
    assert solve_polytope(ex.config).contains(ex.expected)


def test_printed_ex2_5_exponents_fail_balance():
    ex = builtin_config("ex2_5")
    printed = ExponentVector.of(*([F(6, 43)] * 4), F(18, 43), F(12, 43))
    rep = check_conditions(ex.config, printed)
    assert not rep.C_holds
    assert any("balance" in f for f in rep.failures())


def test_scaffold_ex2_4_values():
    ex = builtin_config("ex2_4")
    s = derive_arithmetic(ex.config, ex.expected)
    assert (s.q, s.N) == (31, 9)
    assert s.k_tilde == (1, 4) and s.q_tilde == (5, 10) and s.q_dbl_tilde == (5, 1)
    assert s.kept(0).indices == (1, 2, 3) and s.dropped(0).indices == (0,)
    assert_scaffold(s)


def test_scaffold_rejects_inadmissible_point():
    ex = builtin_config("ex2_2")
    with pytest.raises(ScaffoldError):
        derive_arithmetic(ex.config, ExponentVector.of("1/2", "1/2", "1/2"))


def test_weight_table_csv():
    ex = builtin_config("ex2_4")
    rows = weights(ex.config, ex.expected).to_csv_rows()
    assert rows[0][0] == "map" and rows[-1] == ["weight", "15/31", "10/31", "10/31", "10/31", ""]


@pytest.mark.parametrize(
    "n, m, V, kind",
    [
        (2, 1, [[], []], BaseCase.SINGLETON_BASE_CASE),
        (2, 1, [[], [1]], BaseCase.EMPTY),
        (2, 1, [[], [1, 2]], BaseCase.HOLDER_REDUCIBLE),
        (2, 1, [[], [], []], BaseCase.BOUNDARY_EXTREMES),
        (3, 2, [[], [1, 2], [1], [2]], BaseCase.CRITICAL_REDUCTION),
    ],
)
def test_base_case_classification(n, m, V, kind):
    c = classify_base_case(ProjectionConfig.from_indices(n, m, V))
    assert c.kind is kind
    if kind is BaseCase.CRITICAL_REDUCTION:
        assert c.W == CoordSubspace.from_indices(3, [2]) and c.inner.n == 1


def test_base_case_with_point_outside_polytope_is_empty():
    cfg = builtin_config("ex2_2").config
    assert classify_base_case(cfg, ExponentVector.of("1/2", "1/2", "1/2")).kind is BaseCase.EMPTY
