import math

import pytest
from hypothesis import given, settings, strategies as st

from heisfinner.examples import heis1
from heisfinner.exponents import ExponentVector
from heisfinner.paraballs import make_paraball, voxelize
from heisfinner.regularity import classify, quasi_ratio, refinement_stability
from heisfinner.voxels import VoxelSet


def test_quasi_ratio_formula():
    p = ExponentVector.of("1/2", "1/2")
    assert quasi_ratio(4.0, [4.0, 4.0], p) == pytest.approx(1.0)
    assert quasi_ratio(2.0, [4.0, 16.0], p) == pytest.approx(0.25)


def test_classify_box():
    ex = heis1()
    S = VoxelSet.box([0, 0, 0], [1, 1, 1], 1 / 16)
    rep = classify(S, ex.config, ex.expected)
    assert rep.measure == pytest.approx(1.0)
    assert 0 < rep.epsilon_quasi <= 2
    assert rep.epsilon_regular == min(rep.epsilon_quasi, rep.epsilon_semi, rep.epsilon_semi_star)
    assert set(rep.to_dict()) >= {"epsilon_quasi", "epsilon_semi", "alpha", "beta"}


def test_classify_rejects_bad_input():
    ex = heis1()
    with pytest.raises(ValueError):
        classify(VoxelSet.empty(3, 0.1), ex.config, ex.expected)
    with pytest.raises(ValueError):
        classify(VoxelSet.box([0] * 5, [1] * 5, 0.25), ex.config, ex.expected)


@given(st.floats(0.5, 2.0), st.sampled_from([1, 8, 64]))
@settings(max_examples=12, deadline=None)
def test_paraball_regularity_scale_stable(s, rho):
    """Against the unit-scale paraball of the same shape the levels move by less than 2x."""
    ex = heis1()

    def eps(r):
        B = make_paraball([0, 0, 0], None, [s * math.sqrt(r)], r, ex.config.V)
        rep = classify(voxelize(B, r / 32), ex.config, ex.expected)
        return rep.epsilon_quasi, rep.epsilon_semi

    q0, s0 = eps(1)
    q, s1 = eps(rho)
    assert 0.5 < q / q0 < 2 and 0.5 < s1 / s0 < 2


def test_refinement_stability_records():
    ex = heis1()
    S = VoxelSet.box([0, 0, 0], [1, 1, 1], 1 / 8)
    recs = refinement_stability(S, ex.config, ex.expected, 0.5, trials=3, seed=0)
    assert len(recs) == 3
    assert all(r["quasi"].eps_after > 0 and r["quasi"].constant > 0 for r in recs)
