import json
import math
from fractions import Fraction as F

import numpy as np
import pytest

from heisfinner.ellipsoids import AdaptedFrameError
from heisfinner.examples import builtin_config, heis1
from heisfinner.exponents import derive_arithmetic
from heisfinner.heisenberg import HPoint, named_map
from heisfinner.lattice import CoordSubspace, MaximalPartition
from heisfinner.paraballs import (
    I1,
    I2,
    DualityError,
    Paraball,
    contains,
    covering,
    covering_scalings,
    image_contains,
    left_translate,
    make_paraball,
    overlap_estimate,
    paraball_measures,
    scale_paraball,
    verify_scaling,
    voxelize,
)
from heisfinner.voxels import pushforward_vertical


@pytest.fixture(scope="module")
def ball():
    ex = heis1()
    return ex, make_paraball([0, 0, 0], None, [2], 4, ex.config.V)


def test_duality_is_exact(ball):
    _, B = ball
    assert B.r == (F(2),) and B.r_star == (F(2),) and B.rho == F(4)


def test_integral_constants():
    assert I1(0) == 1.0
    assert I1(1) == pytest.approx(math.pi / 4)
    assert I2(3, 3) == pytest.approx(0.75)
    assert I2(3, 0) == 0.0
    # average |a_1| over the unit disk
    assert I2(2, 1) == pytest.approx(4 / (3 * math.pi))


def test_monte_carlo_i2():
    rng = np.random.default_rng(0)
    u = rng.uniform(-1, 1, size=(400000, 3))
    u = u[np.sum(u * u, 1) < 1]
    assert np.mean(np.linalg.norm(u[:, :2], axis=1)) == pytest.approx(I2(3, 2), rel=0.01)


def test_voxel_measures_match_table(ball):
    ex, B = ball
    T = paraball_measures(B, ex.config)
    S = voxelize(B, 1 / 16)
    assert S.measure() == pytest.approx(T.B.value, rel=0.1)
    for j in range(ex.config.M):
        img = pushforward_vertical(S, named_map("pi_j", ex.config, j)).measure()
        assert img == pytest.approx(T.pi_j[j].value, rel=0.1)


def test_left_translation_preserves_measure(ball):
    ex, B = ball
    g = HPoint((F(1, 2),), (F(-1, 3),), F(1, 4))
    B2 = left_translate(g, B)
    assert voxelize(B2, 1 / 16).measure() == pytest.approx(voxelize(B, 1 / 16).measure(), rel=0.05)
    w = np.array([[0.5, -1 / 3, 0.25]])
    assert contains(B2, w).all()


def test_scaling_laws_hold_exactly():
    ex = builtin_config("ex2_4")
    s = derive_arithmetic(ex.config, ex.expected)
    B = make_paraball([0] * 9, None, [F(1), F(2), F(3), F(4)], F(5), ex.config.V)
    lam = [F(2), F(1, 3), F(5, 7), F(3)]
    a = F(6, 5)
    check = verify_scaling(B, lam, [a / x for x in lam], a, ex.config, s, ex.expected)
    assert check.holds and len(check.laws) == 1 + 5 + 4


def test_scaling_rejects_broken_duality(ball):
    _, B = ball
    with pytest.raises(DualityError):
        scale_paraball(B, [F(2)], [F(2)], F(3))


def test_adapted_frame_required():
    ex = builtin_config("ex2_4")
    c = 1 / math.sqrt(2)
    F_mixed = np.eye(4)
    F_mixed[:2, :2] = [[c, -c], [c, c]]
    with pytest.raises(AdaptedFrameError):
        make_paraball([0] * 9, F_mixed, [1, 1, 1, 1], 1, ex.config.V)


def test_rotation_inside_a_block_is_allowed():
    ex = builtin_config("ex2_3")
    part = MaximalPartition((CoordSubspace.from_indices(3, [0, 1]), CoordSubspace.from_indices(3, [2])))
    c = 1 / math.sqrt(2)
    fr = np.eye(3)
    fr[:2, :2] = [[c, -c], [c, c]]
    B = make_paraball([0] * 7, fr, [1, 1, 1], 1, part)
    assert B.axis_blocks() == [0, 0, 1]
    with pytest.raises(AdaptedFrameError):
        paraball_measures(B, ex.config)


def test_serialization_roundtrip(ball):
    _, B = ball
    data = json.loads(json.dumps(B.to_dict()))
    assert data["r"][0] == {"num": 2, "den": 1, "provenance": "exact"}
    B2 = Paraball.from_dict(data)
    assert B2.r == B.r and B2.rho == B.rho and np.allclose(B2.frame, B.frame)


def test_covering_audit_and_count(ball):
    ex, B = ball
    C = covering(B, 1.0)
    assert C.eta == pytest.approx(1 / 8)
    uncovered, total = C.audit(1 / 8)
    assert uncovered == 0 and total > 0
    m = C.member(0)
    assert m.rho == pytest.approx(4.0)
    with pytest.raises(ValueError):
        covering(B, 1.5)


def test_covering_measure_scalings():
    ex = builtin_config("ex2_3")
    s = derive_arithmetic(ex.config, ex.expected)
    B = make_paraball([0] * 7, None, [1, 2, 3], 6, ex.config.V)
    out = covering_scalings(B, F(1, 3), ex.config, s)
    for key in ("pi_j", "pi_tilde", "pi_tilde_star"):
        assert all(meas == pred for meas, pred in out[key])


def test_image_membership_matches_pushforward(ball):
    ex, B = ball
    rng = np.random.default_rng(5)
    w = rng.uniform(-3, 3, size=(2000, 3))
    inside = contains(B, w)
    q = np.stack([np.r_[p[1], p[2] + 0.5 * p[0] * p[1]] for p in w[inside]])
    assert image_contains(B, ex.config, 0, q).all()


def test_overlap_decays_with_eccentricity(ball):
    ex, B = ball
    vals = [overlap_estimate(B, make_paraball([0, 0, 0], None, [2 * 4**k], 4, ex.config.V), ex.config)[0] for k in range(3)]
    assert vals[0] == pytest.approx(1.0)
    assert vals[0] > vals[1] > vals[2]
