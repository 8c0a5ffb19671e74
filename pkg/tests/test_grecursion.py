import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisfinner.grecursion import g_lower_bound, g_recursion, holder_check, product_integral, regular_e_stats
from heisfinner.voxels import RegularityError


def test_full_cube_recursion_is_volume():
    h = 1 / 8
    E = np.ones((8, 8, 8), dtype=bool)
    lv = g_recursion(E, np.ones(E.shape), [1, 3], [2, 1], h)
    assert float(lv.G[-1]) == pytest.approx(1.0)
    assert lv.Q_tilde == [3, 1]


def test_shape_validation():
    E = np.ones((4, 4), dtype=bool)
    with pytest.raises(ValueError):
        g_recursion(E, np.ones(E.shape), [2, 1], [1, 1], 0.25)
    with pytest.raises(ValueError):
        g_recursion(E, np.ones(E.shape), [1, 3], [1, 1], 0.25)
    with pytest.raises(ValueError):
        g_recursion(np.zeros((4, 4), dtype=bool), np.ones((4, 4)), [1, 2], [1, 1], 0.25)


def test_product_integral_constant_functions():
    E = np.ones((4, 4), dtype=bool)
    f = [[np.ones((4, 4))] * 2, [np.ones((4, 4))]]
    assert product_integral(E, f, [1, 2], [2, 1], 0.25) == pytest.approx(1.0)


grids = st.integers(0, 2**16 - 1).map(lambda b: np.array([(b >> i) & 1 for i in range(16)], dtype=bool).reshape(4, 4))


@given(grids, st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_iterated_holder_inequality(E, seed):
    if not E.any():
        return
    rng = np.random.default_rng(seed)
    f = [[rng.random((4, 4)) for _ in range(2)], [rng.random((4, 4))]]
    assert holder_check(E, f, [1, 2], [2, 1], 0.25).holds


@given(grids)
@settings(max_examples=60, deadline=None)
def test_g_lower_bound(E):
    if not E.any():
        return
    assert g_lower_bound(E, [1, 2], [2, 1], 0.25).holds


def test_regular_stats_and_sigma_guard():
    E = np.zeros((4, 4), dtype=bool)
    E[:, 0] = True
    E[0, 1] = True
    st_ = regular_e_stats(E, [1, 2], 0.25)
    assert st_.max_over_avg[0] > 1
    with pytest.raises(RegularityError):
        g_lower_bound(E, [1, 2], [2, 1], 0.25, sigma=0.9)
