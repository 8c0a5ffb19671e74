from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisfinner.examples import builtin_config
from heisfinner.exponents import ExponentVector
from heisfinner.heisenberg import flow_X, named_map
from heisfinner.lattice import CoordSubspace
from heisfinner.voxels import (
    BoxUnion,
    FinnerAssumptionError,
    GridGuardError,
    NestingError,
    VoxelSet,
    exhaustive_finner,
    fiber_groups,
    fiber_trace,
    finner_check,
    gen_finner_check,
    load_voxels,
    pushforward_vertical,
    save_vxl,
)

cell_sets = st.lists(st.tuples(*[st.integers(-4, 4)] * 3), min_size=1, max_size=40)
LW = [CoordSubspace.from_indices(3, ix) for ix in ([1, 2], [0, 2], [0, 1])]
HALF = ExponentVector.of("1/2", "1/2", "1/2")


def test_box_measure_and_centers():
    S = VoxelSet.box([0, 0], [1, 1], 0.25)
    assert S.count == 16 and S.measure() == 1.0
    assert np.allclose(S.centers().min(axis=0), 0.125)


@given(cell_sets, st.sets(st.integers(0, 2), min_size=1))
def test_projection_matches_bruteforce(cells, keep):
    keep = sorted(keep)
    S = VoxelSet(3, 0.5, np.array(cells))
    brute = {tuple(c[i] for i in keep) for c in cells}
    assert S.project(keep).count == len(brute)


@given(cell_sets, cell_sets)
def test_set_operations(a, b):
    A, B = VoxelSet(3, 1.0, np.array(a)), VoxelSet(3, 1.0, np.array(b))
    sa, sb = set(a), set(b)
    assert A.union(B).count == len(sa | sb)
    assert A.intersection(B).count == len(sa & sb)
    assert A.difference(B).count == len(sa - sb)


@given(cell_sets)
def test_vxl_and_json_roundtrip(cells):
    S = VoxelSet(3, 0.125, np.array(cells))
    T = VoxelSet.from_vxl(S.to_vxl())
    assert np.array_equal(T.cells, S.cells) and T.h == S.h
    assert np.array_equal(VoxelSet.from_json(S.to_json()).cells, S.cells)


def test_vxl_file_and_corruption(tmp_path):
    S = VoxelSet.box([0, 0, 0], [1, 1, 1], 0.25)
    path = tmp_path / "s.vxl"
    save_vxl(S, str(path))
    assert load_voxels(str(path)).count == S.count
    with pytest.raises(ValueError):
        VoxelSet.from_vxl(b"NOPE")


def test_grid_guard():
    with pytest.raises(GridGuardError):
        VoxelSet.box([0, 0, 0], [1, 1, 1], 1 / 512)


def test_contains_points():
    S = VoxelSet.box([0, 0], [1, 1], 0.5)
    assert S.contains_points(np.array([[0.2, 0.7], [1.2, 0.1]])).tolist() == [True, False]


@given(cell_sets)
@settings(max_examples=50)
def test_finner_loomis_whitney(cells):
    r = finner_check(VoxelSet(3, 1.0, np.array(cells)), LW, HALF)
    assert r.holds and r.ratio <= 1 + 1e-12


def test_finner_assumption_enforced():
    with pytest.raises(FinnerAssumptionError):
        finner_check(VoxelSet.box([0, 0, 0], [1, 1, 1], 0.5), LW, ExponentVector.of("1/3", "1/3", "1/3"))


def test_exhaustive_small_grid():
    best, _ = exhaustive_finner(2, 3, LW, HALF)
    assert best == pytest.approx(1)
    with pytest.raises(GridGuardError):
        exhaustive_finner(3, 3, LW, HALF)


def test_gen_finner_requires_nesting():
    images = [CoordSubspace.from_indices(2, [0]), CoordSubspace.from_indices(2, [1])]
    S = VoxelSet.box([0, 0], [1, 1], 0.25)
    with pytest.raises(NestingError):
        gen_finner_check(S, images, 2, ExponentVector.of("1", "1"), 0.5)
    r = gen_finner_check(S, images, 2, ExponentVector.of("1", "1"), 0.5, strict=False)
    assert not r.nested


def test_boxunion_counts_match_voxels():
    boxes = [((0, 0, 0), (F(1, 2), 1, 1)), ((F(1, 4), F(1, 4), 0), (1, F(3, 4), F(1, 2)))]
    B = BoxUnion.from_boxes(boxes, 1 / 16)
    S = VoxelSet.box([0, 0, 0], [0.5 - 1e-9, 1 - 1e-9, 1 - 1e-9], 1 / 16).union(
        VoxelSet.box([0.25, 0.25, 0], [1 - 1e-9, 0.75 - 1e-9, 0.5 - 1e-9], 1 / 16)
    )
    assert B.cell_count() == S.count
    assert B.project([0, 1]).cell_count() == S.project([0, 1]).count
    fs = B.fiber_stats([0, 1])
    assert fs.total_cells == S.count and fs.image_cells == S.project([0, 1]).count


def test_pushforward_pi_of_unit_box():
    S = VoxelSet.box([0, 0, 0], [1, 1, 1], 1 / 32)
    assert pushforward_vertical(S, named_map("pi", n=1)).measure() == pytest.approx(1.25, rel=0.01)


def test_fiber_groups_partition_the_set():
    cfg = builtin_config("heis1").config
    S = VoxelSet.box([0, 0, 0], [1, 1, 1], 1 / 8)
    g = fiber_groups(S, named_map("pi_j", cfg, 0))
    assert g.group_measures().sum() * (1 / 8) ** 2 == pytest.approx(S.measure())


def test_fiber_trace_matches_bruteforce():
    S = VoxelSet.box([0, 0, 0], [1, 1, 1], 1 / 8)
    z = S.centers()[10]
    T = fiber_trace(S, z, "T")
    grid = (np.arange(-16, 16) + 0.5) / 8
    hits = [s for s in grid if S.contains_points(flow_X(np.array([s]), z)[None])[0]]
    assert T.count == len(hits)
