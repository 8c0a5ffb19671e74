import numpy as np
import pytest

from heisfinner.examples import builtin_config, heis1
from heisfinner.exponents import derive_arithmetic
from heisfinner.paraballs import make_paraball, voxelize
from heisfinner.refinement import refine_flow_scheme, refine_flowed_boxes
from heisfinner.voxels import BoxUnion, VoxelSet


@pytest.fixture(scope="module")
def scheme():
    ex = heis1()
    S = voxelize(make_paraball([0, 0, 0], None, [1], 1, ex.config.V), 1 / 16)
    return refine_flow_scheme(S, ex.config, derive_arithmetic(ex.config, ex.expected), A=4)


def test_levels_nested_and_audited(scheme):
    for a, b in zip(scheme.levels, scheme.levels[1:]):
        assert not np.any(a & ~b)
    assert scheme.audit().holds
    assert scheme.levels[0][scheme.z0_index]


def test_loss_within_kappa(scheme):
    lost = scheme.Omega.count - int(scheme.levels[0].sum())
    assert lost <= scheme.kappa * scheme.Omega.count + 1e-9


def test_parameter_sets(scheme):
    assert scheme.S1.d == 1 and scheme.S1.count > 0
    assert all(scheme.S_measure(l) > 0 for l in range(1, scheme.A + 1))
    d = scheme.to_dict()
    assert len(d["level_cells"]) == 4 and d["A"] == 4


def test_refinement_argument_checks():
    ex = heis1()
    s = derive_arithmetic(ex.config, ex.expected)
    with pytest.raises(ValueError):
        refine_flow_scheme(VoxelSet.box([0, 0, 0], [1, 1, 1], 0.25), ex.config, s, A=0)
    with pytest.raises(ValueError):
        refine_flow_scheme(VoxelSet.empty(3, 0.25), ex.config, s, A=2)


def test_flowed_boxes_need_disjoint_images():
    ex = builtin_config("ex2_2")
    s = derive_arithmetic(ex.config, ex.expected)
    B = BoxUnion.from_boxes([((0,) * 5, (1,) * 5), ((0,) * 5, (1,) * 5)], 1 / 8)
    B = BoxUnion(B.h, np.vstack([B.lo, B.lo + [4, 0, 0, 0, 0]]), np.vstack([B.hi, B.hi + [4, 0, 0, 0, 0]]))
    with pytest.raises(ValueError):
        refine_flowed_boxes(B, ex.config, s)


def test_flowed_boxes_keep_uniform_family():
    ex = builtin_config("ex2_2")
    s = derive_arithmetic(ex.config, ex.expected)
    boxes = [((0, 0, 0, 0, k), (1, 1, 1, 1, k + 1)) for k in range(4)]
    r = refine_flowed_boxes(BoxUnion.from_boxes(boxes, 1 / 8), ex.config, s)
    assert r.kept.all() and min(r.pointwise_margin) >= 1
