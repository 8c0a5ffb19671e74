import pytest
from hypothesis import given, strategies as st

from heisfinner.lattice import (
    ConfigError,
    CoordSubspace,
    DimensionTooLargeError,
    ProjectionConfig,
    enumerate_coordinate_subspaces,
    maximal_partition,
    restrict_config,
)

masks = st.integers(min_value=1, max_value=6).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, (1 << n) - 1), st.integers(0, (1 << n) - 1))
)


def test_enumeration_counts_and_dims():
    subs = enumerate_coordinate_subspaces(4)
    assert len(subs) == 16
    assert sorted(s.dim for s in subs).count(2) == 6


def test_enumeration_guard():
    with pytest.raises(DimensionTooLargeError):
        enumerate_coordinate_subspaces(64)


@given(masks)
def test_lattice_operations_match_bit_logic(args):
    n, a, b = args
    A, B = CoordSubspace(n, a), CoordSubspace(n, b)
    assert (A & B).mask == a & b
    assert (A | B).mask == a | b
    assert (A <= B) == (a & ~b == 0)
    assert A.complement().complement() == A
    assert (A & A.complement()).is_zero()
    assert (A | A.complement()).is_full()
    assert A.dim + A.complement().dim == n


def test_ambient_mismatch_rejected():
    with pytest.raises(ValueError):
        CoordSubspace(2, 1) & CoordSubspace(3, 1)


def test_reindex_inside_subspace():
    W = CoordSubspace.from_indices(4, [1, 3])
    V = CoordSubspace.from_indices(4, [0, 3])
    assert V.reindex(W).indices == (1,)


def test_config_roundtrip_and_validation():
    cfg = ProjectionConfig.from_indices(4, 3, [[2], [3], [4], [1], [2, 3, 4]])
    assert ProjectionConfig.from_json(cfg.to_json()) == cfg
    assert cfg.M == 5 and cfg.K[0].indices == (0, 2, 3)
    with pytest.raises(ConfigError):
        ProjectionConfig.from_indices(2, 1, [[3], []])
    with pytest.raises(ConfigError):
        ProjectionConfig.from_indices(2, 2, [[1], [2]])
    with pytest.raises(ConfigError):
        ProjectionConfig.from_dict({"n": 2, "m": 1})


def test_maximal_partition_groups_by_signature():
    images = [CoordSubspace.from_indices(4, ix) for ix in ([1], [2], [3], [0], [1, 2, 3])]
    P = maximal_partition(images)
    assert [b.indices for b in P.blocks] == [(0,), (1,), (2,), (3,)]
    assert P.is_adapted([v.complement() for v in images])
    coarse = maximal_partition([CoordSubspace.from_indices(3, [0, 1]), CoordSubspace.from_indices(3, [0, 1])])
    assert [b.indices for b in coarse.blocks] == [(0, 1), (2,)]


def test_restrict_config_shapes():
    cfg = ProjectionConfig.from_indices(3, 2, [[], [1, 2], [1], [2]])
    W = CoordSubspace.from_indices(3, [2])
    inner, flat = restrict_config(cfg, W)
    assert inner.n == 1 and inner.M == 4
    assert len(flat) == 4 and flat[0].x_part.n == 2
    with pytest.raises(ValueError):
        restrict_config(cfg, CoordSubspace.zero(3))
