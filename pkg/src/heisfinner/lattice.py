"""Coordinate subspaces as bitmasks, maximal partitions and critical restriction."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Sequence

MAX_ENUM_DIM = 24


class DimensionTooLargeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CoordSubspace:
    """Span of the basis vectors e_i whose bit i is set in ``mask``."""

    n: int
    mask: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("negative dimension")
        if self.mask < 0 or self.mask >> self.n:
            raise ValueError(f"mask {self.mask:#b} has bits outside dimension {self.n}")

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> CoordSubspace:
        """Build from 0-based coordinate indices."""
        mask = 0
        for i in indices:
            if not 0 <= i < n:
                raise ValueError(f"index {i} outside 0..{n - 1}")
            mask |= 1 << i
        return cls(n, mask)

    @classmethod
    def full(cls, n: int) -> CoordSubspace:
        return cls(n, (1 << n) - 1)

    @classmethod
    def zero(cls, n: int) -> CoordSubspace:
        return cls(n, 0)

    @property
    def dim(self) -> int:
        return self.mask.bit_count()

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.mask >> i & 1)

    def complement(self) -> CoordSubspace:
        return CoordSubspace(self.n, ((1 << self.n) - 1) & ~self.mask)

    def __and__(self, other: CoordSubspace) -> CoordSubspace:
        self._same_ambient(other)
        return CoordSubspace(self.n, self.mask & other.mask)

    def __or__(self, other: CoordSubspace) -> CoordSubspace:
        self._same_ambient(other)
        return CoordSubspace(self.n, self.mask | other.mask)

    def __le__(self, other: CoordSubspace) -> bool:  # type: ignore[override]
        self._same_ambient(other)
        return self.mask & ~other.mask == 0

    def __lt__(self, other: CoordSubspace) -> bool:  # type: ignore[override]
        return self <= other and self.mask != other.mask

    def contains(self, i: int) -> bool:
        return bool(self.mask >> i & 1)

    def is_zero(self) -> bool:
        return self.mask == 0

    def is_full(self) -> bool:
        return self.mask == (1 << self.n) - 1

    def reindex(self, within: CoordSubspace) -> CoordSubspace:
        """Express ``self & within`` in the coordinates of ``within``."""
        pos = {i: k for k, i in enumerate(within.indices)}
        return CoordSubspace.from_indices(within.dim, [pos[i] for i in (self & within).indices])

    def _same_ambient(self, other: CoordSubspace) -> None:
        if self.n != other.n:
            raise ValueError(f"ambient dimensions differ: {self.n} vs {other.n}")

    def label(self) -> str:
        if self.is_zero():
            return "{0}"
        return "<" + ",".join(f"e{i + 1}" for i in self.indices) + ">"

    def __repr__(self) -> str:
        return f"CoordSubspace(n={self.n}, {self.label()})"


def enumerate_coordinate_subspaces(n: int) -> list[CoordSubspace]:
    """All 2^n coordinate subspaces of R^n in mask order."""
    if n < 0:
        raise ValueError("negative dimension")
    if n > MAX_ENUM_DIM:
        raise DimensionTooLargeError(f"n={n} exceeds enumeration guard {MAX_ENUM_DIM}")
    return [CoordSubspace(n, mask) for mask in range(1 << n)]


def iter_masks(n: int) -> Iterator[int]:
    if n > MAX_ENUM_DIM:
        raise DimensionTooLargeError(f"n={n} exceeds enumeration guard {MAX_ENUM_DIM}")
    return iter(range(1 << n))


@dataclass(frozen=True)
class ProjectionConfig:
    """Images V_1..V_M of the coordinate projections; the first m act on x."""

    n: int
    m: int
    V: tuple[CoordSubspace, ...]

    def __post_init__(self) -> None:
        if not 0 < self.m < len(self.V):
            raise ConfigError(f"need 0 < m < M, got m={self.m}, M={len(self.V)}")
        for j, v in enumerate(self.V):
            if v.n != self.n:
                raise ConfigError(f"V_{j + 1} lives in dimension {v.n}, expected {self.n}")

    @classmethod
    def from_indices(cls, n: int, m: int, subspaces: Sequence[Sequence[int]]) -> ProjectionConfig:
        """Build from 1-based coordinate index lists."""
        V = []
        for j, idx in enumerate(subspaces):
            bad = [i for i in idx if not 1 <= int(i) <= n]
            if bad:
                raise ConfigError(f"subspace {j + 1}: indices {bad} outside 1..{n}")
            V.append(CoordSubspace.from_indices(n, [int(i) - 1 for i in idx]))
        return cls(n, m, tuple(V))

    @property
    def M(self) -> int:
        return len(self.V)

    @property
    def K(self) -> tuple[CoordSubspace, ...]:
        return tuple(v.complement() for v in self.V)

    def is_x_side(self, j: int) -> bool:
        """0-based j: True when the map keeps y and projects x."""
        return j < self.m

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "subspaces": [[i + 1 for i in v.indices] for v in self.V],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Any) -> ProjectionConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        missing = [k for k in ("n", "m", "subspaces") if k not in data]
        if missing:
            raise ConfigError(f"config missing keys: {missing}")
        n, m, subs = data["n"], data["m"], data["subspaces"]
        if not isinstance(n, int) or not isinstance(m, int) or isinstance(n, bool):
            raise ConfigError("n and m must be integers")
        if not isinstance(subs, list) or not all(isinstance(s, list) for s in subs):
            raise ConfigError("subspaces must be a list of index lists")
        return cls.from_indices(n, m, subs)

    @classmethod
    def from_json(cls, text: str) -> ProjectionConfig:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MaximalPartition:
    blocks: tuple[CoordSubspace, ...]

    def __post_init__(self) -> None:
        if not self.blocks:
            return
        n = self.blocks[0].n
        acc = 0
        for b in self.blocks:
            if b.mask & acc:
                raise ValueError("blocks overlap")
            acc |= b.mask
        if acc != (1 << n) - 1:
            raise ValueError("blocks do not cover R^n")

    def block_of(self, i: int) -> int:
        for a, b in enumerate(self.blocks):
            if b.contains(i):
                return a
        raise KeyError(i)

    def is_adapted(self, kernels: Sequence[CoordSubspace]) -> bool:
        """Each block lies in every kernel or in the matching image."""
        return all(b <= k or (b & k).is_zero() for b in self.blocks for k in kernels)


def maximal_partition(images: Sequence[CoordSubspace]) -> MaximalPartition:
    """Group coordinates by their kernel-membership signature across the projections."""
    if not images:
        raise ValueError("need at least one projection")
    n = images[0].n
    groups: dict[tuple[bool, ...], int] = {}
    for i in range(n):
        sig = tuple(not v.contains(i) for v in images)
        groups[sig] = groups.get(sig, 0) | (1 << i)
    blocks = sorted((CoordSubspace(n, mask) for mask in groups.values()), key=_lowest_bit)
    return MaximalPartition(tuple(blocks))


def _lowest_bit(v: CoordSubspace) -> int:
    return (v.mask & -v.mask).bit_length()


@dataclass(frozen=True)
class FlatProjection:
    """A map L''_x x L''_y on the flat space W^perp x W^perp."""

    x_part: CoordSubspace
    y_part: CoordSubspace


def restrict_config(
    config: ProjectionConfig, W: CoordSubspace
) -> tuple[ProjectionConfig, list[FlatProjection]]:
    """Split a configuration along a nonzero proper coordinate subspace W."""
    if W.n != config.n:
        raise ValueError("W lives in the wrong dimension")
    if W.is_zero() or W.is_full():
        raise ValueError("restriction needs {0} < W < R^n")
    inner = ProjectionConfig(W.dim, config.m, tuple(v.reindex(W) for v in config.V))
    Wp = W.complement()
    full = CoordSubspace.full(Wp.dim)
    flat = []
    for j, v in enumerate(config.V):
        part = v.reindex(Wp)
        if config.is_x_side(j):
            flat.append(FlatProjection(part, full))
        else:
            flat.append(FlatProjection(full, part))
    return inner, flat
