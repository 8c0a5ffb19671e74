"""Voxel sets, exact box unions, pushforwards, fibers and the Finner checkers."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .exponents import ArithmeticScaffold, ExponentVector
from .heisenberg import NamedMap, flow_X, flow_Y, named_map
from .lattice import CoordSubspace, ProjectionConfig

MAX_CELLS = 1 << 24
VXL_MAGIC = b"VXL1"


class GridGuardError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


class FinnerAssumptionError(ValueError):
    def __init__(self, coordinate: int, total: Fraction):
        super().__init__(f"coordinate e{coordinate + 1}: exponent sum {total} != 1")
        self.coordinate = coordinate
        self.total = total


class NestingError(ValueError):
    pass


class RegularityError(ValueError):
    def __init__(self, j: int, ratio: float, eps: float):
        super().__init__(f"projection {j + 1}: max fiber / average = {ratio:.4g} exceeds 1/eps = {1 / eps:.4g}")
        self.j = j
        self.ratio = ratio


# ------------------------------------------------------------------ row keys


def _row_ids(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Compact ids for the rows of an integer array: (unique row indices, inverse)."""
    a = np.asarray(a, dtype=np.int64)
    if a.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if a.shape[1] == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(a.shape[0], dtype=np.int64)
    keys = _encode(a)
    if keys is None:
        _, first, inv = np.unique(a, axis=0, return_index=True, return_inverse=True)
        return first, inv.ravel()
    _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    return first, inv


def _encode(a: np.ndarray, lo: np.ndarray | None = None, span: np.ndarray | None = None) -> np.ndarray | None:
    """Mixed-radix keys preserving lexicographic order, or None when they would overflow."""
    if lo is None:
        lo = a.min(axis=0)
        span = a.max(axis=0) - lo + 1
    assert span is not None
    if float(np.prod(span.astype(float))) >= 2.0**62:
        return None
    key = np.zeros(a.shape[0], dtype=np.int64)
    for c in range(a.shape[1]):
        key = key * span[c] + (a[:, c] - lo[c])
    return key


def _sorted_unique_rows(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    if a.shape[0] == 0:
        return a.reshape(0, a.shape[1] if a.ndim == 2 else 0)
    first, _ = _row_ids(a)
    rows = a[first]
    order = np.lexsort(rows.T[::-1])
    return rows[order]


# ------------------------------------------------------------------ VoxelSet


@dataclass(frozen=True, eq=False)
class VoxelSet:
    """Finite union of axis-aligned cells [k*h, (k+1)*h) in R^d."""

    d: int
    h: float
    cells: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise ValueError("cell size must be positive")
        c = np.asarray(self.cells, dtype=np.int64).reshape(-1, self.d)
        if c.shape[0] > MAX_CELLS:
            raise GridGuardError(f"{c.shape[0]} cells exceed the guard of {MAX_CELLS}")
        c = _sorted_unique_rows(c)
        c.setflags(write=False)
        object.__setattr__(self, "cells", c)

    @classmethod
    def empty(cls, d: int, h: float) -> VoxelSet:
        return cls(d, h, np.zeros((0, d), dtype=np.int64))

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], h: float) -> VoxelSet:
        """Cells whose centers lie in the closed box [lo, hi]."""
        return cls.from_predicate(lo, hi, h, lambda p: np.ones(len(p), dtype=bool))

    @classmethod
    def from_predicate(
        cls,
        lo: Sequence[float],
        hi: Sequence[float],
        h: float,
        pred: Callable[[np.ndarray], np.ndarray],
        chunk: int = 1 << 20,
    ) -> VoxelSet:
        """Cells with centers in the box [lo, hi] where ``pred(centers)`` holds."""
        lo_i = np.ceil(np.asarray(lo, dtype=float) / h - 0.5 - 1e-9).astype(np.int64)
        hi_i = np.floor(np.asarray(hi, dtype=float) / h - 0.5 + 1e-9).astype(np.int64)
        d = len(lo_i)
        shape = np.maximum(hi_i - lo_i + 1, 0)
        total = int(np.prod(shape.astype(float)))
        if total > 64 * MAX_CELLS:
            raise GridGuardError(f"bounding box holds {total} cells")
        kept, n_kept = [], 0
        for start in range(0, total, chunk):
            flat = np.arange(start, min(start + chunk, total), dtype=np.int64)
            idx = np.stack(np.unravel_index(flat, tuple(shape)), axis=1) + lo_i if d else flat[:, None]
            mask = pred((idx + 0.5) * h)
            kept.append(idx[mask])
            n_kept += kept[-1].shape[0]
            if n_kept > MAX_CELLS:
                raise GridGuardError(f"more than {MAX_CELLS} cells selected")
        cells = np.concatenate(kept) if kept else np.zeros((0, d), dtype=np.int64)
        return cls(d, h, cells)

    @property
    def count(self) -> int:
        return int(self.cells.shape[0])

    def measure(self) -> float:
        return self.count * self.h**self.d

    def is_empty(self) -> bool:
        return self.count == 0

    def centers(self) -> np.ndarray:
        return (self.cells + 0.5) * self.h

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.cells.min(axis=0) * self.h, (self.cells.max(axis=0) + 1) * self.h

    def project(self, keep: Sequence[int] | CoordSubspace) -> VoxelSet:
        """Exact image under the coordinate projection onto ``keep``."""
        idx = list(keep.indices) if isinstance(keep, CoordSubspace) else list(keep)
        return VoxelSet(len(idx), self.h, self.cells[:, idx])

    def _check_compatible(self, other: VoxelSet) -> None:
        if self.d != other.d or self.h != other.h:
            raise ValueError("voxel sets live on different grids")

    def union(self, other: VoxelSet) -> VoxelSet:
        self._check_compatible(other)
        return VoxelSet(self.d, self.h, np.concatenate([self.cells, other.cells]))

    def contains_cells(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.int64).reshape(-1, self.d)
        if self.count == 0 or q.shape[0] == 0:
            return np.zeros(q.shape[0], dtype=bool)
        lo = self.cells.min(axis=0)
        span = self.cells.max(axis=0) - lo + 1
        inside = np.all((q >= lo) & (q < lo + span), axis=1)
        out = np.zeros(q.shape[0], dtype=bool)
        mine = _encode(self.cells, lo, span)
        if mine is None:
            have = {tuple(r) for r in self.cells.tolist()}
            return np.array([tuple(r) in have for r in q.tolist()], dtype=bool)
        theirs = _encode(q[inside], lo, span)
        pos = np.searchsorted(mine, theirs)
        pos = np.minimum(pos, len(mine) - 1)
        out[inside] = mine[pos] == theirs
        return out

    def contains_points(self, p: np.ndarray) -> np.ndarray:
        return self.contains_cells(np.floor(np.asarray(p, dtype=float) / self.h).astype(np.int64))

    def intersection(self, other: VoxelSet) -> VoxelSet:
        self._check_compatible(other)
        return VoxelSet(self.d, self.h, self.cells[other.contains_cells(self.cells)])

    def difference(self, other: VoxelSet) -> VoxelSet:
        self._check_compatible(other)
        return VoxelSet(self.d, self.h, self.cells[~other.contains_cells(self.cells)])

    def subset(self, mask: np.ndarray) -> VoxelSet:
        return VoxelSet(self.d, self.h, self.cells[np.asarray(mask, dtype=bool)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VoxelSet):
            return NotImplemented
        return self.d == other.d and self.h == other.h and np.array_equal(self.cells, other.cells)

    def __hash__(self) -> int:
        return hash((self.d, self.h, self.cells.tobytes()))

    # serialization

    def to_dict(self) -> dict[str, Any]:
        return {"d": self.d, "h": self.h, "cells": self.cells.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> VoxelSet:
        return cls(int(data["d"]), float(data["h"]), np.array(data["cells"], dtype=np.int64).reshape(-1, int(data["d"])))

    @classmethod
    def from_json(cls, text: str) -> VoxelSet:
        return cls.from_dict(json.loads(text))

    def to_vxl(self) -> bytes:
        """Header then runs along the last axis: (d start coordinates, run length) as int64."""
        runs = _runs(self.cells)
        head = VXL_MAGIC + struct.pack("<Idqq", self.d, self.h, self.count, len(runs))
        return head + runs.astype("<i8").tobytes()

    @classmethod
    def from_vxl(cls, blob: bytes) -> VoxelSet:
        if blob[:4] != VXL_MAGIC:
            raise ValueError("not a VXL1 stream")
        d, h, count, nruns = struct.unpack_from("<Idqq", blob, 4)
        off = 4 + struct.calcsize("<Idqq")
        runs = np.frombuffer(blob, dtype="<i8", count=nruns * (d + 1), offset=off).reshape(nruns, d + 1)
        cells = _expand_runs(runs, d)
        if cells.shape[0] != count:
            raise ValueError(f"VXL1 stream holds {cells.shape[0]} cells, header says {count}")
        return cls(d, h, cells)


def _runs(cells: np.ndarray) -> np.ndarray:
    d = cells.shape[1]
    if cells.shape[0] == 0:
        return np.zeros((0, d + 1), dtype=np.int64)
    brk = np.ones(cells.shape[0], dtype=bool)
    brk[1:] = np.any(cells[1:, :-1] != cells[:-1, :-1], axis=1) | (cells[1:, -1] != cells[:-1, -1] + 1)
    starts = np.flatnonzero(brk)
    lengths = np.diff(np.append(starts, cells.shape[0]))
    return np.concatenate([cells[starts], lengths[:, None]], axis=1)


def _expand_runs(runs: np.ndarray, d: int) -> np.ndarray:
    if runs.shape[0] == 0:
        return np.zeros((0, d), dtype=np.int64)
    lengths = runs[:, -1]
    rep = np.repeat(runs[:, :d], lengths, axis=0)
    offs = np.arange(rep.shape[0]) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    rep[:, -1] += offs
    return rep


def save_vxl(S: VoxelSet, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(S.to_vxl())


def load_voxels(path: str) -> VoxelSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] == VXL_MAGIC:
        return VoxelSet.from_vxl(blob)
    return VoxelSet.from_json(blob.decode())


# ------------------------------------------------------------ pushforwards


def rasterize(points: np.ndarray, h: float) -> np.ndarray:
    return np.floor(np.asarray(points, dtype=float) / h).astype(np.int64)


def pushforward_vertical(S: VoxelSet, m: NamedMap | Callable[[np.ndarray], np.ndarray], h_out: float | None = None) -> VoxelSet:
    """Image of S under a map on H^n, rasterized from cell centers onto a grid of size h_out."""
    h_out = S.h if h_out is None else h_out
    func = m.func if isinstance(m, NamedMap) else m
    if S.is_empty():
        dim = m.target_dim if isinstance(m, NamedMap) else func(np.zeros((1, S.d))).shape[1]
        return VoxelSet.empty(dim, h_out)
    img = func(S.centers())
    return VoxelSet(img.shape[1], h_out, rasterize(img, h_out))


@dataclass
class FiberGroups:
    """Grouping of the cells of S by the image cell of a map."""

    ids: np.ndarray
    counts: np.ndarray
    fiber_dim: int
    h: float

    @property
    def n_groups(self) -> int:
        return int(self.counts.shape[0])

    def fiber_measure(self) -> np.ndarray:
        """Per-cell measure of the fiber through that cell."""
        return self.counts[self.ids] * self.h**self.fiber_dim

    def group_measures(self) -> np.ndarray:
        return self.counts * self.h**self.fiber_dim


def fiber_groups(S: VoxelSet, m: NamedMap) -> FiberGroups:
    if S.is_empty():
        return FiberGroups(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), m.fiber_dim, S.h)
    img = rasterize(m.func(S.centers()), S.h)
    _, inv = _row_ids(img)
    counts = np.bincount(inv)
    return FiberGroups(inv, counts, m.fiber_dim, S.h)


def fiber_trace(
    S: VoxelSet,
    z: np.ndarray,
    kind: str,
    config: ProjectionConfig | None = None,
    scaffold: ArithmeticScaffold | None = None,
    j: int | None = None,
) -> VoxelSet:
    """{s : flow(s, z) in S} on the parameter grid; kind is T, T_star, T_j, T_tilde or T_tilde_star."""
    n = (S.d - 1) // 2
    z = np.asarray(z, dtype=float)
    if kind == "T":
        coords, flow = list(range(n)), flow_X
    elif kind == "T_star":
        coords, flow = list(range(n)), flow_Y
    elif kind == "T_j":
        assert config is not None and j is not None
        coords = list(config.K[j].indices)
        flow = flow_X if config.is_x_side(j) else flow_Y
    elif kind in ("T_tilde", "T_tilde_star"):
        assert scaffold is not None and j is not None
        coords = list(scaffold.order[: scaffold.k_tilde[j]])
        flow = flow_X if kind == "T_tilde" else flow_Y
    else:
        raise ValueError(f"unknown fiber kind {kind!r}")
    k = len(coords)
    if S.is_empty() or k == 0:
        return VoxelSet.empty(k, S.h)
    off = 0 if flow is flow_X else n
    lo, hi = S.bounds()
    base = z[[off + c for c in coords]]
    p_lo = np.floor((lo[[off + c for c in coords]] - base) / S.h) * S.h
    p_hi = np.ceil((hi[[off + c for c in coords]] - base) / S.h) * S.h

    def pred(params: np.ndarray) -> np.ndarray:
        # parameter cells are aligned to z, so shift centers back onto the lattice through z
        s = np.zeros((params.shape[0], n))
        s[:, coords] = params - 0.5 * S.h
        return S.contains_points(flow(s, z))

    cells = VoxelSet.from_predicate(p_lo, p_hi, S.h, pred)
    return cells


# ---------------------------------------------------------------- Finner


def finner_assumption(d: int, images: Sequence[CoordSubspace], p: ExponentVector) -> list[Fraction]:
    """Per-coordinate sums of 1/p_j over the images containing e_i."""
    if len(images) != len(p.inv_p):
        raise ValueError("one exponent per projection required")
    return [sum((a for W, a in zip(images, p.inv_p) if W.contains(i)), Fraction(0)) for i in range(d)]


@dataclass
class FinnerResult:
    ratio: float
    count: int
    image_counts: list[int]
    holds: bool


def finner_check(S: VoxelSet, images: Sequence[CoordSubspace], p: ExponentVector) -> FinnerResult:
    """|S| / prod |l_j S|^{1/p_j} for coordinate projections; the cell size cancels."""
    for i, total in enumerate(finner_assumption(S.d, images, p)):
        if total != 1:
            raise FinnerAssumptionError(i, total)
    if S.is_empty():
        return FinnerResult(0.0, 0, [0] * len(images), True)
    counts = [S.project(W).count for W in images]
    log_r = math.log(S.count) - sum(float(a) * math.log(c) for a, c in zip(p.inv_p, counts))
    # exact integer comparison |S|^q <= prod c_j^{q/p_j}
    q = p.q
    lhs = S.count**q
    rhs = 1
    for a, c in zip(p.inv_p, counts):
        rhs *= c ** int(a * q)
    return FinnerResult(math.exp(log_r), S.count, counts, lhs <= rhs)


def exhaustive_finner(k: int, d: int, images: Sequence[CoordSubspace], p: ExponentVector) -> tuple[float, VoxelSet]:
    """Max ratio over all subsets of the k^d grid."""
    grid = np.stack(np.unravel_index(np.arange(k**d), (k,) * d), axis=1)
    if grid.shape[0] > 20:
        raise GridGuardError("exhaustive enumeration limited to 20 cells")
    best, arg = -1.0, VoxelSet.empty(d, 1.0)
    for mask in range(1 << grid.shape[0]):
        sel = [(mask >> b) & 1 for b in range(grid.shape[0])]
        S = VoxelSet(d, 1.0, grid[np.array(sel, dtype=bool)])
        r = finner_check(S, images, p).ratio
        if r > best + 1e-12:
            best, arg = r, S
    return best, arg


@dataclass
class GenFinnerResult:
    ratio: float
    raw_ratio: float
    refined: VoxelSet
    betas: list[float]
    assumption_sums: list[Fraction]
    assumption_holds: bool
    nested: bool


def gen_finner_assumption(d: int, images: Sequence[CoordSubspace], k: int, p: ExponentVector) -> list[Fraction]:
    out = []
    for i in range(d):
        tot = Fraction(0)
        for j, (W, a) in enumerate(zip(images, p.inv_p)):
            in_kernel = not W.contains(i)
            if (j < k and in_kernel) or (j >= k and not in_kernel):
                tot += a
        out.append(tot)
    return out


def kernels_nested(images: Sequence[CoordSubspace]) -> bool:
    kernels = sorted((W.complement() for W in images), key=lambda K: K.dim)
    return all(a <= b for a, b in zip(kernels, kernels[1:]))


def gen_ratio(count: float, images_counts: Sequence[float], k: int, p: ExponentVector) -> float:
    """|w| / [prod_{j<=k}(|w|/|l_j w|)^{1/p_j} prod_{j>k}|l_j w|^{1/p_j}] in log space."""
    lr = math.log(count)
    for j, (c, a) in enumerate(zip(images_counts, p.inv_p)):
        lr -= float(a) * (math.log(count / c) if j < k else math.log(c))
    return math.exp(lr)


def gen_finner_check(
    S: VoxelSet,
    images: Sequence[CoordSubspace],
    k: int,
    p: ExponentVector,
    eps: float,
    c: float | None = None,
    strict: bool = True,
) -> GenFinnerResult:
    """Check nesting and regularity, refine the set, and evaluate the generalized Finner ratio."""
    if S.is_empty():
        raise ValueError("empty set")
    sums = gen_finner_assumption(S.d, images, k, p)
    holds = all(s == 1 for s in sums)
    nested = kernels_nested(images[:k])
    if strict and not nested:
        raise NestingError("kernels of the first k projections are not nested")
    if strict and not holds:
        i = next(i for i, s in enumerate(sums) if s != 1)
        raise FinnerAssumptionError(i, sums[i])
    h = S.h
    meas = S.measure()
    betas = []
    for j in range(k):
        img = S.project(images[j])
        fib_dim = S.d - images[j].dim
        avg = meas / img.measure()
        betas.append(avg)
        _, inv = _row_ids(S.cells[:, list(images[j].indices)])
        mx = np.bincount(inv).max() * h**fib_dim
        if strict and mx > avg / eps * (1 + 1e-12):
            raise RegularityError(j, mx / avg, eps)
    c = 1.0 / (2 * max(k, 1)) if c is None else c
    # refine from the smallest kernel upward
    order = sorted(range(k), key=lambda j: images[j].complement().dim)
    w = S
    for j in order:
        cols = list(images[j].indices)
        _, inv = _row_ids(w.cells[:, cols])
        fib = np.bincount(inv)[inv] * h ** (S.d - len(cols))
        w = w.subset(fib >= c * betas[j])
        if w.is_empty():
            raise ValueError(f"refinement annihilated the set at projection {j + 1}")
    raw = gen_ratio(meas, [S.project(W).measure() for W in images], k, p)
    ratio = gen_ratio(w.measure(), [w.project(W).measure() for W in images], k, p)
    return GenFinnerResult(ratio, raw, w, betas, sums, holds, nested)


# ---------------------------------------------------------------- BoxUnion


@dataclass(frozen=True, eq=False)
class BoxUnion:
    """Union of grid-aligned boxes [lo*h, hi*h) stored as integer corners; measures are exact cell counts."""

    h: float
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=np.int64)
        hi = np.asarray(self.hi, dtype=np.int64)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise ValueError("corner arrays must be (K, d)")
        keep = np.all(hi > lo, axis=1)
        object.__setattr__(self, "lo", lo[keep])
        object.__setattr__(self, "hi", hi[keep])

    @classmethod
    def from_boxes(cls, boxes: Iterable[tuple[Sequence[Any], Sequence[Any]]], h: float, min_cells: int = 4) -> BoxUnion:
        """Snap real boxes to the grid; every side must span at least ``min_cells`` cells."""
        los, his = [], []
        for lo, hi in boxes:
            a = [round(Fraction(v) / Fraction(h)) for v in lo]
            b = [round(Fraction(v) / Fraction(h)) for v in hi]
            for x, y, u, v in zip(lo, hi, a, b):
                if Fraction(y) - Fraction(x) < min_cells * Fraction(h):
                    raise ResolutionError(f"side [{x}, {y}] spans fewer than {min_cells} cells at h={h}")
            los.append(a)
            his.append(b)
        return cls(h, np.array(los, dtype=np.int64), np.array(his, dtype=np.int64))

    @property
    def d(self) -> int:
        return int(self.lo.shape[1])

    @property
    def n_boxes(self) -> int:
        return int(self.lo.shape[0])

    def cell_count(self) -> int:
        return _union_count(self.lo.tolist(), self.hi.tolist())

    def measure(self) -> float:
        return self.cell_count() * self.h**self.d

    def project(self, keep: Sequence[int] | CoordSubspace) -> BoxUnion:
        idx = list(keep.indices) if isinstance(keep, CoordSubspace) else list(keep)
        return BoxUnion(self.h, self.lo[:, idx], self.hi[:, idx])

    def fiber_stats(self, keep: Sequence[int] | CoordSubspace) -> FiberStats:
        """Image size and fiber extremes for the coordinate projection onto ``keep``."""
        idx = list(keep.indices) if isinstance(keep, CoordSubspace) else list(keep)
        drop = [c for c in range(self.d) if c not in idx]
        pieces: list[tuple[int, int]] = []
        _fiber_pieces(self.lo.tolist(), self.hi.tolist(), idx, drop, pieces)
        img = sum(w for w, _ in pieces)
        return FiberStats(
            image_cells=img,
            total_cells=sum(w * f for w, f in pieces),
            max_fiber_cells=max(f for _, f in pieces),
            min_fiber_cells=min(f for _, f in pieces),
            fiber_dim=len(drop),
            image_dim=len(idx),
            h=self.h,
        )

    def fiber_at(self, point: Sequence[float], keep: Sequence[int]) -> float:
        """Measure of the fiber through a point of the image."""
        keep = list(keep)
        drop = [c for c in range(self.d) if c not in keep]
        q = np.floor(np.asarray(point, dtype=float) / self.h).astype(np.int64)
        hit = np.all((self.lo[:, keep] <= q) & (q < self.hi[:, keep]), axis=1)
        cells = _union_count(self.lo[hit][:, drop].tolist(), self.hi[hit][:, drop].tolist())
        return cells * self.h ** len(drop)


@dataclass
class FiberStats:
    image_cells: int
    total_cells: int
    max_fiber_cells: int
    min_fiber_cells: int
    fiber_dim: int
    image_dim: int
    h: float

    @property
    def image_measure(self) -> float:
        return self.image_cells * self.h**self.image_dim

    @property
    def measure(self) -> float:
        return self.total_cells * self.h ** (self.image_dim + self.fiber_dim)

    @property
    def average_fiber(self) -> float:
        return self.measure / self.image_measure

    @property
    def max_fiber(self) -> float:
        return self.max_fiber_cells * self.h**self.fiber_dim

    @property
    def min_fiber(self) -> float:
        return self.min_fiber_cells * self.h**self.fiber_dim


def _max_depth(lo: list[int], hi: list[int]) -> int:
    ev = sorted([(a, 1) for a in lo] + [(b, -1) for b in hi])
    depth = best = 0
    for _, e in ev:
        depth += e
        best = max(best, depth)
    return best


def _best_axis(lo: list[list[int]], hi: list[list[int]], axes: Sequence[int]) -> tuple[int, int]:
    best = None
    for a in axes:
        dep = _max_depth([r[a] for r in lo], [r[a] for r in hi])
        if best is None or dep < best[1]:
            best = (a, dep)
    assert best is not None
    return best


def _slabs(lo: list[list[int]], hi: list[list[int]], a: int) -> Iterable[tuple[int, list[int]]]:
    cuts = sorted({r[a] for r in lo} | {r[a] for r in hi})
    for x0, x1 in zip(cuts, cuts[1:]):
        active = [i for i in range(len(lo)) if lo[i][a] <= x0 and hi[i][a] >= x1]
        if active:
            yield x1 - x0, active


def _union_count(lo: list[list[int]], hi: list[list[int]]) -> int:
    """Exact cell count of a union of integer boxes by recursive slab sweeps."""
    K = len(lo)
    if K == 0:
        return 0
    d = len(lo[0])
    if d == 0:
        return 1
    if K == 1:
        return math.prod(b - a for a, b in zip(lo[0], hi[0]))
    a, depth = _best_axis(lo, hi, range(d))
    if depth == 1:
        return sum(math.prod(b - x for x, b in zip(l, u)) for l, u in zip(lo, hi))
    rest = [c for c in range(d) if c != a]
    total = 0
    for w, active in _slabs(lo, hi, a):
        total += w * _union_count([[lo[i][c] for c in rest] for i in active], [[hi[i][c] for c in rest] for i in active])
    return total


def _fiber_pieces(lo: list[list[int]], hi: list[list[int]], keep: list[int], drop: list[int], out: list[tuple[int, int]]) -> None:
    """Append (image cells, fiber cells) pieces on which the fiber size is constant."""
    if not lo:
        return
    if len(lo) == 1 or not keep:
        fib = _union_count([[r[c] for c in drop] for r in lo], [[r[c] for c in drop] for r in hi])
        if len(lo) == 1:
            w = math.prod(hi[0][c] - lo[0][c] for c in keep)
        else:
            w = 1
        out.append((w, fib))
        return
    a, depth = _best_axis(lo, hi, keep)
    rest = [c for c in keep if c != a]
    if depth == 1:
        for i in range(len(lo)):
            _fiber_pieces([lo[i]], [hi[i]], keep, drop, out)
        return
    for w, active in _slabs(lo, hi, a):
        sub: list[tuple[int, int]] = []
        _fiber_pieces([lo[i] for i in active], [hi[i] for i in active], rest, drop, sub)
        out.extend((w * x, f) for x, f in sub)


def voxelize_box_union(B: BoxUnion) -> VoxelSet:
    """Materialize a (small) box union cell by cell."""
    parts = []
    for lo, hi in zip(B.lo, B.hi):
        grids = np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij")
        parts.append(np.stack([g.ravel() for g in grids], axis=1))
    if not parts:
        return VoxelSet.empty(B.d, B.h)
    return VoxelSet(B.d, B.h, np.concatenate(parts))


__all__ = [
    "BoxUnion",
    "FiberGroups",
    "FiberStats",
    "FinnerAssumptionError",
    "FinnerResult",
    "GenFinnerResult",
    "GridGuardError",
    "NestingError",
    "RegularityError",
    "ResolutionError",
    "VoxelSet",
    "exhaustive_finner",
    "fiber_groups",
    "fiber_trace",
    "finner_check",
    "gen_finner_check",
    "gen_ratio",
    "kernels_nested",
    "load_voxels",
    "named_map",
    "pushforward_vertical",
    "rasterize",
    "save_vxl",
    "voxelize_box_union",
]
