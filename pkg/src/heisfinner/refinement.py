"""Iterated fiber trimming that produces a refined flow scheme on a voxel set in H^n."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .exponents import ArithmeticScaffold
from .heisenberg import named_map, pi, pi_star
from .lattice import ProjectionConfig
from .voxels import BoxUnion, VoxelSet, _row_ids, fiber_groups, pushforward_vertical, rasterize


class AnnihilationError(RuntimeError):
    pass


@dataclass(frozen=True)
class _Test:
    name: str
    cols: tuple[int, ...]  # parameter columns kept by the projection restricted to a fiber
    fiber_dim: int
    target: float  # alpha or beta; the threshold is c * target


@dataclass
class _Side:
    """Grouping data for one parity: odd levels flow along X, even levels along Y."""

    gid: np.ndarray
    n_groups: int
    params: np.ndarray
    averages: list[_Test]
    pointwise: list[_Test]


def _pair_ids(gid: np.ndarray, sub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if sub.shape[1] == 0:
        return _row_ids(gid[:, None])
    return _row_ids(np.column_stack([gid, sub]))


def _average_ratio(side: _Side, t: _Test, alive: np.ndarray, h: float) -> np.ndarray:
    """Per-group |T| / |L T| among alive cells (nan for empty groups)."""
    g = side.gid[alive]
    first, _ = _pair_ids(g, side.params[alive][:, list(t.cols)])
    distinct = np.bincount(g[first], minlength=side.n_groups).astype(float)
    count = np.bincount(g, minlength=side.n_groups).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return count / distinct * h**t.fiber_dim


def _pointwise_size(side: _Side, t: _Test, alive: np.ndarray, h: float) -> np.ndarray:
    """Per alive cell: measure of its fiber inside the group, over the dropped parameter columns."""
    g = side.gid[alive]
    _, inv = _pair_ids(g, side.params[alive][:, list(t.cols)])
    return np.bincount(inv)[inv] * h**t.fiber_dim


@dataclass
class LevelLog:
    level: int
    parity: str
    passes: int
    cells_before: int
    cells_after: int


@dataclass
class AuditResult:
    average_margin: dict[str, float]
    pointwise_margin: dict[str, float]
    groups_audited: int

    @property
    def holds(self) -> bool:
        vals = list(self.average_margin.values()) + list(self.pointwise_margin.values())
        return all(v >= 1 - 1e-12 for v in vals)


@dataclass
class FlowScheme:
    """Nested sets Omega_1 in ... in Omega_A, the base point z0 and the fiber tree hanging from it."""

    Omega: VoxelSet
    A: int
    c: float
    kappa: float
    halvings: int
    levels: list[np.ndarray]
    logs: list[LevelLog]
    z0_index: int
    alpha: list[float]
    beta: list[float]
    beta_star: list[float]
    sides: dict[str, _Side] = field(repr=False)

    def level_set(self, l: int) -> VoxelSet:
        return self.Omega.subset(self.levels[l - 1])

    @property
    def z0(self) -> np.ndarray:
        return self.Omega.centers()[self.z0_index]

    @staticmethod
    def parity(l: int) -> str:
        return "X" if l % 2 else "Y"

    def group_members(self, l: int, cell: int) -> np.ndarray:
        """Cells of Omega_l in the fiber (pi for odd l, pi_* for even l) through ``cell``."""
        side = self.sides[self.parity(l)]
        return np.flatnonzero(self.levels[l - 1] & (side.gid == side.gid[cell]))

    @property
    def S1(self) -> VoxelSet:
        n = (self.Omega.d - 1) // 2
        members = self.group_members(1, self.z0_index)
        off = self.Omega.cells[members][:, :n] - self.Omega.cells[self.z0_index][:n]
        return VoxelSet(n, self.Omega.h, off)

    def path_counts(self) -> list[np.ndarray]:
        """Number of parameter paths of length l ending at each cell of Omega_l."""
        out = []
        cur = np.zeros(self.Omega.count, dtype=object)
        cur[self.group_members(1, self.z0_index)] = 1
        out.append(cur)
        for l in range(2, self.A + 1):
            side = self.sides[self.parity(l)]
            per_group = np.zeros(side.n_groups, dtype=object)
            np.add.at(per_group, side.gid[cur != 0], cur[cur != 0])
            nxt = np.where(self.levels[l - 1], per_group[side.gid], 0)
            out.append(nxt)
            cur = nxt
        return out

    def S_measure(self, l: int) -> float:
        n = (self.Omega.d - 1) // 2
        return float(sum(self.path_counts()[l - 1])) * self.Omega.h ** (n * l)

    def audit(self) -> AuditResult:
        """Re-verify the average bounds on every reachable fiber and the pointwise bounds on every level."""
        h = self.Omega.h
        avg: dict[str, float] = {}
        pts: dict[str, float] = {}
        reach = np.zeros(self.Omega.count, dtype=bool)
        reach[self.z0_index] = True
        audited = 0
        for l in range(1, self.A + 1):
            side = self.sides[self.parity(l)]
            alive = self.levels[l - 1]
            groups = np.unique(side.gid[reach])
            audited += len(groups)
            for t in side.averages:
                r = _average_ratio(side, t, alive, h)[groups]
                key = f"{t.name}@{self.parity(l)}"
                avg[key] = min(avg.get(key, np.inf), float(np.min(r)) / (self.c * t.target))
            for t in side.pointwise:
                s = _pointwise_size(side, t, alive, h)
                key = f"{t.name}@{l}"
                pts[key] = float(np.min(s)) / (self.c * t.target)
            reach = alive & np.isin(side.gid, groups)
        return AuditResult(avg, pts, audited)

    def to_dict(self) -> dict[str, Any]:
        return {
            "A": self.A,
            "c": self.c,
            "kappa": self.kappa,
            "halvings": self.halvings,
            "h": self.Omega.h,
            "z0": self.z0.tolist(),
            "level_cells": [int(m.sum()) for m in self.levels],
            "passes": [lg.passes for lg in self.logs],
            "S_measure": [self.S_measure(l) for l in range(1, self.A + 1)],
            "alpha": self.alpha,
            "beta": self.beta,
            "beta_star": self.beta_star,
        }


def _build_sides(
    S: VoxelSet, config: ProjectionConfig, scaffold: ArithmeticScaffold, alpha: list[float], beta: list[float], beta_star: list[float]
) -> dict[str, _Side]:
    n = config.n
    centers = S.centers()
    sides = {}
    for parity, proj, cols, js, bt in (
        ("X", pi, slice(0, n), range(config.m), beta),
        ("Y", pi_star, slice(n, 2 * n), range(config.m, config.M), beta_star),
    ):
        _, gid = _row_ids(rasterize(proj(centers), S.h))
        averages = [_Test(f"alpha[{j + 1}]", config.V[j].indices, n - config.V[j].dim, alpha[j]) for j in js]
        pointwise = []
        for j in range(scaffold.m_tilde):
            kept = scaffold.kept(j).indices
            k = scaffold.k_tilde[j]
            averages.append(_Test(f"beta[{j + 1}]", kept, k, bt[j]))
            pointwise.append(_Test(f"beta[{j + 1}]", kept, k, bt[j]))
        sides[parity] = _Side(gid, int(gid.max()) + 1, S.cells[:, cols], averages, pointwise[::-1])
    return sides


def _refine_level(side: _Side, alive: np.ndarray, c: float, h: float, max_passes: int = 1000) -> tuple[np.ndarray, int]:
    alive = alive.copy()
    for passes in range(1, max_passes + 1):
        before = int(alive.sum())
        for t in side.averages:
            if not alive.any():
                return alive, passes
            r = _average_ratio(side, t, alive, h)
            bad = ~(r >= c * t.target)
            alive &= ~bad[side.gid]
        for t in side.pointwise:
            if not alive.any():
                return alive, passes
            idx = np.flatnonzero(alive)
            alive[idx[_pointwise_size(side, t, alive, h) < c * t.target]] = False
        if int(alive.sum()) == before:
            return alive, passes
    raise RuntimeError("fiber trimming did not reach a fixed point")


def refine_flow_scheme(
    Omega: VoxelSet,
    config: ProjectionConfig,
    scaffold: ArithmeticScaffold,
    A: int,
    c: float | None = None,
    max_halvings: int = 40,
) -> FlowScheme:
    """Trim small fibers level by level (pi on odd levels, pi_* on even ones) down to Omega_1."""
    if A < 1:
        raise ValueError("depth A must be at least 1")
    if Omega.is_empty():
        raise ValueError("Omega is empty")
    if Omega.d != 2 * config.n + 1:
        raise ValueError(f"set lives in R^{Omega.d}, expected H^{config.n}")
    h = Omega.h
    meas = Omega.measure()
    alpha = [meas / pushforward_vertical(Omega, named_map("pi_j", config, j)).measure() for j in range(config.M)]
    beta = [float(fiber_groups(Omega, named_map("pi_tilde", scaffold=scaffold, j=j)).group_measures().mean()) for j in range(scaffold.m_tilde)]
    beta_star = [
        float(fiber_groups(Omega, named_map("pi_tilde_star", scaffold=scaffold, j=j)).group_measures().mean())
        for j in range(scaffold.m_tilde)
    ]
    sides = _build_sides(Omega, config, scaffold, alpha, beta, beta_star)
    c = 1.0 / (100 * (config.M + scaffold.m_tilde)) if c is None else c
    for halvings in range(max_halvings + 1):
        alive = np.ones(Omega.count, dtype=bool)
        levels: list[np.ndarray] = []
        logs: list[LevelLog] = []
        kappa = 0.0
        for l in range(A, 0, -1):
            side = sides[FlowScheme.parity(l)]
            before = int(alive.sum())
            alive, passes = _refine_level(side, alive, c, h)
            kappa += passes * c * (len(side.averages) + len(side.pointwise))
            logs.append(LevelLog(l, FlowScheme.parity(l), passes, before, int(alive.sum())))
            if not alive.any():
                break
            levels.append(alive.copy())
        if len(levels) == A:
            levels.reverse()
            lost = Omega.count - int(levels[0].sum())
            if lost > kappa * Omega.count + 1e-9:
                raise AssertionError(f"refinement lost {lost} cells, more than kappa={kappa:.4g} allows")
            z0 = int(np.flatnonzero(levels[0])[0])
            return FlowScheme(Omega, A, c, kappa, halvings, levels, logs[::-1], z0, alpha, beta, beta_star, sides)
        c /= 2
    raise AnnihilationError(f"refinement annihilated Omega for every c down to {c * 2:.3g}")


@dataclass
class BoxRefinement:
    """Odd-level trimming of a flowed box union whose boxes have disjoint pi-images."""

    kept: np.ndarray
    c: float
    alpha: list[float]
    beta: list[float]
    fiber_beta: np.ndarray
    passes: int

    @property
    def pointwise_margin(self) -> list[float]:
        k = self.kept
        return [float(self.fiber_beta[k, j].min()) / (self.c * b) for j, b in enumerate(self.beta)]


def refine_flowed_boxes(B: BoxUnion, config: ProjectionConfig, scaffold: ArithmeticScaffold, c: float | None = None) -> BoxRefinement:
    """Single pi-level trimming for sets given in flowed coordinates (x, y, t + x.y/2).

    In those coordinates every pi-type map is a coordinate projection, so fibers are the x-parts of boxes.
    """
    n = config.n
    yt = list(range(n, 2 * n + 1))
    separate = sum(math.prod(b - a for a, b in zip(lo, hi)) for lo, hi in zip(B.lo[:, yt].tolist(), B.hi[:, yt].tolist()))
    if B.project(yt).cell_count() != separate:
        raise ValueError("boxes must have pairwise disjoint (y, t) ranges")
    h = B.h
    total = B.measure()
    side = np.asarray(B.hi - B.lo, dtype=float) * h
    vol = lambda cols: np.prod(side[:, cols], axis=1) if cols else np.ones(B.n_boxes)  # noqa: E731
    alpha, beta = [], []
    for j in range(config.m):
        alpha.append(total / B.project(list(config.V[j].indices) + yt).measure())
    for j in range(scaffold.m_tilde):
        beta.append(total / B.project(list(scaffold.kept(j).indices) + yt).measure())
    c = 1.0 / (100 * (config.M + scaffold.m_tilde)) if c is None else c
    T = vol(list(range(n)))
    avg_tests = [(T / vol(list(config.V[j].indices)), alpha[j]) for j in range(config.m)]
    avg_tests += [(T / vol(list(scaffold.kept(j).indices)), beta[j]) for j in range(scaffold.m_tilde)]
    fib = np.stack([vol(list(scaffold.order[: scaffold.k_tilde[j]])) for j in range(scaffold.m_tilde)], axis=1)
    kept = np.ones(B.n_boxes, dtype=bool)
    for ratio, target in avg_tests:
        kept &= ratio >= c * target
    for j in reversed(range(scaffold.m_tilde)):
        kept &= fib[:, j] >= c * beta[j]
    if not kept.any():
        raise AnnihilationError("all boxes discarded")
    return BoxRefinement(kept, c, alpha, beta, fib, 1)
