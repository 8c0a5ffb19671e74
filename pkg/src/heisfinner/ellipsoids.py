"""Adapted ellipsoids, balanced convex cores and the determinant-integral certificate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .lattice import CoordSubspace, MaximalPartition
from .voxels import VoxelSet


class AdaptedFrameError(ValueError):
    pass


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """{center + frame @ (radii * u) : |u| < 1}; frame columns are the principal axes."""

    center: np.ndarray
    frame: np.ndarray
    radii: np.ndarray

    def __post_init__(self) -> None:
        F = np.asarray(self.frame, dtype=float)
        r = np.asarray(self.radii, dtype=float)
        if np.any(r <= 0):
            raise ValueError("radii must be positive")
        if not np.allclose(F.T @ F, np.eye(F.shape[0]), atol=1e-10):
            raise ValueError("frame is not orthonormal")
        object.__setattr__(self, "frame", F)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @classmethod
    def axis_aligned(cls, center: Sequence[float], radii: Sequence[float]) -> Ellipsoid:
        return cls(np.asarray(center, dtype=float), np.eye(len(radii)), np.asarray(radii, dtype=float))

    @property
    def d(self) -> int:
        return int(self.radii.shape[0])

    def volume(self) -> float:
        return unit_ball_volume(self.d) * float(np.prod(self.radii))

    def contains(self, p: np.ndarray, slack: float = 1e-12) -> np.ndarray:
        u = (np.asarray(p, dtype=float) - self.center) @ self.frame / self.radii
        return np.sum(u * u, axis=-1) <= 1 + slack

    def is_adapted(self, partition: MaximalPartition) -> bool:
        """Every principal axis lies in a single block and each block is spanned by its axes."""
        seen = [0] * len(partition.blocks)
        for col in self.frame.T:
            support = np.flatnonzero(np.abs(col) > 1e-12)
            owners = {partition.block_of(int(i)) for i in support}
            if len(owners) != 1:
                return False
            seen[owners.pop()] += 1
        return all(s == b.dim for s, b in zip(seen, partition.blocks))

    def projected_volume(self, keep: CoordSubspace | Sequence[int]) -> float:
        """Volume of the coordinate projection; valid for frames adapted to a partition refining ``keep``."""
        idx = list(keep.indices) if isinstance(keep, CoordSubspace) else list(keep)
        if not idx:
            return 1.0
        rows = self.frame[idx]
        cols = [c for c in range(self.d) if np.any(np.abs(rows[:, c]) > 1e-12)]
        if len(cols) != len(idx) or np.any(np.abs(np.delete(self.frame, cols, axis=1)[idx]) > 1e-12):
            raise AdaptedFrameError("projection does not split along the principal axes")
        return unit_ball_volume(len(idx)) * float(np.prod(self.radii[cols]))


def block_frame(partition: MaximalPartition, rotations: dict[int, np.ndarray] | None = None) -> np.ndarray:
    """Identity frame, optionally rotated inside blocks by the given orthogonal matrices."""
    n = partition.blocks[0].n
    F = np.eye(n)
    for a, R in (rotations or {}).items():
        idx = list(partition.blocks[a].indices)
        R = np.asarray(R, dtype=float)
        if R.shape != (len(idx), len(idx)) or not np.allclose(R.T @ R, np.eye(len(idx))):
            raise AdaptedFrameError(f"rotation for block {a} must be orthogonal of size {len(idx)}")
        F[np.ix_(idx, idx)] = R
    return F


def mvee_diagonal(points: np.ndarray, center: np.ndarray, tol: float = 1e-7, max_iter: int = 100000) -> np.ndarray:
    """Radii of the smallest axis-aligned ellipsoid about ``center`` containing ``points``.

    Maximizes sum log a_i subject to sum_i a_i d_ki^2 <= 1 through the multiplicative design update.
    """
    D2 = (np.asarray(points, dtype=float) - center) ** 2
    K, d = D2.shape
    w = np.full(K, 1.0 / K)
    for _ in range(max_iter):
        a = 1.0 / (d * (w @ D2))
        g = D2 @ a
        if g.max() <= 1 + tol:
            break
        w = w * g
        w /= w.sum()
    a = 1.0 / (d * (w @ D2))
    a /= max(float((D2 @ a).max()), 1.0)
    return 1.0 / np.sqrt(a)


def _corner_points(S: VoxelSet) -> np.ndarray:
    d = S.d
    offs = np.stack(np.unravel_index(np.arange(2**d), (2,) * d), axis=1)
    corners = (S.cells[:, None, :] + offs[None]).reshape(-1, d)
    corners = np.unique(corners, axis=0)
    if d >= 2 and corners.shape[0] > d + 1:
        try:
            corners = corners[ConvexHull(corners).vertices]
        except QhullError:
            pass
    return corners * S.h


@dataclass
class BalancedCore:
    """Centered box found by the greedy dyadic dichotomy."""

    half_widths: np.ndarray
    eta: float
    c_threshold: float
    c_achieved: float
    retained: float
    shrinks: int

    def volume(self) -> float:
        return float(np.prod(2 * self.half_widths))

    def projected_volume(self, k: int) -> float:
        return float(np.prod(2 * self.half_widths[:k]))


def _in_box(p: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.all(np.abs(p) <= a, axis=1)


def balanced_core(S: VoxelSet, eta: float | None = None, c_threshold: float = 1 / 16) -> BalancedCore:
    """Shrink a centered box by halving axes while some half-box would swallow almost all of S inside it."""
    d = S.d
    eta = 1.0 / (2 * d) if eta is None else eta
    pts = S.centers()
    w = S.h**d
    total = S.measure()
    a = np.max(np.abs(pts), axis=0) + S.h / 2
    shrinks = 0
    while True:
        inside = _in_box(pts, a)
        vol = float(np.prod(2 * a))
        scale = (total / vol) ** eta * total
        margins = []
        for i in range(d):
            b = a.copy()
            b[i] /= 2
            lost = np.count_nonzero(inside & ~_in_box(pts, b)) * w
            margins.append(lost / scale)
        i = int(np.argmin(margins))
        if margins[i] >= c_threshold or a[i] / 2 < S.h / 2:
            retained = np.count_nonzero(inside) * w / total
            return BalancedCore(a, eta, c_threshold, float(min(margins)), retained, shrinks)
        a[i] /= 2
        shrinks += 1


@dataclass
class DetCertificate:
    k: int
    mc_value: float
    mc_stderr: float
    bound: float
    n_samples: int
    seed: int

    @property
    def c_measured(self) -> float:
        return (self.mc_value - 3 * self.mc_stderr) / self.bound

    @property
    def holds(self) -> bool:
        return self.c_measured > 0


def det_integral_mc(S: VoxelSet, k: int, n_samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of the integral over S^k of |det| of the leading k x k block, with its stderr."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, S.count, size=(n_samples, k))
    u = (S.cells[idx] + rng.random((n_samples, k, S.d))) * S.h
    dets = np.abs(np.linalg.det(u[:, :, :k]))
    scale = S.measure() ** k
    return float(dets.mean() * scale), float(dets.std(ddof=1) / math.sqrt(n_samples) * scale)


def det_certificate(S: VoxelSet, k: int, core: BalancedCore, n_samples: int = 100_000, seed: int = 0) -> DetCertificate:
    if not 1 <= k <= S.d:
        raise ValueError("need 1 <= k <= d")
    val, err = det_integral_mc(S, k, n_samples, seed)
    E = S.measure()
    bound = ((E / core.volume()) ** core.eta * E) ** k * core.projected_volume(k)
    return DetCertificate(k, val, err, bound, n_samples, seed)


@dataclass
class Approximation:
    ellipsoid: Ellipsoid
    kappa: float
    contains_all: bool
    convex_like: bool
    block_ratios: dict[str, float] = field(default_factory=dict)
    core: BalancedCore | None = None
    certificate: DetCertificate | None = None


def ellipsoid_approximation(
    S: VoxelSet,
    partition: MaximalPartition | None = None,
    k: int | None = None,
    n_samples: int = 100_000,
    seed: int = 0,
) -> Approximation:
    """Outer axis-aligned ellipsoid with its volume ratio; sets far from convex also get a balanced core."""
    if S.is_empty():
        raise ValueError("empty set")
    d = S.d
    partition = partition or MaximalPartition((CoordSubspace.full(d),))
    pts = _corner_points(S)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = (lo + hi) / 2
    radii = mvee_diagonal(pts, center)
    E = Ellipsoid.axis_aligned(center, radii)
    if not E.is_adapted(partition):
        raise AdaptedFrameError("diagonal ellipsoid failed the adaptedness check")
    kappa = E.volume() / S.measure()
    contains = bool(np.all(E.contains(pts, slack=1e-9)))
    hull_vol = ConvexHull(pts).volume if d >= 2 else float(hi[0] - lo[0])
    convex_like = S.measure() >= 0.8 * hull_vol
    ratios = {}
    for b in partition.blocks:
        ratios[b.label()] = E.projected_volume(b) / S.project(b).measure()
    out = Approximation(E, kappa, contains, convex_like, ratios)
    if not convex_like or k is not None:
        out.core = balanced_core(S)
        out.certificate = det_certificate(S, k or d, out.core, n_samples, seed)
    return out


def convex_fiber_ratio(S: VoxelSet, l_keep: Sequence[int], U: Sequence[int]) -> float:
    """(|l(S)| / |P l(S)|) / (|S| / |P S|) where P removes the coordinates U inside the image of l."""
    l_keep = list(l_keep)
    if not set(U) <= set(l_keep):
        raise ValueError("U must lie in the image of l")
    lS = S.project(l_keep)
    P_in_l = [i for i, c in enumerate(l_keep) if c not in U]
    P_full = [c for c in range(S.d) if c not in U]
    return (lS.measure() / lS.project(P_in_l).measure()) / (S.measure() / S.project(P_full).measure())
