"""Paraballs: analytic projection measures, scaling laws, voxelization, covering and overlap."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterator, Sequence

import numpy as np
from scipy.special import beta as beta_fn

from .ellipsoids import AdaptedFrameError, unit_ball_volume
from .exponents import ArithmeticScaffold, ExponentVector
from .heisenberg import group_inv, group_mul, HPoint, inv_arrays, mul_arrays
from .lattice import CoordSubspace, MaximalPartition, ProjectionConfig, maximal_partition
from .voxels import MAX_CELLS, GridGuardError, VoxelSet


class DualityError(ValueError):
    pass


Number = Any  # float or Fraction


def _prod(vals: Sequence[Number]) -> Number:
    out: Number = 1
    for v in vals:
        out = out * v
    return out


def _frame_blocks(frame: np.ndarray, partition: MaximalPartition) -> list[int] | None:
    """Block index of each frame axis, or None when some axis straddles blocks."""
    owners = []
    for col in frame.T:
        blocks = {partition.block_of(int(i)) for i in np.flatnonzero(np.abs(col) > 1e-12)}
        if len(blocks) != 1:
            return None
        owners.append(blocks.pop())
    counts = [owners.count(a) for a in range(len(partition.blocks))]
    if counts != [b.dim for b in partition.blocks]:
        return None
    return owners


@dataclass(frozen=True, eq=False)
class Paraball:
    """z . {(s, u, tau): s in C, u in C_*, |tau| < rho} with C, C_* sharing principal axes."""

    z: HPoint
    frame: np.ndarray
    r: tuple[Number, ...]
    rho: Number
    partition: MaximalPartition

    def __post_init__(self) -> None:
        if any(v <= 0 for v in self.r) or self.rho <= 0:
            raise ValueError("radii and height must be positive")
        F = np.asarray(self.frame, dtype=float)
        if F.shape != (self.n, self.n) or not np.allclose(F.T @ F, np.eye(self.n), atol=1e-10):
            raise ValueError("frame must be an orthonormal n x n matrix")
        object.__setattr__(self, "frame", F)
        object.__setattr__(self, "r", tuple(_exact(v) for v in self.r))
        object.__setattr__(self, "rho", _exact(self.rho))
        if _frame_blocks(F, self.partition) is None:
            raise AdaptedFrameError("frame is not adapted to the partition")

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def r_star(self) -> tuple[Number, ...]:
        return tuple(self.rho / v for v in self.r)

    def axis_blocks(self) -> list[int]:
        owners = _frame_blocks(self.frame, self.partition)
        assert owners is not None
        return owners

    def to_dict(self) -> dict[str, Any]:
        return {
            "z": [float(v) for v in self.z.as_tuple()],
            "frame_blocks": [[i + 1 for i in b.indices] for b in self.partition.blocks],
            "frame": self.frame.tolist(),
            "r": [_num(v) for v in self.r],
            "rho": _num(self.rho),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Paraball:
        r = [_parse_num(v) for v in data["r"]]
        n = len(r)
        blocks = tuple(CoordSubspace.from_indices(n, [i - 1 for i in b]) for b in data["frame_blocks"])
        frame = np.asarray(data.get("frame", np.eye(n)), dtype=float)
        z = HPoint.from_array([_parse_num(v) for v in data["z"]])
        return cls(z, frame, tuple(r), _parse_num(data["rho"]), MaximalPartition(blocks))


def _exact(v: Number) -> Number:
    """Integers become Fractions so the duality r r* = rho stays exact."""
    return Fraction(v) if isinstance(v, (int, np.integer)) and not isinstance(v, bool) else v


def _num(v: Number) -> Any:
    if isinstance(v, Fraction):
        return {"num": v.numerator, "den": v.denominator, "provenance": "exact"}
    return float(v)


def _parse_num(v: Any) -> Number:
    if isinstance(v, dict):
        return Fraction(v["num"], v["den"])
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return float(v)


def make_paraball(
    z: HPoint | Sequence[Number],
    frame: np.ndarray | None,
    r: Sequence[Number],
    rho: Number,
    projections: Sequence[CoordSubspace] | MaximalPartition,
) -> Paraball:
    """Build a paraball adapted to the maximal partition of the given projection images."""
    n = len(r)
    if not isinstance(z, HPoint):
        z = HPoint.from_array(list(z))
    if z.n != n:
        raise ValueError("center and radii dimensions differ")
    part = projections if isinstance(projections, MaximalPartition) else maximal_partition(list(projections))
    frame = np.eye(n) if frame is None else frame
    return Paraball(z, frame, tuple(r), rho, part)


def left_translate(g: HPoint, B: Paraball) -> Paraball:
    return Paraball(group_mul(g, B.z), B.frame, B.r, B.rho, B.partition)


# ------------------------------------------------------------ analytic table


def I1(d: int) -> float:
    """Average of sqrt(1 - |a|^2) over the unit ball of R^d."""
    return 1.0 if d == 0 else d / 2 * float(beta_fn(d / 2, 1.5))


def I2(n: int, k: int) -> float:
    """Average over the unit ball of R^n of the norm of k of the coordinates."""
    if k == 0:
        return 0.0
    if k == n:
        return n / (n + 1)
    return n / (n + 1) * float(beta_fn((k + 1) / 2, (n - k) / 2) / beta_fn(k / 2, (n - k) / 2))


@dataclass
class MeasureEntry:
    """value = const * monomial; the monomial carries the exact radius dependence."""

    const: float
    monomial: Number

    @property
    def value(self) -> float:
        return self.const * float(self.monomial)


@dataclass
class ParaballTable:
    B: MeasureEntry
    pi_j: list[MeasureEntry]
    pi: MeasureEntry
    pi_star: MeasureEntry
    pi_tilde: list[MeasureEntry] = field(default_factory=list)
    pi_tilde_star: list[MeasureEntry] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        def e(m: MeasureEntry) -> dict[str, Any]:
            return {"value": m.value, "const": m.const, "monomial": _num(m.monomial)}

        return {
            "B": e(self.B),
            "pi_j": [e(m) for m in self.pi_j],
            "pi": e(self.pi),
            "pi_star": e(self.pi_star),
            "pi_tilde": [e(m) for m in self.pi_tilde],
            "pi_tilde_star": [e(m) for m in self.pi_tilde_star],
        }


def _entry(B: Paraball, kept_axes: Sequence[int], x_side: bool) -> MeasureEntry:
    """Image of a map that keeps ``kept_axes`` of one horizontal side and all of the other."""
    n = B.n
    k = n - len(kept_axes)
    const = unit_ball_volume(len(kept_axes)) * unit_ball_volume(n) * 2 * (1 + 0.5 * I1(len(kept_axes)) * I2(n, k))
    rs, rss = (B.r, B.r_star) if x_side else (B.r_star, B.r)
    mono = _prod([rs[a] for a in kept_axes]) * _prod(rss) * B.rho
    return MeasureEntry(const, mono)


def _axis_support(B: Paraball) -> list[set[int]]:
    return [set(np.flatnonzero(np.abs(col) > 1e-12).tolist()) for col in B.frame.T]


def _axes_in(B: Paraball, V: CoordSubspace) -> list[int]:
    return [a for a, sup in enumerate(_axis_support(B)) if all(V.contains(i) for i in sup)]


def _check_adapted(B: Paraball, subspaces: Sequence[CoordSubspace]) -> None:
    for V in subspaces:
        for a, sup in enumerate(_axis_support(B)):
            inside = {V.contains(i) for i in sup}
            if len(inside) != 1:
                raise AdaptedFrameError(f"frame axis {a + 1} straddles {V.label()}")


def paraball_measures(B: Paraball, config: ProjectionConfig, scaffold: ArithmeticScaffold | None = None) -> ParaballTable:
    """Exact-shape measures of B and of its images; constants use the unit-ball volume convention."""
    _check_adapted(B, config.V)
    n = B.n
    full = _prod(B.r) * _prod(B.r_star) * B.rho
    table = ParaballTable(
        B=MeasureEntry(unit_ball_volume(n) ** 2 * 2, full),
        pi_j=[_entry(B, _axes_in(B, V), config.is_x_side(j)) for j, V in enumerate(config.V)],
        pi=_entry(B, [], True),
        pi_star=_entry(B, [], False),
    )
    if scaffold is not None and not scaffold.degenerate:
        kept = [scaffold.kept(j) for j in range(scaffold.m_tilde)]
        _check_adapted(B, kept)
        table.pi_tilde = [_entry(B, _axes_in(B, K), True) for K in kept]
        table.pi_tilde_star = [_entry(B, _axes_in(B, K), False) for K in kept]
    return table


def scale_paraball(B: Paraball, lam: Sequence[Number], lam_star: Sequence[Number], a: Number) -> Paraball:
    if len(lam) != B.n or len(lam_star) != B.n:
        raise ValueError("one factor per axis")
    for x, y in zip(lam, lam_star):
        if x * y != a:
            raise DualityError(f"lambda * lambda_star = {x * y} != a = {a}")
    return Paraball(B.z, B.frame, tuple(x * r for x, r in zip(lam, B.r)), a * B.rho, B.partition)


@dataclass
class ScalingCheck:
    laws: dict[str, bool]
    quasi_invariant: bool

    @property
    def holds(self) -> bool:
        return all(self.laws.values()) and self.quasi_invariant


def verify_scaling(
    B: Paraball,
    lam: Sequence[Number],
    lam_star: Sequence[Number],
    a: Number,
    config: ProjectionConfig,
    scaffold: ArithmeticScaffold,
    p: ExponentVector,
) -> ScalingCheck:
    """Compare monomial ratios with the closed scaling laws; exact when the inputs are Fractions."""
    Bt = scale_paraball(B, lam, lam_star, a)
    T, Tt = paraball_measures(B, config, scaffold), paraball_measures(Bt, config, scaffold)
    n = B.n
    laws = {"B": Tt.B.monomial / T.B.monomial == a ** (n + 1)}
    for j, V in enumerate(config.V):
        K = [i for i in range(n) if not V.contains(i)]
        fac = _prod([lam_star[i] if config.is_x_side(j) else lam[i] for i in K])
        laws[f"pi[{j + 1}]"] = Tt.pi_j[j].monomial / T.pi_j[j].monomial == fac * a ** (V.dim + 1)
    for j in range(scaffold.m_tilde):
        dropped = scaffold.dropped(j).indices
        e = n - scaffold.k_tilde[j] + 1
        laws[f"pi_tilde[{j + 1}]"] = Tt.pi_tilde[j].monomial / T.pi_tilde[j].monomial == _prod([lam_star[i] for i in dropped]) * a**e
        laws[f"pi_tilde_star[{j + 1}]"] = (
            Tt.pi_tilde_star[j].monomial / T.pi_tilde_star[j].monomial == _prod([lam[i] for i in dropped]) * a**e
        )
    # quasiextremal ratio: compare q-th powers so fractional exponents stay exact
    q = p.q
    lhs = (Tt.B.monomial / T.B.monomial) ** q
    rhs: Number = 1
    for j, inv in enumerate(p.inv_p):
        rhs = rhs * (Tt.pi_j[j].monomial / T.pi_j[j].monomial) ** int(inv * q)
    return ScalingCheck(laws, lhs == rhs)


# ------------------------------------------------------------ voxelization


def _local_coords(B: Paraball, w: np.ndarray) -> np.ndarray:
    z = np.asarray([float(v) for v in B.z.as_tuple()])
    return mul_arrays(inv_arrays(z)[None, :], w)


def contains(B: Paraball, w: np.ndarray) -> np.ndarray:
    n = B.n
    loc = _local_coords(B, np.atleast_2d(w))
    r = np.array([float(v) for v in B.r])
    rs = np.array([float(v) for v in B.r_star])
    s = loc[:, :n] @ B.frame / r
    u = loc[:, n : 2 * n] @ B.frame / rs
    return (np.sum(s * s, 1) < 1) & (np.sum(u * u, 1) < 1) & (np.abs(loc[:, 2 * n]) < float(B.rho))


def bounding_box(B: Paraball) -> tuple[np.ndarray, np.ndarray]:
    n = B.n
    z = np.asarray([float(v) for v in B.z.as_tuple()])
    r = np.array([float(v) for v in B.r])
    rs = np.array([float(v) for v in B.r_star])
    ex = np.sqrt((B.frame**2) @ (r**2))
    ey = np.sqrt((B.frame**2) @ (rs**2))
    x, y = z[:n], z[n : 2 * n]
    et = float(B.rho) + 0.5 * (np.abs(x) @ ey + np.abs(y) @ ex) + 0.5 * float(ex @ ey)
    half = np.concatenate([ex, ey, [et]])
    return z - half, z + half


def voxelize(B: Paraball, h: float) -> VoxelSet:
    lo, hi = bounding_box(B)
    return VoxelSet.from_predicate(lo, hi, h, lambda p: contains(B, p))


# ------------------------------------------------------------ covering


@dataclass
class Covering:
    """Sub-paraballs B(z . D(c_k), delta r, delta r*, delta^2 rho) over grid points c_k of spacing eta."""

    parent: Paraball
    delta: float
    eta: float
    centers: np.ndarray  # normalized coordinates

    @property
    def count(self) -> int:
        return int(self.centers.shape[0])

    def dilate(self, p: np.ndarray) -> np.ndarray:
        """Automorphism carrying the unit paraball frame to the parent's."""
        n = self.parent.n
        r = np.array([float(v) for v in self.parent.r])
        rs = np.array([float(v) for v in self.parent.r_star])
        x = (p[:, :n] * r) @ self.parent.frame.T
        y = (p[:, n : 2 * n] * rs) @ self.parent.frame.T
        return np.column_stack([x, y, p[:, 2 * n] * float(self.parent.rho)])

    def undilate(self, p: np.ndarray) -> np.ndarray:
        n = self.parent.n
        r = np.array([float(v) for v in self.parent.r])
        rs = np.array([float(v) for v in self.parent.r_star])
        x = p[:, :n] @ self.parent.frame / r
        y = p[:, n : 2 * n] @ self.parent.frame / rs
        return np.column_stack([x, y, p[:, 2 * n] / float(self.parent.rho)])

    def member(self, k: int) -> Paraball:
        P = self.parent
        zk = HPoint.from_array(self.dilate(self.centers[k : k + 1])[0].tolist())
        d = self.delta
        return Paraball(group_mul(P.z, zk), P.frame, tuple(d * float(v) for v in P.r), d * d * float(P.rho), P.partition)

    def members(self) -> Iterator[Paraball]:
        for k in range(self.count):
            yield self.member(k)

    def measure_exponents(self, config: ProjectionConfig, scaffold: ArithmeticScaffold | None = None) -> dict[str, list[int]]:
        n = config.n
        out = {"pi_j": [V.dim + n + 2 for V in config.V]}
        if scaffold is not None:
            out["pi_tilde"] = [2 * n - k + 2 for k in scaffold.k_tilde]
        return out

    def audit(self, h: float) -> tuple[int, int]:
        """(uncovered cells, total cells) of the voxelized parent; each cell is tested against its nearest center."""
        S = voxelize(self.parent, h)
        P = self.parent
        z = np.asarray([float(v) for v in P.z.as_tuple()])
        w = S.centers()
        loc = self.undilate(mul_arrays(inv_arrays(z)[None, :], w))
        nearest = np.round(loc / self.eta) * self.eta
        n = P.n
        d = self.delta
        diff = mul_arrays(inv_arrays(nearest), loc)
        ok = (
            (np.sum(diff[:, :n] ** 2, 1) < d * d)
            & (np.sum(diff[:, n : 2 * n] ** 2, 1) < d * d)
            & (np.abs(diff[:, 2 * n]) < d * d)
        )
        # the nearest grid point must itself be one of the stored centers
        key = {tuple(np.round(c / self.eta).astype(np.int64)) for c in self.centers}
        idx = np.round(loc / self.eta).astype(np.int64)
        listed = np.array([tuple(v) in key for v in idx], dtype=bool)
        return int(np.count_nonzero(~(ok & listed))), S.count


def covering_scalings(
    B: Paraball, delta: Number, config: ProjectionConfig, scaffold: ArithmeticScaffold | None = None
) -> dict[str, list[tuple[Number, Number]]]:
    """(measured, predicted) member-to-parent ratios; members are translates of the delta-dilate."""
    d = _exact(delta)
    sub = scale_paraball(B, [d] * B.n, [d] * B.n, d * d)
    T, Ts = paraball_measures(B, config, scaffold), paraball_measures(sub, config, scaffold)
    n = B.n
    out = {"pi_j": [(Ts.pi_j[j].monomial / T.pi_j[j].monomial, d ** (V.dim + n + 2)) for j, V in enumerate(config.V)]}
    if scaffold is not None and T.pi_tilde:
        out["pi_tilde"] = [
            (Ts.pi_tilde[j].monomial / T.pi_tilde[j].monomial, d ** (2 * n - k + 2)) for j, k in enumerate(scaffold.k_tilde)
        ]
        out["pi_tilde_star"] = [
            (Ts.pi_tilde_star[j].monomial / T.pi_tilde_star[j].monomial, d ** (2 * n - k + 2))
            for j, k in enumerate(scaffold.k_tilde)
        ]
    return out


def covering(B: Paraball, delta: float) -> Covering:
    """Grid points of spacing eta = delta^2 / (4(n+1)) in the slightly enlarged normalized unit paraball."""
    if not 0 < delta <= 1:
        raise ValueError("need 0 < delta <= 1")
    n = B.n
    eta = delta * delta / (4 * (n + 1))
    m = int(math.floor((1 + delta) / eta)) + 1
    axis = np.arange(-m, m + 1) * eta
    mt = int(math.floor((1 + delta * delta) / eta)) + 1
    t_axis = np.arange(-mt, mt + 1) * eta
    if (2 * m + 1) ** (2 * n) * (2 * mt + 1) > MAX_CELLS:
        raise GridGuardError(f"covering grid exceeds {MAX_CELLS} points; raise delta")
    grids = np.meshgrid(*([axis] * (2 * n)), t_axis, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    keep = (
        (np.sum(pts[:, :n] ** 2, 1) <= (1 + delta) ** 2)
        & (np.sum(pts[:, n : 2 * n] ** 2, 1) <= (1 + delta) ** 2)
        & (np.abs(pts[:, 2 * n]) <= 1 + delta * delta)
    )
    return Covering(B, delta, eta, pts[keep])


# ------------------------------------------------------------ overlap


def image_contains(B: Paraball, config: ProjectionConfig, j: int, q: np.ndarray) -> np.ndarray:
    """Membership of target points in the sheared image pi_j(B) for an axis-aligned B."""
    if not np.allclose(B.frame, np.eye(B.n)):
        raise AdaptedFrameError("overlap oracle needs an axis-aligned frame")
    n = B.n
    V = list(config.V[j].indices)
    K = [i for i in range(n) if not config.V[j].contains(i)]
    z = np.asarray([float(v) for v in B.z.as_tuple()])
    x0, y0, t0 = z[:n], z[n : 2 * n], z[2 * n]
    r = np.array([float(v) for v in B.r])
    rs = np.array([float(v) for v in B.r_star])
    rho = float(B.rho)
    dv = len(V)
    if config.is_x_side(j):
        a = q[:, :dv] - x0[V]
        other = q[:, dv : dv + n] - y0
        theta = q[:, -1] - (t0 + 0.5 * x0 @ y0) - other @ x0
        ra, rother, rk = r[V], rs, r[K]
        sign = 1.0
    else:
        other = q[:, :n] - x0
        a = q[:, n : n + dv] - y0[V]
        theta = q[:, -1] - (t0 - 0.5 * x0 @ y0) + other @ y0
        ra, rother, rk = rs[V], r, rs[K]
        sign = -1.0
    ua = np.sum((a / ra) ** 2, 1) if dv else np.zeros(q.shape[0])
    uo = np.sum((other / rother) ** 2, 1)
    reach = np.sqrt(np.clip(1 - ua, 0, None)) * np.sqrt(np.sum((rk * other[:, K]) ** 2, 1))
    mid = sign * 0.5 * np.sum(a * other[:, V], 1) if dv else 0.0
    return (ua < 1) & (uo < 1) & (np.abs(theta - mid) < rho + 0.5 * reach)


def _image_bbox(B: Paraball, config: ProjectionConfig, j: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = bounding_box(B)
    n = B.n
    V = list(config.V[j].indices)
    x = slice(0, n)
    y = slice(n, 2 * n)
    ext = np.abs(np.concatenate([lo[x], hi[x]])).max() * np.abs(np.concatenate([lo[y], hi[y]])).max() * n
    if config.is_x_side(j):
        cols = V + list(range(n, 2 * n))
    else:
        cols = list(range(n)) + [n + i for i in V]
    return np.append(lo[cols], lo[-1] - ext), np.append(hi[cols], hi[-1] + ext)


def image_measure_grid(B: Paraball, config: ProjectionConfig, j: int, cells_per_axis: int = 48) -> tuple[float, np.ndarray, np.ndarray]:
    lo, hi = _image_bbox(B, config, j)
    step = (hi - lo) / cells_per_axis
    grids = np.meshgrid(*[lo[i] + (np.arange(cells_per_axis) + 0.5) * step[i] for i in range(len(lo))], indexing="ij")
    q = np.stack([g.ravel() for g in grids], axis=1)
    inside = image_contains(B, config, j, q)
    return float(inside.sum() * np.prod(step)), q[inside], step


def overlap_estimate(B: Paraball, B2: Paraball, config: ProjectionConfig, cells_per_axis: int = 48) -> list[float]:
    """Normalized overlaps |pi_j(B) & pi_j(B2)| / max(|pi_j(B)|, |pi_j(B2)|) for every j."""
    out = []
    for j in range(config.M):
        m1, q1, step1 = image_measure_grid(B, config, j, cells_per_axis)
        m2, q2, step2 = image_measure_grid(B2, config, j, cells_per_axis)
        if m1 == 0 or m2 == 0:
            out.append(0.0)
            continue
        # integrate the indicator of the intersection on the finer of the two grids
        if np.prod(step1) <= np.prod(step2):
            inter = image_contains(B2, config, j, q1).sum() * np.prod(step1)
        else:
            inter = image_contains(B, config, j, q2).sum() * np.prod(step2)
        out.append(float(inter) / max(m1, m2))
    return out


__all__ = [
    "Covering",
    "DualityError",
    "MeasureEntry",
    "Paraball",
    "ParaballTable",
    "ScalingCheck",
    "contains",
    "covering",
    "covering_scalings",
    "group_inv",
    "image_contains",
    "left_translate",
    "make_paraball",
    "overlap_estimate",
    "paraball_measures",
    "scale_paraball",
    "verify_scaling",
    "voxelize",
]
