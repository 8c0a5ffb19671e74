"""Heisenberg group arithmetic, vertical projections, exponential flows and the inflation map."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .exponents import ArithmeticScaffold
from .lattice import CoordSubspace, ProjectionConfig


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class HPoint:
    """A point (x, y, t) of the Heisenberg group; entries may be floats or Fractions."""

    x: tuple[Any, ...]
    y: tuple[Any, ...]
    t: Any

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "y", tuple(self.y))
        if len(self.x) != len(self.y):
            raise DimensionMismatchError(f"x has {len(self.x)} entries, y has {len(self.y)}")

    @property
    def n(self) -> int:
        return len(self.x)

    @classmethod
    def zero(cls, n: int) -> HPoint:
        return cls((0,) * n, (0,) * n, 0)

    @classmethod
    def from_array(cls, a: Sequence[Any]) -> HPoint:
        if (len(a) - 1) % 2:
            raise DimensionMismatchError(f"length {len(a)} is not 2n+1")
        n = (len(a) - 1) // 2
        return cls(tuple(a[:n]), tuple(a[n : 2 * n]), a[2 * n])

    def as_array(self) -> np.ndarray:
        return np.array([*self.x, *self.y, self.t], dtype=float)

    def as_tuple(self) -> tuple[Any, ...]:
        return (*self.x, *self.y, self.t)


def _dot(a: Sequence[Any], b: Sequence[Any]) -> Any:
    return sum((ai * bi for ai, bi in zip(a, b)), 0)


def group_mul(a: HPoint, b: HPoint) -> HPoint:
    if a.n != b.n:
        raise DimensionMismatchError(f"H^{a.n} times H^{b.n}")
    half = _half(a.t)
    return HPoint(
        tuple(p + q for p, q in zip(a.x, b.x)),
        tuple(p + q for p, q in zip(a.y, b.y)),
        a.t + b.t + half * (_dot(a.x, b.y) - _dot(a.y, b.x)),
    )


def group_inv(a: HPoint) -> HPoint:
    return HPoint(tuple(-v for v in a.x), tuple(-v for v in a.y), -a.t)


def _half(sample: Any) -> Any:
    from fractions import Fraction

    return Fraction(1, 2) if isinstance(sample, Fraction) else 0.5


# ----------------------------------------------------- vectorized point arrays
# Arrays have shape (..., 2n+1) laid out as (x_1..x_n, y_1..y_n, t).


def split(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=float)
    n = (z.shape[-1] - 1) // 2
    return z[..., :n], z[..., n : 2 * n], z[..., 2 * n]


def join(x: np.ndarray, y: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.concatenate([x, y, np.asarray(t)[..., None]], axis=-1)


def mul_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, at = split(a)
    bx, by, bt = split(b)
    return join(ax + bx, ay + by, at + bt + 0.5 * (np.sum(ax * by, -1) - np.sum(ay * bx, -1)))


def inv_arrays(a: np.ndarray) -> np.ndarray:
    return -np.asarray(a, dtype=float)


def vertical_projection(Vx: CoordSubspace, Vy: CoordSubspace, z: np.ndarray) -> np.ndarray:
    """Collapse the horizontal directions outside Vx x Vy; returns (x_V, y_V, t')."""
    x, y, t = split(z)
    kx = np.array([not Vx.contains(i) for i in range(Vx.n)])
    ky = np.array([not Vy.contains(i) for i in range(Vy.n)])
    xp = np.where(kx, x, 0.0)
    yp = np.where(ky, y, 0.0)
    w_inv = join(-xp, -yp, np.zeros_like(t))
    out = mul_arrays(z, w_inv)
    ox, oy, ot = split(out)
    return np.concatenate([ox[..., list(Vx.indices)], oy[..., list(Vy.indices)], ot[..., None]], axis=-1)


def pi_j_vp(config: ProjectionConfig, j: int, z: np.ndarray) -> np.ndarray:
    """Vertical-projection form of the j-th map (0-based j)."""
    _check_j(config, j)
    x, y, t = split(z)
    V, K = config.V[j], config.K[j]
    kk = list(K.indices)
    cross = 0.5 * np.sum(x[..., kk] * y[..., kk], -1)
    if config.is_x_side(j):
        return np.concatenate([x[..., list(V.indices)], y, (t + cross)[..., None]], axis=-1)
    return np.concatenate([x, y[..., list(V.indices)], (t - cross)[..., None]], axis=-1)


def pi_j(config: ProjectionConfig, j: int, z: np.ndarray) -> np.ndarray:
    """Sheared form of the j-th map (0-based j), using the full pairing x.y."""
    _check_j(config, j)
    x, y, t = split(z)
    V = list(config.V[j].indices)
    xy = 0.5 * np.sum(x * y, -1)
    if config.is_x_side(j):
        return np.concatenate([x[..., V], y, (t + xy)[..., None]], axis=-1)
    return np.concatenate([x, y[..., V], (t - xy)[..., None]], axis=-1)


def _check_j(config: ProjectionConfig, j: int) -> None:
    if not 0 <= j < config.M:
        raise IndexError(f"projection index {j + 1} outside 1..{config.M}")


def pi(z: np.ndarray) -> np.ndarray:
    x, y, t = split(z)
    return np.concatenate([y, (t + 0.5 * np.sum(x * y, -1))[..., None]], axis=-1)


def pi_star(z: np.ndarray) -> np.ndarray:
    x, y, t = split(z)
    return np.concatenate([x, (t - 0.5 * np.sum(x * y, -1))[..., None]], axis=-1)


def _check_level(s: ArithmeticScaffold, j: int) -> None:
    if s.degenerate or not 0 <= j < s.m_tilde:
        raise IndexError(f"auxiliary level {j + 1} outside 1..{s.m_tilde}")


def pi_tilde(s: ArithmeticScaffold, j: int, z: np.ndarray) -> np.ndarray:
    """Auxiliary map of level j (0-based) keeping the surviving x-coordinates."""
    _check_level(s, j)
    x, y, t = split(z)
    keep = list(s.kept(j).indices)
    return np.concatenate([x[..., keep], y, (t + 0.5 * np.sum(x * y, -1))[..., None]], axis=-1)


def pi_tilde_star(s: ArithmeticScaffold, j: int, z: np.ndarray) -> np.ndarray:
    _check_level(s, j)
    x, y, t = split(z)
    keep = list(s.kept(j).indices)
    return np.concatenate([x, y[..., keep], (t - 0.5 * np.sum(x * y, -1))[..., None]], axis=-1)


def flow_X(s: np.ndarray, z: np.ndarray) -> np.ndarray:
    x, y, t = split(z)
    s = np.asarray(s, dtype=float)
    return join(x + s, np.broadcast_to(y, (x + s).shape), t - 0.5 * np.sum(s * y, -1))


def flow_Y(s: np.ndarray, z: np.ndarray) -> np.ndarray:
    x, y, t = split(z)
    s = np.asarray(s, dtype=float)
    return join(np.broadcast_to(x, (y + s).shape), y + s, t + 0.5 * np.sum(x * s, -1))


def compound_flow(steps: Sequence[np.ndarray], z: np.ndarray, start: str = "X") -> np.ndarray:
    """Apply alternating X/Y flows, beginning with ``start``."""
    flows: dict[str, Callable] = {"X": flow_X, "Y": flow_Y}
    other = {"X": "Y", "Y": "X"}
    kind = start
    for s in steps:
        z = flows[kind](s, z)
        kind = other[kind]
    return z


@dataclass(frozen=True)
class NamedMap:
    """A map on H^n arrays together with its target dimension."""

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    target_dim: int
    fiber_dim: int


def named_map(
    kind: str,
    config: ProjectionConfig | None = None,
    j: int | None = None,
    scaffold: ArithmeticScaffold | None = None,
    n: int | None = None,
) -> NamedMap:
    """kind is one of pi_j, pi_j_vp, pi, pi_star, pi_tilde, pi_tilde_star (j 0-based)."""
    if config is not None:
        n = config.n
    elif scaffold is not None:
        n = scaffold.n
    if n is None:
        raise ValueError("dimension unknown")
    if kind in ("pi_j", "pi_j_vp"):
        assert config is not None and j is not None
        V = config.V[j]
        f = pi_j if kind == "pi_j" else pi_j_vp
        return NamedMap(f"{kind}[{j + 1}]", lambda z: f(config, j, z), n + V.dim + 1, n - V.dim)
    if kind == "pi":
        return NamedMap("pi", pi, n + 1, n)
    if kind == "pi_star":
        return NamedMap("pi_star", pi_star, n + 1, n)
    if kind in ("pi_tilde", "pi_tilde_star"):
        assert scaffold is not None and j is not None
        k = scaffold.k_tilde[j]
        f = pi_tilde if kind == "pi_tilde" else pi_tilde_star
        return NamedMap(f"{kind}[{j + 1}]", lambda z: f(scaffold, j, z), 2 * n + 1 - k, k)
    raise ValueError(f"unknown map kind {kind!r}")


# ----------------------------------------------------------- inflation map


@dataclass(frozen=True)
class InflationLayout:
    """Index bookkeeping for the inflation map of a scaffold."""

    n: int
    order: tuple[int, ...]
    k_tilde: tuple[int, ...]
    q_dbl_tilde: tuple[int, ...]

    @classmethod
    def of(cls, s: ArithmeticScaffold) -> InflationLayout:
        if s.degenerate:
            raise ValueError("degenerate scaffold has no inflation map")
        return cls(s.n, s.order, s.k_tilde, s.q_dbl_tilde)

    @property
    def m_tilde(self) -> int:
        return len(self.k_tilde)

    @property
    def N(self) -> int:
        return sum(k * q for k, q in zip(self.k_tilde, self.q_dbl_tilde))

    def slots(self) -> list[tuple[int, int]]:
        """(j, l) pairs, 0-based, level-major."""
        return [(j, l) for j in range(self.m_tilde) for l in range(self.q_dbl_tilde[j])]

    def points(self) -> list[tuple[int, int, int]]:
        return [(j, l, a) for j, l in self.slots() for a in range(self.k_tilde[j])]

    @property
    def param_dim(self) -> int:
        return (2 * self.n + 1) * self.N


def xi_to_s(layout: InflationLayout, xi: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Embed the free coordinates into full base points s^{j,l}.

    Level j keeps its own first k~_j coordinates (in sorted order) and inherits the rest from
    the first base point of level j+1; the top level is entirely free.
    """
    slots = layout.slots()
    idx = {jl: i for i, jl in enumerate(slots)}
    out: list[np.ndarray | None] = [None] * len(slots)
    order = np.array(layout.order)
    for j in reversed(range(layout.m_tilde)):
        k = layout.k_tilde[j]
        for l in range(layout.q_dbl_tilde[j]):
            v = np.asarray(xi[idx[(j, l)]], dtype=float)
            if v.shape != (k,):
                raise ValueError(f"xi[{j + 1},{l + 1}] must have {k} entries")
            s = np.zeros(layout.n)
            s[order[:k]] = v
            if j + 1 < layout.m_tilde:
                parent = out[idx[(j + 1, 0)]]
                s[order[k:]] = parent[order[k:]]
            out[idx[(j, l)]] = s
    return out  # type: ignore[return-value]


def unpack_params(layout: InflationLayout, params: np.ndarray) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    params = np.asarray(params, dtype=float)
    if params.shape != (layout.param_dim,):
        raise ValueError(f"expected {layout.param_dim} parameters, got {params.shape}")
    xi, pos = [], 0
    for j, _ in layout.slots():
        k = layout.k_tilde[j]
        xi.append(params[pos : pos + k])
        pos += k
    n, N = layout.n, layout.N
    u = params[pos : pos + n * N].reshape(N, n)
    v = params[pos + n * N :].reshape(N, n)
    return xi, u, v


def pack_params(xi: Sequence[np.ndarray], u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ravel(a) for a in xi]), np.ravel(u), np.ravel(v)])


def inflation_map(layout: InflationLayout, z0: np.ndarray, params: np.ndarray) -> np.ndarray:
    """The N points e^{v.X} e^{u.Y} e^{s.X} z0, one per (j, l, a)."""
    xi, u, v = unpack_params(layout, params)
    s = xi_to_s(layout, xi)
    slot_of = {jl: i for i, jl in enumerate(layout.slots())}
    base = np.stack([s[slot_of[(j, l)]] for j, l, _ in layout.points()])
    z = flow_X(base, np.broadcast_to(np.asarray(z0, dtype=float), (layout.N, 2 * layout.n + 1)))
    z = flow_Y(u, z)
    return flow_X(v, z)


def jacobian_product(layout: InflationLayout, params: np.ndarray) -> float:
    """Product over (j, l) of det of the leading k~_j coordinates of the u^{j,l,a}."""
    _, u, _ = unpack_params(layout, params)
    order = np.array(layout.order)
    out, row = 1.0, 0
    for j, _ in layout.slots():
        k = layout.k_tilde[j]
        block = u[row : row + k][:, order[:k]].T
        out *= float(np.linalg.det(block))
        row += k
    return out


def fd_jacobian(layout: InflationLayout, z0: np.ndarray, params: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of the flattened inflation map."""
    params = np.asarray(params, dtype=float)
    D = layout.param_dim
    J = np.empty((D, D))
    for c in range(D):
        e = np.zeros(D)
        e[c] = step
        fp = inflation_map(layout, z0, params + e).ravel()
        fm = inflation_map(layout, z0, params - e).ravel()
        J[:, c] = (fp - fm) / (2 * step)
    return J


@dataclass
class JacobianCheck:
    trials: int
    passed: int
    near_singular: int
    max_rel_err: float
    rel_errors: list[float]


def jacobian_check(
    layout: InflationLayout, trials: int = 100, seed: int = 0, tol: float = 1e-6, step: float = 1e-5
) -> JacobianCheck:
    rng = np.random.default_rng(seed)
    errs, passed, singular = [], 0, 0
    for _ in range(trials):
        z0 = rng.uniform(-1, 1, 2 * layout.n + 1)
        params = rng.uniform(-1, 1, layout.param_dim)
        analytic = abs(jacobian_product(layout, params))
        numeric = abs(float(np.linalg.det(fd_jacobian(layout, z0, params, step))))
        if analytic < 1e-8:
            singular += 1
            errs.append(float("nan"))
            continue
        err = abs(numeric - analytic) / analytic
        errs.append(err)
        passed += err <= tol
    finite = [e for e in errs if e == e]
    return JacobianCheck(trials, passed, singular, max(finite) if finite else 0.0, errs)
