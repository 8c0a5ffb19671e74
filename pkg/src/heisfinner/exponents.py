"""Exact-rational exponent conditions, the exponent polytope and the integer scaffold."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Sequence

from .lattice import (
    CoordSubspace,
    FlatProjection,
    ProjectionConfig,
    enumerate_coordinate_subspaces,
    restrict_config,
)


class ScaffoldError(ValueError):
    pass


def _frac(v: Any) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(v).limit_denominator(10**9)
    return Fraction(v)


@dataclass(frozen=True)
class ExponentVector:
    """Reciprocal exponents 1/p_j; an entry 0 encodes p_j = infinity."""

    inv_p: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        vals = tuple(_frac(v) for v in self.inv_p)
        for j, v in enumerate(vals):
            if not 0 <= v <= 1:
                raise ValueError(f"1/p_{j + 1} = {v} outside [0,1]")
        object.__setattr__(self, "inv_p", vals)

    @classmethod
    def of(cls, *values: Any) -> ExponentVector:
        return cls(tuple(_frac(v) for v in values))

    @classmethod
    def from_p(cls, p: Sequence[Any]) -> ExponentVector:
        return cls(tuple(Fraction(0) if v == math.inf else 1 / _frac(v) for v in p))

    def __len__(self) -> int:
        return len(self.inv_p)

    def __getitem__(self, j: int) -> Fraction:
        return self.inv_p[j]

    @property
    def q(self) -> int:
        """Common denominator."""
        return math.lcm(*(v.denominator for v in self.inv_p)) if self.inv_p else 1

    @property
    def q_j(self) -> tuple[int, ...]:
        q = self.q
        return tuple(int(v * q) for v in self.inv_p)

    @property
    def p(self) -> tuple[Fraction | float, ...]:
        return tuple(math.inf if v == 0 else 1 / v for v in self.inv_p)

    def is_finite(self) -> bool:
        return all(v > 0 for v in self.inv_p)


# ---------------------------------------------------------------- conditions


def scaling_row(config: ProjectionConfig) -> tuple[list[Fraction], Fraction]:
    """Coefficients a and constant b of the scaling equality a.(1/p) = b."""
    n = config.n
    a = [
        Fraction(v.dim + 1) if config.is_x_side(j) else Fraction(n + 1)
        for j, v in enumerate(config.V)
    ]
    return a, Fraction(n + 1)


def dimension_row(config: ProjectionConfig, W: CoordSubspace) -> tuple[list[Fraction], Fraction]:
    """Coefficients of the dimension inequality dim W + 1 <= a.(1/p) at W."""
    a = [
        Fraction((v & W).dim + 1) if config.is_x_side(j) else Fraction(W.dim + 1)
        for j, v in enumerate(config.V)
    ]
    return a, Fraction(W.dim + 1)


def balance_row(config: ProjectionConfig, W: CoordSubspace) -> list[Fraction]:
    """Coefficients c with c.(1/p) = 0 expressing the x/y kernel balance at W."""
    return [
        Fraction((k & W).dim) * (1 if config.is_x_side(j) else -1)
        for j, k in enumerate(config.K)
    ]


def _dot(a: Sequence[Fraction], x: Sequence[Fraction]) -> Fraction:
    return sum((ai * xi for ai, xi in zip(a, x)), Fraction(0))


@dataclass
class ConditionReport:
    A_holds: bool
    A_row: tuple[Fraction, Fraction]
    B_rows: dict[CoordSubspace, tuple[Fraction, Fraction]]
    C_rows: dict[CoordSubspace, tuple[Fraction, Fraction]]
    critical: list[CoordSubspace]
    B_holds: bool
    C_holds: bool
    B_twiddle_holds: bool

    @property
    def all_hold(self) -> bool:
        return self.A_holds and self.B_holds and self.C_holds

    @property
    def proper_critical(self) -> list[CoordSubspace]:
        return [W for W in self.critical if not W.is_zero() and not W.is_full()]

    def failures(self) -> list[str]:
        out = []
        if not self.A_holds:
            out.append(f"scaling: {self.A_row[0]} != {self.A_row[1]}")
        out += [f"dimension at {W.label()}: {l} > {r}" for W, (l, r) in self.B_rows.items() if l > r]
        out += [f"balance at {W.label()}: {l} != {r}" for W, (l, r) in self.C_rows.items() if l != r]
        return out


def check_conditions(config: ProjectionConfig, p: ExponentVector) -> ConditionReport:
    if len(p) != config.M:
        raise ValueError(f"expected {config.M} exponents, got {len(p)}")
    x = p.inv_p
    a, b = scaling_row(config)
    A_row = (b, _dot(a, x))
    B_rows: dict[CoordSubspace, tuple[Fraction, Fraction]] = {}
    C_rows: dict[CoordSubspace, tuple[Fraction, Fraction]] = {}
    for W in enumerate_coordinate_subspaces(config.n):
        coeff, lhs = dimension_row(config, W)
        B_rows[W] = (lhs, _dot(coeff, x))
        xs = sum((Fraction((k & W).dim) * x[j] for j, k in enumerate(config.K) if config.is_x_side(j)), Fraction(0))
        ys = sum((Fraction((k & W).dim) * x[j] for j, k in enumerate(config.K) if not config.is_x_side(j)), Fraction(0))
        C_rows[W] = (xs, ys)
    critical = [W for W, (l, r) in B_rows.items() if l == r]
    B_holds = all(l <= r for l, r in B_rows.values())
    B_twiddle = all(l < r for W, (l, r) in B_rows.items() if not W.is_full())
    return ConditionReport(
        A_holds=A_row[0] == A_row[1],
        A_row=A_row,
        B_rows=B_rows,
        C_rows=C_rows,
        critical=critical,
        B_holds=B_holds,
        C_holds=all(l == r for l, r in C_rows.values()),
        B_twiddle_holds=B_twiddle,
    )


def is_critical(config: ProjectionConfig, p: ExponentVector, W: CoordSubspace) -> bool:
    coeff, lhs = dimension_row(config, W)
    return lhs == _dot(coeff, p.inv_p)


# ------------------------------------------------------------ exact algebra


def rref(rows: Sequence[Sequence[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form over the rationals; returns nonzero rows and pivot columns."""
    A = [list(r) for r in rows]
    if not A:
        return [], []
    ncols = len(A[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = 1 / A[r][c]
        A[r] = [v * inv for v in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [vi - f * vr for vi, vr in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    return A[:r], pivots


def solve_square(A: Sequence[Sequence[Fraction]], b: Sequence[Fraction]) -> Optional[list[Fraction]]:
    """Unique solution of a square system, or None when singular."""
    d = len(A)
    R, piv = rref([list(row) + [bi] for row, bi in zip(A, b)])
    if len(piv) != d or (piv and piv[-1] == d):
        return None
    return [R[i][d] for i in range(d)]


def _dedupe(rows: list[tuple[tuple[Fraction, ...], Fraction]]) -> list[tuple[tuple[Fraction, ...], Fraction]]:
    seen: dict[tuple, None] = {}
    for r in rows:
        seen.setdefault(r, None)
    return list(seen)


# ----------------------------------------------------------------- polytope


@dataclass
class Polytope:
    M: int
    equalities: list[tuple[tuple[Fraction, ...], Fraction]]
    inequalities: list[tuple[tuple[Fraction, ...], Fraction]]
    vertices: list[ExponentVector]
    affine_dim: int

    @property
    def is_empty(self) -> bool:
        return not self.vertices

    @property
    def is_singleton(self) -> bool:
        return len(self.vertices) == 1

    def contains(self, p: ExponentVector) -> bool:
        x = p.inv_p
        return all(_dot(a, x) == b for a, b in self.equalities) and all(
            _dot(a, x) <= b for a, b in self.inequalities
        )


def solve_polytope(config: ProjectionConfig) -> Polytope:
    """Enumerate the vertices of the admissible exponent set exactly."""
    M = config.M
    a, b = scaling_row(config)
    eqs = [(tuple(a), b)]
    ineqs: list[tuple[tuple[Fraction, ...], Fraction]] = []
    for W in enumerate_coordinate_subspaces(config.n):
        c = balance_row(config, W)
        if any(c):
            eqs.append((tuple(c), Fraction(0)))
        if not W.is_full():
            coeff, lhs = dimension_row(config, W)
            ineqs.append((tuple(-v for v in coeff), -lhs))
    eqs = _dedupe(eqs)
    ineqs = _dedupe(ineqs)
    for j in range(M):
        e = tuple(Fraction(int(i == j)) for i in range(M))
        ineqs.append((tuple(-v for v in e), Fraction(0)))
        ineqs.append((e, Fraction(1)))

    # x = x0 + Z t parametrizes the equality set.
    R, piv = rref([list(r) + [c] for r, c in eqs])
    if piv and piv[-1] == M:
        return Polytope(M, eqs, ineqs, [], -1)
    free = [c for c in range(M) if c not in piv]
    x0 = [Fraction(0)] * M
    for i, c in enumerate(piv):
        x0[c] = R[i][M]
    Z: list[list[Fraction]] = []
    for f in free:
        z = [Fraction(0)] * M
        z[f] = Fraction(1)
        for i, c in enumerate(piv):
            z[c] = -R[i][f]
        Z.append(z)
    d = len(free)

    G = [[_dot(a_, z) for z in Z] for a_, _ in ineqs]
    h = [b_ - _dot(a_, x0) for a_, b_ in ineqs]

    def point(t: Sequence[Fraction]) -> tuple[Fraction, ...]:
        return tuple(x0[c] + sum((t[k] * Z[k][c] for k in range(d)), Fraction(0)) for c in range(M))

    def feasible(t: Sequence[Fraction]) -> bool:
        return all(_dot(g, t) <= hi for g, hi in zip(G, h))

    found: dict[tuple[Fraction, ...], None] = {}
    if d == 0:
        if feasible([]):
            found[point([])] = None
    else:
        rows = _dedupe([(tuple(g), hi) for g, hi in zip(G, h) if any(g)])
        for subset in itertools.combinations(rows, d):
            t = solve_square([r[0] for r in subset], [r[1] for r in subset])
            if t is not None and feasible(t):
                found.setdefault(point(t), None)
    vertices = [ExponentVector(v) for v in sorted(found)]
    return Polytope(M, eqs, ineqs, vertices, d)


# ----------------------------------------------------------------- scaffold


@dataclass
class ArithmeticScaffold:
    n: int
    m: int
    q: int
    q_j: tuple[int, ...]
    N: int
    Q: tuple[int, ...]
    degenerate: bool
    order: tuple[int, ...] = ()
    m_tilde: int = 0
    k_tilde: tuple[int, ...] = ()
    q_tilde: tuple[int, ...] = ()
    q_dbl_tilde: tuple[int, ...] = ()
    q_prime: int = 0
    weights_x: tuple[Fraction, ...] = ()
    weights_y: tuple[Fraction, ...] = ()
    intermediate_config: Optional[ProjectionConfig] = None
    intermediate_inv_p: Optional[ExponentVector] = None
    identities: dict[str, bool] = field(default_factory=dict)

    def kept(self, j: int) -> CoordSubspace:
        """0-based j: coordinates surviving the auxiliary map of level j."""
        return CoordSubspace.from_indices(self.n, self.order[self.k_tilde[j]:])

    def dropped(self, j: int) -> CoordSubspace:
        return CoordSubspace.from_indices(self.n, self.order[: self.k_tilde[j]])

    @property
    def Q_tilde_tails(self) -> tuple[int, ...]:
        """Tail sums of the doubly reduced integers, one per level."""
        return tuple(sum(self.q_dbl_tilde[j:]) for j in range(self.m_tilde))


def derive_arithmetic(config: ProjectionConfig, p: ExponentVector) -> ArithmeticScaffold:
    if not p.is_finite():
        raise ScaffoldError("all exponents must be finite; drop the p_j = infinity factors first")
    rep = check_conditions(config, p)
    if not rep.all_hold:
        raise ScaffoldError("conditions fail: " + "; ".join(rep.failures()[:5]))
    n, m = config.n, config.m
    q, qs = p.q, p.q_j
    N = sum(qs) - q
    ks = [k.dim for k in config.K]
    Qx = [sum(qs[j] for j in range(m) if config.K[j].contains(i)) for i in range(n)]
    Qy = [sum(qs[j] for j in range(m, config.M) if config.K[j].contains(i)) for i in range(n)]
    for i in range(n):
        if Qx[i] != Qy[i]:
            raise ScaffoldError(f"Q_{i + 1} ill-defined: x-side {Qx[i]} vs y-side {Qy[i]}")
    wx = tuple(Fraction(v, q) for v in Qx)
    identities = {
        "N(n+1)=sum_x k_j q_j": N * (n + 1) == sum(ks[j] * qs[j] for j in range(m)),
        "N(n+1)=sum_y k_j q_j": N * (n + 1) == sum(ks[j] * qs[j] for j in range(m, config.M)),
    }
    if N < 0:
        raise ScaffoldError(f"negative N={N}")
    if N == 0:
        return ArithmeticScaffold(n, m, q, qs, N, tuple(Qx), True, weights_x=wx, weights_y=wx, identities=identities)

    order = tuple(sorted(range(n), key=lambda i: (-Qx[i], i)))
    distinct = sorted(set(Qx), reverse=True)
    m_t = len(distinct)
    k_t = tuple(sum(1 for v in Qx if v >= D) for D in distinct)
    q_t = tuple(distinct[j] - distinct[j + 1] for j in range(m_t - 1)) + (distinct[-1],)
    q_tt = q_t[:-1] + (q_t[-1] - N,)
    q_prime = distinct[0] + sum(qs[m:]) - N

    V = [CoordSubspace.from_indices(n, order[k:]) for k in k_t] + list(config.V[m:])
    inter_cfg = ProjectionConfig(n, m_t, tuple(V))
    inter_p = ExponentVector(tuple(Fraction(v, q_prime) for v in q_t + qs[m:]))

    identities.update(
        {
            "N<Q_i<2N": not rep.B_twiddle_holds or all(N < v < 2 * N for v in Qx),
            "sum k~ q~~ = N": sum(k * v for k, v in zip(k_t, q_tt)) == N,
            "q~_j > 0": all(v > 0 for v in q_t),
            "q~~_j >= 1": not rep.B_twiddle_holds or all(v >= 1 for v in q_tt),
        }
    )
    return ArithmeticScaffold(
        n, m, q, qs, N, tuple(Qx), False, order, m_t, k_t, q_t, q_tt, q_prime, wx, wx, inter_cfg, inter_p, identities
    )


def assert_scaffold(s: ArithmeticScaffold) -> None:
    bad = [k for k, ok in s.identities.items() if not ok]
    if bad:
        raise ScaffoldError("scaffold identities fail: " + ", ".join(bad))


# ------------------------------------------------------------------ weights


@dataclass
class WeightTable:
    n: int
    rows: list[tuple[str, list[str], Fraction | float]]
    w_x: tuple[Fraction, ...]
    w_y: tuple[Fraction, ...]

    def weight_row(self) -> tuple[Fraction, ...]:
        """One weight per coordinate pair (X_i, Y_i), equal under the balance condition."""
        return self.w_x

    def to_csv_rows(self) -> list[list[str]]:
        head = ["map"] + [f"X{i + 1}/Y{i + 1}" for i in range(self.n)] + ["p"]
        out = [head]
        for name, cells, p in self.rows:
            out.append([name] + cells + [_fmt(p)])
        out.append(["weight"] + [_wfmt(a, b) for a, b in zip(self.w_x, self.w_y)] + [""])
        return out


def _fmt(v: Fraction | float) -> str:
    return "inf" if v == math.inf else str(v)


def _wfmt(a: Fraction, b: Fraction) -> str:
    return str(a) if a == b else f"{a}|{b}"


def weights(config: ProjectionConfig, p: ExponentVector) -> WeightTable:
    n, m = config.n, config.m
    w_x = tuple(sum((p[j] for j in range(m) if config.K[j].contains(i)), Fraction(0)) for i in range(n))
    w_y = tuple(sum((p[j] for j in range(m, config.M) if config.K[j].contains(i)), Fraction(0)) for i in range(n))
    rows = []
    for j, k in enumerate(config.K):
        letter = "X" if config.is_x_side(j) else "Y"
        cells = [f"{letter}{i + 1}" if k.contains(i) else "" for i in range(n)]
        rows.append((f"pi_{j + 1}", cells, p.p[j]))
    return WeightTable(n, rows, w_x, w_y)


# ----------------------------------------------------------- base cases


class BaseCase(enum.Enum):
    EMPTY = "EMPTY"
    HOLDER_REDUCIBLE = "HOLDER_REDUCIBLE"
    CRITICAL_REDUCTION = "CRITICAL_REDUCTION"
    SINGLETON_BASE_CASE = "SINGLETON_BASE_CASE"
    BOUNDARY_EXTREMES = "BOUNDARY_EXTREMES"


@dataclass
class Classification:
    kind: BaseCase
    polytope: Polytope
    W: Optional[CoordSubspace] = None
    inner: Optional[ProjectionConfig] = None
    flat: Optional[list[FlatProjection]] = None
    notes: list[str] = field(default_factory=list)


def flat_coordinate_sums(
    flat: Sequence[FlatProjection], p: ExponentVector
) -> tuple[list[Fraction], list[Fraction]]:
    """Per-coordinate sums of 1/p_j over flat factors whose image contains that coordinate."""
    d = flat[0].x_part.n
    sx = [sum((p[j] for j, f in enumerate(flat) if f.x_part.contains(i)), Fraction(0)) for i in range(d)]
    sy = [sum((p[j] for j, f in enumerate(flat) if f.y_part.contains(i)), Fraction(0)) for i in range(d)]
    return sx, sy


def check_flat_conditions(flat: Sequence[FlatProjection], p: ExponentVector) -> bool:
    """Finner hypothesis on the flat factor: every coordinate is covered with total weight 1."""
    if not flat or flat[0].x_part.n == 0:
        return True
    sx, sy = flat_coordinate_sums(flat, p)
    return all(v == 1 for v in sx + sy)


def classify_base_case(config: ProjectionConfig, p: Optional[ExponentVector] = None) -> Classification:
    """Sort a configuration into the base cases of the induction, optionally at a fixed p."""
    P = solve_polytope(config)
    points = [p] if p is not None else P.vertices
    if not points or (p is not None and not P.contains(p)):
        return Classification(BaseCase.EMPTY, P)
    zero = CoordSubspace.zero(config.n)
    if all(is_critical(config, v, zero) for v in points):
        for v in points:
            for j, V in enumerate(config.V):
                if v[j] != 0 and V.dim != config.n:
                    raise AssertionError(f"{{0}} critical but factor {j + 1} is finite and proper")
        return Classification(BaseCase.HOLDER_REDUCIBLE, P)
    proper = [
        W
        for W in enumerate_coordinate_subspaces(config.n)
        if not W.is_zero() and not W.is_full() and all(is_critical(config, v, W) for v in points)
    ]
    if proper:
        W = min(proper, key=lambda w: (w.dim, w.mask))
        inner, flat = restrict_config(config, W)
        c = Classification(BaseCase.CRITICAL_REDUCTION, P, W, inner, flat)
        if not all(check_flat_conditions(flat, v) for v in points):
            c.notes.append("flat factor fails the per-coordinate Finner hypothesis")
        return c
    if P.is_singleton:
        rep = check_conditions(config, P.vertices[0])
        if not rep.B_twiddle_holds:
            raise AssertionError("singleton polytope without strict dimension inequalities")
        return Classification(BaseCase.SINGLETON_BASE_CASE, P)
    c = Classification(BaseCase.BOUNDARY_EXTREMES, P)
    for v in points:
        rep = check_conditions(config, v)
        if rep.critical != [CoordSubspace.full(config.n)]:
            c.notes.append(f"vertex {_fmt_vec(v)} reduces through its own critical subspaces")
        elif not any(x in (0, 1) for x in v.inv_p):
            raise AssertionError(f"non-singleton vertex {_fmt_vec(v)} has no extreme entry")
    return c


def _fmt_vec(v: ExponentVector) -> str:
    return "(" + ",".join(str(x) for x in v.inv_p) + ")"
