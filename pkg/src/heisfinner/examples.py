"""Built-in projection families and the anisotropic counterexample sets."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .exponents import ExponentVector, derive_arithmetic, solve_polytope, weights
from .lattice import ConfigError, CoordSubspace, ProjectionConfig
from .refinement import AnnihilationError, refine_flowed_boxes
from .voxels import BoxUnion, ResolutionError, VoxelSet, gen_finner_assumption, gen_ratio, kernels_nested


@dataclass
class NamedExample:
    name: str
    config: ProjectionConfig
    expected: Optional[ExponentVector] = None
    expected_weights: Optional[tuple[Fraction, ...]] = None
    source: str = ""
    notes: list[str] = field(default_factory=list)
    flat_images: Optional[list[CoordSubspace]] = None
    flat_p: Optional[ExponentVector] = None


def _F(*v: Any) -> tuple[Fraction, ...]:
    return tuple(Fraction(x) for x in v)


def _ex2_2() -> NamedExample:
    return NamedExample(
        "ex2_2",
        ProjectionConfig.from_indices(2, 2, [[2], [1], []]),
        ExponentVector.of(*_F("3/7", "3/7", "3/7")),
        _F("3/7", "3/7"),
        "direct-sum example in H^2, weight table 1",
    )


def _ex2_3() -> NamedExample:
    return NamedExample(
        "ex2_3",
        ProjectionConfig.from_indices(3, 3, [[1], [2], [3], []]),
        ExponentVector.of(*_F("2/7", "2/7", "2/7", "4/7")),
        _F("4/7", "4/7", "4/7"),
        "isoperimetric-type example in H^3, weight table 2",
    )


def _ex2_4() -> NamedExample:
    return NamedExample(
        "ex2_4",
        ProjectionConfig.from_indices(4, 3, [[2], [3], [4], [1], [2, 3, 4]]),
        ExponentVector.of(*_F("5/31", "5/31", "5/31", "10/31", "15/31")),
        _F("15/31", "10/31", "10/31", "10/31"),
        "anisotropic example in H^4, weight table 3",
    )


def _ex2_5() -> NamedExample:
    return NamedExample(
        "ex2_5",
        ProjectionConfig.from_indices(5, 4, [[3], [2, 4], [3, 4, 5], [1, 2, 5], [1], [2, 3, 4, 5]]),
        ExponentVector.of(*_F("6/43", "6/43", "6/43", "6/43", "12/43", "18/43")),
        _F("18/43", "12/43", "12/43", "12/43", "12/43"),
        "second anisotropic example in H^5, weight table 4",
        [
            "printed p5 = 43/18, p6 = 43/12 violate the balance condition at e1; "
            "the admissible point has p5 = 43/12, p6 = 43/18"
        ],
    )


def holder(n: int, M: int) -> NamedExample:
    """All images are R^n; the first max(1, M // 2) maps act on x."""
    if n < 1 or M < 2:
        raise ConfigError("holder needs n >= 1 and M >= 2")
    m = max(1, M // 2)
    return NamedExample(f"holder({n},{M})", ProjectionConfig.from_indices(n, m, [list(range(1, n + 1))] * M))


def loomis_whitney_flat(n: int) -> NamedExample:
    """x-side maps onto the coordinate hyperplanes plus pi_*, with the Euclidean family for counting checks."""
    if n < 2:
        raise ConfigError("loomis_whitney_flat needs n >= 2")
    subs = [[i for i in range(1, n + 1) if i != j] for j in range(1, n + 1)] + [[]]
    images = [CoordSubspace.from_indices(n, [i for i in range(n) if i != j]) for j in range(n)]
    flat_p = ExponentVector.of(*[Fraction(1, n - 1)] * n)
    return NamedExample(
        f"loomis_whitney_flat({n})",
        ProjectionConfig.from_indices(n, n, subs),
        flat_images=images,
        flat_p=flat_p,
    )


def heis1() -> NamedExample:
    """pi and pi_* on H^1."""
    return NamedExample("heis1", ProjectionConfig.from_indices(1, 1, [[], []]), ExponentVector.of(*_F("2/3", "2/3")))


_BUILTINS: dict[str, Callable[[], NamedExample]] = {
    "ex2_2": _ex2_2,
    "ex2_3": _ex2_3,
    "ex2_4": _ex2_4,
    "ex2_5": _ex2_5,
    "heis1": heis1,
}

BUILTIN_NAMES = tuple(_BUILTINS) + ("holder(n,M)", "loomis_whitney_flat(n)")


def builtin_config(name: str) -> NamedExample:
    name = name.strip().removesuffix(".json")
    if name in _BUILTINS:
        return _BUILTINS[name]()
    m = re.fullmatch(r"holder\((\d+),\s*(\d+)\)", name)
    if m:
        return holder(int(m.group(1)), int(m.group(2)))
    m = re.fullmatch(r"loomis_whitney_flat\((\d+)\)", name)
    if m:
        return loomis_whitney_flat(int(m.group(1)))
    raise KeyError(f"unknown example {name!r}; known: {', '.join(BUILTIN_NAMES)}")


# ------------------------------------------------------------ weight tables


def table_report(name: str) -> dict[str, Any]:
    """Kernel-basis rows and the weight row at the unique admissible exponent."""
    ex = builtin_config(name)
    P = solve_polytope(ex.config)
    if not P.is_singleton:
        raise ValueError(f"{name}: admissible set is not a single point")
    p = P.vertices[0]
    W = weights(ex.config, p)
    return {
        "name": ex.name,
        "rows": [{"map": r[0], "kernel": r[1], "p": r[2]} for r in W.rows],
        "inv_p": list(p.inv_p),
        "weight_x": list(W.w_x),
        "weight_y": list(W.w_y),
        "balanced": W.w_x == W.w_y,
        "matches_expected": ex.expected_weights is None or W.w_x == ex.expected_weights,
        "notes": ex.notes,
    }


# ------------------------------------------------------------ counterexamples


@dataclass
class CounterexampleRecord:
    name: str
    N: int
    h: float
    quantities: dict[str, Any]
    target: float
    direction: str  # "decreasing" or "increasing" in N
    flags: list[str] = field(default_factory=list)
    shape: Any = None


def default_h(N: int) -> float:
    return 2.0 ** -(math.ceil(math.log2(N)) + 10)


def _harmonic(N: int, s: int = 1) -> Fraction:
    return sum((Fraction(1, n**s) for n in range(1, N + 1)), Fraction(0))


def _a1(N: int, h: float) -> CounterexampleRecord:
    """Union over n of x1 in [0, n^2], x' in [0, 1/n]^3, (y, t') in (n, n+1)^5 in flowed coordinates."""
    boxes = [([0, 0, 0, 0] + [n] * 5, [n * n] + [Fraction(1, n)] * 3 + [n + 1] * 5) for n in range(1, N + 1)]
    B = BoxUnion.from_boxes(boxes, h)
    ex = _ex2_4()
    sc = derive_arithmetic(ex.config, ex.expected)
    yt = list(range(4, 9))
    total = B.measure()
    alpha = [total / B.project(list(ex.config.V[j].indices) + yt).measure() for j in range(ex.config.m)]
    beta, fmax, fmin = [], [], []
    for j in range(sc.m_tilde):
        st = B.fiber_stats(list(sc.kept(j).indices) + yt)
        beta.append(st.average_fiber)
        fmax.append(st.max_fiber)
        fmin.append(st.min_fiber)
    target = beta[0] * beta[1] ** 2 / math.prod(alpha)
    q = {
        "measure": total,
        "measure_exact": _harmonic(N),
        "measure_over_logN": total / math.log(N),
        "alpha": alpha,
        "beta": beta,
        "beta_exact": [_harmonic(N) / _harmonic(N, 3), _harmonic(N) / N],
        "max_fiber": fmax,
        "min_fiber": fmin,
        "k_tilde": list(sc.k_tilde),
        "q_dbl_tilde": list(sc.q_dbl_tilde),
    }
    flags = []
    try:
        ref = refine_flowed_boxes(B, ex.config, sc, None)
        q["refined_boxes"] = int(ref.kept.sum())
        q["refined_fraction"] = BoxUnion(h, B.lo[ref.kept], B.hi[ref.kept]).measure() / total
    except AnnihilationError:
        flags.append("refinement removed every box")
    return CounterexampleRecord("A1", N, h, q, target, "decreasing", flags, B)


def _a2(N: int, h: float | None) -> CounterexampleRecord:
    """Parallelogram {(x + y, x / N)}: exact polygon arithmetic plus a cell-count cross-check."""
    verts = [(Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(N + 1), Fraction(1)), (Fraction(N), Fraction(1))]
    area = abs(sum(a[0] * b[1] - b[0] * a[1] for a, b in zip(verts, verts[1:] + verts[:1]))) / 2
    l_meas = max(v[0] for v in verts) - min(v[0] for v in verts)
    lp_meas = max(v[1] for v in verts) - min(v[1] for v in verts)
    ratio = l_meas / (area / lp_meas)
    h = 1.0 / (4 * N) if h is None else h
    if h > 1.0 / (4 * N):
        raise ResolutionError(f"h={h} gives fewer than 4 cells across the parallelogram width 1/N")

    def inside(p: np.ndarray) -> np.ndarray:
        x = p[:, 1] * N
        return (p[:, 1] >= 0) & (p[:, 1] <= 1) & (p[:, 0] - x >= 0) & (p[:, 0] - x <= 1)

    S = VoxelSet.from_predicate([0, 0], [N + 1, 1], h, inside)
    grid_ratio = S.project([0]).measure() / (S.measure() / S.project([1]).measure())
    q = {
        "l_measure": l_meas,
        "area": area,
        "lperp_measure": lp_meas,
        "ratio_exact": ratio,
        "grid_ratio": grid_ratio,
        "grid_l_measure": S.project([0]).measure(),
    }
    return CounterexampleRecord("A2", N, h, q, float(ratio), "increasing", [], S)


def _gen_record(
    name: str, N: int, h: float, boxes: list[tuple[list[Any], list[Any]]], images: list[CoordSubspace], flags: list[str]
) -> CounterexampleRecord:
    B = BoxUnion.from_boxes(boxes, h)
    p = ExponentVector.of(*[Fraction(1, 2)] * 4)
    meas = B.measure()
    img = [B.project(W).measure() for W in images]
    sums = gen_finner_assumption(4, images, 2, p)
    bad = [i + 1 for i, s in enumerate(sums) if s != 1]
    if bad:
        flags.append("per-coordinate assumption fails at " + ", ".join(f"e{i}" for i in bad))
    if not kernels_nested(images[:2]):
        flags.append("kernels of l1, l2 are not nested")
    q = {
        "measure": meas,
        "image_measures": img,
        "fiber_ratios": [meas / img[0], meas / img[1]],
        "assumption_sums": sums,
        "nested": kernels_nested(images[:2]),
        "normalized_ratio": gen_ratio(meas, img, 2, p),
    }
    # squared form |w|^2 / (beta_1 beta_2 |l3 w| |l4 w|)
    return CounterexampleRecord(name, N, h, q, gen_ratio(meas, img, 2, p) ** 2, "increasing", flags, B)


def _sub(*idx: int) -> CoordSubspace:
    return CoordSubspace.from_indices(4, [i - 1 for i in idx])


def _a3(N: int, h: float, literal: bool = False) -> CounterexampleRecord:
    """Union of [0, 1/n] x [0, n]^2 x [n, n+1]; l2 = (x2, x4) unless ``literal``."""
    boxes = [([0, 0, 0, n], [Fraction(1, n), n, n, n + 1]) for n in range(1, N + 1)]
    l2 = _sub(4) if literal else _sub(2, 4)
    images = [_sub(3, 4), l2, _sub(1, 2, 3, 4), _sub(4)]
    flags = ["l2 read as the single coordinate x4"] if literal else ["l2 taken as (x2, x4) so that |w| / |l2 w| = 1"]
    rec = _gen_record("A3", N, h, [(list(a), list(b)) for a, b in boxes], images, flags)
    rec.quantities["exact_ratio"] = Fraction(N + 1, 2) if not literal else None
    return rec


def _a4(N: int, h: float) -> CounterexampleRecord:
    """Union of [0, n] x [0, 1/n]^2 x [n, n+1] with l = (x2,x3,x4), x4, (x2,x4), (x3,x4)."""
    boxes = [([0, 0, 0, n], [n, Fraction(1, n), Fraction(1, n), n + 1]) for n in range(1, N + 1)]
    images = [_sub(2, 3, 4), _sub(4), _sub(2, 4), _sub(3, 4)]
    rec = _gen_record("A4", N, h, [(list(a), list(b)) for a, b in boxes], images, [])
    H = _harmonic(N)
    rec.quantities["exact_ratio"] = N * _harmonic(N, 2) / (H * H)
    return rec


COUNTEREXAMPLES = ("A1", "A2", "A3", "A4")


def counterexample_set(name: str, N: int, h: float | None = None, **kw: Any) -> CounterexampleRecord:
    if N < 2:
        raise ValueError("need N >= 2")
    key = name.upper().replace(".", "").replace("_", "")
    if key == "A2":
        return _a2(N, h)
    h = default_h(N) if h is None else h
    if h > 1 / (4 * N):
        raise ResolutionError(f"h={h} gives fewer than 4 cells across the thinnest slab 1/{N}")
    if key == "A1":
        return _a1(N, h)
    if key == "A3":
        return _a3(N, h, **kw)
    if key == "A4":
        return _a4(N, h)
    raise KeyError(f"unknown counterexample {name!r}; known: {', '.join(COUNTEREXAMPLES)}")


DEFAULT_SWEEPS = {"A1": (16, 32, 64), "A2": (16, 32, 64), "A3": (16, 32, 64), "A4": (64, 128, 256)}


@dataclass
class SweepRecord:
    name: str
    records: list[CounterexampleRecord]
    factors: list[float]
    direction: str
    monotone: bool

    @property
    def min_factor(self) -> float:
        return min(self.factors) if self.factors else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "N": [r.N for r in self.records],
            "target": [r.target for r in self.records],
            "factors": self.factors,
            "direction": self.direction,
            "monotone": self.monotone,
            "flags": sorted({f for r in self.records for f in r.flags}),
        }


def sweep(name: str, Ns: Sequence[int] | None = None, tolerance: float = 0.2, **kw: Any) -> SweepRecord:
    """Per-doubling growth factors of the target in the claimed direction; monotone within ``tolerance``."""
    key = name.upper().replace(".", "").replace("_", "")
    Ns = list(Ns or DEFAULT_SWEEPS[key])
    recs = [counterexample_set(key, N, **kw) for N in Ns]
    dirn = recs[0].direction
    vals = [r.target for r in recs]
    if dirn == "decreasing":
        factors = [a / b for a, b in zip(vals, vals[1:])]
    else:
        factors = [b / a for a, b in zip(vals, vals[1:])]
    return SweepRecord(key, recs, factors, dirn, all(f >= 1 - tolerance for f in factors))


__all__ = [
    "BUILTIN_NAMES",
    "COUNTEREXAMPLES",
    "CounterexampleRecord",
    "NamedExample",
    "SweepRecord",
    "builtin_config",
    "counterexample_set",
    "default_h",
    "holder",
    "heis1",
    "loomis_whitney_flat",
    "sweep",
    "table_report",
]
