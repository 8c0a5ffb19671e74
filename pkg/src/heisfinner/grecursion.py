"""Nested-integral recursion G_j on a grid and the iterated Hoelder lower bound."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .voxels import RegularityError


@dataclass
class GLevels:
    """Per-level tables: G[j] and mask[j] live on the last k~_m - k~_j axes of the grid."""

    G: list[np.ndarray]
    mask: list[np.ndarray]
    Q_tilde: list[int]
    h: float


def _tails(q_dbl_tilde: Sequence[int]) -> list[int]:
    return [sum(q_dbl_tilde[j:]) for j in range(len(q_dbl_tilde))]


def _check_shape(E: np.ndarray, k_tilde: Sequence[int], q_dbl_tilde: Sequence[int]) -> None:
    if len(k_tilde) != len(q_dbl_tilde) or not k_tilde:
        raise ValueError("k~ and q~~ must be nonempty and of equal length")
    if list(k_tilde) != sorted(set(k_tilde)) or k_tilde[0] < 1:
        raise ValueError("k~ must be strictly increasing and positive")
    if E.ndim != k_tilde[-1]:
        raise ValueError(f"grid has {E.ndim} axes, expected k~_m = {k_tilde[-1]}")
    if not E.any():
        raise ValueError("E is empty")


def g_recursion(
    E: np.ndarray, G0: np.ndarray, k_tilde: Sequence[int], q_dbl_tilde: Sequence[int], h: float
) -> GLevels:
    """G_j(s_j) = (sum over the level-j free axes of G_{j-1}^{1/Q~_j} on the section, times h^dk)^{Q~_j}.

    ``E`` is a boolean array over R^{k~_m} in sorted coordinates; ``G0`` is nonnegative of the same shape.
    """
    E = np.asarray(E, dtype=bool)
    G0 = np.asarray(G0, dtype=float)
    _check_shape(E, k_tilde, q_dbl_tilde)
    if G0.shape != E.shape or np.any(G0 < 0):
        raise ValueError("G0 must be nonnegative on the grid of E")
    Qt = _tails(q_dbl_tilde)
    G, mask = [np.where(E, G0, 0.0)], [E]
    prev_k = 0
    for j, k in enumerate(k_tilde):
        axes = tuple(range(k - prev_k))
        integrand = np.where(mask[-1], G[-1], 0.0) ** (1.0 / Qt[j])
        G.append(np.sum(integrand, axis=axes) * h ** (k - prev_k) if axes else integrand)
        G[-1] = G[-1] ** Qt[j]
        mask.append(np.any(mask[-1], axis=axes) if axes else mask[-1])
        prev_k = k
    return GLevels(G, mask, Qt, h)


@dataclass
class RegularEStats:
    beta: list[float]
    lam: float
    sigma: float
    max_over_avg: list[float]


def regular_e_stats(E: np.ndarray, k_tilde: Sequence[int], h: float) -> RegularEStats:
    """Average fiber sizes beta_j, the lower constant lambda and the upper constant sigma on a grid."""
    E = np.asarray(E, dtype=bool)
    d = E.ndim
    total = E.sum() * h**d
    beta, lam, ratios, sig = [], 1.0, [], 1.0
    for j, k in enumerate(k_tilde):
        fib = E.sum(axis=tuple(range(k))) * h**k
        occupied = fib[fib > 0]
        img = occupied.size * h ** (d - k)
        b = total / img
        beta.append(b)
        lam = min(lam, float(occupied.min()) / b)
        ratios.append(float(occupied.max()) / b)
        if j < len(k_tilde) - 1:
            sig = min(sig, b / float(occupied.max()))
    return RegularEStats(beta, lam, sig, ratios)


@dataclass
class GBoundCheck:
    G_top: float
    bound: float
    stats: RegularEStats
    exponent_lambda: int
    exponent_sigma: int

    @property
    def holds(self) -> bool:
        return self.G_top >= self.bound * (1 - 1e-12)


def g_lower_bound(
    E: np.ndarray, k_tilde: Sequence[int], q_dbl_tilde: Sequence[int], h: float, sigma: float | None = None
) -> GBoundCheck:
    """With G0 = 1: G_m >= lam^{sum Q~_j} sig^{sum_{j>=2} Q~_j} prod beta_j^{q~~_j}."""
    E = np.asarray(E, dtype=bool)
    levels = g_recursion(E, np.ones(E.shape), k_tilde, q_dbl_tilde, h)
    st = regular_e_stats(E, k_tilde, h)
    if sigma is not None:
        for j, r in enumerate(st.max_over_avg[:-1]):
            if r > 1 / sigma:
                raise RegularityError(j, r, sigma)
    Qt = _tails(q_dbl_tilde)
    a, b = sum(Qt), sum(Qt[1:])
    bound = st.lam**a * st.sigma**b
    for beta, q in zip(st.beta, q_dbl_tilde):
        bound *= beta**q
    return GBoundCheck(float(levels.G[-1]), bound, st, a, b)


def product_integral(
    E: np.ndarray, f: Sequence[Sequence[np.ndarray]], k_tilde: Sequence[int], q_dbl_tilde: Sequence[int], h: float
) -> float:
    """Integral over the nested parameter set of prod f_{j,l}(s^{j,l}).

    Level j keeps l = 1 as the link to level j-1: its integrand carries the lower levels evaluated
    at the projected point, and the remaining l integrate freely over the same fiber.
    """
    E = np.asarray(E, dtype=bool)
    _check_shape(E, k_tilde, q_dbl_tilde)
    Ef = E.astype(float)
    H = None
    prev_k = 0
    for j, k in enumerate(k_tilde):
        axes = tuple(range(k))
        vol = h**k
        fs = [np.asarray(a, dtype=float) for a in f[j]]
        if len(fs) != q_dbl_tilde[j]:
            raise ValueError(f"level {j + 1} needs {q_dbl_tilde[j]} functions")
        factors = []
        for l, fl in enumerate(fs):
            integrand = fl * Ef
            if l == 0 and H is not None:
                integrand = integrand * H[(None,) * prev_k]
            factors.append(np.sum(integrand, axis=axes) * vol)
        H = factors[0]
        for x in factors[1:]:
            H = H * x
        prev_k = k
    assert H is not None
    return float(H)


@dataclass
class HolderCheck:
    lhs: float
    G_top: float

    @property
    def slack(self) -> float:
        return self.lhs - self.G_top

    @property
    def holds(self) -> bool:
        return self.lhs >= self.G_top * (1 - 1e-12) - 1e-300


def holder_check(
    E: np.ndarray, f: Sequence[Sequence[np.ndarray]], k_tilde: Sequence[int], q_dbl_tilde: Sequence[int], h: float
) -> HolderCheck:
    G0 = np.ones(np.shape(E))
    for level in f:
        for fl in level:
            G0 = G0 * np.asarray(fl, dtype=float)
    levels = g_recursion(E, G0, k_tilde, q_dbl_tilde, h)
    return HolderCheck(product_integral(E, f, k_tilde, q_dbl_tilde, h), float(levels.G[-1]))
