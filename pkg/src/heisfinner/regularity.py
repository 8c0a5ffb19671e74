"""Average fiber ratios and the semiregular, quasiextremal and regular levels of a voxel set."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .exponents import ArithmeticScaffold, ExponentVector, derive_arithmetic
from .heisenberg import named_map
from .lattice import ProjectionConfig
from .voxels import VoxelSet, fiber_groups, pushforward_vertical


@dataclass
class RegularityReport:
    h: float
    measure: float
    alpha: list[float]
    image_measures: list[float]
    beta: list[float]
    beta_star: list[float]
    epsilon_quasi: float
    epsilon_semi: float
    epsilon_semi_star: float
    max_fiber: list[float] = field(default_factory=list)
    max_fiber_star: list[float] = field(default_factory=list)

    @property
    def epsilon_regular(self) -> float:
        return min(self.epsilon_quasi, self.epsilon_semi, self.epsilon_semi_star)

    def to_dict(self) -> dict[str, Any]:
        return {
            "h": self.h,
            "measure": self.measure,
            "alpha": self.alpha,
            "image_measures": self.image_measures,
            "beta": self.beta,
            "beta_star": self.beta_star,
            "max_fiber": self.max_fiber,
            "max_fiber_star": self.max_fiber_star,
            "epsilon_quasi": self.epsilon_quasi,
            "epsilon_semi": self.epsilon_semi,
            "epsilon_semi_star": self.epsilon_semi_star,
            "epsilon_regular": self.epsilon_regular,
        }


def quasi_ratio(measure: float, images: list[float], p: ExponentVector) -> float:
    return math.exp(math.log(measure) - sum(float(a) * math.log(m) for a, m in zip(p.inv_p, images)))


def _semi(S: VoxelSet, scaffold: ArithmeticScaffold, kind: str) -> tuple[list[float], list[float], float]:
    betas, maxes, eps = [], [], math.inf
    for j in range(scaffold.m_tilde):
        g = fiber_groups(S, named_map(kind, scaffold=scaffold, j=j))
        meas = g.group_measures()
        beta = float(meas.mean())
        mx = float(meas.max())
        betas.append(beta)
        maxes.append(mx)
        eps = min(eps, 2 * beta / mx)
    return betas, maxes, eps


def classify(
    S: VoxelSet, config: ProjectionConfig, p: ExponentVector, scaffold: ArithmeticScaffold | None = None
) -> RegularityReport:
    """Largest levels at which S is quasiextremal and semiregular for pi and pi_*."""
    if S.is_empty():
        raise ValueError("classify needs a nonempty set")
    if S.d != 2 * config.n + 1:
        raise ValueError(f"set lives in R^{S.d}, expected H^{config.n}")
    scaffold = scaffold or derive_arithmetic(config, p)
    meas = S.measure()
    imgs = [pushforward_vertical(S, named_map("pi_j", config, j)).measure() for j in range(config.M)]
    alpha = [meas / m for m in imgs]
    beta, mx, eps = _semi(S, scaffold, "pi_tilde")
    beta_s, mx_s, eps_s = _semi(S, scaffold, "pi_tilde_star")
    return RegularityReport(
        h=S.h,
        measure=meas,
        alpha=alpha,
        image_measures=imgs,
        beta=beta,
        beta_star=beta_s,
        epsilon_quasi=quasi_ratio(meas, imgs, p),
        epsilon_semi=eps,
        epsilon_semi_star=eps_s,
        max_fiber=mx,
        max_fiber_star=mx_s,
    )


@dataclass
class StabilityRecord:
    sigma: float
    eps_before: float
    eps_after: float

    @property
    def constant(self) -> float:
        """C with eps_after = C * eps_before * sigma."""
        return self.eps_after / (self.eps_before * self.sigma)


def refinement_stability(
    S: VoxelSet,
    config: ProjectionConfig,
    p: ExponentVector,
    sigma: float,
    trials: int,
    seed: int,
    scaffold: ArithmeticScaffold | None = None,
) -> list[dict[str, StabilityRecord]]:
    """Classify random sigma-refinements (uniform cell subsamples) and log the measured constants."""
    scaffold = scaffold or derive_arithmetic(config, p)
    base = classify(S, config, p, scaffold)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        keep = rng.random(S.count) < sigma
        if not keep.any():
            continue
        sub = S.subset(keep)
        sig = sub.count / S.count
        rep = classify(sub, config, p, scaffold)
        out.append(
            {
                "quasi": StabilityRecord(sig, base.epsilon_quasi, rep.epsilon_quasi),
                "semi": StabilityRecord(sig, base.epsilon_semi, rep.epsilon_semi),
                "semi_star": StabilityRecord(sig, base.epsilon_semi_star, rep.epsilon_semi_star),
            }
        )
    return out
