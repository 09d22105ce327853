"""Distance-decay weight functions and their analytic partial derivatives.

The Gaussian kind is the primary one: omega = exp(-d^2 / sigma^2) with a
depth-adaptive variance sigma^2 = alpha * depth clamped to
[sigma_min, sigma_max]. Larger depth widens the spread, so distant points
hand more weight to surrounding cells. Linear and L2 are comparison kinds
defined on a cutoff radius r0 matched to the Gaussian's 1e-3 level set, so
all kinds share comparable support. Delta is the degenerate kind that puts
weight 1 on the single nearest center, which reproduces plain snap-to-center
voxel pooling.

Everything here is a pure function of its arguments and re-entrant.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "SUPPORT_FLOOR",
    "WeightGrad",
    "WeightKind",
    "WeightParams",
    "cutoff_radius_sq",
    "sigma_sq",
    "sigma_sq_array",
    "weight",
    "weight_grad",
    "weights_from_dist2",
    "weight_sigma2_grad_from_dist2",
]

# Omega level at which Linear/L2 support is cut off, matched to the Gaussian.
SUPPORT_FLOOR = 1e-3
_SUPPORT_LOG = math.log(1.0 / SUPPORT_FLOOR)


class WeightKind(enum.Enum):
    GAUSSIAN = "gaussian"
    LINEAR = "linear"
    L2 = "l2"
    DELTA = "delta"

    @classmethod
    def parse(cls, name: str) -> "WeightKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown weight kind {name!r} (expected one of: {valid})")


@dataclass(frozen=True)
class WeightParams:
    """Weight-function configuration.

    alpha is the learnable scalar mapping depth to variance; sigma_min and
    sigma_max are the variance clamp bounds (the 2.0 default keeps sigma^2
    inside [0, 2]). Delta ignores alpha and distances entirely.
    """

    kind: WeightKind = WeightKind.GAUSSIAN
    alpha: float = 0.02
    sigma_min: float = 1e-3
    sigma_max: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ConfigError(
                f"need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}"
            )


@dataclass(frozen=True)
class WeightGrad:
    """Partials of omega: d_omega/d(d^2) and d_omega/d(sigma^2)."""

    d_omega_d_dist2: float
    d_omega_d_sigma2: float


def sigma_sq(params: WeightParams, depth: float) -> tuple[float, bool]:
    """Depth-to-variance map: clamp(alpha * depth, sigma_min, sigma_max).

    Returns (sigma2, clamped). When a clamp bound is active, the gradient of
    sigma^2 with respect to alpha (and depth) is zero; callers use the flag.
    """
    if not depth > 0.0:
        raise DomainError(f"depth must be positive, got {depth}")
    raw = params.alpha * depth
    s2 = min(max(raw, params.sigma_min), params.sigma_max)
    return s2, s2 != raw


def sigma_sq_array(params: WeightParams, depths: np.ndarray):
    """Vectorized sigma_sq: returns (sigma2 (n,), clamped (n,) bool)."""
    depths = np.asarray(depths, dtype=np.float64)
    if depths.size and not np.all(depths > 0.0):
        bad = int(np.argmax(~(depths > 0.0)))
        raise DomainError(f"depth must be positive, got {depths[bad]} at index {bad}")
    raw = params.alpha * depths
    s2 = np.clip(raw, params.sigma_min, params.sigma_max)
    return s2, s2 != raw


def cutoff_radius_sq(sigma2) -> np.ndarray | float:
    """Squared support radius for Linear/L2: r0^2 = sigma^2 * ln(1/floor)."""
    return sigma2 * _SUPPORT_LOG


def weight(params: WeightParams, dist: float, sigma2: float, nearest: bool = True) -> float:
    """Weight omega in [0, 1] for a neighbor at distance `dist`.

    `nearest` only matters for the Delta kind, which pays 1 to the single
    nearest center and 0 to every other neighbor.
    """
    if dist < 0.0:
        raise DomainError(f"distance must be nonnegative, got {dist}")
    if params.kind is not WeightKind.DELTA and sigma2 < params.sigma_min:
        raise DomainError(f"sigma2 {sigma2} below sigma_min {params.sigma_min}")
    if params.kind is WeightKind.DELTA:
        return 1.0 if nearest else 0.0
    d2 = dist * dist
    if params.kind is WeightKind.GAUSSIAN:
        return math.exp(-d2 / sigma2)
    r0sq = cutoff_radius_sq(sigma2)
    if params.kind is WeightKind.LINEAR:
        return max(0.0, 1.0 - dist / math.sqrt(r0sq))
    return max(0.0, 1.0 - d2 / r0sq)  # L2


def weight_grad(params: WeightParams, dist: float, sigma2: float) -> WeightGrad:
    """Exact analytic partials of omega for the selected kind.

    Linear/L2 return zeros outside their support; Delta is piecewise
    constant so both partials are always zero. Linear's d(omega)/d(d^2) is
    defined as 0 at d = 0 (the kink).
    """
    if dist < 0.0:
        raise DomainError(f"distance must be nonnegative, got {dist}")
    d2 = dist * dist
    if params.kind is WeightKind.DELTA:
        return WeightGrad(0.0, 0.0)
    if params.kind is WeightKind.GAUSSIAN:
        w = math.exp(-d2 / sigma2)
        return WeightGrad(-w / sigma2, w * d2 / (sigma2 * sigma2))
    r0sq = cutoff_radius_sq(sigma2)
    if params.kind is WeightKind.LINEAR:
        r0 = math.sqrt(r0sq)
        if dist >= r0 or dist == 0.0:
            d_dist2 = 0.0
        else:
            d_dist2 = -1.0 / (2.0 * dist * r0)
        d_s2 = dist * _SUPPORT_LOG / (2.0 * r0sq * r0) if dist < r0 else 0.0
        return WeightGrad(d_dist2, d_s2)
    # L2
    if d2 >= r0sq:
        return WeightGrad(0.0, 0.0)
    return WeightGrad(-1.0 / r0sq, d2 * _SUPPORT_LOG / (r0sq * r0sq))


def weights_from_dist2(
    params: WeightParams, dist2: np.ndarray, sigma2: np.ndarray
) -> np.ndarray:
    """Vectorized weights over per-point neighbor rows.

    Args:
        dist2: (n, k) squared distances; column 0 must be the nearest
            neighbor (rows are sorted by the neighbor selection).
        sigma2: (n,) per-point variances.
    Returns:
        (n, k) float64 weights.
    """
    dist2 = np.asarray(dist2, dtype=np.float64)
    if params.kind is WeightKind.DELTA:
        w = np.zeros_like(dist2)
        if w.shape[1] > 0:
            w[:, 0] = 1.0
        return w
    s2 = np.asarray(sigma2, dtype=np.float64)[:, None]
    if params.kind is WeightKind.GAUSSIAN:
        return np.exp(-dist2 / s2)
    r0sq = cutoff_radius_sq(s2)
    if params.kind is WeightKind.LINEAR:
        return np.maximum(0.0, 1.0 - np.sqrt(dist2 / r0sq))
    return np.maximum(0.0, 1.0 - dist2 / r0sq)  # L2


def weight_sigma2_grad_from_dist2(
    params: WeightParams, dist2: np.ndarray, sigma2: np.ndarray
) -> np.ndarray:
    """Vectorized d(omega)/d(sigma^2) over per-point neighbor rows."""
    dist2 = np.asarray(dist2, dtype=np.float64)
    if params.kind is WeightKind.DELTA:
        return np.zeros_like(dist2)
    s2 = np.asarray(sigma2, dtype=np.float64)[:, None]
    if params.kind is WeightKind.GAUSSIAN:
        return np.exp(-dist2 / s2) * dist2 / (s2 * s2)
    r0sq = cutoff_radius_sq(s2)
    inside = dist2 < r0sq
    if params.kind is WeightKind.LINEAR:
        d = np.sqrt(dist2)
        return np.where(inside, d * _SUPPORT_LOG / (2.0 * r0sq * np.sqrt(r0sq)), 0.0)
    return np.where(inside, dist2 * _SUPPORT_LOG / (r0sq * r0sq), 0.0)  # L2
