"""Position-recovery verification lab.

Snap-to-center pooling destroys the source position inside a cell (expected
squared error cell_size^2 / 6 for uniform points), while spreading to k >= 3
non-collinear centers with Gaussian weights preserves it exactly: each
weight decodes to a squared distance d^2 = -sigma^2 * ln(omega), and
trilateration recovers the point. This module provides the closed-form
inverter, a Monte-Carlo estimate of the snap quantization error, and the
experiment driver that exercises both through the real pooling kernel.

Reported MSE is in squared position units (the same units as cell_size).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, DomainError
from .geometry import BevGridSpec
from .pool import ExecMode, FrustumBatch, spread_pool_forward
from .weights import WeightKind, WeightParams, cutoff_radius_sq

__all__ = [
    "RecoveryCase",
    "RecoveryReport",
    "RecoveryRow",
    "quantization_error_mc",
    "recover_position",
    "recover_position_with_sigma2",
    "run_recovery_experiment",
]

_AREA_EPS = 1e-9

# Context for report headers: recovery losses reported for a trained
# regressor baseline on 16x16 grids (spread k>=3 vs snap pooling). Not a
# pass/fail target here; our inverter is analytic, not learned.
LEARNED_BASELINE_MSE = {"k>=3": 0.003, "k=1": 0.095}


@dataclass(frozen=True)
class RecoveryCase:
    """One inversion problem: m >= 3 known centers with observed weights."""

    neighbor_centers: np.ndarray   # (m, 2) float64
    observed_weights: np.ndarray   # (m,) float64 in (0, 1]
    sigma2: float
    true_position: np.ndarray | None = None

    def __post_init__(self):
        centers = np.asarray(self.neighbor_centers, dtype=np.float64)
        weights = np.asarray(self.observed_weights, dtype=np.float64)
        object.__setattr__(self, "neighbor_centers", centers)
        object.__setattr__(self, "observed_weights", weights)
        if centers.ndim != 2 or centers.shape[1] != 2 or centers.shape[0] < 3:
            raise DomainError(f"need (m >= 3, 2) centers, got {centers.shape}")
        if weights.shape != (centers.shape[0],):
            raise DomainError("one weight per center required")
        if np.any(weights <= 0.0) or np.any(weights > 1.0):
            raise DomainError("weights must lie in (0, 1] (log of 0 is undefined)")
        if not self.sigma2 > 0.0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")


def _max_triangle_area(centers: np.ndarray) -> float:
    e = centers[1:] - centers[0]
    cross = e[:, 0][:, None] * e[:, 1][None, :] - e[:, 1][:, None] * e[:, 0][None, :]
    return 0.5 * float(np.abs(cross).max()) if e.shape[0] >= 2 else 0.0


def recover_position(case: RecoveryCase) -> tuple[float, float]:
    """Invert noiseless Gaussian weights back to the source position.

    Decodes d_i^2 = -sigma^2 * ln(omega_i), subtracts the first equation to
    cancel |p|^2, and solves the resulting linear least-squares system.
    Exact to ~1e-9 when the weights are unperturbed forward evaluations.
    """
    centers = case.neighbor_centers
    if _max_triangle_area(centers) <= _AREA_EPS:
        raise DegenerateGeometryError("neighbor centers are collinear")
    d2 = -case.sigma2 * np.log(case.observed_weights)
    A = 2.0 * (centers[1:] - centers[0])
    norms = np.einsum("mi,mi->m", centers, centers)
    b = (norms[1:] - norms[0]) - (d2[1:] - d2[0])
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return (float(sol[0]), float(sol[1]))


def recover_position_with_sigma2(
    centers: np.ndarray, weights: np.ndarray
) -> tuple[tuple[float, float], float]:
    """Joint recovery of position and sigma^2 from m >= 4 weights.

    Uses the un-differenced equations with auxiliary unknown t = |p|^2:
    t - 2 <c_i, p> + |c_i|^2 + sigma^2 * ln(omega_i) = 0, linear in
    (p_x, p_y, t, sigma^2).
    """
    centers = np.asarray(centers, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if centers.shape[0] < 4:
        raise DomainError("joint sigma2 recovery needs at least 4 centers")
    if np.any(weights <= 0.0):
        raise DomainError("weights must be positive")
    if _max_triangle_area(centers) <= _AREA_EPS:
        raise DegenerateGeometryError("neighbor centers are collinear")
    m = centers.shape[0]
    A = np.empty((m, 4), dtype=np.float64)
    A[:, 0] = -2.0 * centers[:, 0]
    A[:, 1] = -2.0 * centers[:, 1]
    A[:, 2] = 1.0
    A[:, 3] = np.log(weights)
    b = -np.einsum("mi,mi->m", centers, centers)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return (float(sol[0]), float(sol[1])), float(sol[3])


def quantization_error_mc(spec: BevGridSpec, samples: int, seed: int) -> float:
    """Monte-Carlo E[|p - nearest_center(p)|^2] for p uniform over one cell.

    The analytic value is cell_size^2 / 6.
    """
    if samples < 1:
        raise DomainError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    half = spec.cell_size / 2.0
    offsets = rng.uniform(-half, half, size=(samples, 2))
    return float(np.mean(np.einsum("si,si->s", offsets, offsets)))


def _decode_dist2(params: WeightParams, weights: np.ndarray, sigma2: float) -> np.ndarray:
    """Squared distances implied by observed weights for the given kind.

    Linear/L2 weights of exactly 0 carry no distance information beyond
    "outside the support"; they decode to the support edge, which is what
    makes those kinds lossy on boundary-heavy samples.
    """
    if params.kind is WeightKind.GAUSSIAN:
        return -sigma2 * np.log(weights)
    r0sq = float(cutoff_radius_sq(sigma2))
    if params.kind is WeightKind.LINEAR:
        d = np.sqrt(r0sq) * (1.0 - weights)
        return d * d
    if params.kind is WeightKind.L2:
        return r0sq * (1.0 - weights)
    raise DomainError("delta weights carry no distance information")


def _trilaterate_batch(centers: np.ndarray, d2: np.ndarray):
    """Vectorized pair-differenced least squares.

    Args:
        centers: (s, m, 2) anchor positions; d2: (s, m) squared distances.
    Returns:
        (positions (s, 2), ok (s,) bool); rows with collinear anchors are
        marked not-ok and left at zero.
    """
    e = centers[:, 1:, :] - centers[:, 0:1, :]           # (s, m-1, 2)
    cross = (e[:, :, None, 0] * e[:, None, :, 1]
             - e[:, :, None, 1] * e[:, None, :, 0])
    ok = 0.5 * np.abs(cross).max(axis=(1, 2)) > _AREA_EPS

    A = 2.0 * e
    norms = np.einsum("smi,smi->sm", centers, centers)
    b = (norms[:, 1:] - norms[:, 0:1]) - (d2[:, 1:] - d2[:, 0:1])
    m00 = np.einsum("sm,sm->s", A[:, :, 0], A[:, :, 0])
    m01 = np.einsum("sm,sm->s", A[:, :, 0], A[:, :, 1])
    m11 = np.einsum("sm,sm->s", A[:, :, 1], A[:, :, 1])
    r0 = np.einsum("sm,sm->s", A[:, :, 0], b)
    r1 = np.einsum("sm,sm->s", A[:, :, 1], b)
    det = m00 * m11 - m01 * m01
    ok &= np.abs(det) > 0.0
    safe_det = np.where(ok, det, 1.0)
    out = np.zeros((centers.shape[0], 2), dtype=np.float64)
    out[:, 0] = np.where(ok, (m11 * r0 - m01 * r1) / safe_det, 0.0)
    out[:, 1] = np.where(ok, (m00 * r1 - m01 * r0) / safe_det, 0.0)
    return out, ok


@dataclass(frozen=True)
class RecoveryRow:
    k: int
    samples: int
    failures: int
    mse: float


@dataclass
class RecoveryReport:
    """Per-k recovery MSE from the experiment driver."""

    rows: list[RecoveryRow] = field(default_factory=list)
    sigma2: float = 1.0
    cell_size: float = 1.0
    kind: WeightKind = WeightKind.GAUSSIAN
    context: dict = field(default_factory=lambda: dict(LEARNED_BASELINE_MSE))


def run_recovery_experiment(
    spec: BevGridSpec,
    k_values: list[int],
    samples: int,
    sigma2: float,
    seed: int,
    kind: WeightKind = WeightKind.GAUSSIAN,
) -> RecoveryReport:
    """Sample random in-lattice points, pool them, and invert the emitted
    (center, weight) pairs back to positions.

    For k = 1 recovery from a single weight-1 observation is impossible, so
    the row reports the snap quantization error instead. Collinear neighbor
    sets are counted as failures, never silently mis-solved.
    """
    if not k_values:
        raise DomainError("k_values must be nonempty")
    if not sigma2 > 0.0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    rng = np.random.default_rng(seed)
    lo = np.array([spec.origin_x, spec.origin_y])
    hi = lo + spec.cell_size * np.array([spec.nx - 1, spec.ny - 1])
    positions = rng.uniform(lo, hi, size=(samples, 2))

    # alpha = 1 and depth = sigma2 drive the kernel at exactly the requested
    # variance (sigma2 is treated as known to the inverter).
    params = WeightParams(kind=kind, alpha=1.0, sigma_min=min(1e-3, sigma2 / 2),
                          sigma_max=max(2.0, sigma2 * 2))
    batch = FrustumBatch(
        positions=positions,
        depths=np.full(samples, sigma2, dtype=np.float64),
        features=np.ones((samples, 1), dtype=np.float32),
    )

    report = RecoveryReport(sigma2=sigma2, cell_size=spec.cell_size, kind=kind)
    for k in sorted(set(int(k) for k in k_values)):
        if k == 1 or kind is WeightKind.DELTA:
            fmap = spread_pool_forward(batch, spec, params, 1, ExecMode.DETERMINISTIC)
            saved = fmap.saved
            flat = saved.cells[:, 0]
            cx = spec.origin_x + (flat // spec.ny) * spec.cell_size
            cy = spec.origin_y + (flat % spec.ny) * spec.cell_size
            err = (positions[saved.kept, 0] - cx) ** 2 + (positions[saved.kept, 1] - cy) ** 2
            report.rows.append(RecoveryRow(k, samples, 0, float(err.mean())))
            continue

        fmap = spread_pool_forward(batch, spec, params, k, ExecMode.DETERMINISTIC)
        saved = fmap.saved
        usable = saved.valid & (saved.weights > 0.0)
        enough = usable.sum(axis=1) >= 3
        # Decode distances from the emitted weights; zero weights (outside
        # Linear/L2 support) decode to the support edge.
        w = np.where(saved.valid, saved.weights, 1.0)
        if kind is WeightKind.GAUSSIAN:
            d2 = np.where(saved.valid, -sigma2 * np.log(np.maximum(w, 1e-300)), 0.0)
        else:
            r0sq = float(cutoff_radius_sq(sigma2))
            if kind is WeightKind.LINEAR:
                d = np.sqrt(r0sq) * (1.0 - w)
                d2 = d * d
            else:
                d2 = r0sq * (1.0 - w)
            d2 = np.where(saved.valid, d2, 0.0)
        flat = np.where(saved.valid, saved.cells, 0)
        centers = np.stack(
            [spec.origin_x + (flat // spec.ny) * spec.cell_size,
             spec.origin_y + (flat % spec.ny) * spec.cell_size], axis=-1)
        # Degenerate/unusable anchors would poison the solve; restrict to
        # rows where all k anchors are valid (always true on lattices with
        # at least k cells) and at least 3 carry information.
        full = saved.valid.all(axis=1) & enough
        pos_hat, ok = _trilaterate_batch(centers[full], d2[full])
        truth = positions[saved.kept][full]
        err = np.einsum("si,si->s", pos_hat - truth, pos_hat - truth)
        failures = int(samples - full.sum() + (~ok).sum())
        mse = float(err[ok].mean()) if ok.any() else float("nan")
        report.rows.append(RecoveryRow(k, samples, failures, mse))
    return report
