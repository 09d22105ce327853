"""Spread voxel pooling kernels.

Each source point deposits its feature vector into its top-k nearest BEV
cell centers, scaled by a distance/depth weight. Three execution modes share
one contract:

* ``REFERENCE``: serial, point-major iteration order, float64 accumulators.
  The correctness oracle for the other two.
* ``DETERMINISTIC``: contributions are stably sorted by target cell and
  summed per cell in that fixed order (float32). Bit-identical across runs
  and across worker counts.
* ``FAST``: contributions are split across workers, each worker builds a
  partial map, and partials are merged in completion order. Only relies on
  commutativity of addition; float32.

Per-cell accumulation keeps the channel axis contiguous (cell-major layout,
channels minor) so the inner addition loop vectorizes.

Neighbor selection searches a square window of cells around the point's
rounded cell and widens it until the top-k result is provably equal to a
full-lattice scan, so ``select_neighbors`` matches the brute-force oracle
for any query point. Ties in distance break by ascending linear cell index,
where the linear index counts x fastest (j * nx + i).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError
from .geometry import BevGridSpec, locate_cells
from .weights import WeightParams, sigma_sq_array, weight_sigma2_grad_from_dist2, weights_from_dist2

__all__ = [
    "BevFeatureMap",
    "ExecMode",
    "FrustumBatch",
    "NeighborSet",
    "PoolGradients",
    "SavedForBackward",
    "baseline_pool",
    "pool_reference",
    "select_neighbors",
    "select_neighbors_batch",
    "snap_cells",
    "spread_pool_backward",
    "spread_pool_forward",
]

# Rows of (weight * feature) materialized at once inside a reduction task.
# Fixed (not derived from worker count) so deterministic-mode chunking, and
# therefore summation grouping, never depends on parallelism.
_CHUNK_ROWS = 1 << 18

# Candidate budget per block in the vectorized neighbor search; bounds the
# (points x window) scratch arrays to a few hundred MB.
_CANDIDATE_BUDGET = 1 << 22


class ExecMode(enum.Enum):
    FAST = "fast"
    DETERMINISTIC = "deterministic"
    REFERENCE = "reference"

    @classmethod
    def parse(cls, name: str) -> "ExecMode":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown mode {name!r} (expected one of: {valid})")


@dataclass
class FrustumBatch:
    """A batch of BEV-projected source points.

    positions: (n, 2) float64 meters; depths: (n,) float64 meters (> 0);
    features: (n, C) float32 context features.
    """

    positions: np.ndarray
    depths: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.depths = np.ascontiguousarray(self.depths, dtype=np.float64)
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise DomainError(f"positions must be (n, 2), got {self.positions.shape}")
        n = self.positions.shape[0]
        if self.depths.shape != (n,):
            raise DomainError(f"depths must be ({n},), got {self.depths.shape}")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DomainError(f"features must be ({n}, C), got {self.features.shape}")
        if n and not np.all(np.isfinite(self.positions)):
            bad = int(np.argmax(~np.isfinite(self.positions).all(axis=1)))
            raise DomainError(f"non-finite position at point {bad}")
        if n and not np.all(self.depths > 0.0):
            bad = int(np.argmax(~(self.depths > 0.0)))
            raise DomainError(f"depth must be positive, got {self.depths[bad]} at point {bad}")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def num_channels(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class NeighborSet:
    """Up to k nearest in-lattice cells for one point.

    cells: (m, 2) int64 (i, j) indices; distances: (m,) float64 meters.
    Sorted by (distance ascending, linear cell index ascending).
    """

    cells: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return self.cells.shape[0]

    def __iter__(self):
        for row, d in zip(self.cells, self.distances):
            yield (int(row[0]), int(row[1])), float(d)


@dataclass
class SavedForBackward:
    """Forward-pass record consumed by spread_pool_backward.

    Arrays cover only the kept (in-lattice) points; ``kept`` maps rows back
    to indices in the original batch. Weights are stored (not recomputed) so
    forward and backward see identical values.
    """

    spec: BevGridSpec
    params: WeightParams
    k: int
    n: int
    num_channels: int
    kept: np.ndarray        # (m,) int64 original point indices
    cells: np.ndarray       # (m, k) int64 flat map cells (i * ny + j), -1 invalid
    valid: np.ndarray       # (m, k) bool
    dist2: np.ndarray       # (m, k) float64
    weights: np.ndarray     # (m, k) float64, 0 where invalid
    sigma2: np.ndarray      # (m,) float64 clamped variance
    clamped: np.ndarray     # (m,) bool


@dataclass
class BevFeatureMap:
    """Accumulated (nx, ny, C) feature map plus the saved backward context."""

    data: np.ndarray
    saved: SavedForBackward | None = None
    dropped_points: int = 0


@dataclass
class PoolGradients:
    """Gradients of a scalar loss through the pooling operator."""

    grad_features: np.ndarray   # (n, C) float32
    grad_alpha: float
    grad_depths: np.ndarray     # (n,) float64


def _window_offsets(radius: int):
    """Window offsets enumerated dj-major, di-minor.

    That order makes the candidate tie-break index (cand_j * nx + cand_i)
    strictly ascending along the window axis, so a stable sort on distance
    alone realizes the (distance, linear index) ordering.
    """
    r = np.arange(-radius, radius + 1, dtype=np.int64)
    oj = np.repeat(r, r.size)
    oi = np.tile(r, r.size)
    return oi, oj


def select_neighbors_batch(spec: BevGridSpec, positions: np.ndarray, k: int):
    """Top-k nearest in-lattice cell centers for every query position.

    Returns (cells, dist2, valid): (n, k) int64 flat map cells (i * ny + j,
    -1 where invalid), (n, k) float64 squared distances, (n, k) bool mask.
    Every point receives exactly min(k, nx * ny) valid entries, matching a
    brute-force scan over all lattice cells.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    out_cells = np.full((n, k), -1, dtype=np.int64)
    out_dist2 = np.full((n, k), np.inf, dtype=np.float64)
    out_valid = np.zeros((n, k), dtype=bool)
    if n == 0:
        return out_cells, out_dist2, out_valid

    base, _ = locate_cells(spec, positions)
    bi = np.clip(base[:, 0], 0, spec.nx - 1)
    bj = np.clip(base[:, 1], 0, spec.ny - 1)
    px = positions[:, 0]
    py = positions[:, 1]
    need = min(k, spec.num_cells)

    todo = np.arange(n, dtype=np.int64)
    radius = math.ceil(math.sqrt(k)) + 1
    while todo.size:
        unresolved = []
        window = (2 * radius + 1) ** 2
        block = max(1, _CANDIDATE_BUDGET // window)
        for lo in range(0, todo.size, block):
            rows = todo[lo:lo + block]
            done = _select_block(
                spec, px[rows], py[rows], bi[rows], bj[rows], radius, k, need,
                out_cells, out_dist2, out_valid, rows,
            )
            if not done.all():
                unresolved.append(rows[~done])
        todo = np.concatenate(unresolved) if unresolved else np.empty(0, dtype=np.int64)
        radius *= 2
    return out_cells, out_dist2, out_valid


def _select_block(spec, px, py, bi, bj, radius, k, need,
                  out_cells, out_dist2, out_valid, rows):
    """One windowed search pass; writes resolved rows, returns done mask."""
    oi, oj = _window_offsets(radius)
    ci = bi[:, None] + oi[None, :]
    cj = bj[:, None] + oj[None, :]
    ok = (ci >= 0) & (ci < spec.nx) & (cj >= 0) & (cj < spec.ny)
    dx = px[:, None] - (spec.origin_x + ci * spec.cell_size)
    dy = py[:, None] - (spec.origin_y + cj * spec.cell_size)
    d2 = dx * dx + dy * dy
    d2[~ok] = np.inf

    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    top_d2 = np.take_along_axis(d2, order, axis=1)
    top_ci = np.take_along_axis(ci, order, axis=1)
    top_cj = np.take_along_axis(cj, order, axis=1)

    # The window is sufficient when it already holds `need` candidates and
    # the need-th distance is no larger than the nearest cell center that
    # could exist just outside the window on any side.
    count = ok.sum(axis=1)
    cell = spec.cell_size
    gap_l = np.where(bi - radius - 1 >= 0,
                     px - (spec.origin_x + (bi - radius - 1) * cell), np.inf)
    gap_r = np.where(bi + radius + 1 <= spec.nx - 1,
                     (spec.origin_x + (bi + radius + 1) * cell) - px, np.inf)
    gap_b = np.where(bj - radius - 1 >= 0,
                     py - (spec.origin_y + (bj - radius - 1) * cell), np.inf)
    gap_t = np.where(bj + radius + 1 <= spec.ny - 1,
                     (spec.origin_y + (bj + radius + 1) * cell) - py, np.inf)
    gap = np.minimum(np.minimum(gap_l, gap_r), np.minimum(gap_b, gap_t))
    done = (count >= need) & (top_d2[:, need - 1] <= gap * gap)

    if done.any():
        sel = rows[done]
        valid = top_d2[done] < np.inf
        flat = top_ci[done] * spec.ny + top_cj[done]
        flat[~valid] = -1
        out_cells[sel] = flat
        out_dist2[sel] = top_d2[done]
        out_valid[sel] = valid
    return done


def select_neighbors(spec: BevGridSpec, p, k: int) -> NeighborSet:
    """Top-k nearest in-lattice cells for a single BEV point."""
    pos = np.asarray([p], dtype=np.float64).reshape(1, 2)
    cells, dist2, valid = select_neighbors_batch(spec, pos, k)
    m = int(valid[0].sum())
    flat = cells[0, :m]
    ij = np.stack([flat // spec.ny, flat % spec.ny], axis=1)
    return NeighborSet(cells=ij, distances=np.sqrt(dist2[0, :m]))


def snap_cells(spec: BevGridSpec, positions: np.ndarray):
    """Nearest-center cell per point, with exact boundary ties resolved
    the same way as select_neighbors' rank-0 entry (smaller linear index).

    Returns (flat_cells (n,) int64 valued i * ny + j, inside (n,) bool).
    Points whose rounded cell falls outside the lattice are marked outside.
    """
    positions = np.asarray(positions, dtype=np.float64)
    base, inside = locate_cells(spec, positions)
    offs = (positions - np.array([spec.origin_x, spec.origin_y])) / spec.cell_size
    # An exact .5 fraction means two centers tie; the smaller index wins.
    shifted = offs + 0.5
    tie = shifted == np.floor(shifted)
    fixed = base.copy()
    fixed[:, 0] -= (tie[:, 0] & (base[:, 0] >= 1)).astype(np.int64)
    fixed[:, 1] -= (tie[:, 1] & (base[:, 1] >= 1)).astype(np.int64)
    return fixed[:, 0] * spec.ny + fixed[:, 1], inside


def _reject_bad_features(features: np.ndarray):
    if features.size and not np.all(np.isfinite(features)):
        bad = int(np.argmax(~np.isfinite(features).all(axis=1)))
        raise NumericError(f"non-finite feature value at point {bad}")


def _flatten_contributions(cells, valid, weights):
    """Point-major flattening of valid (point, neighbor) contribution pairs."""
    flat_mask = valid.reshape(-1)
    idx = np.flatnonzero(flat_mask)
    k = cells.shape[1] if cells.ndim == 2 else 1
    pt = idx // k
    return cells.reshape(-1)[idx], pt, weights.reshape(-1)[idx]


def _segment_tasks(n_rows, starts):
    """Split sorted contribution rows into chunks aligned to segment starts.

    Yields (row_lo, row_hi, seg_lo, seg_hi). The grouping depends only on
    _CHUNK_ROWS and the data, never on the worker count.
    """
    n_seg = starts.size
    seg_lo = 0
    while seg_lo < n_seg:
        row_lo = starts[seg_lo]
        target = row_lo + _CHUNK_ROWS
        seg_hi = int(np.searchsorted(starts, target, side="left"))
        seg_hi = max(seg_hi, seg_lo + 1)
        row_hi = starts[seg_hi] if seg_hi < n_seg else n_rows
        yield int(row_lo), int(row_hi), seg_lo, seg_hi
        seg_lo = seg_hi


def _accumulate_deterministic(cells, pt, w32, features, ncells, C, workers):
    out = np.zeros((ncells, C), dtype=np.float32)
    if cells.size == 0:
        return out
    order = np.argsort(cells, kind="stable")
    sorted_cells = cells[order]
    starts = np.flatnonzero(np.r_[True, sorted_cells[1:] != sorted_cells[:-1]])

    def run(task):
        row_lo, row_hi, seg_lo, seg_hi = task
        rows = order[row_lo:row_hi]
        prod = w32[rows, None] * features[pt[rows]]
        local = (starts[seg_lo:seg_hi] - row_lo).astype(np.intp)
        sums = np.add.reduceat(prod, local, axis=0)
        out[sorted_cells[starts[seg_lo:seg_hi]]] = sums

    tasks = list(_segment_tasks(cells.size, starts))
    if workers <= 1 or len(tasks) == 1:
        for t in tasks:
            run(t)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, tasks))
    return out


def _partial_sums(cells, pt, w32, features, C):
    """Sort-and-reduce one worker's slice; returns (unique cells, sums)."""
    order = np.argsort(cells, kind="stable")
    sorted_cells = cells[order]
    starts = np.flatnonzero(np.r_[True, sorted_cells[1:] != sorted_cells[:-1]])
    seg_cells = []
    seg_sums = []
    for row_lo, row_hi, seg_lo, seg_hi in _segment_tasks(cells.size, starts):
        rows = order[row_lo:row_hi]
        prod = w32[rows, None] * features[pt[rows]]
        local = (starts[seg_lo:seg_hi] - row_lo).astype(np.intp)
        seg_sums.append(np.add.reduceat(prod, local, axis=0))
        seg_cells.append(sorted_cells[starts[seg_lo:seg_hi]])
    return np.concatenate(seg_cells), np.concatenate(seg_sums, axis=0)


def _accumulate_fast(cells, pt, w32, features, ncells, C, workers):
    out = np.zeros((ncells, C), dtype=np.float32)
    if cells.size == 0:
        return out
    workers = max(1, workers)
    bounds = np.linspace(0, cells.size, workers + 1).astype(np.int64)
    slices = [slice(bounds[i], bounds[i + 1]) for i in range(workers)
              if bounds[i + 1] > bounds[i]]
    if len(slices) == 1:
        seg_cells, sums = _partial_sums(cells, pt, w32, features, C)
        out[seg_cells] += sums
        return out
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_partial_sums, cells[s], pt[s], w32[s], features, C)
                for s in slices]
        for fut in as_completed(futs):
            seg_cells, sums = fut.result()
            out[seg_cells] += sums
    return out


def _accumulate_reference(cells, valid, weights, features, ncells, C):
    """Serial float64 oracle: fixed point-major, neighbor-minor order."""
    out = np.zeros((ncells, C), dtype=np.float64)
    feats64 = features.astype(np.float64)
    m, k = cells.shape
    for t in range(m):
        for c in range(k):
            if valid[t, c]:
                out[cells[t, c]] += weights[t, c] * feats64[t]
    return out


def spread_pool_forward(
    batch: FrustumBatch,
    spec: BevGridSpec,
    params: WeightParams,
    k: int,
    mode: ExecMode = ExecMode.DETERMINISTIC,
    workers: int = 1,
) -> BevFeatureMap:
    """Spread each point's feature into its top-k nearest cells.

    Output cell (i, j) accumulates omega(p, cell) * feature(p) over every
    point p that selected it. Points whose rounded cell falls outside the
    lattice are dropped and counted in ``dropped_points``. Weights are not
    normalized per point; total mass grows with the per-point weight sums.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    _reject_bad_features(batch.features)
    C = batch.num_channels
    ncells = spec.num_cells

    _, inside = locate_cells(spec, batch.positions)
    kept = np.flatnonzero(inside)
    dropped = batch.n - kept.size

    cells, dist2, valid = select_neighbors_batch(spec, batch.positions[kept], k)
    s2, clamped = sigma_sq_array(params, batch.depths[kept])
    w = weights_from_dist2(params, np.where(valid, dist2, 0.0), s2)
    w[~valid] = 0.0

    saved = SavedForBackward(
        spec=spec, params=params, k=k, n=batch.n, num_channels=C,
        kept=kept, cells=cells, valid=valid, dist2=dist2,
        weights=w, sigma2=s2, clamped=clamped,
    )

    feats = batch.features[kept]
    if mode is ExecMode.REFERENCE:
        data = _accumulate_reference(cells, valid, w, feats, ncells, C)
    else:
        flat_cells, pt, flat_w = _flatten_contributions(cells, valid, w)
        w32 = flat_w.astype(np.float32)
        if mode is ExecMode.DETERMINISTIC:
            data = _accumulate_deterministic(flat_cells, pt, w32, feats, ncells, C, workers)
        else:
            data = _accumulate_fast(flat_cells, pt, w32, feats, ncells, C, workers)
    return BevFeatureMap(data.reshape(spec.nx, spec.ny, C), saved, dropped)


def baseline_pool(batch: FrustumBatch, spec: BevGridSpec, workers: int = 1) -> BevFeatureMap:
    """Original voxel pooling: snap each point to its nearest cell center.

    Equivalent to spread pooling with k=1 and the Delta kind; implemented as
    an independent snap-and-accumulate path so the degeneracy is a real
    check rather than a tautology.
    """
    _reject_bad_features(batch.features)
    C = batch.num_channels
    flat, inside = snap_cells(spec, batch.positions)
    kept = np.flatnonzero(inside)
    cells = flat[kept]
    ones = np.ones(kept.size, dtype=np.float32)
    pt = np.arange(kept.size, dtype=np.int64)
    data = _accumulate_deterministic(cells, pt, ones, batch.features[kept],
                                     spec.num_cells, C, workers)
    return BevFeatureMap(data.reshape(spec.nx, spec.ny, C), None, batch.n - kept.size)


def pool_reference(batch: FrustumBatch, spec: BevGridSpec, params: WeightParams,
                   k: int) -> BevFeatureMap:
    """Serial double-precision oracle with fixed iteration order."""
    return spread_pool_forward(batch, spec, params, k, mode=ExecMode.REFERENCE)


def spread_pool_backward(
    grad_bev: np.ndarray,
    saved: SavedForBackward,
    batch: FrustumBatch,
    params: WeightParams,
    workers: int = 1,
) -> PoolGradients:
    """Analytic gradients of a scalar loss through the forward pass.

    grad_features[p] = sum_neighbors omega * grad_bev[cell]; alpha and depth
    gradients flow through d(omega)/d(sigma^2) with the chain rule on
    sigma^2 = alpha * depth, and are zero wherever the variance clamp was
    active. Point positions and neighbor membership are constants.

    Point blocks are independent (disjoint output rows); grad_alpha partial
    sums combine in fixed block order, so results do not depend on the
    worker count.
    """
    grad_bev = np.asarray(grad_bev)
    spec = saved.spec
    expected = (spec.nx, spec.ny, saved.num_channels)
    if grad_bev.shape != expected:
        raise DomainError(f"grad_bev shape {grad_bev.shape} != map shape {expected}")
    if batch.n != saved.n or batch.num_channels != saved.num_channels:
        raise DomainError("batch does not match the saved forward context")

    g_flat = grad_bev.reshape(-1, saved.num_channels).astype(np.float64)
    grad_features = np.zeros((saved.n, saved.num_channels), dtype=np.float32)
    grad_depths = np.zeros(saved.n, dtype=np.float64)
    kept = saved.kept

    def run(lo: int, hi: int) -> float:
        cells = np.where(saved.valid[lo:hi], saved.cells[lo:hi], 0)
        g = g_flat[cells]                                   # (m, k, C)
        g[~saved.valid[lo:hi]] = 0.0
        w = saved.weights[lo:hi]
        grad_features[kept[lo:hi]] = np.einsum("mk,mkc->mc", w, g).astype(np.float32)

        ds2 = weight_sigma2_grad_from_dist2(params, saved.dist2[lo:hi], saved.sigma2[lo:hi])
        ds2[~saved.valid[lo:hi]] = 0.0
        feats64 = batch.features[kept[lo:hi]].astype(np.float64)
        dot = np.einsum("mc,mkc->mk", feats64, g)
        gsum = (dot * ds2).sum(axis=1)
        unclamped = ~saved.clamped[lo:hi]
        grad_depths[kept[lo:hi]] = np.where(unclamped, gsum * params.alpha, 0.0)
        return float((gsum * batch.depths[kept[lo:hi]])[unclamped].sum())

    block = max(1, _CHUNK_ROWS // max(1, saved.k))
    bounds = [(lo, min(lo + block, kept.size)) for lo in range(0, kept.size, block)]
    if workers <= 1 or len(bounds) <= 1:
        partials = [run(lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda b: run(*b), bounds))
    grad_alpha = float(np.sum(partials)) if partials else 0.0
    return PoolGradients(grad_features, grad_alpha, grad_depths)
