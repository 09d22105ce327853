"""Latency benchmarking and ablation sweeps.

Timing methodology: the pooling call is timed in isolation (scene already in
memory), with warmup repetitions before the measured ones, on a monotonic
clock; the table reports median and p95 over the measured reps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import BevGridSpec
from .pool import ExecMode, FrustumBatch, baseline_pool, spread_pool_forward
from .recovery import run_recovery_experiment
from .scene import gen_scene
from .weights import WeightKind, WeightParams

__all__ = ["BenchConfig", "REFERENCE_LATENCY_MS", "ablate", "bench_pooling"]

# Published pooling-only latencies for a GPU implementation of the same
# operator (milliseconds at n ~ 1e6, C = 80). Embedded in report headers as
# context; absolute numbers are hardware-specific and never asserted.
REFERENCE_LATENCY_MS = {1: 0.8, 2: 4.9, 3: 7.7, 6: 15.3}


@dataclass
class BenchConfig:
    """Benchmark sweep configuration."""

    spec: BevGridSpec
    n: int = 1_000_000
    channels: int = 80
    k_list: list[int] = field(default_factory=lambda: [1, 2, 3, 6])
    kinds: list[WeightKind] = field(default_factory=lambda: [WeightKind.GAUSSIAN])
    modes: list[ExecMode] = field(default_factory=lambda: [ExecMode.FAST, ExecMode.DETERMINISTIC])
    workers_list: list[int] = field(default_factory=lambda: [1])
    reps: int = 3
    warmup: int = 2
    seed: int = 0
    alpha: float = 0.02
    sigma_min: float = 1e-3
    sigma_max: float = 2.0
    depth_range: tuple[float, float] = (1.0, 100.0)

    def __post_init__(self):
        if self.reps < 3:
            raise ConfigError(f"reps must be >= 3, got {self.reps}")
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if not self.k_list or any(k < 1 for k in self.k_list):
            raise ConfigError(f"every k must be >= 1, got {self.k_list}")
        if not self.workers_list or any(w < 1 for w in self.workers_list):
            raise ConfigError(f"every worker count must be >= 1, got {self.workers_list}")

    def weight_params(self, kind: WeightKind) -> WeightParams:
        return WeightParams(kind=kind, alpha=self.alpha,
                            sigma_min=self.sigma_min, sigma_max=self.sigma_max)


def _timed_ms(fn, warmup: int, reps: int) -> tuple[float, float]:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(samples)), float(np.percentile(samples, 95))


def bench_pooling(batch: FrustumBatch, config: BenchConfig):
    """Per (kind, k, mode, workers) pooling latency table.

    Returns (columns, rows, comments) ready for reportio.write_report. The
    k=1 Delta snap baseline is included as mode "baseline".
    """
    spec = config.spec
    columns = ["kind", "k", "mode", "workers", "reps", "median_ms", "p95_ms"]
    comments = [
        f"n={batch.n} channels={batch.num_channels} grid={spec.nx}x{spec.ny} "
        f"cell={spec.cell_size} seed={config.seed}",
        "reference pooling-only latency of a published GPU kernel (ms), "
        "context only: " + ", ".join(f"k={k}: {v}" for k, v in REFERENCE_LATENCY_MS.items()),
        "timing: median/p95 over reps after warmup, monotonic clock, "
        "scene preloaded",
    ]
    rows = []
    med, p95 = _timed_ms(lambda: baseline_pool(batch, spec), config.warmup, config.reps)
    rows.append({"kind": WeightKind.DELTA.value, "k": 1, "mode": "baseline",
                 "workers": 1, "reps": config.reps,
                 "median_ms": f"{med:.3f}", "p95_ms": f"{p95:.3f}"})
    for kind in config.kinds:
        params = config.weight_params(kind)
        for mode in config.modes:
            for workers in config.workers_list:
                for k in config.k_list:
                    med, p95 = _timed_ms(
                        lambda: spread_pool_forward(batch, spec, params, k, mode, workers),
                        config.warmup, config.reps)
                    rows.append({"kind": kind.value, "k": k, "mode": mode.value,
                                 "workers": workers, "reps": config.reps,
                                 "median_ms": f"{med:.3f}", "p95_ms": f"{p95:.3f}"})
    return columns, rows, comments


def _spec_for_cell_size(base: BevGridSpec, cell_size: float) -> BevGridSpec:
    """Rescale the lattice to a new cell size over the same spatial extent."""
    extent_x = base.cell_size * base.nx
    extent_y = base.cell_size * base.ny
    nx = max(2, int(round(extent_x / cell_size)))
    ny = max(2, int(round(extent_y / cell_size)))
    return BevGridSpec(base.origin_x, base.origin_y, cell_size, nx, ny)


def ablate(config: BenchConfig, grid_sizes: list[float], samples: int,
           sigma2: float):
    """Recovery MSE and pooling latency over {kind x k x grid size}.

    Recovery decodes positions from the weights each kind emits; Linear/L2
    lose information wherever a neighbor falls outside their support, so
    boundary-heavy settings separate the kinds. Delta never carries distance
    information and reports the snap quantization error regardless of
    sigma^2.
    """
    if not grid_sizes or any(g <= 0 for g in grid_sizes):
        raise ConfigError(f"grid sizes must be positive, got {grid_sizes}")
    if samples < 1:
        raise ConfigError(f"samples must be >= 1, got {samples}")
    columns = ["kind", "k", "grid_size", "samples", "failures", "mse", "median_ms"]
    comments = [
        f"recovery sigma2={sigma2} samples={samples} seed={config.seed}; "
        f"mse in squared position units",
        f"latency scene: n={config.n} channels={config.channels} mode=fast",
    ]
    rows = []
    for cell_size in grid_sizes:
        spec = _spec_for_cell_size(config.spec, cell_size)
        scene = gen_scene(spec, config.n, config.channels, config.seed,
                          config.depth_range)
        for kind in config.kinds:
            params = config.weight_params(kind)
            for k in config.k_list:
                report = run_recovery_experiment(
                    spec, [k], samples, sigma2, config.seed, kind)
                row = report.rows[0]
                med, _ = _timed_ms(
                    lambda: spread_pool_forward(scene.batch, spec, params, k,
                                                ExecMode.FAST, config.workers_list[0]),
                    config.warmup, config.reps)
                rows.append({"kind": kind.value, "k": k, "grid_size": cell_size,
                             "samples": row.samples, "failures": row.failures,
                             "mse": f"{row.mse:.6e}", "median_ms": f"{med:.3f}"})
    return columns, rows, comments
