"""Binary dataset formats and synthetic scene generation.

Three little-endian container formats:

* ``SPRD`` (source points): magic ``SPRD``, version u16, n u64, C u32, then
  n (x, y) position pairs as f64, n depths as f64, n*C features as f32.
* ``SPRB`` (BEV map): magic ``SPRB``, version u16, nx u32, ny u32, C u32,
  then nx*ny*C map values as f32, row-major over (i, j, c).
* ``SPGR`` (gradients): magic ``SPGR``, version u16, n u64, C u32,
  grad_alpha f64, n depth gradients f64, n*C feature gradients f32.

Generation is deterministic: the same seed produces a byte-identical file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DatasetIOError, DomainError
from .geometry import BevGridSpec
from .pool import FrustumBatch, PoolGradients

__all__ = [
    "SyntheticScene",
    "gen_scene",
    "read_gradients",
    "read_map",
    "read_scene",
    "scene_file_size",
    "write_gradients",
    "write_map",
    "write_scene",
]

SCENE_MAGIC = b"SPRD"
MAP_MAGIC = b"SPRB"
GRAD_MAGIC = b"SPGR"
FORMAT_VERSION = 1

_SCENE_HEADER = struct.Struct("<4sHQI")
_MAP_HEADER = struct.Struct("<4sHIII")
_GRAD_HEADER = struct.Struct("<4sHQId")


@dataclass
class SyntheticScene:
    """A generated frustum batch plus the parameters that produced it."""

    batch: FrustumBatch
    seed: int
    depth_range: tuple[float, float]


def scene_file_size(n: int, channels: int) -> int:
    """Exact SPRD file size in bytes: header + n * (16 + 8 + 4 * C)."""
    return _SCENE_HEADER.size + n * (16 + 8 + 4 * channels)


def gen_scene(
    spec: BevGridSpec,
    n: int,
    channels: int,
    seed: int,
    depth_range: tuple[float, float] = (1.0, 100.0),
) -> SyntheticScene:
    """Uniform positions over the lattice extent, uniform depths, unit
    normal features. Deterministic given the seed."""
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    if channels < 1:
        raise DomainError(f"channels must be >= 1, got {channels}")
    dmin, dmax = depth_range
    if not (0.0 < dmin <= dmax):
        raise DomainError(f"need 0 < depth-min <= depth-max, got {depth_range}")
    rng = np.random.default_rng(seed)
    lo = np.array([spec.origin_x, spec.origin_y])
    hi = lo + spec.cell_size * np.array([spec.nx - 1, spec.ny - 1])
    positions = rng.uniform(lo, hi, size=(n, 2))
    depths = rng.uniform(dmin, dmax, size=n)
    features = rng.standard_normal((n, channels), dtype=np.float32)
    return SyntheticScene(FrustumBatch(positions, depths, features), seed, (dmin, dmax))


def write_scene(path, batch: FrustumBatch) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(_SCENE_HEADER.pack(SCENE_MAGIC, FORMAT_VERSION,
                                        batch.n, batch.num_channels))
            fh.write(batch.positions.astype("<f8").tobytes())
            fh.write(batch.depths.astype("<f8").tobytes())
            fh.write(batch.features.astype("<f4").tobytes())
    except OSError as exc:
        raise DatasetIOError(f"cannot write scene to {path}: {exc}") from exc


def read_scene(path) -> FrustumBatch:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DatasetIOError(f"cannot read scene from {path}: {exc}") from exc
    if len(raw) < _SCENE_HEADER.size:
        raise DatasetIOError(f"{path}: truncated header")
    magic, version, n, channels = _SCENE_HEADER.unpack_from(raw)
    if magic != SCENE_MAGIC:
        raise DatasetIOError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetIOError(f"{path}: unsupported version {version}")
    if len(raw) != scene_file_size(n, channels):
        raise DatasetIOError(f"{path}: expected {scene_file_size(n, channels)} bytes, "
                             f"got {len(raw)}")
    off = _SCENE_HEADER.size
    positions = np.frombuffer(raw, "<f8", 2 * n, off).reshape(n, 2)
    off += 16 * n
    depths = np.frombuffer(raw, "<f8", n, off)
    off += 8 * n
    features = np.frombuffer(raw, "<f4", n * channels, off).reshape(n, channels)
    return FrustumBatch(positions.copy(), depths.copy(), features.copy())


def write_map(path, data: np.ndarray) -> None:
    if data.ndim != 3:
        raise DomainError(f"map must be (nx, ny, C), got shape {data.shape}")
    nx, ny, channels = data.shape
    try:
        with open(path, "wb") as fh:
            fh.write(_MAP_HEADER.pack(MAP_MAGIC, FORMAT_VERSION, nx, ny, channels))
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    except OSError as exc:
        raise DatasetIOError(f"cannot write map to {path}: {exc}") from exc


def read_map(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DatasetIOError(f"cannot read map from {path}: {exc}") from exc
    if len(raw) < _MAP_HEADER.size:
        raise DatasetIOError(f"{path}: truncated header")
    magic, version, nx, ny, channels = _MAP_HEADER.unpack_from(raw)
    if magic != MAP_MAGIC:
        raise DatasetIOError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetIOError(f"{path}: unsupported version {version}")
    expected = _MAP_HEADER.size + 4 * nx * ny * channels
    if len(raw) != expected:
        raise DatasetIOError(f"{path}: expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, "<f4", nx * ny * channels, _MAP_HEADER.size)
    return data.reshape(nx, ny, channels).copy()


def write_gradients(path, grads: PoolGradients) -> None:
    n, channels = grads.grad_features.shape
    try:
        with open(path, "wb") as fh:
            fh.write(_GRAD_HEADER.pack(GRAD_MAGIC, FORMAT_VERSION, n, channels,
                                       grads.grad_alpha))
            fh.write(grads.grad_depths.astype("<f8").tobytes())
            fh.write(grads.grad_features.astype("<f4").tobytes())
    except OSError as exc:
        raise DatasetIOError(f"cannot write gradients to {path}: {exc}") from exc


def read_gradients(path) -> PoolGradients:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DatasetIOError(f"cannot read gradients from {path}: {exc}") from exc
    if len(raw) < _GRAD_HEADER.size:
        raise DatasetIOError(f"{path}: truncated header")
    magic, version, n, channels, grad_alpha = _GRAD_HEADER.unpack_from(raw)
    if magic != GRAD_MAGIC:
        raise DatasetIOError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetIOError(f"{path}: unsupported version {version}")
    expected = _GRAD_HEADER.size + 8 * n + 4 * n * channels
    if len(raw) != expected:
        raise DatasetIOError(f"{path}: expected {expected} bytes, got {len(raw)}")
    off = _GRAD_HEADER.size
    grad_depths = np.frombuffer(raw, "<f8", n, off)
    off += 8 * n
    grad_features = np.frombuffer(raw, "<f4", n * channels, off).reshape(n, channels)
    return PoolGradients(grad_features.copy(), grad_alpha, grad_depths.copy())
