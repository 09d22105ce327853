"""BEV lattice definition and camera-to-ground geometry.

All geometry runs in double precision so that position errors stay far below
the single-precision feature accumulation done by the pooling kernels.
Every function here is pure and safe to call from concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "BevGridSpec",
    "CameraModel",
    "bev_project",
    "grid_center",
    "locate_cell",
    "locate_cells",
    "project_pixel_to_3d",
]


@dataclass(frozen=True)
class BevGridSpec:
    """Regular BEV lattice: cell (0, 0)'s center sits at (origin_x, origin_y).

    Cell (i, j) has its center at origin + (i, j) * cell_size. Indexing is
    corner-origin; a perception range like 0-100 m is expressed through
    origin and cell counts.
    """

    origin_x: float
    origin_y: float
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.cell_size > 0.0 and np.isfinite(self.cell_size)):
            raise ConfigError(f"cell_size must be positive, got {self.cell_size}")
        if self.nx < 1 or self.ny < 1:
            raise ConfigError(f"grid needs nx >= 1 and ny >= 1, got {self.nx}x{self.ny}")

    @property
    def num_cells(self) -> int:
        return self.nx * self.ny

    def linear_index(self, i, j):
        """Tie-breaking linear cell index: x varies fastest (j * nx + i)."""
        return j * self.nx + i

    def centers_x(self) -> np.ndarray:
        return self.origin_x + self.cell_size * np.arange(self.nx, dtype=np.float64)

    def centers_y(self) -> np.ndarray:
        return self.origin_y + self.cell_size * np.arange(self.ny, dtype=np.float64)


def grid_center(spec: BevGridSpec, i: int, j: int) -> tuple[float, float]:
    """Center of cell (i, j) in meters."""
    if not (0 <= i < spec.nx and 0 <= j < spec.ny):
        raise DomainError(f"cell ({i}, {j}) outside {spec.nx}x{spec.ny} lattice")
    return (spec.origin_x + i * spec.cell_size, spec.origin_y + j * spec.cell_size)


def locate_cell(spec: BevGridSpec, x: float, y: float) -> tuple[int, int] | None:
    """Cell whose center is nearest along each axis, or None outside the lattice.

    Rounds (p - origin) / cell_size to the nearest integer; an exact .5
    fraction rounds toward +inf on each axis so boundary points map
    deterministically. Out-of-range points are an expected None (the caller
    drops them from pooling), not an error.
    """
    i = int(np.floor((x - spec.origin_x) / spec.cell_size + 0.5))
    j = int(np.floor((y - spec.origin_y) / spec.cell_size + 0.5))
    if 0 <= i < spec.nx and 0 <= j < spec.ny:
        return (i, j)
    return None


def locate_cells(spec: BevGridSpec, positions: np.ndarray):
    """Vectorized locate_cell.

    Args:
        positions: (n, 2) float64 BEV positions.
    Returns:
        (cells, inside): (n, 2) int64 rounded cell indices (unclipped) and an
        (n,) bool mask of points whose rounded cell lies inside the lattice.
    """
    positions = np.asarray(positions, dtype=np.float64)
    offs = (positions - np.array([spec.origin_x, spec.origin_y])) / spec.cell_size
    cells = np.floor(offs + 0.5).astype(np.int64)
    inside = (
        (cells[:, 0] >= 0)
        & (cells[:, 0] < spec.nx)
        & (cells[:, 1] >= 0)
        & (cells[:, 1] < spec.ny)
    )
    return cells, inside


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: 3x3 intrinsics K and 3x4 extrinsics E = [R | t]."""

    intrinsics: np.ndarray
    extrinsics: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=np.float64)
        E = np.asarray(self.extrinsics, dtype=np.float64)
        if K.shape != (3, 3):
            raise ConfigError(f"intrinsics must be 3x3, got {K.shape}")
        if E.shape != (3, 4):
            raise ConfigError(f"extrinsics must be 3x4, got {E.shape}")
        if K[0, 0] == 0.0 or K[1, 1] == 0.0:
            raise ConfigError("intrinsics need nonzero focal entries K[0,0], K[1,1]")
        if abs(np.linalg.det(K)) < 1e-12:
            raise ConfigError("intrinsics matrix is not invertible")
        R = E[:, :3]
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6):
            raise ConfigError("extrinsics rotation block is not orthonormal")
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "extrinsics", E)


def project_pixel_to_3d(cam: CameraModel, u: float, v: float, depth: float) -> tuple[float, float, float]:
    """Lift pixel (u, v) at the given depth into the ego/ground frame.

    Applies K^-1 * (u, v, 1) * depth to reach the camera frame, then the
    inverse rigid transform of E = [R | t].
    """
    if not depth > 0.0:
        raise DomainError(f"depth must be positive, got {depth}")
    K = cam.intrinsics
    R = cam.extrinsics[:, :3]
    t = cam.extrinsics[:, 3]
    cam_pt = np.linalg.solve(K, np.array([u, v, 1.0], dtype=np.float64)) * depth
    world = R.T @ (cam_pt - t)
    return (float(world[0]), float(world[1]), float(world[2]))


def bev_project(p) -> tuple[float, float]:
    """Drop the z coordinate: (x, y, z) -> (x, y)."""
    return (float(p[0]), float(p[1]))
