/**
 * Top-k nearest BEV cell-center lookup.
 *
 * Pure float64 arithmetic with the exact expressions the kernel uses
 * (center = origin + i * cellSize, d2 = dx*dx + dy*dy), so distances and
 * tie decisions agree bit-for-bit with the kernel's neighbor selection.
 * Ties break by ascending linear cell index, x fastest (j * nx + i).
 */

import { ArgumentError } from "./errors.js";

export interface GridSpec {
  originX: number;
  originY: number;
  cellSize: number;
  nx: number;
  ny: number;
}

export interface NeighborSet {
  /** (m, 2) flattened (i, j) pairs, m = min(k, nx * ny). */
  cells: Int32Array;
  /** (m,) distances in meters, ascending. */
  distances: Float64Array;
}

export function validateGrid(grid: GridSpec): void {
  if (!(grid.cellSize > 0) || !Number.isFinite(grid.cellSize)) {
    throw new ArgumentError(`cellSize must be positive, got ${grid.cellSize}`);
  }
  if (!Number.isInteger(grid.nx) || !Number.isInteger(grid.ny) || grid.nx < 1 || grid.ny < 1) {
    throw new ArgumentError(`grid needs integer nx, ny >= 1, got ${grid.nx}x${grid.ny}`);
  }
}

interface Candidate {
  d2: number;
  tb: number;
  i: number;
  j: number;
}

function clamp(v: number, lo: number, hi: number): number {
  return v < lo ? lo : v > hi ? hi : v;
}

export function selectNeighbors(grid: GridSpec, x: number, y: number, k: number): NeighborSet {
  validateGrid(grid);
  if (!Number.isInteger(k) || k < 1) {
    throw new ArgumentError(`k must be an integer >= 1, got ${k}`);
  }
  const need = Math.min(k, grid.nx * grid.ny);
  const bi = clamp(Math.floor((x - grid.originX) / grid.cellSize + 0.5), 0, grid.nx - 1);
  const bj = clamp(Math.floor((y - grid.originY) / grid.cellSize + 0.5), 0, grid.ny - 1);

  let radius = Math.ceil(Math.sqrt(k)) + 1;
  for (;;) {
    const candidates: Candidate[] = [];
    for (let dj = -radius; dj <= radius; dj++) {
      const j = bj + dj;
      if (j < 0 || j >= grid.ny) continue;
      const dy = y - (grid.originY + j * grid.cellSize);
      for (let di = -radius; di <= radius; di++) {
        const i = bi + di;
        if (i < 0 || i >= grid.nx) continue;
        const dx = x - (grid.originX + i * grid.cellSize);
        candidates.push({ d2: dx * dx + dy * dy, tb: j * grid.nx + i, i, j });
      }
    }
    candidates.sort((a, b) => (a.d2 !== b.d2 ? a.d2 - b.d2 : a.tb - b.tb));

    // The window is sufficient when the need-th distance cannot be beaten
    // by any cell just outside it.
    const gaps = [
      bi - radius - 1 >= 0 ? x - (grid.originX + (bi - radius - 1) * grid.cellSize) : Infinity,
      bi + radius + 1 <= grid.nx - 1
        ? grid.originX + (bi + radius + 1) * grid.cellSize - x
        : Infinity,
      bj - radius - 1 >= 0 ? y - (grid.originY + (bj - radius - 1) * grid.cellSize) : Infinity,
      bj + radius + 1 <= grid.ny - 1
        ? grid.originY + (bj + radius + 1) * grid.cellSize - y
        : Infinity,
    ];
    const gap = Math.min(...gaps);
    if (candidates.length >= need && candidates[need - 1].d2 <= gap * gap) {
      const cells = new Int32Array(2 * need);
      const distances = new Float64Array(need);
      for (let r = 0; r < need; r++) {
        cells[2 * r] = candidates[r].i;
        cells[2 * r + 1] = candidates[r].j;
        distances[r] = Math.sqrt(candidates[r].d2);
      }
      return { cells, distances };
    }
    radius *= 2;
  }
}
