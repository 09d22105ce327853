import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { kernelBin, readGradients, readMap, writeMap, writeScene } from "../src/index.js";
import type { BevMap, Gradients, GridSpec, SceneBuffers } from "../src/index.js";

/** Deterministic 32-bit RNG so test batches are reproducible. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function makeScene(seed: number, n: number, channels: number, grid: GridSpec): SceneBuffers {
  const rand = mulberry32(seed);
  const positions = new Float64Array(2 * n);
  const depths = new Float64Array(n);
  const features = new Float32Array(n * channels);
  const extX = grid.cellSize * (grid.nx - 1);
  const extY = grid.cellSize * (grid.ny - 1);
  for (let t = 0; t < n; t++) {
    positions[2 * t] = grid.originX + rand() * extX;
    positions[2 * t + 1] = grid.originY + rand() * extY;
    depths[t] = 1 + 99 * rand();
    for (let c = 0; c < channels; c++) {
      features[t * channels + c] = 2 * rand() - 1;
    }
  }
  return { positions, depths, features, channels };
}

export interface CliPoolArgs {
  grid: GridSpec;
  k: number;
  kind?: string;
  alpha?: number;
  mode?: string;
  workers?: number;
}

export function cliArgs(a: CliPoolArgs): string[] {
  return [
    "--grid-size", String(a.grid.cellSize),
    "--nx", String(a.grid.nx),
    "--ny", String(a.grid.ny),
    "--origin-x", String(a.grid.originX),
    "--origin-y", String(a.grid.originY),
    "--k", String(a.k),
    "--kind", a.kind ?? "gaussian",
    "--alpha", String(a.alpha ?? 0.02),
    "--mode", a.mode ?? "deterministic",
    "--workers", String(a.workers ?? 1),
  ];
}

/** Invoke the kernel CLI directly on a pre-staged scene file. */
export function cliPool(scenePath: string, outPath: string, a: CliPoolArgs): BevMap {
  const res = spawnSync(kernelBin(), ["pool", "--data", scenePath, ...cliArgs(a), "--out", outPath], {
    encoding: "utf8",
  });
  if (res.status !== 0) {
    throw new Error(`cli pool failed (${res.status}): ${res.stderr}`);
  }
  return readMap(outPath);
}

/** Invoke the kernel CLI's backward subcommand on freshly staged files. */
export function cliBackward(buffers: SceneBuffers, gradMap: Float32Array, a: CliPoolArgs): Gradients {
  const staged = stageScene(buffers);
  try {
    const gradPath = path.join(staged.dir, "grad.sprb");
    const outPath = path.join(staged.dir, "grads.spgr");
    writeMap(gradPath, {
      nx: a.grid.nx,
      ny: a.grid.ny,
      channels: buffers.channels,
      data: gradMap,
    });
    const res = spawnSync(
      kernelBin(),
      ["backward", "--data", staged.scenePath, "--grad", gradPath, ...cliArgs(a), "--out", outPath],
      { encoding: "utf8" },
    );
    if (res.status !== 0) {
      throw new Error(`cli backward failed (${res.status}): ${res.stderr}`);
    }
    return readGradients(outPath);
  } finally {
    cleanup(staged.dir);
  }
}

export function stageScene(buffers: SceneBuffers): { dir: string; scenePath: string } {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "spreadpool-test-"));
  const scenePath = path.join(dir, "scene.sprd");
  writeScene(scenePath, buffers);
  return { dir, scenePath };
}

export function cleanup(dir: string): void {
  fs.rmSync(dir, { recursive: true, force: true });
}

export function bytesEqual(a: Float32Array, b: Float32Array): boolean {
  if (a.length !== b.length) return false;
  const ua = new Uint8Array(a.buffer, a.byteOffset, a.byteLength);
  const ub = new Uint8Array(b.buffer, b.byteOffset, b.byteLength);
  for (let i = 0; i < ua.length; i++) {
    if (ua[i] !== ub[i]) return false;
  }
  return true;
}
