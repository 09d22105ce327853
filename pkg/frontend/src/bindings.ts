/**
 * Kernel bindings over contiguous typed-array buffers.
 *
 * The kernels live in the `spreadpool` package and are reached through its
 * external interfaces only: scenes are staged as SPRD files, the CLI runs
 * `pool` / `backward`, and results come back as SPRB/SPGR files. Because
 * deterministic-mode output bytes are defined by the kernel, the bindings
 * are bit-identical to invoking the CLI directly.
 *
 * forward() returns an opaque saved-context handle that backward() consumes;
 * handles own a staging directory and must be released. release() is
 * idempotent; using a released handle raises LifecycleError.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import {
  ArgumentError,
  KernelInvocationError,
  KernelIOError,
  KernelNumericError,
  LifecycleError,
} from "./errors.js";
import {
  BevMap,
  Gradients,
  SceneBuffers,
  pointCount,
  readGradients,
  readMap,
  validateScene,
  writeMap,
  writeScene,
} from "./formats.js";
import { GridSpec, validateGrid } from "./neighbors.js";

export const VERSION = "0.1.0";

/** Kernel CLI executable; override with SPREADPOOL_BIN. */
export function kernelBin(): string {
  return process.env.SPREADPOOL_BIN ?? "spreadpool";
}

export type WeightKind = "gaussian" | "linear" | "l2" | "delta";
export type ExecMode = "fast" | "deterministic" | "reference";

export interface WeightOpts {
  kind?: WeightKind;
  alpha?: number;
  sigmaMin?: number;
  sigmaMax?: number;
}

export interface ForwardOpts {
  mode?: ExecMode;
  workers?: number;
  /** Optional preallocated output of exactly nx*ny*C values. */
  out?: Float32Array;
}

export interface SavedHandle {
  dir: string;
  scenePath: string;
  args: string[];
  n: number;
  channels: number;
  nx: number;
  ny: number;
  released: boolean;
}

export interface ForwardResult {
  map: BevMap;
  handle: SavedHandle;
}

const KINDS: ReadonlySet<string> = new Set(["gaussian", "linear", "l2", "delta"]);
const MODES: ReadonlySet<string> = new Set(["fast", "deterministic", "reference"]);

function overlaps(a: ArrayBufferView, b: ArrayBufferView): boolean {
  return (
    a.buffer === b.buffer &&
    a.byteOffset < b.byteOffset + b.byteLength &&
    b.byteOffset < a.byteOffset + a.byteLength
  );
}

function checkNoAliasing(out: Float32Array, buffers: SceneBuffers): void {
  const inputs: [string, ArrayBufferView][] = [
    ["positions", buffers.positions],
    ["depths", buffers.depths],
    ["features", buffers.features],
  ];
  for (const [name, view] of inputs) {
    if (overlaps(out, view)) {
      throw new ArgumentError(`out buffer aliases input buffer ${name}`);
    }
  }
}

function runKernel(args: string[]): void {
  const res = spawnSync(kernelBin(), args, { encoding: "utf8" });
  if (res.error) {
    throw new KernelInvocationError(`cannot run ${kernelBin()}: ${res.error.message}`);
  }
  if (res.status === 0) return;
  const detail = (res.stderr || res.stdout || "").trim();
  if (res.status === 2) throw new ArgumentError(`kernel rejected configuration: ${detail}`);
  if (res.status === 3) throw new KernelIOError(`kernel i/o failure: ${detail}`);
  if (res.status === 4) throw new KernelNumericError(`kernel numeric failure: ${detail}`);
  throw new KernelInvocationError(`kernel exited with ${res.status}: ${detail}`);
}

function gridArgs(grid: GridSpec): string[] {
  return [
    "--grid-size", String(grid.cellSize),
    "--nx", String(grid.nx),
    "--ny", String(grid.ny),
    "--origin-x", String(grid.originX),
    "--origin-y", String(grid.originY),
  ];
}

/**
 * Spread-pool the scene buffers into a BEV map.
 *
 * Inputs are consumed zero-copy (the staging write reads the caller's
 * arrays directly). Returns the map and a live saved-context handle.
 */
export function forward(
  buffers: SceneBuffers,
  grid: GridSpec,
  k: number,
  weights: WeightOpts = {},
  opts: ForwardOpts = {},
): ForwardResult {
  validateScene(buffers);
  validateGrid(grid);
  if (!Number.isInteger(k) || k < 1) {
    throw new ArgumentError(`k must be an integer >= 1, got ${k}`);
  }
  const kind = weights.kind ?? "gaussian";
  if (!KINDS.has(kind)) throw new ArgumentError(`unknown weight kind ${kind}`);
  const mode = opts.mode ?? "deterministic";
  if (!MODES.has(mode)) throw new ArgumentError(`unknown mode ${mode}`);
  const workers = opts.workers ?? 1;
  if (!Number.isInteger(workers) || workers < 1) {
    throw new ArgumentError(`workers must be an integer >= 1, got ${workers}`);
  }
  if (opts.out !== undefined) {
    if (opts.out.length !== grid.nx * grid.ny * buffers.channels) {
      throw new ArgumentError(
        `out has ${opts.out.length} values, expected ${grid.nx * grid.ny * buffers.channels}`,
      );
    }
    checkNoAliasing(opts.out, buffers);
  }

  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "spreadpool-"));
  const scenePath = path.join(dir, "scene.sprd");
  const mapPath = path.join(dir, "map.sprb");
  writeScene(scenePath, buffers);

  const args = [
    ...gridArgs(grid),
    "--k", String(k),
    "--kind", kind,
    "--alpha", String(weights.alpha ?? 0.02),
    "--sigma-min", String(weights.sigmaMin ?? 1e-3),
    "--sigma-max", String(weights.sigmaMax ?? 2.0),
    "--mode", mode,
    "--workers", String(workers),
  ];
  runKernel(["pool", "--data", scenePath, ...args, "--out", mapPath]);
  const map = readMap(mapPath, opts.out);

  const handle: SavedHandle = {
    dir,
    scenePath,
    args,
    n: pointCount(buffers),
    channels: buffers.channels,
    nx: grid.nx,
    ny: grid.ny,
    released: false,
  };
  return { map, handle };
}

/**
 * Gradients of sum(gradMap * map) through the forward pass recorded by
 * `handle`. gradMap must match the forward map's (nx, ny, C) shape.
 */
export function backward(gradMap: Float32Array, handle: SavedHandle): Gradients {
  if (handle.released) {
    throw new LifecycleError("saved-context handle was already released");
  }
  if (!fs.existsSync(handle.scenePath)) {
    throw new LifecycleError("saved-context handle is stale (staging files missing)");
  }
  const expected = handle.nx * handle.ny * handle.channels;
  if (!(gradMap instanceof Float32Array)) {
    throw new ArgumentError("gradMap must be a Float32Array");
  }
  if (gradMap.length !== expected) {
    throw new ArgumentError(`gradMap has ${gradMap.length} values, expected ${expected}`);
  }
  const gradPath = path.join(handle.dir, "grad.sprb");
  const outPath = path.join(handle.dir, "grads.spgr");
  writeMap(gradPath, {
    nx: handle.nx,
    ny: handle.ny,
    channels: handle.channels,
    data: gradMap,
  });
  runKernel([
    "backward",
    "--data", handle.scenePath,
    "--grad", gradPath,
    ...handle.args,
    "--out", outPath,
  ]);
  return readGradients(outPath);
}

/** Free a handle's staging files. Safe to call any number of times. */
export function release(handle: SavedHandle): void {
  if (handle.released) return;
  handle.released = true;
  fs.rmSync(handle.dir, { recursive: true, force: true });
}

export function version(): string {
  return VERSION;
}
