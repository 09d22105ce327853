/**
 * Little-endian binary containers shared with the kernel CLI.
 *
 * SPRD scene:     "SPRD" u16 version, u64 n, u32 C,
 *                 n * (f64, f64) positions, n * f64 depths, n*C * f32 features
 * SPRB map:       "SPRB" u16 version, u32 nx, u32 ny, u32 C, nx*ny*C * f32
 * SPGR gradients: "SPGR" u16 version, u64 n, u32 C, f64 gradAlpha,
 *                 n * f64 depth grads, n*C * f32 feature grads
 *
 * Writers never duplicate caller buffers: sceneViews() wraps the caller's
 * typed arrays as zero-copy views and writeScene() hands exactly those to a
 * vectored write. Readers read payloads straight into freshly allocated
 * typed arrays (the 18/26-byte headers leave payloads unaligned, so views
 * into the raw file buffer are not possible for f64/f32 data).
 */

import * as fs from "node:fs";

import { ArgumentError, KernelIOError } from "./errors.js";

export const FORMAT_VERSION = 1;

export interface SceneBuffers {
  /** (n, 2) row-major point positions in meters. */
  positions: Float64Array;
  /** (n,) per-point depths in meters. */
  depths: Float64Array;
  /** (n, C) row-major context features. */
  features: Float32Array;
  channels: number;
}

export interface BevMap {
  nx: number;
  ny: number;
  channels: number;
  /** (nx, ny, C) row-major map values. */
  data: Float32Array;
}

export interface Gradients {
  gradAlpha: number;
  gradDepths: Float64Array;
  gradFeatures: Float32Array;
  channels: number;
}

export function pointCount(buffers: SceneBuffers): number {
  return buffers.depths.length;
}

export function validateScene(buffers: SceneBuffers): void {
  const n = buffers.depths.length;
  const c = buffers.channels;
  if (!Number.isInteger(c) || c < 1) {
    throw new ArgumentError(`channels must be a positive integer, got ${c}`);
  }
  if (!(buffers.positions instanceof Float64Array)) {
    throw new ArgumentError("positions must be a Float64Array");
  }
  if (!(buffers.depths instanceof Float64Array)) {
    throw new ArgumentError("depths must be a Float64Array");
  }
  if (!(buffers.features instanceof Float32Array)) {
    throw new ArgumentError("features must be a Float32Array");
  }
  if (buffers.positions.length !== 2 * n) {
    throw new ArgumentError(
      `positions has ${buffers.positions.length} values, expected ${2 * n} for n=${n}`,
    );
  }
  if (buffers.features.length !== n * c) {
    throw new ArgumentError(
      `features has ${buffers.features.length} values, expected ${n * c} for n=${n}, C=${c}`,
    );
  }
}

/** Zero-copy Buffer over a typed array's memory (no data duplication). */
export function viewOf(a: ArrayBufferView): Buffer {
  return Buffer.from(a.buffer as ArrayBuffer, a.byteOffset, a.byteLength);
}

function sceneHeader(n: number, channels: number): Buffer {
  const header = Buffer.alloc(18);
  header.write("SPRD", 0, "ascii");
  header.writeUInt16LE(FORMAT_VERSION, 4);
  header.writeBigUInt64LE(BigInt(n), 6);
  header.writeUInt32LE(channels, 14);
  return header;
}

/**
 * The exact views a scene write hands to the OS, in file order. The
 * position/depth/feature entries alias the caller's memory; tests pin this
 * with pointer-identity checks.
 */
export function sceneViews(buffers: SceneBuffers): Buffer[] {
  validateScene(buffers);
  return [
    sceneHeader(pointCount(buffers), buffers.channels),
    viewOf(buffers.positions),
    viewOf(buffers.depths),
    viewOf(buffers.features),
  ];
}

export function writeScene(path: string, buffers: SceneBuffers): void {
  const views = sceneViews(buffers);
  let fd: number;
  try {
    fd = fs.openSync(path, "w");
  } catch (err) {
    throw new KernelIOError(`cannot open ${path} for writing: ${err}`);
  }
  try {
    fs.writevSync(fd, views);
  } finally {
    fs.closeSync(fd);
  }
}

export function writeMap(path: string, map: BevMap): void {
  if (map.data.length !== map.nx * map.ny * map.channels) {
    throw new ArgumentError(
      `map data has ${map.data.length} values, expected ${map.nx * map.ny * map.channels}`,
    );
  }
  const header = Buffer.alloc(18);
  header.write("SPRB", 0, "ascii");
  header.writeUInt16LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(map.nx, 6);
  header.writeUInt32LE(map.ny, 10);
  header.writeUInt32LE(map.channels, 14);
  const fd = fs.openSync(path, "w");
  try {
    fs.writevSync(fd, [header, viewOf(map.data)]);
  } finally {
    fs.closeSync(fd);
  }
}

function readExact(fd: number, target: ArrayBufferView, position: number, path: string): void {
  const got = fs.readSync(fd, viewOf(target), 0, target.byteLength, position);
  if (got !== target.byteLength) {
    throw new KernelIOError(`${path}: short read (${got} of ${target.byteLength} bytes)`);
  }
}

function checkHeader(path: string, header: Buffer, magic: string): void {
  if (header.toString("ascii", 0, 4) !== magic) {
    throw new KernelIOError(`${path}: bad magic ${header.toString("ascii", 0, 4)}`);
  }
  const version = header.readUInt16LE(4);
  if (version !== FORMAT_VERSION) {
    throw new KernelIOError(`${path}: unsupported version ${version}`);
  }
}

/** Read a SPRB map; payload lands directly in one new Float32Array. */
export function readMap(path: string, out?: Float32Array): BevMap {
  let fd: number;
  try {
    fd = fs.openSync(path, "r");
  } catch (err) {
    throw new KernelIOError(`cannot open ${path}: ${err}`);
  }
  try {
    const header = Buffer.alloc(18);
    readExact(fd, header, 0, path);
    checkHeader(path, header, "SPRB");
    const nx = header.readUInt32LE(6);
    const ny = header.readUInt32LE(10);
    const channels = header.readUInt32LE(14);
    const count = nx * ny * channels;
    if (out !== undefined && out.length !== count) {
      throw new ArgumentError(`out has ${out.length} values, map needs ${count}`);
    }
    const data = out ?? new Float32Array(count);
    readExact(fd, data, 18, path);
    return { nx, ny, channels, data };
  } finally {
    fs.closeSync(fd);
  }
}

/** Read a SPGR gradient file. */
export function readGradients(path: string): Gradients {
  let fd: number;
  try {
    fd = fs.openSync(path, "r");
  } catch (err) {
    throw new KernelIOError(`cannot open ${path}: ${err}`);
  }
  try {
    const header = Buffer.alloc(26);
    readExact(fd, header, 0, path);
    checkHeader(path, header, "SPGR");
    const n = Number(header.readBigUInt64LE(6));
    const channels = header.readUInt32LE(14);
    const gradAlpha = header.readDoubleLE(18);
    const gradDepths = new Float64Array(n);
    readExact(fd, gradDepths, 26, path);
    const gradFeatures = new Float32Array(n * channels);
    readExact(fd, gradFeatures, 26 + 8 * n, path);
    return { gradAlpha, gradDepths, gradFeatures, channels };
  } finally {
    fs.closeSync(fd);
  }
}
