/** Public surface: forward, backward, selectNeighbors, version, release. */

export {
  backward,
  forward,
  kernelBin,
  release,
  version,
  type ExecMode,
  type ForwardOpts,
  type ForwardResult,
  type SavedHandle,
  type WeightKind,
  type WeightOpts,
} from "./bindings.js";
export {
  ArgumentError,
  BindingError,
  KernelInvocationError,
  KernelIOError,
  KernelNumericError,
  LifecycleError,
} from "./errors.js";
export {
  readGradients,
  readMap,
  sceneViews,
  validateScene,
  viewOf,
  writeMap,
  writeScene,
  type BevMap,
  type Gradients,
  type SceneBuffers,
} from "./formats.js";
export { selectNeighbors, validateGrid, type GridSpec, type NeighborSet } from "./neighbors.js";
