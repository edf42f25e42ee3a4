/**
 * Buffer-level bindings for sparse cross-view pooling.
 *
 * The handle API is framework-agnostic: callers pass flat float32 arrays
 * with explicit shapes and get float32 arrays back.  Matrices built here
 * serialize byte-identically to ones produced by the native CLI, so the
 * two sides can exchange "SNHP" matrix files and "SNHG" feature grids.
 */

import { applyPooling, applyPoolingGrad } from "./apply.js";
import { buildPoolingMatrix, Kernel, PoolingMatrix } from "./build.js";
import { ViewSpec } from "./views.js";

export { applyPooling, applyPoolingGrad } from "./apply.js";
export { buildPoolingMatrix, nnzOf } from "./build.js";
export type { Direction, Kernel, PoolingMatrix } from "./build.js";
export { XviewError } from "./errors.js";
export { readGridBytes, writeGridBytes } from "./grid.js";
export type { FeatureGrid } from "./grid.js";
export {
  composeChain,
  parseCalibration,
  readPointCloud,
  serializeCalibration,
  writePointCloud,
} from "./kitti.js";
export type { RawCalibration } from "./kitti.js";
export { crc32, deserializeMatrix, serializeMatrix } from "./snhp.js";
export { bevView, frontView } from "./views.js";
export type { BevSpec, FrontViewSpec, ViewSpec } from "./views.js";

/** Opaque reference to a built matrix plus its shape metadata. */
export class BoundMatrixHandle {
  constructor(readonly matrix: PoolingMatrix) {}

  get nTarget(): number {
    return this.matrix.nTarget;
  }

  get nSource(): number {
    return this.matrix.nSource;
  }

  get nnz(): number {
    return this.matrix.colIndices.length;
  }
}

/**
 * Build a pooling matrix from a flat (x, y, z, reflectance) float32 buffer
 * and the composed 3x4 projection (12 row-major entries).
 */
export function bindBuild(
  points: Float32Array,
  projection: ArrayLike<number>,
  src: ViewSpec,
  dst: ViewSpec,
  kernel: Kernel = "nearest",
): BoundMatrixHandle {
  return new BoundMatrixHandle(buildPoolingMatrix(points, projection, src, dst, kernel));
}

/** Pool a (nSource, channels) buffer through the handle's matrix. */
export function bindApply(
  handle: BoundMatrixHandle, features: Float32Array, channels: number,
): Float32Array {
  return applyPooling(handle.matrix, features, channels);
}

/** Back-propagate a (nTarget, channels) gradient buffer. */
export function bindApplyGrad(
  handle: BoundMatrixHandle, grad: Float32Array, channels: number,
): Float32Array {
  return applyPoolingGrad(handle.matrix, grad, channels);
}
