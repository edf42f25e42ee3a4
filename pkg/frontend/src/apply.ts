/**
 * Forward pooling and its exact adjoint over flat float32 buffers.
 * Accumulation runs in float64; outputs round to float32 on store.
 */

import { shapeMismatch } from "./errors.js";
import { PoolingMatrix } from "./build.js";

/** B = M F.  `features` is (nSource, channels) row-major. */
export function applyPooling(
  m: PoolingMatrix, features: Float32Array, channels: number,
): Float32Array {
  if (features.length !== m.nSource * channels) {
    throw shapeMismatch(
      `feature buffer has ${features.length} floats, expected ${m.nSource * channels}`,
    );
  }
  const out = new Float32Array(m.nTarget * channels);
  const acc = new Float64Array(channels);
  for (let r = 0; r < m.nTarget; r++) {
    const lo = m.rowOffsets[r];
    const hi = m.rowOffsets[r + 1];
    if (hi === lo) continue;
    acc.fill(0);
    for (let e = lo; e < hi; e++) {
      const w = m.weights[e];
      const base = m.colIndices[e] * channels;
      for (let c = 0; c < channels; c++) acc[c] += w * features[base + c];
    }
    const outBase = r * channels;
    for (let c = 0; c < channels; c++) out[outBase + c] = acc[c];
  }
  return out;
}

/** M' G: gradient of B = M F with respect to F.  `grad` is (nTarget, channels). */
export function applyPoolingGrad(
  m: PoolingMatrix, grad: Float32Array, channels: number,
): Float32Array {
  if (grad.length !== m.nTarget * channels) {
    throw shapeMismatch(
      `gradient buffer has ${grad.length} floats, expected ${m.nTarget * channels}`,
    );
  }
  const acc = new Float64Array(m.nSource * channels);
  for (let r = 0; r < m.nTarget; r++) {
    const lo = m.rowOffsets[r];
    const hi = m.rowOffsets[r + 1];
    const gBase = r * channels;
    for (let e = lo; e < hi; e++) {
      const w = m.weights[e];
      const base = m.colIndices[e] * channels;
      for (let c = 0; c < channels; c++) acc[base + c] += w * grad[gBase + c];
    }
  }
  const out = new Float32Array(m.nSource * channels);
  for (let i = 0; i < acc.length; i++) out[i] = acc[i];
  return out;
}
