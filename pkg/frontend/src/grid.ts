/**
 * Feature-grid binary format shared with the native CLI: "SNHG" magic,
 * u16 version, u32 rows/cols/channels, float32 row-major payload.
 */

import { badMagic, truncated } from "./errors.js";

const MAGIC = [0x53, 0x4e, 0x48, 0x47]; // "SNHG"
const VERSION = 1;
const HEADER_SIZE = 4 + 2 + 4 + 4 + 4;

export interface FeatureGrid {
  rows: number;
  cols: number;
  channels: number;
  values: Float32Array; // rows * cols * channels
}

export function writeGridBytes(grid: FeatureGrid): Uint8Array {
  const { rows, cols, channels, values } = grid;
  if (values.length !== rows * cols * channels) {
    throw truncated(
      `grid payload has ${values.length} floats, expected ${rows * cols * channels}`,
    );
  }
  const out = new Uint8Array(HEADER_SIZE + values.length * 4);
  const view = new DataView(out.buffer);
  out.set(MAGIC, 0);
  view.setUint16(4, VERSION, true);
  view.setUint32(6, rows, true);
  view.setUint32(10, cols, true);
  view.setUint32(14, channels, true);
  for (let i = 0; i < values.length; i++) {
    view.setFloat32(HEADER_SIZE + i * 4, values[i], true);
  }
  return out;
}

export function readGridBytes(blob: Uint8Array): FeatureGrid {
  if (blob.length < HEADER_SIZE) throw truncated("grid blob shorter than header");
  if (!MAGIC.every((b, i) => blob[i] === b)) {
    throw badMagic("grid blob does not start with SNHG");
  }
  const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  const version = view.getUint16(4, true);
  if (version !== VERSION) throw badMagic(`unsupported grid version ${version}`);
  const rows = view.getUint32(6, true);
  const cols = view.getUint32(10, true);
  const channels = view.getUint32(14, true);
  const expected = HEADER_SIZE + rows * cols * channels * 4;
  if (blob.length !== expected) {
    throw truncated(`grid blob is ${blob.length} bytes, expected ${expected}`);
  }
  const values = new Float32Array(rows * cols * channels);
  for (let i = 0; i < values.length; i++) {
    values[i] = view.getFloat32(HEADER_SIZE + i * 4, true);
  }
  return { rows, cols, channels, values };
}
