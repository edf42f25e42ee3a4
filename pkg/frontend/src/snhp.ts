/**
 * "SNHP" pooling-matrix file format, identical to the native CLI's:
 * magic, u16 version, u8 direction, u64 n_target/n_source/nnz, then
 * row offsets (u64), column indices (u32), weights (f32) and a CRC32
 * trailer.  Everything little-endian.
 */

import { badMagic, checksumMismatch, truncated } from "./errors.js";
import { Direction, PoolingMatrix } from "./build.js";

const MAGIC = [0x53, 0x4e, 0x48, 0x50]; // "SNHP"
const VERSION = 1;
const HEADER_SIZE = 4 + 2 + 1 + 8 + 8 + 8;
const DIRECTIONS: Direction[] = ["fv2bev", "bev2fv"];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let i = 0; i < 256; i++) {
    let c = i;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[i] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function serializeMatrix(m: PoolingMatrix): Uint8Array {
  const nnz = m.colIndices.length;
  const total = HEADER_SIZE + (m.nTarget + 1) * 8 + nnz * 4 + nnz * 4 + 4;
  const out = new Uint8Array(total);
  const view = new DataView(out.buffer);
  out.set(MAGIC, 0);
  view.setUint16(4, VERSION, true);
  view.setUint8(6, DIRECTIONS.indexOf(m.direction));
  view.setBigUint64(7, BigInt(m.nTarget), true);
  view.setBigUint64(15, BigInt(m.nSource), true);
  view.setBigUint64(23, BigInt(nnz), true);
  let off = HEADER_SIZE;
  for (let i = 0; i <= m.nTarget; i++, off += 8) {
    view.setBigUint64(off, BigInt(m.rowOffsets[i]), true);
  }
  for (let i = 0; i < nnz; i++, off += 4) view.setUint32(off, m.colIndices[i], true);
  for (let i = 0; i < nnz; i++, off += 4) view.setFloat32(off, m.weights[i], true);
  view.setUint32(off, crc32(out.subarray(0, off)), true);
  return out;
}

export function deserializeMatrix(blob: Uint8Array): PoolingMatrix {
  if (blob.length < HEADER_SIZE + 4) throw truncated("matrix blob shorter than header");
  if (!MAGIC.every((b, i) => blob[i] === b)) {
    throw badMagic("matrix blob does not start with SNHP");
  }
  const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  const version = view.getUint16(4, true);
  if (version !== VERSION) throw badMagic(`unsupported matrix version ${version}`);
  const dirByte = view.getUint8(6);
  if (dirByte >= DIRECTIONS.length) throw truncated(`invalid direction byte ${dirByte}`);
  const nTarget = Number(view.getBigUint64(7, true));
  const nSource = Number(view.getBigUint64(15, true));
  const nnz = Number(view.getBigUint64(23, true));
  const expected = HEADER_SIZE + (nTarget + 1) * 8 + nnz * 8 + 4;
  if (blob.length !== expected) {
    throw truncated(`matrix blob is ${blob.length} bytes, expected ${expected}`);
  }
  const stored = view.getUint32(blob.length - 4, true);
  const actual = crc32(blob.subarray(0, blob.length - 4));
  if (stored !== actual) {
    throw checksumMismatch(`CRC32 mismatch: stored ${stored}, computed ${actual}`);
  }
  let off = HEADER_SIZE;
  const rowOffsets = new Uint32Array(nTarget + 1);
  for (let i = 0; i <= nTarget; i++, off += 8) {
    rowOffsets[i] = Number(view.getBigUint64(off, true));
  }
  const colIndices = new Uint32Array(nnz);
  for (let i = 0; i < nnz; i++, off += 4) colIndices[i] = view.getUint32(off, true);
  const weights = new Float32Array(nnz);
  for (let i = 0; i < nnz; i++, off += 4) weights[i] = view.getFloat32(off, true);
  return {
    nTarget, nSource, direction: DIRECTIONS[dirByte],
    rowOffsets, colIndices, weights, pointsInView: 0,
  };
}
