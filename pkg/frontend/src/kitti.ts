/**
 * KITTI calibration text and velodyne binary I/O, plus the projection-chain
 * composition.  The composition uses plain ascending-index loops so the
 * resulting doubles match the native implementation bit for bit.
 */

import {
  malformedNumber,
  missingKey,
  nonFiniteValue,
  truncatedRecord,
  wrongArity,
} from "./errors.js";

export interface RawCalibration {
  camProjection: number[][]; // 3x4 (P2)
  rectRotation: number[][];  // 3x3 (R0_rect)
  lidarToCam: number[][];    // 3x4 (Tr_velo_to_cam)
}

const EXPECTED: Record<string, number> = { P2: 12, R0_rect: 9, Tr_velo_to_cam: 12 };

function parseFloats(key: string, payload: string, expected: number): number[] {
  const tokens = payload.trim().split(/\s+/).filter((t) => t.length > 0);
  if (tokens.length !== expected) {
    throw wrongArity(`${key}: expected ${expected} floats, got ${tokens.length}`);
  }
  return tokens.map((tok) => {
    const v = Number(tok);
    if (Number.isNaN(v) && tok.toLowerCase() !== "nan") {
      throw malformedNumber(`${key}: cannot parse ${JSON.stringify(tok)}`);
    }
    if (!Number.isFinite(v)) {
      throw malformedNumber(`${key}: non-finite value ${JSON.stringify(tok)}`);
    }
    return v;
  });
}

function reshape(values: number[], rows: number, cols: number): number[][] {
  const out: number[][] = [];
  for (let i = 0; i < rows; i++) out.push(values.slice(i * cols, (i + 1) * cols));
  return out;
}

export function parseCalibration(text: string): RawCalibration {
  const rows = new Map<string, string>();
  for (const line of text.split("\n")) {
    const idx = line.indexOf(":");
    if (idx < 0) continue;
    const key = line.slice(0, idx).trim();
    if (!rows.has(key)) rows.set(key, line.slice(idx + 1));
  }
  const lookup = (...names: string[]): [string, string] => {
    for (const name of names) {
      const payload = rows.get(name);
      if (payload !== undefined) return [name, payload];
    }
    throw missingKey(`calibration line ${JSON.stringify(names[0])} not found`);
  };
  const [, p2] = lookup("P2");
  const [rectKey, rect] = lookup("R0_rect", "R_rect");
  const [, tr] = lookup("Tr_velo_to_cam");
  return {
    camProjection: reshape(parseFloats("P2", p2, EXPECTED.P2), 3, 4),
    rectRotation: reshape(parseFloats(rectKey, rect, EXPECTED.R0_rect), 3, 3),
    lidarToCam: reshape(parseFloats("Tr_velo_to_cam", tr, EXPECTED.Tr_velo_to_cam), 3, 4),
  };
}

function fmt(v: number): string {
  // KITTI-style %.12e with a two-digit exponent
  const s = v.toExponential(12);
  return s.replace(/e([+-])(\d)$/, "e$10$2");
}

export function serializeCalibration(calib: RawCalibration): string {
  const row = (key: string, mat: number[][]) =>
    `${key}: ${mat.flat().map(fmt).join(" ")}`;
  return [
    row("P2", calib.camProjection),
    row("R0_rect", calib.rectRotation),
    row("Tr_velo_to_cam", calib.lidarToCam),
  ].join("\n") + "\n";
}

function expand4(mat: number[][]): number[][] {
  const out = [
    [0, 0, 0, 0],
    [0, 0, 0, 0],
    [0, 0, 0, 0],
    [0, 0, 0, 1],
  ];
  for (let i = 0; i < mat.length; i++) {
    for (let j = 0; j < mat[i].length; j++) out[i][j] = mat[i][j];
  }
  return out;
}

function matmul(a: number[][], b: number[][]): number[][] {
  const n = a.length, k = b.length, m = b[0].length;
  const out: number[][] = [];
  for (let i = 0; i < n; i++) {
    const row = new Array<number>(m).fill(0);
    for (let j = 0; j < m; j++) {
      let acc = 0;
      for (let p = 0; p < k; p++) acc += a[i][p] * b[p][j];
      row[j] = acc;
    }
    out.push(row);
  }
  return out;
}

/** P = P2 * expand4(R0_rect) * expand4(Tr_velo_to_cam), 3x4. */
export function composeChain(calib: RawCalibration): number[][] {
  return matmul(matmul(calib.camProjection, expand4(calib.rectRotation)),
                expand4(calib.lidarToCam));
}

/** Velodyne blob -> flat Float32Array of (x, y, z, reflectance) records. */
export function readPointCloud(blob: Uint8Array): Float32Array {
  if (blob.byteLength % 16 !== 0) {
    throw truncatedRecord(`blob length ${blob.byteLength} is not a multiple of 16`);
  }
  const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  const out = new Float32Array(blob.byteLength / 4);
  for (let i = 0; i < out.length; i++) {
    const v = view.getFloat32(i * 4, true);
    if (!Number.isFinite(v)) throw nonFiniteValue(`non-finite value at float ${i}`);
    out[i] = v;
  }
  return out;
}

export function writePointCloud(points: Float32Array): Uint8Array {
  const out = new Uint8Array(points.length * 4);
  const view = new DataView(out.buffer);
  for (let i = 0; i < points.length; i++) view.setFloat32(i * 4, points[i], true);
  return out;
}
