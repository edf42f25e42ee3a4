/**
 * Pooling-matrix construction from point correspondences.
 *
 * Every float operation mirrors the native builder exactly: left-to-right
 * projection arithmetic, floor-then-integer-divide binning, a canonical
 * (row, col, weight) sort, ordered float64 merge sums, and a final
 * float64-divide + float32-round of each weight.  Serializing the result
 * therefore reproduces the native matrix byte for byte.
 */

import { nonFiniteValue, viewMismatch } from "./errors.js";
import { BevSpec, FrontViewSpec, ViewSpec } from "./views.js";

export type Direction = "fv2bev" | "bev2fv";
export type Kernel = "nearest" | "bilinear";

export interface PoolingMatrix {
  readonly nTarget: number;
  readonly nSource: number;
  readonly direction: Direction;
  readonly rowOffsets: Uint32Array; // nTarget + 1
  readonly colIndices: Uint32Array; // nnz
  readonly weights: Float32Array;   // nnz
  readonly pointsInView: number;
}

export const nnzOf = (m: PoolingMatrix): number => m.colIndices.length;

function canonicalCsr(
  t: number[], s: number[], w: number[], nTarget: number,
): { rowOffsets: Uint32Array; colIndices: Uint32Array; weights: Float32Array } {
  const order = t.map((_, i) => i);
  order.sort((a, b) => t[a] - t[b] || s[a] - s[b] || (w[a] < w[b] ? -1 : w[a] > w[b] ? 1 : 0));

  const gT: number[] = [];
  const gS: number[] = [];
  const gW: number[] = [];
  for (const e of order) {
    const last = gT.length - 1;
    if (last >= 0 && gT[last] === t[e] && gS[last] === s[e]) {
      gW[last] += w[e];
    } else {
      gT.push(t[e]);
      gS.push(s[e]);
      gW.push(w[e]);
    }
  }

  const rowSum = new Float64Array(nTarget);
  for (let g = 0; g < gT.length; g++) rowSum[gT[g]] += gW[g];

  const weights = new Float32Array(gW.length);
  const colIndices = new Uint32Array(gS.length);
  const rowOffsets = new Uint32Array(nTarget + 1);
  for (let g = 0; g < gT.length; g++) {
    weights[g] = gW[g] / rowSum[gT[g]]; // float64 divide, float32 round on store
    colIndices[g] = gS[g];
    rowOffsets[gT[g] + 1]++;
  }
  for (let r = 0; r < nTarget; r++) rowOffsets[r + 1] += rowOffsets[r];
  return { rowOffsets, colIndices, weights };
}

/**
 * Build the pooling matrix for one frame.
 *
 * `points` is a flat float32 buffer of (x, y, z, reflectance) records and
 * `projection` the composed 3x4 LIDAR-to-image matrix, row-major.
 */
export function buildPoolingMatrix(
  points: Float32Array,
  projection: ArrayLike<number>,
  src: ViewSpec,
  dst: ViewSpec,
  kernel: Kernel = "nearest",
): PoolingMatrix {
  if (points.length % 4 !== 0) {
    throw nonFiniteValue(`points buffer length ${points.length} is not a multiple of 4`);
  }
  if (projection.length !== 12) {
    throw viewMismatch(`projection must have 12 entries, got ${projection.length}`);
  }
  let direction: Direction;
  let front: FrontViewSpec;
  let bev: BevSpec;
  if (src.kind === "front" && dst.kind === "bev") {
    direction = "fv2bev";
    front = src;
    bev = dst;
  } else if (src.kind === "bev" && dst.kind === "front") {
    direction = "bev2fv";
    front = dst;
    bev = src;
  } else {
    throw viewMismatch("src and dst must be one front-view and one BEV spec");
  }
  const P = projection;
  const n = points.length / 4;
  const nTarget = dst.nCells;
  const nSource = src.nCells;
  const [x0, x1] = bev.xRange;
  const [y0, y1] = bev.yRange;
  const [z0, z1] = bev.zRange;

  const tEnt: number[] = [];
  const sEnt: number[] = [];
  const wEnt: number[] = [];
  let pointsInView = 0;

  for (let i = 0; i < n; i++) {
    const x = points[4 * i];
    const y = points[4 * i + 1];
    const z = points[4 * i + 2];
    if (!Number.isFinite(x) || !Number.isFinite(y) || !Number.isFinite(z)) {
      throw nonFiniteValue(`point ${i} has non-finite coordinates`);
    }

    const uw = P[0] * x + P[1] * y + P[2] * z + P[3];
    const vw = P[4] * x + P[5] * y + P[6] * z + P[7];
    const w = P[8] * x + P[9] * y + P[10] * z + P[11];
    const u = uw / w;
    const v = vw / w;

    let fRow = 0;
    let fCol = 0;
    let fOk = w > 0 && u >= 0 && u < front.widthPx && v >= 0 && v < front.heightPx;
    if (fOk) {
      fCol = Math.floor(Math.floor(u) / front.stride);
      fRow = Math.floor(Math.floor(v) / front.stride);
      fOk = fRow >= 0 && fRow < front.mapHeight && fCol >= 0 && fCol < front.mapWidth;
    }

    let bRow = 0;
    let bCol = 0;
    let bOk = x >= x0 && x < x1 && y >= y0 && y < y1 && z >= z0 && z < z1;
    if (bOk) {
      bRow = Math.floor(Math.floor((x - x0) / bev.resolution) / bev.stride);
      bCol = Math.floor(Math.floor((y - y0) / bev.resolution) / bev.stride);
      bOk = bRow >= 0 && bRow < bev.mapLength && bCol >= 0 && bCol < bev.mapWidth;
    }

    if (fOk || bOk) pointsInView++;
    if (!(fOk && bOk)) continue;

    const tFlat = direction === "fv2bev"
      ? bRow * bev.mapWidth + bCol
      : fRow * front.mapWidth + fCol;

    if (kernel === "nearest") {
      tEnt.push(tFlat);
      sEnt.push(direction === "fv2bev"
        ? fRow * front.mapWidth + fCol
        : bRow * bev.mapWidth + bCol);
      wEnt.push(1.0);
      continue;
    }

    // bilinear: continuous pre-binning coordinates of the source view
    let mRow: number;
    let mCol: number;
    let nRows: number;
    let nCols: number;
    if (direction === "fv2bev") {
      mCol = u / front.stride;
      mRow = v / front.stride;
      nRows = front.mapHeight;
      nCols = front.mapWidth;
    } else {
      mRow = ((x - x0) / bev.resolution) / bev.stride;
      mCol = ((y - y0) / bev.resolution) / bev.stride;
      nRows = bev.mapLength;
      nCols = bev.mapWidth;
    }
    const ar = mRow - 0.5;
    const ac = mCol - 0.5;
    const r0 = Math.floor(ar);
    const c0 = Math.floor(ac);
    const fr = ar - r0;
    const fc = ac - c0;
    const wr0 = 1.0 - fr;
    const wc0 = 1.0 - fc;
    const neighbors: Array<[number, number, number]> = [
      [r0, c0, wr0 * wc0],
      [r0, c0 + 1, wr0 * fc],
      [r0 + 1, c0, fr * wc0],
      [r0 + 1, c0 + 1, fr * fc],
    ];
    for (const [rr, cc, ww] of neighbors) {
      if (rr >= 0 && rr < nRows && cc >= 0 && cc < nCols && ww > 0) {
        tEnt.push(tFlat);
        sEnt.push(rr * nCols + cc);
        wEnt.push(ww);
      }
    }
  }

  const csr = canonicalCsr(tEnt, sEnt, wEnt, nTarget);
  return { nTarget, nSource, direction, ...csr, pointsInView };
}
