/**
 * Interop acceptance: matrices built through these bindings must serialize
 * byte-identically to matrices built by the native CLI on the same inputs,
 * for 20 random frames covering both directions and kernels.  The file
 * formats (velodyne bin, calibration text, SNHP matrix, SNHG grid) are the
 * only interface between the two sides.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import {
  applyPooling,
  bevView,
  buildPoolingMatrix,
  composeChain,
  deserializeMatrix,
  frontView,
  parseCalibration,
  readGridBytes,
  readPointCloud,
  serializeCalibration,
  serializeMatrix,
  writeGridBytes,
  writePointCloud,
  type BevSpec,
  type FrontViewSpec,
  type Kernel,
  type RawCalibration,
} from "../src/index";

const REPO_ROOT = resolve(fileURLToPath(import.meta.url), "../../..");
const PYTHON_ENV = {
  ...process.env,
  PYTHONPATH: join(REPO_ROOT, "src") +
    (process.env.PYTHONPATH ? `:${process.env.PYTHONPATH}` : ""),
};

function cli(args: string[]): void {
  execFileSync("python3", ["-m", "xview.cli", ...args], {
    env: PYTHON_ENV,
    stdio: ["ignore", "ignore", "pipe"],
  });
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Clamp a double to what a %.12e calibration line can represent. */
const r12 = (v: number) => Number(v.toExponential(12));

function randomCalibration(rng: () => number, width: number, height: number): RawCalibration {
  const fx = r12(400 + rng() * 500);
  const angle = 0.002 + rng() * 0.015;
  const ax = rng() - 0.5;
  const ay = rng() - 0.5;
  const az = rng() - 0.5;
  const norm = Math.hypot(ax, ay, az) || 1;
  const [kx, ky, kz] = [ax / norm, ay / norm, az / norm];
  const s = Math.sin(angle);
  const c1 = 1 - Math.cos(angle);
  // Rodrigues rotation, rounded to calibration-file precision
  const rect = [
    [1 + c1 * (kx * kx - 1), -s * kz + c1 * kx * ky, s * ky + c1 * kx * kz],
    [s * kz + c1 * kx * ky, 1 + c1 * (ky * ky - 1), -s * kx + c1 * ky * kz],
    [-s * ky + c1 * kx * kz, s * kx + c1 * ky * kz, 1 + c1 * (kz * kz - 1)],
  ].map((row) => row.map(r12));
  return {
    camProjection: [
      [fx, 0, r12(width * (0.4 + 0.2 * rng())), r12(rng() * 50 - 25)],
      [0, fx, r12(height * (0.4 + 0.2 * rng())), r12(rng() * 2 - 1)],
      [0, 0, 1, r12(rng() * 0.01)],
    ],
    rectRotation: rect,
    lidarToCam: [
      [0, -1, 0, r12(rng() * 0.1 - 0.05)],
      [0, 0, -1, r12(-rng() * 0.2)],
      [1, 0, 0, r12(-0.2 - rng() * 0.2)],
    ],
  };
}

interface Case {
  points: Float32Array;
  calib: RawCalibration;
  front: FrontViewSpec;
  bev: BevSpec;
  direction: "fv2bev" | "bev2fv";
  kernel: Kernel;
}

function randomCase(i: number): Case {
  const rng = mulberry32(0xc0ffee + i * 7919);
  const [width, height] = [[1280, 384], [640, 192], [1242, 375]][i % 3];
  const frontStride = [1, 2, 4, 8][Math.floor(rng() * 4)];
  const bevStride = [1, 2, 4][Math.floor(rng() * 3)];
  const resolution = [0.05, 0.1, 0.2, 0.25, 0.5][Math.floor(rng() * 5)];
  const xRange: [number, number] = [[0, 40], [0, 60], [-5, 55]][i % 3] as [number, number];
  const yRange: [number, number] = [[-20, 20], [-30, 30]][i % 2] as [number, number];
  const zRange: [number, number] = [[-2.5, 1], [-2, 2], [-1.5, 1.5]][i % 3] as [number, number];

  const n = i === 0 ? 0 : 100 + Math.floor(rng() * 2400);
  const points = new Float32Array(n * 4);
  for (let p = 0; p < n; p++) {
    points[4 * p] = 2 + rng() * (xRange[1] - 1 - 2);
    points[4 * p + 1] = (rng() - 0.5) * 26;
    points[4 * p + 2] = zRange[0] + rng() * (zRange[1] - zRange[0] + 0.5) - 0.25;
    points[4 * p + 3] = rng();
  }
  return {
    points,
    calib: randomCalibration(rng, width, height),
    front: frontView(width, height, frontStride),
    bev: bevView(xRange, yRange, zRange, resolution, bevStride),
    direction: i % 2 === 0 ? "fv2bev" : "bev2fv",
    kernel: (i >> 1) % 2 === 0 ? "nearest" : "bilinear",
  };
}

function buildFlags(c: Case, dir: string, out: string): string[] {
  return [
    "build",
    "--calib", join(dir, "calib.txt"),
    "--cloud", join(dir, "cloud.bin"),
    "--direction", c.direction,
    "--kernel", c.kernel,
    "--image-size", `${c.front.widthPx}x${c.front.heightPx}`,
    "--front-stride", String(c.front.stride),
    `--bev-range=${c.bev.xRange[0]},${c.bev.xRange[1]},${c.bev.yRange[0]},` +
    `${c.bev.yRange[1]},${c.bev.zRange[0]},${c.bev.zRange[1]}`,
    "--resolution", String(c.bev.resolution),
    "--bev-stride", String(c.bev.stride),
    "--out", out,
  ];
}

describe("CLI interop", () => {
  it("bindings-built matrices serialize byte-identically to CLI-built ones on 20 random inputs", { timeout: 300_000 }, () => {
    const dir = mkdtempSync(join(tmpdir(), "xview-xcheck-"));
    let pairedTotal = 0;
    for (let i = 0; i < 20; i++) {
      const c = randomCase(i);
      writeFileSync(join(dir, "cloud.bin"), writePointCloud(c.points));
      writeFileSync(join(dir, "calib.txt"), serializeCalibration(c.calib));
      const out = join(dir, `m_${i}.snhp`);
      cli(buildFlags(c, dir, out));

      // reread our own files: the text/binary formats are the interface
      const calib = parseCalibration(readFileSync(join(dir, "calib.txt"), "utf8"));
      const points = readPointCloud(readFileSync(join(dir, "cloud.bin")));
      const P = composeChain(calib).flat();
      const [src, dst] = c.direction === "fv2bev"
        ? [c.front, c.bev] as const
        : [c.bev, c.front] as const;
      const mine = buildPoolingMatrix(points, P, src, dst, c.kernel);
      const theirs = readFileSync(out);

      expect(
        Buffer.from(serializeMatrix(mine)).equals(theirs),
        `case ${i} (${c.direction}, ${c.kernel}, ${points.length / 4} pts)`,
      ).toBe(true);
      pairedTotal += mine.colIndices.length;

      // and the CLI's file parses back to the same arrays
      const parsed = deserializeMatrix(new Uint8Array(theirs));
      expect(parsed.nTarget).toBe(mine.nTarget);
      expect(Array.from(parsed.weights)).toEqual(Array.from(mine.weights));
    }
    expect(pairedTotal).toBeGreaterThan(1000); // the cases genuinely pair points
  });

  it("CLI pool output matches bindings apply on the grid formats", { timeout: 60_000 }, () => {
    const dir = mkdtempSync(join(tmpdir(), "xview-pool-"));
    const c = randomCase(2); // nearest fv2bev
    writeFileSync(join(dir, "cloud.bin"), writePointCloud(c.points));
    writeFileSync(join(dir, "calib.txt"), serializeCalibration(c.calib));
    const out = join(dir, "m.snhp");
    cli(buildFlags(c, dir, out));

    const m = deserializeMatrix(new Uint8Array(readFileSync(out)));
    const rng = mulberry32(99);
    const channels = 3;
    const values = Float32Array.from({ length: m.nSource * channels }, () => rng());
    writeFileSync(join(dir, "f.grid"), writeGridBytes({
      rows: m.nSource, cols: 1, channels, values,
    }));
    cli([
      "pool", "--matrix", out, "--features", join(dir, "f.grid"),
      "--out", join(dir, "pooled.grid"),
    ]);
    const pooled = readGridBytes(new Uint8Array(readFileSync(join(dir, "pooled.grid"))));
    const mine = applyPooling(m, values, channels);
    expect(pooled.values.length).toBe(mine.length);
    for (let i = 0; i < mine.length; i++) {
      expect(Math.abs(pooled.values[i] - mine[i]))
        .toBeLessThanOrEqual(1e-5 * Math.abs(mine[i]) + 1e-7);
    }
  });
});
