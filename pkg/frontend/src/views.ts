/**
 * View geometries.  Map dimensions must be derived with exactly the same
 * float expressions as the native library so matrices stay interoperable.
 */

export interface FrontViewSpec {
  readonly kind: "front";
  readonly widthPx: number;
  readonly heightPx: number;
  readonly stride: number;
  readonly mapWidth: number;
  readonly mapHeight: number;
  readonly nCells: number;
}

export interface BevSpec {
  readonly kind: "bev";
  readonly xRange: readonly [number, number];
  readonly yRange: readonly [number, number];
  readonly zRange: readonly [number, number];
  readonly resolution: number;
  readonly stride: number;
  readonly mapLength: number; // rows, along x
  readonly mapWidth: number;  // cols, along y
  readonly nCells: number;
}

export type ViewSpec = FrontViewSpec | BevSpec;

export function frontView(widthPx: number, heightPx: number, stride = 1): FrontViewSpec {
  if (widthPx < 1 || heightPx < 1 || stride < 1) {
    throw new Error("widthPx, heightPx and stride must be >= 1");
  }
  const mapWidth = Math.ceil(widthPx / stride);
  const mapHeight = Math.ceil(heightPx / stride);
  return { kind: "front", widthPx, heightPx, stride, mapWidth, mapHeight,
           nCells: mapWidth * mapHeight };
}

export function bevView(
  xRange: readonly [number, number] = [0, 60],
  yRange: readonly [number, number] = [-30, 30],
  zRange: readonly [number, number] = [-2.5, 1.0],
  resolution = 0.1,
  stride = 1,
): BevSpec {
  for (const [lo, hi] of [xRange, yRange, zRange]) {
    if (!(hi > lo)) throw new Error("range max must exceed min on every axis");
  }
  if (!(resolution > 0) || stride < 1) {
    throw new Error("resolution must be positive and stride >= 1");
  }
  const mapLength = Math.ceil((xRange[1] - xRange[0]) / (resolution * stride));
  const mapWidth = Math.ceil((yRange[1] - yRange[0]) / (resolution * stride));
  return { kind: "bev", xRange, yRange, zRange, resolution, stride,
           mapLength, mapWidth, nCells: mapLength * mapWidth };
}
