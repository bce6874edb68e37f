/** Client-side rasterization preview.
 *
 * Mirrors the reference rasterizer cell for cell: centers at
 * ((j + 0.5) * image_width / out_w, (i + 0.5) * image_height / out_h),
 * even-odd containment via a crossing-number ray cast toward +x, regions
 * painted in list order so later ones overwrite earlier ones. All arithmetic
 * is plain double precision, so the two implementations agree exactly.
 */

import { BACKGROUND, PALETTE } from "./categories.js";

export type Point = readonly [number, number];

export interface RasterRegion {
  readonly category: number;
  readonly polygon: readonly Point[];
}

export interface Raster {
  readonly width: number;
  readonly height: number;
  /** Row-major category ids, length width * height. */
  readonly grid: number[];
}

export function pointInPolygon(cx: number, cy: number, polygon: readonly Point[]): boolean {
  let inside = false;
  const n = polygon.length;
  for (let i = 0; i < n; i++) {
    const [x1, y1] = polygon[i]!;
    const [x2, y2] = polygon[(i + 1) % n]!;
    if (y1 === y2) {
      continue; // horizontal edge never crosses the ray
    }
    const crosses = (y1 > cy) !== (y2 > cy);
    if (crosses) {
      const xint = x1 + ((cy - y1) * (x2 - x1)) / (y2 - y1);
      if (cx < xint) {
        inside = !inside;
      }
    }
  }
  return inside;
}

export function rasterizeRegions(
  regions: readonly RasterRegion[],
  imageWidth: number,
  imageHeight: number,
  outW: number,
  outH: number,
): Raster {
  if (outW <= 0 || outH <= 0) {
    throw new Error("output dimensions must be positive");
  }
  for (const reg of regions) {
    if (reg.polygon.length < 3) {
      throw new Error("polygon with fewer than 3 points");
    }
  }
  const sx = imageWidth / outW;
  const sy = imageHeight / outH;
  const grid: number[] = new Array(outW * outH).fill(BACKGROUND);
  for (const reg of regions) {
    for (let i = 0; i < outH; i++) {
      const cy = (i + 0.5) * sy;
      for (let j = 0; j < outW; j++) {
        const cx = (j + 0.5) * sx;
        if (pointInPolygon(cx, cy, reg.polygon)) {
          grid[i * outW + j] = reg.category;
        }
      }
    }
  }
  return { width: outW, height: outH, grid };
}

/** Per-cell hex colors for drawing the preview; null when nothing is drawn yet. */
export function previewColors(raster: Raster): string[] {
  return raster.grid.map((id) => {
    const color = PALETTE[id];
    if (color === undefined) {
      throw new Error(`no palette entry for category ${id}`);
    }
    return color;
  });
}
