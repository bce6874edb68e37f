/** Annotation session state machine.
 *
 * One session edits one camera frame: an in-progress polygon built click by
 * click, committed regions with categories, an optional two-point porch line,
 * and an undo stack over all of it. Every mutating operation snapshots the
 * state first, so undo restores exactly one step, including region commits.
 */

import { CategoryId, categoryFromLabel, PORCH } from "./categories.js";
import { Point, Raster, RasterRegion, rasterizeRegions } from "./raster.js";

export interface CommittedRegion {
  /** null until the user assigns one of the six categories. */
  category: CategoryId | null;
  polygon: Point[];
}

interface Snapshot {
  draft: Point[];
  regions: CommittedRegion[];
  porchLine: Point[];
}

export type ExportResult =
  | { ok: true; json: string }
  | { ok: false; diagnostics: string[] };

export class AnnotationSession {
  readonly sceneId: string;
  readonly imageWidth: number;
  readonly imageHeight: number;

  /** Vertices of the polygon currently being drawn. */
  draft: Point[] = [];
  regions: CommittedRegion[] = [];
  /** 0, 1 or 2 clicked porch-line endpoints. */
  porchLine: Point[] = [];
  /** Inline warning from the last operation, if any. */
  warning: string | null = null;

  private undoStack: Snapshot[] = [];

  constructor(sceneId: string, imageWidth: number, imageHeight: number) {
    if (imageWidth <= 0 || imageHeight <= 0) {
      throw new Error(`non-positive image dimensions ${imageWidth}x${imageHeight}`);
    }
    this.sceneId = sceneId;
    this.imageWidth = imageWidth;
    this.imageHeight = imageHeight;
  }

  private snapshot(): void {
    this.undoStack.push({
      draft: this.draft.slice(),
      regions: this.regions.map((r) => ({ category: r.category, polygon: r.polygon.slice() })),
      porchLine: this.porchLine.slice(),
    });
  }

  /** Append one vertex to the in-progress polygon. */
  addPoint(x: number, y: number): void {
    this.warning = null;
    this.snapshot();
    this.draft.push([x, y]);
  }

  /**
   * Commit the in-progress polygon as a region. Refuses with an inline
   * warning when fewer than 3 points are down; the draft stays editable.
   */
  closePolygon(): boolean {
    this.warning = null;
    if (this.draft.length < 3) {
      this.warning = `need at least 3 points to close a polygon, have ${this.draft.length}`;
      return false;
    }
    this.snapshot();
    this.regions.push({ category: null, polygon: this.draft });
    this.draft = [];
    return true;
  }

  /**
   * Assign one of the six categories to a committed region (the most recent
   * one by default). Unknown labels are refused with a warning.
   */
  assignCategory(label: string, index?: number): boolean {
    this.warning = null;
    let id: CategoryId;
    try {
      id = categoryFromLabel(label);
    } catch {
      this.warning = `unknown category ${JSON.stringify(label)}`;
      return false;
    }
    const i = index ?? this.regions.length - 1;
    const region = this.regions[i];
    if (region === undefined) {
      this.warning = `no committed region at index ${i}`;
      return false;
    }
    this.snapshot();
    region.category = id;
    return true;
  }

  /**
   * Click one porch-line endpoint. The first two clicks define the line; a
   * third click starts a fresh line at that point.
   */
  addPorchPoint(x: number, y: number): void {
    this.warning = null;
    this.snapshot();
    if (this.porchLine.length >= 2) {
      this.porchLine = [[x, y]];
    } else {
      this.porchLine.push([x, y]);
    }
  }

  clearPorchLine(): void {
    this.warning = null;
    this.snapshot();
    this.porchLine = [];
  }

  /** Revert the last mutating operation. Returns false on an empty stack. */
  undo(): boolean {
    this.warning = null;
    const prev = this.undoStack.pop();
    if (prev === undefined) {
      return false;
    }
    this.draft = prev.draft;
    this.regions = prev.regions;
    this.porchLine = prev.porchLine;
    return true;
  }

  /**
   * Everything that would make the exported annotation invalid. Mirrors the
   * consumer-side validator plus session-only states (uncategorized regions,
   * an unfinished porch line).
   */
  diagnostics(): string[] {
    const diags: string[] = [];
    this.regions.forEach((reg, idx) => {
      if (reg.category === null) {
        diags.push(`region ${idx}: no category assigned`);
      }
      for (const [x, y] of reg.polygon) {
        if (!(x >= 0 && x <= this.imageWidth && y >= 0 && y <= this.imageHeight)) {
          diags.push(`region ${idx}: out-of-bounds vertex (${x}, ${y})`);
          break;
        }
      }
    });
    const hasPorch = this.regions.some((r) => r.category === PORCH);
    if (this.porchLine.length === 1) {
      diags.push("porch line has a single endpoint; click the second or clear it");
    }
    const hasLine = this.porchLine.length === 2;
    if (!hasPorch && !hasLine) {
      diags.push("missing anchor: no porch region and no porch_line");
    }
    if (hasPorch && hasLine) {
      diags.push("porch_line given although a porch region exists");
    }
    if (hasLine) {
      const [a, b] = this.porchLine as [Point, Point];
      if (a[0] === b[0] && a[1] === b[1]) {
        diags.push("degenerate porch_line: endpoints coincide");
      }
    }
    return diags;
  }

  /** Committed regions with resolved category ids, for the preview. */
  private rasterRegions(): RasterRegion[] {
    return this.regions
      .filter((r) => r.category !== null)
      .map((r) => ({ category: r.category as number, polygon: r.polygon }));
  }

  /** Reduced-resolution category raster, or null while nothing is committed. */
  previewRasterization(outW: number, outH: number): Raster | null {
    const regions = this.rasterRegions();
    if (regions.length === 0) {
      return null;
    }
    return rasterizeRegions(regions, this.imageWidth, this.imageHeight, outW, outH);
  }
}
