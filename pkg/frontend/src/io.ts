/** Annotation JSON exchange.
 *
 * The schema is the one the layout pipeline consumes: scene_id,
 * image_width/image_height in pixels, regions as lowercase category labels
 * with [[x, y], ...] polygons, and an optional two-point porch_line.
 * Export refuses while the session has outstanding diagnostics.
 */

import { CATEGORY_LABELS, categoryFromLabel, CategoryId } from "./categories.js";
import { Point } from "./raster.js";
import { AnnotationSession, ExportResult } from "./session.js";

export interface AnnotationJson {
  scene_id: string;
  image_width: number;
  image_height: number;
  regions: { category: string; polygon: number[][] }[];
  porch_line?: number[][];
}

export function exportAnnotation(session: AnnotationSession): ExportResult {
  const diagnostics = session.diagnostics();
  if (diagnostics.length > 0) {
    return { ok: false, diagnostics };
  }
  const obj: AnnotationJson = {
    scene_id: session.sceneId,
    image_width: session.imageWidth,
    image_height: session.imageHeight,
    regions: session.regions.map((reg) => ({
      category: CATEGORY_LABELS[reg.category as CategoryId],
      polygon: reg.polygon.map(([x, y]) => [x, y]),
    })),
  };
  if (session.porchLine.length === 2) {
    obj.porch_line = session.porchLine.map(([x, y]) => [x, y]);
  }
  return { ok: true, json: JSON.stringify(obj, null, 2) };
}

/** Rebuild an editable session from exported JSON (lossless re-import). */
export function importAnnotation(text: string): AnnotationSession {
  const obj = JSON.parse(text) as AnnotationJson;
  const session = new AnnotationSession(
    String(obj.scene_id),
    Number(obj.image_width),
    Number(obj.image_height),
  );
  for (const reg of obj.regions) {
    categoryFromLabel(reg.category); // reject unknown labels up front
    for (const [x, y] of reg.polygon as unknown as Point[]) {
      session.addPoint(x, y);
    }
    if (!session.closePolygon()) {
      throw new Error(`degenerate polygon in imported scene ${obj.scene_id}`);
    }
    session.assignCategory(reg.category);
  }
  if (obj.porch_line !== undefined) {
    for (const [x, y] of obj.porch_line as unknown as Point[]) {
      session.addPorchPoint(x, y);
    }
  }
  return session;
}
