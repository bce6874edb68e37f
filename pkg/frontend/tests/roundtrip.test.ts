import { existsSync, readFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { FIXTURE_SCENES, replayScene } from "../src/fixture_scenes.js";
import { exportAnnotation, importAnnotation } from "../src/io.js";

const FIXTURES = join(__dirname, "..", "..", "fixtures");

describe("fixture exports", () => {
  for (const script of FIXTURE_SCENES) {
    it(`replayed session exports the committed annotation: ${script.name}`, () => {
      const committed = JSON.parse(
        readFileSync(join(FIXTURES, "annotations", `${script.name}.json`), "utf8"),
      );
      const result = exportAnnotation(replayScene(script));
      expect(result.ok).toBe(true);
      if (result.ok) {
        // parsed-equal: serializers differ on trailing ".0" but not on values
        expect(JSON.parse(result.json)).toEqual(committed);
      }
    });

    it(`export -> import -> export is byte-stable: ${script.name}`, () => {
      const first = exportAnnotation(replayScene(script));
      expect(first.ok).toBe(true);
      if (first.ok) {
        const second = exportAnnotation(importAnnotation(first.json));
        expect(second.ok).toBe(true);
        if (second.ok) expect(second.json).toBe(first.json);
      }
    });
  }

  it("committed exports and previews are regenerable from the scripts", () => {
    // `npm run fixtures` writes these; when present they must match a fresh replay
    for (const script of FIXTURE_SCENES) {
      const exportPath = join(FIXTURES, "exports", `${script.name}.json`);
      if (!existsSync(exportPath)) continue;
      const committed = JSON.parse(readFileSync(exportPath, "utf8"));
      const result = exportAnnotation(replayScene(script));
      expect(result.ok).toBe(true);
      if (result.ok) expect(JSON.parse(result.json)).toEqual(committed);

      const previewPath = join(FIXTURES, "previews", `${script.name}.grid.json`);
      expect(existsSync(previewPath)).toBe(true);
      const preview = JSON.parse(readFileSync(previewPath, "utf8"));
      const raster = replayScene(script).previewRasterization(preview.width, preview.height);
      expect(raster!.grid).toEqual(preview.grid);
    }
  });
});
