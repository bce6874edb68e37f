/** Regenerate the client-side halves of the shared fixture suite.
 *
 * Writes fixtures/exports/<name>.json (session exports) and
 * fixtures/previews/<name>.grid.json (client rasters at the same resolution
 * as the committed reference rasters). The Python acceptance suite validates
 * the exports and compares the previews cell by cell.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { FIXTURE_SCENES, replayScene } from "../src/fixture_scenes.js";
import { exportAnnotation } from "../src/io.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixtures = join(here, "..", "..", "..", "fixtures");

mkdirSync(join(fixtures, "exports"), { recursive: true });
mkdirSync(join(fixtures, "previews"), { recursive: true });

for (const script of FIXTURE_SCENES) {
  const session = replayScene(script);
  const result = exportAnnotation(session);
  if (!result.ok) {
    console.error(`${script.name}: ${result.diagnostics.join("; ")}`);
    process.exit(1);
  }
  writeFileSync(join(fixtures, "exports", `${script.name}.json`), result.json + "\n");

  const reference = JSON.parse(
    readFileSync(join(fixtures, "rasters", `${script.name}.grid.json`), "utf8"),
  ) as { width: number; height: number };
  const raster = session.previewRasterization(reference.width, reference.height);
  if (raster === null) {
    console.error(`${script.name}: nothing to rasterize`);
    process.exit(1);
  }
  writeFileSync(
    join(fixtures, "previews", `${script.name}.grid.json`),
    JSON.stringify(raster) + "\n",
  );
  console.log(`${script.name}: exported + ${raster.width}x${raster.height} preview`);
}
