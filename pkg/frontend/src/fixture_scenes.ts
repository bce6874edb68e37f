/** The four golden scenes as drawing scripts.
 *
 * Each entry replays the clicks a user would make over a 640x360 frame. The
 * Python side commits its own copies of these annotations and their rasters
 * under fixtures/; both test suites check against those files, so the vertex
 * lists here must stay in sync with them.
 */

import { AnnotationSession } from "./session.js";

export interface SceneScript {
  name: string;
  sceneId: string;
  regions: { category: string; points: [number, number][] }[];
  porchLine?: [[number, number], [number, number]];
}

export const FIXTURE_SCENES: SceneScript[] = [
  {
    name: "yard",
    sceneId: "fixture-yard",
    regions: [
      { category: "lawn", points: [[0, 0], [640, 0], [640, 360], [0, 360]] },
      { category: "street", points: [[0, 0], [640, 4.5], [640, 62], [0, 55.5]] },
      { category: "sidewalk", points: [[0, 55.5], [640, 62], [640, 112], [0, 104]] },
      { category: "driveway", points: [[96, 48], [168, 50], [150, 282], [78, 280]] },
      { category: "walkway", points: [[330, 108], [382, 109], [371, 276], [323, 274]] },
      { category: "porch", points: [[24, 270.5], [612, 274], [616, 360], [20, 360]] },
    ],
  },
  {
    name: "porchline",
    sceneId: "fixture-porchline",
    regions: [
      { category: "lawn", points: [[0, 30], [640, 26], [640, 360], [0, 360]] },
      { category: "street", points: [[0, 0], [640, 0], [640, 44], [0, 40]] },
      { category: "sidewalk", points: [[0, 40], [640, 44], [640, 92.5], [0, 88]] },
      { category: "walkway", points: [[284, 90], [342, 92], [356, 352], [270, 350]] },
    ],
    porchLine: [[18, 346], [626, 352]],
  },
  {
    name: "overlap",
    sceneId: "fixture-overlap",
    regions: [
      { category: "lawn", points: [[0, 0], [640, 0], [640, 360], [0, 360]] },
      { category: "street", points: [[0, 60], [480, 60], [480, 220], [0, 220]] },
      { category: "porch", points: [[240, 140], [640, 140], [640, 330], [240, 330]] },
    ],
  },
  {
    name: "fullframe",
    sceneId: "fixture-fullframe",
    regions: [
      { category: "lawn", points: [[0, 0], [640, 0], [640, 360], [0, 360]] },
    ],
    porchLine: [[0, 355], [640, 355]],
  },
];

/** Drive a fresh session through one scene's click script. */
export function replayScene(script: SceneScript): AnnotationSession {
  const session = new AnnotationSession(script.sceneId, 640, 360);
  for (const reg of script.regions) {
    for (const [x, y] of reg.points) {
      session.addPoint(x, y);
    }
    if (!session.closePolygon()) {
      throw new Error(`fixture ${script.name}: ${session.warning}`);
    }
    if (!session.assignCategory(reg.category)) {
      throw new Error(`fixture ${script.name}: ${session.warning}`);
    }
  }
  if (script.porchLine !== undefined) {
    for (const [x, y] of script.porchLine) {
      session.addPorchPoint(x, y);
    }
  }
  return session;
}
