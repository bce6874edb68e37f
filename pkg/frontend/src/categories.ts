/** Place categories and their fixed integer ids, shared with the Python side.
 *
 * The id mapping and display palette are part of the annotation exchange
 * contract; `fixtures/palette.json` is the committed copy both test suites
 * check against.
 */

export type CategoryId = 1 | 2 | 3 | 4 | 5 | 6;

export const BACKGROUND = 0;

export const CATEGORY_LABELS: Record<CategoryId, string> = {
  1: "street",
  2: "sidewalk",
  3: "lawn",
  4: "porch",
  5: "walkway",
  6: "driveway",
};

export const CATEGORY_IDS = Object.keys(CATEGORY_LABELS).map(Number) as CategoryId[];

export const PORCH: CategoryId = 4;

const LABEL_TO_ID = new Map<string, CategoryId>(
  CATEGORY_IDS.map((id) => [CATEGORY_LABELS[id], id]),
);

export function categoryFromLabel(label: string): CategoryId {
  const id = LABEL_TO_ID.get(label);
  if (id === undefined) {
    throw new Error(`unknown place category: ${JSON.stringify(label)}`);
  }
  return id;
}

/** Display colors keyed by category id, background included. */
export const PALETTE: Record<number, string> = {
  0: "#202020",
  1: "#606060",
  2: "#b0a48e",
  3: "#4e8f3a",
  4: "#8a4b2d",
  5: "#c9c9c9",
  6: "#70685a",
};
