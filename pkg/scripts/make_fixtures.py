"""Regenerate the shared annotation/raster fixtures under fixtures/.

The same files are consumed by the Python test suite and by the browser
annotator's vitest suite, so both sides rasterize identical inputs and can be
compared cell for cell. Run from the repository root:

    python3 scripts/make_fixtures.py
"""

import json
from pathlib import Path

from livr.layout import (
    PALETTE,
    PlaceCategory,
    Region,
    SceneAnnotation,
    annotation_to_json,
    rasterize_scene,
    validate_annotation,
)

P = PlaceCategory
ROOT = Path(__file__).resolve().parent.parent
PREVIEW = {"width": 64, "height": 36}


def yard() -> SceneAnnotation:
    """Hand-drawn six-region yard over a 640x360 frame, porch polygon anchor."""
    return SceneAnnotation(
        scene_id="fixture-yard",
        image_width=640,
        image_height=360,
        regions=(
            Region(P.LAWN, ((0, 0), (640, 0), (640, 360), (0, 360))),
            Region(P.STREET, ((0, 0), (640, 4.5), (640, 62), (0, 55.5))),
            Region(P.SIDEWALK, ((0, 55.5), (640, 62), (640, 112), (0, 104))),
            Region(P.DRIVEWAY, ((96, 48), (168, 50), (150, 282), (78, 280))),
            Region(P.WALKWAY, ((330, 108), (382, 109), (371, 276), (323, 274))),
            Region(P.PORCH, ((24, 270.5), (612, 274), (616, 360), (20, 360))),
        ),
    )


def porchline() -> SceneAnnotation:
    """No porch polygon; a drawn line stands in for the house edge."""
    return SceneAnnotation(
        scene_id="fixture-porchline",
        image_width=640,
        image_height=360,
        regions=(
            Region(P.LAWN, ((0, 30), (640, 26), (640, 360), (0, 360))),
            Region(P.STREET, ((0, 0), (640, 0), (640, 44), (0, 40))),
            Region(P.SIDEWALK, ((0, 40), (640, 44), (640, 92.5), (0, 88))),
            Region(P.WALKWAY, ((284, 90), (342, 92), (356, 352), (270, 350))),
        ),
        porch_line=((18, 346), (626, 352)),
    )


def overlap() -> SceneAnnotation:
    """Painter's-order test vector: three mutually overlapping rectangles."""
    return SceneAnnotation(
        scene_id="fixture-overlap",
        image_width=640,
        image_height=360,
        regions=(
            Region(P.LAWN, ((0, 0), (640, 0), (640, 360), (0, 360))),
            Region(P.STREET, ((0, 60), (480, 60), (480, 220), (0, 220))),
            Region(P.PORCH, ((240, 140), (640, 140), (640, 330), (240, 330))),
        ),
    )


def fullframe() -> SceneAnnotation:
    """A single polygon covering the whole frame: uniform preview."""
    return SceneAnnotation(
        scene_id="fixture-fullframe",
        image_width=640,
        image_height=360,
        regions=(
            Region(P.LAWN, ((0, 0), (640, 0), (640, 360), (0, 360))),
        ),
        porch_line=((0, 355), (640, 355)),
    )


def main() -> None:
    fixtures = {"yard": yard(), "porchline": porchline(),
                "overlap": overlap(), "fullframe": fullframe()}
    ann_dir = ROOT / "fixtures" / "annotations"
    ras_dir = ROOT / "fixtures" / "rasters"
    ann_dir.mkdir(parents=True, exist_ok=True)
    ras_dir.mkdir(parents=True, exist_ok=True)

    for name, ann in fixtures.items():
        diags = validate_annotation(ann)
        if diags:
            raise SystemExit(f"fixture {name} failed validation: {diags}")
        (ann_dir / f"{name}.json").write_text(annotation_to_json(ann) + "\n")
        seg = rasterize_scene(ann, PREVIEW["width"], PREVIEW["height"])
        (ras_dir / f"{name}.grid.json").write_text(seg.to_json() + "\n")
        print(f"{name}: {len(ann.regions)} regions -> "
              f"{PREVIEW['width']}x{PREVIEW['height']} raster")

    palette = {str(int(cat)): color for cat, color in PALETTE.items()}
    (ROOT / "fixtures" / "palette.json").write_text(json.dumps(palette, indent=2) + "\n")
    print(f"palette: {len(palette)} entries")


if __name__ == "__main__":
    main()
