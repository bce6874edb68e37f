"""Scene annotations and their rasterization into place segmentation maps.

A scene is annotated once per camera as a list of category-tagged polygons.
Everything downstream (masks, distance fields, gates) is derived from the
integer segmentation grid produced here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

Point = tuple[float, float]


class PlaceCategory(IntEnum):
    """The six place categories plus background. Ids are part of the file format."""

    BACKGROUND = 0
    STREET = 1
    SIDEWALK = 2
    LAWN = 3
    PORCH = 4
    WALKWAY = 5
    DRIVEWAY = 6

    @property
    def label(self) -> str:
        return self.name.lower()


PLACES: tuple[PlaceCategory, ...] = (
    PlaceCategory.STREET,
    PlaceCategory.SIDEWALK,
    PlaceCategory.LAWN,
    PlaceCategory.PORCH,
    PlaceCategory.WALKWAY,
    PlaceCategory.DRIVEWAY,
)

N_PLACES = len(PLACES)

# Display palette keyed by category id. Part of the exchange contract with the
# annotation frontend: previews on either side must paint these exact colors.
PALETTE: dict[PlaceCategory, str] = {
    PlaceCategory.BACKGROUND: "#202020",
    PlaceCategory.STREET: "#606060",
    PlaceCategory.SIDEWALK: "#b0a48e",
    PlaceCategory.LAWN: "#4e8f3a",
    PlaceCategory.PORCH: "#8a4b2d",
    PlaceCategory.WALKWAY: "#c9c9c9",
    PlaceCategory.DRIVEWAY: "#70685a",
}

_LABEL_TO_PLACE = {p.label: p for p in PLACES}


def place_from_label(label: str) -> PlaceCategory:
    try:
        return _LABEL_TO_PLACE[label]
    except KeyError:
        raise ValueError(f"unknown place category: {label!r}") from None


@dataclass(frozen=True)
class Region:
    category: PlaceCategory
    polygon: tuple[Point, ...]


@dataclass(frozen=True)
class SceneAnnotation:
    """Human-drawn polygons for one camera view.

    ``porch_line`` stands in for the house location when no porch polygon was
    drawn; it must be present exactly in that case.
    """

    scene_id: str
    image_width: int
    image_height: int
    regions: tuple[Region, ...]
    porch_line: Optional[tuple[Point, Point]] = None


@dataclass
class SegmentationMap:
    """Integer grid of category ids, row-major, shape (height, width)."""

    grid: np.ndarray  # 2-D int array, values 0..6

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid)
        if self.grid.ndim != 2:
            raise ValueError("segmentation grid must be 2-D")
        if self.grid.size and (self.grid.min() < 0 or self.grid.max() > max(PLACES)):
            raise ValueError("segmentation grid holds an invalid category id")

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    def present_places(self) -> set[PlaceCategory]:
        ids = np.unique(self.grid)
        return {PlaceCategory(int(i)) for i in ids if i != 0}

    def to_json(self) -> str:
        return json.dumps(
            {
                "width": self.width,
                "height": self.height,
                "grid": self.grid.reshape(-1).astype(int).tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SegmentationMap":
        obj = json.loads(text)
        w, h = int(obj["width"]), int(obj["height"])
        grid = np.asarray(obj["grid"], dtype=np.int64)
        if grid.size != w * h:
            raise ValueError("grid length does not match width*height")
        return cls(grid.reshape(h, w))


@dataclass
class BitMask:
    """Boolean grid, shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError("mask must be 2-D")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


def _points_in_polygon(cx: np.ndarray, cy: np.ndarray, polygon: Sequence[Point]) -> np.ndarray:
    """Even-odd containment test for arrays of query points.

    Crossing-number ray cast toward +x; vectorized over points, looped over edges.
    """
    inside = np.zeros(cx.shape, dtype=bool)
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > cy) != (y2 > cy)
        with np.errstate(invalid="ignore"):
            xint = x1 + (cy - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (cx < xint)
    return inside


def rasterize_scene(ann: SceneAnnotation, out_w: int, out_h: int) -> SegmentationMap:
    """Paint annotation polygons onto an out_h x out_w grid of category ids.

    A cell belongs to a polygon when its center falls inside under the even-odd
    rule; regions are painted in list order, so later regions overwrite earlier
    ones. Cells covered by no region stay background.
    """
    if out_w <= 0 or out_h <= 0:
        raise ValueError("output dimensions must be positive")
    for reg in ann.regions:
        if len(reg.polygon) < 3:
            raise ValueError(f"polygon with fewer than 3 points in scene {ann.scene_id!r}")

    sx = ann.image_width / out_w
    sy = ann.image_height / out_h
    cx = (np.arange(out_w) + 0.5) * sx
    cy = (np.arange(out_h) + 0.5) * sy
    cxg, cyg = np.meshgrid(cx, cy)

    grid = np.zeros((out_h, out_w), dtype=np.int64)
    for reg in ann.regions:
        inside = _points_in_polygon(cxg, cyg, reg.polygon)
        grid[inside] = int(reg.category)
    return SegmentationMap(grid)


def block_slices(n: int, out_n: int) -> list[slice]:
    """Partition range(n) into out_n consecutive blocks.

    Blocks are ceil(n/out_n) wide with the last block absorbing the remainder,
    matching ceil-mode pooling windows (45 -> 23 gives 22 blocks of 2 plus one
    of 1). Falls back to proportional boundaries when the ceil width would
    leave trailing blocks empty.
    """
    if out_n <= 0:
        raise ValueError("output size must be positive")
    if out_n > n:
        raise ValueError("output size exceeds input size")
    b = -(-n // out_n)
    if (out_n - 1) * b < n:
        return [slice(i * b, min((i + 1) * b, n)) for i in range(out_n)]
    bounds = [i * n // out_n for i in range(out_n + 1)]
    return [slice(bounds[i], bounds[i + 1]) for i in range(out_n)]


def downsample_map(seg: SegmentationMap, out_w: int, out_h: int) -> SegmentationMap:
    """Majority-vote downsampling to out_h x out_w.

    Ties go to the smallest category id; background wins only by strict
    majority over the best non-background category.
    """
    if out_w <= 0 or out_h <= 0:
        raise ValueError("output dimensions must be positive")
    rows = block_slices(seg.height, out_h)
    cols = block_slices(seg.width, out_w)
    out = np.zeros((out_h, out_w), dtype=np.int64)
    n_ids = max(PLACES) + 1
    for i, rs in enumerate(rows):
        for j, cs in enumerate(cols):
            counts = np.bincount(seg.grid[rs, cs].reshape(-1), minlength=n_ids)
            best = int(np.argmax(counts[1:])) + 1  # argmax ties -> smallest id
            if counts[best] == 0 or counts[0] > counts[best]:
                out[i, j] = 0
            else:
                out[i, j] = best
    return SegmentationMap(out)


def place_mask(seg: SegmentationMap, p: PlaceCategory) -> BitMask:
    """Indicator mask of cells whose category equals ``p``."""
    if p == PlaceCategory.BACKGROUND:
        raise ValueError("place_mask requires a non-background category")
    return BitMask(seg.grid == int(p))


def validate_annotation(ann: SceneAnnotation) -> list[str]:
    """Return one diagnostic string per invariant violation; [] means valid."""
    diags: list[str] = []
    if ann.image_width <= 0 or ann.image_height <= 0:
        diags.append(f"non-positive image dimensions {ann.image_width}x{ann.image_height}")
    for idx, reg in enumerate(ann.regions):
        if not isinstance(reg.category, PlaceCategory) or reg.category == PlaceCategory.BACKGROUND:
            diags.append(f"region {idx}: unknown category {reg.category!r}")
        if len(reg.polygon) < 3:
            diags.append(f"region {idx}: degenerate polygon with {len(reg.polygon)} points")
        for x, y in reg.polygon:
            if not (0 <= x <= ann.image_width and 0 <= y <= ann.image_height):
                diags.append(f"region {idx}: out-of-bounds vertex ({x}, {y})")
                break
    has_porch = any(reg.category == PlaceCategory.PORCH for reg in ann.regions)
    if not has_porch and ann.porch_line is None:
        diags.append("missing anchor: no porch region and no porch_line")
    if has_porch and ann.porch_line is not None:
        diags.append("porch_line given although a porch region exists")
    if ann.porch_line is not None and tuple(ann.porch_line[0]) == tuple(ann.porch_line[1]):
        diags.append("degenerate porch_line: endpoints coincide")
    return diags


def annotation_to_json(ann: SceneAnnotation) -> str:
    obj: dict = {
        "scene_id": ann.scene_id,
        "image_width": ann.image_width,
        "image_height": ann.image_height,
        "regions": [
            {"category": reg.category.label, "polygon": [[float(x), float(y)] for x, y in reg.polygon]}
            for reg in ann.regions
        ],
    }
    if ann.porch_line is not None:
        obj["porch_line"] = [[float(x), float(y)] for x, y in ann.porch_line]
    return json.dumps(obj, indent=2)


def annotation_from_json(text: str) -> SceneAnnotation:
    obj = json.loads(text)
    regions = tuple(
        Region(place_from_label(r["category"]), tuple((float(x), float(y)) for x, y in r["polygon"]))
        for r in obj["regions"]
    )
    line = obj.get("porch_line")
    porch_line = None
    if line is not None:
        porch_line = ((float(line[0][0]), float(line[0][1])), (float(line[1][0]), float(line[1][1])))
    return SceneAnnotation(
        scene_id=str(obj["scene_id"]),
        image_width=int(obj["image_width"]),
        image_height=int(obj["image_height"]),
        regions=regions,
        porch_line=porch_line,
    )
