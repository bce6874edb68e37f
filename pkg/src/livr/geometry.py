"""Distance transforms to the anchor place and quantized place discretization.

The distance field is what turns a flat place mask into an ordered sequence of
bands ("near" through "far" from the house), which is how moving direction is
made visible to the network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .layout import BitMask, PlaceCategory, SegmentationMap, block_slices

# Sentinel cost for columns without any anchor cell. Large enough to lose
# against every in-grid squared distance, small enough that float64 arithmetic
# on it stays exact.
_NO_ANCHOR = 1e12


class MissingAnchorError(ValueError):
    pass


class EmptyPlaceError(ValueError):
    pass


@dataclass(frozen=True)
class AnchorSpec:
    """Reference geometry for the distance transform.

    Either a place anchor (all cells of ``category``, by default porch) or a
    line anchor given by two distinct endpoints in the map's pixel space.
    """

    kind: str  # "place" | "line"
    category: PlaceCategory = PlaceCategory.PORCH
    p1: Optional[tuple[float, float]] = None
    p2: Optional[tuple[float, float]] = None

    @classmethod
    def place(cls, category: PlaceCategory = PlaceCategory.PORCH) -> "AnchorSpec":
        return cls(kind="place", category=category)

    @classmethod
    def line(cls, p1: tuple[float, float], p2: tuple[float, float]) -> "AnchorSpec":
        if tuple(p1) == tuple(p2):
            raise ValueError("line anchor endpoints must be distinct")
        return cls(kind="line", p1=(float(p1[0]), float(p1[1])), p2=(float(p2[0]), float(p2[1])))


@dataclass
class DistanceField:
    """Per-cell Euclidean distance (in map pixels) to the anchor."""

    dist: np.ndarray  # 2-D float64, shape (height, width)

    def __post_init__(self) -> None:
        self.dist = np.asarray(self.dist, dtype=np.float64)
        if self.dist.ndim != 2:
            raise ValueError("distance field must be 2-D")

    @property
    def height(self) -> int:
        return self.dist.shape[0]

    @property
    def width(self) -> int:
        return self.dist.shape[1]


@dataclass
class PartIndexMap:
    """Per-cell part index in [0, k) inside the discretized place, -1 outside."""

    part: np.ndarray  # 2-D int array
    k: int

    def __post_init__(self) -> None:
        self.part = np.asarray(self.part, dtype=np.int64)

    @property
    def height(self) -> int:
        return self.part.shape[0]

    @property
    def width(self) -> int:
        return self.part.shape[1]


def _edt_squared(anchor: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest True cell.

    Two passes: per-column 1-D distances, then the lower envelope of parabolas
    along each row. All intermediate values are integers held in float64, so
    the result is exact.
    """
    h, w = anchor.shape
    g = np.where(anchor, 0.0, _NO_ANCHOR)
    for i in range(1, h):
        g[i] = np.minimum(g[i], g[i - 1] + 1.0)
    for i in range(h - 2, -1, -1):
        g[i] = np.minimum(g[i], g[i + 1] + 1.0)
    np.minimum(g, _NO_ANCHOR, out=g)
    g *= g

    out = np.empty((h, w), dtype=np.float64)
    v = np.empty(w, dtype=np.int64)  # parabola sites
    z = np.empty(w + 1, dtype=np.float64)  # envelope breakpoints
    for i in range(h):
        f = g[i]
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, w):
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
            while s <= z[k]:
                k -= 1
                s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        row = out[i]
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            row[q] = (q - v[k]) ** 2 + f[v[k]]
    return out


def _segment_distance(cx: np.ndarray, cy: np.ndarray, p1: tuple[float, float], p2: tuple[float, float]) -> np.ndarray:
    x1, y1 = p1
    x2, y2 = p2
    dx, dy = x2 - x1, y2 - y1
    t = ((cx - x1) * dx + (cy - y1) * dy) / (dx * dx + dy * dy)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(cx - (x1 + t * dx), cy - (y1 + t * dy))


def distance_transform(seg: SegmentationMap, anchor: AnchorSpec) -> DistanceField:
    """Exact Euclidean distance from each cell center to the anchor.

    Place anchors measure to the nearest anchor cell center. Line anchors
    measure to the segment, minus a half-pixel band so that any cell whose
    center lies within 0.5 px of the line reads exactly zero; subtracting the
    band keeps the field 1-Lipschitz across neighboring cells.
    """
    if anchor.kind == "place":
        cells = seg.grid == int(anchor.category)
        if not cells.any():
            raise MissingAnchorError(f"missing anchor: no {anchor.category.label} cells in map")
        return DistanceField(np.sqrt(_edt_squared(cells)))
    if anchor.kind == "line":
        assert anchor.p1 is not None and anchor.p2 is not None
        cx = np.arange(seg.width) + 0.5
        cy = np.arange(seg.height) + 0.5
        cxg, cyg = np.meshgrid(cx, cy)
        d = _segment_distance(cxg, cyg, anchor.p1, anchor.p2)
        return DistanceField(np.maximum(d - 0.5, 0.0))
    raise ValueError(f"unknown anchor kind {anchor.kind!r}")


def anchor_from_annotation(seg: SegmentationMap, porch_line) -> AnchorSpec:
    """Porch place anchor when the map has porch cells, else the drawn line."""
    if (seg.grid == int(PlaceCategory.PORCH)).any():
        return AnchorSpec.place(PlaceCategory.PORCH)
    if porch_line is not None:
        return AnchorSpec.line(porch_line[0], porch_line[1])
    raise MissingAnchorError("missing anchor: no porch cells and no porch_line")


def downsample_field(field: DistanceField, out_w: int, out_h: int) -> DistanceField:
    """Block-minimum downsampling; keeps near-anchor bands alive at coarse scales."""
    if out_w <= 0 or out_h <= 0:
        raise ValueError("output dimensions must be positive")
    rows = block_slices(field.height, out_h)
    cols = block_slices(field.width, out_w)
    out = np.empty((out_h, out_w), dtype=np.float64)
    for i, rs in enumerate(rows):
        for j, cs in enumerate(cols):
            out[i, j] = field.dist[rs, cs].min()
    return DistanceField(out)


def discretize_place(seg: SegmentationMap, field: DistanceField, p: PlaceCategory, k: int) -> PartIndexMap:
    """Split place ``p`` into ``k`` equal-width distance bands.

    Band 0 is nearest the anchor, band k-1 farthest; bands are equal-width in
    distance between the place's own min and max, with the top edge clamped
    into the last band. A place with constant distance collapses to band 0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if p == PlaceCategory.BACKGROUND:
        raise ValueError("cannot discretize the background")
    if (field.height, field.width) != (seg.height, seg.width):
        raise ValueError("distance field resolution does not match the map")
    cells = seg.grid == int(p)
    if not cells.any():
        raise EmptyPlaceError(f"empty place: no {p.label} cells in map")

    part = np.full(seg.grid.shape, -1, dtype=np.int64)
    d = field.dist
    dmin = d[cells].min()
    dmax = d[cells].max()
    if dmax == dmin:
        part[cells] = 0
    else:
        binned = np.floor(k * (d[cells] - dmin) / (dmax - dmin)).astype(np.int64)
        part[cells] = np.clip(binned, 0, k - 1)
    return PartIndexMap(part, k)


def part_mask(pim: PartIndexMap, i: int) -> BitMask:
    """Indicator of cells in part ``i`` of a discretized place."""
    if not 0 <= i < pim.k:
        raise ValueError(f"part index {i} outside [0, {pim.k})")
    return BitMask(pim.part == i)


def field_to_json(field: DistanceField) -> str:
    import json

    return json.dumps(
        {
            "width": field.width,
            "height": field.height,
            "dist": [float(v) for v in field.dist.reshape(-1)],
        }
    )


def parts_to_json(pim: PartIndexMap) -> str:
    import json

    return json.dumps(
        {
            "width": pim.width,
            "height": pim.height,
            "k": pim.k,
            "part": [int(v) for v in pim.part.reshape(-1)],
        }
    )
