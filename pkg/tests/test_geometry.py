"""Distance transform and distance-band discretization against exact oracles."""

import math

import numpy as np
import pytest

from livr.geometry import (
    AnchorSpec,
    EmptyPlaceError,
    MissingAnchorError,
    anchor_from_annotation,
    discretize_place,
    distance_transform,
    downsample_field,
    part_mask,
)
from livr.layout import PlaceCategory, SegmentationMap, block_slices, place_mask

P = PlaceCategory


def brute_force_edt(anchor_cells):
    """O(cells * anchors) min distance between cell centers; the ground truth."""
    h, w = anchor_cells.shape
    ai, aj = np.nonzero(anchor_cells)
    assert len(ai) > 0
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = np.sqrt(((ai - i) ** 2 + (aj - j) ** 2).min())
    return out


def random_map_with_porch(rng, h, w):
    grid = rng.integers(0, 7, (h, w))
    if not (grid == int(P.PORCH)).any():
        grid[rng.integers(h), rng.integers(w)] = int(P.PORCH)
    return SegmentationMap(grid)


# -- distance_transform --------------------------------------------------------


def test_single_corner_anchor_gives_diagonal_pythagoras():
    grid = np.full((3, 3), int(P.LAWN))
    grid[0, 0] = int(P.PORCH)
    field = distance_transform(SegmentationMap(grid), AnchorSpec.place())
    assert field.dist[0, 0] == 0.0
    assert field.dist[2, 2] == pytest.approx(2 * math.sqrt(2), abs=0)
    assert field.dist[0, 2] == 2.0


def test_all_anchor_cells_give_zero_field():
    seg = SegmentationMap(np.full((4, 5), int(P.PORCH)))
    field = distance_transform(seg, AnchorSpec.place())
    assert (field.dist == 0.0).all()


@pytest.mark.parametrize("size", [16, 32])
def test_distance_transform_equals_brute_force_exactly(size):
    rng = np.random.default_rng(size)
    for _ in range(8):
        seg = random_map_with_porch(rng, size, size)
        field = distance_transform(seg, AnchorSpec.place())
        oracle = brute_force_edt(seg.grid == int(P.PORCH))
        np.testing.assert_array_equal(field.dist, oracle)


def test_field_is_lipschitz_under_8_neighborhood():
    rng = np.random.default_rng(9)
    seg = random_map_with_porch(rng, 20, 20)
    d = distance_transform(seg, AnchorSpec.place()).dist
    step = math.sqrt(2) + 1e-12
    for di, dj in ((0, 1), (1, 0), (1, 1), (1, -1)):
        a = d[max(0, -di): d.shape[0] - max(0, di), max(0, -dj): d.shape[1] - max(0, dj)]
        b = d[max(0, di):, max(0, dj):] if dj >= 0 else d[max(0, di):, : d.shape[1] - 1]
        assert (np.abs(a - b) <= step).all()


def test_line_anchor_zero_band_and_segment_distance():
    seg = SegmentationMap(np.full((6, 6), int(P.LAWN)))
    field = distance_transform(seg, AnchorSpec.line((0.0, 0.5), (6.0, 0.5)))
    # row 0 centers sit exactly on the line
    assert (field.dist[0] == 0.0).all()
    # further rows: perpendicular distance minus the half-pixel zero band
    assert field.dist[3, 2] == pytest.approx(3.0 - 0.5)
    # beyond the segment end the distance is point-to-endpoint
    field2 = distance_transform(seg, AnchorSpec.line((0.0, 0.5), (2.0, 0.5)))
    want = math.hypot(5.5 - 2.0, 0.0) - 0.5
    assert field2.dist[0, 5] == pytest.approx(want)


def test_missing_anchor_raises():
    seg = SegmentationMap(np.full((4, 4), int(P.LAWN)))
    with pytest.raises(MissingAnchorError):
        distance_transform(seg, AnchorSpec.place())
    with pytest.raises(MissingAnchorError):
        anchor_from_annotation(seg, None)


def test_anchor_from_annotation_prefers_porch_cells():
    grid = np.full((4, 4), int(P.LAWN))
    grid[3, 1] = int(P.PORCH)
    assert anchor_from_annotation(SegmentationMap(grid), None).kind == "place"
    seg = SegmentationMap(np.full((4, 4), int(P.LAWN)))
    spec = anchor_from_annotation(seg, ((0, 4), (4, 4)))
    assert spec.kind == "line"


# -- downsample_field ----------------------------------------------------------


def test_downsample_field_is_blockwise_min():
    rng = np.random.default_rng(4)
    seg = random_map_with_porch(rng, 12, 16)
    field = distance_transform(seg, AnchorSpec.place())
    out = downsample_field(field, 5, 4)
    rows, cols = block_slices(12, 4), block_slices(16, 5)
    for i in range(4):
        for j in range(5):
            assert out.dist[i, j] == field.dist[rows[i], cols[j]].min()


# -- discretize_place ----------------------------------------------------------


def strip_map():
    # porch row at the bottom, walkway column leading away from it
    grid = np.full((12, 5), int(P.LAWN))
    grid[11, :] = int(P.PORCH)
    grid[:11, 2] = int(P.WALKWAY)
    return SegmentationMap(grid)


def test_k1_puts_all_place_cells_in_part_zero():
    seg = strip_map()
    field = distance_transform(seg, AnchorSpec.place())
    pim = discretize_place(seg, field, P.WALKWAY, 1)
    cells = seg.grid == int(P.WALKWAY)
    assert (pim.part[cells] == 0).all()
    assert (pim.part[~cells] == -1).all()
    np.testing.assert_array_equal(part_mask(pim, 0).bits, place_mask(seg, P.WALKWAY).bits)


def test_equal_width_binning_on_known_distances():
    grid = np.full((1, 11), int(P.LAWN))
    grid[0, 0] = int(P.PORCH)
    for j in (1, 5, 10):
        grid[0, j] = int(P.WALKWAY)
    seg = SegmentationMap(grid)
    field = distance_transform(seg, AnchorSpec.place())
    pim = discretize_place(seg, field, P.WALKWAY, 3)
    # distances 1, 5, 10 -> min 1, max 10, width 3: parts 0, 1, 2 (10 clamps into 2)
    assert pim.part[0, 1] == 0
    assert pim.part[0, 5] == 1
    assert pim.part[0, 10] == 2
    assert pim.k == 3


def test_constant_distance_place_collapses_to_part_zero():
    grid = np.full((3, 3), int(P.PORCH))
    grid[1, 1] = int(P.DRIVEWAY)
    seg = SegmentationMap(grid)
    field = distance_transform(seg, AnchorSpec.place())
    pim = discretize_place(seg, field, P.DRIVEWAY, 4)
    assert pim.part[1, 1] == 0


def test_walkway_strip_splits_into_ordered_contiguous_bands():
    seg = strip_map()
    field = distance_transform(seg, AnchorSpec.place())
    pim = discretize_place(seg, field, P.WALKWAY, 3)
    col = pim.part[:11, 2]
    # near the porch (bottom) is band 0; the far end is band 2; never decreasing upwards
    assert col[10] == 0 and col[0] == 2
    assert (np.diff(col[::-1]) >= 0).all()


def test_part_masks_partition_place_and_are_monotone():
    rng = np.random.default_rng(21)
    for _ in range(6):
        seg = random_map_with_porch(rng, 16, 16)
        field = distance_transform(seg, AnchorSpec.place())
        for p in (P.WALKWAY, P.DRIVEWAY, P.LAWN):
            if not (seg.grid == int(p)).any():
                continue
            for k in range(1, 6):
                pim = discretize_place(seg, field, p, k)
                union = np.zeros(seg.grid.shape, dtype=int)
                for i in range(k):
                    union += part_mask(pim, i).bits.astype(int)
                np.testing.assert_array_equal(union == 1, seg.grid == int(p))
                # monotone: sort place cells by distance, part index must not decrease
                cells = seg.grid == int(p)
                order = np.argsort(field.dist[cells], kind="stable")
                assert (np.diff(pim.part[cells][order]) >= 0).all()
                # extremes land in the outer bands
                assert pim.part[cells][order][0] == 0
                assert pim.part[cells][order][-1] == pim.part[cells].max()


def test_discretize_empty_place_raises():
    grid = np.full((4, 4), int(P.PORCH))
    seg = SegmentationMap(grid)
    field = distance_transform(seg, AnchorSpec.place())
    with pytest.raises(EmptyPlaceError):
        discretize_place(seg, field, P.WALKWAY, 3)


def test_part_mask_index_out_of_range():
    seg = strip_map()
    field = distance_transform(seg, AnchorSpec.place())
    pim = discretize_place(seg, field, P.WALKWAY, 2)
    with pytest.raises(ValueError):
        part_mask(pim, 2)
