"""Adjacency, h-hop reachability and gate expansion against graph oracles."""

import numpy as np
import pytest

from livr.layout import N_PLACES, PLACES, PlaceCategory, SegmentationMap
from livr.topology import (
    ACTIONS,
    N_ACTIONS,
    GateMatrix,
    PlaceAdjacency,
    action_place_matrix,
    adjacency,
    expand_gate,
    h_connected_set,
)

P = PlaceCategory


def adjacency_oracle(grid):
    """All-pairs scan: every cell against its 8 neighbors."""
    h, w = grid.shape
    adj = np.zeros((N_PLACES, N_PLACES), dtype=bool)
    for p in np.unique(grid):
        if p != 0:
            adj[p - 1, p - 1] = True
    for i in range(h):
        for j in range(w):
            a = grid[i, j]
            if a == 0:
                continue
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ni, nj = i + di, j + dj
                    if 0 <= ni < h and 0 <= nj < w:
                        b = grid[ni, nj]
                        if b != 0 and b != a:
                            adj[a - 1, b - 1] = True
    return adj


def closure_oracle(matrix):
    """Floyd-Warshall transitive closure of the place graph."""
    reach = matrix.copy()
    for k in range(N_PLACES):
        for i in range(N_PLACES):
            for j in range(N_PLACES):
                reach[i, j] = reach[i, j] or (reach[i, k] and reach[k, j])
    return reach


def bfs_oracle(matrix, start, h):
    depth = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            if depth[u] == h:
                continue
            for v in range(N_PLACES):
                if v != u and matrix[u, v] and v not in depth:
                    depth[v] = depth[u] + 1
                    nxt.append(v)
        frontier = nxt
    return set(depth)


def yard_map():
    """Street / sidewalk / lawn stack with a walkway and driveway reaching the porch."""
    grid = np.full((8, 8), int(P.LAWN))
    grid[0, :] = int(P.STREET)
    grid[1, :] = int(P.SIDEWALK)
    grid[4, :] = [int(P.LAWN), int(P.LAWN), int(P.WALKWAY), int(P.WALKWAY),
                  int(P.LAWN), int(P.DRIVEWAY), int(P.DRIVEWAY), int(P.LAWN)]
    grid[5:, :] = int(P.PORCH)
    return SegmentationMap(grid)


def random_adjacency(rng):
    present = rng.random(N_PLACES) < 0.8
    if not present.any():
        present[0] = True
    m = np.zeros((N_PLACES, N_PLACES), dtype=bool)
    for i in range(N_PLACES):
        for j in range(i + 1, N_PLACES):
            if present[i] and present[j] and rng.random() < 0.35:
                m[i, j] = m[j, i] = True
    np.fill_diagonal(m, present)
    return PlaceAdjacency(m)


# -- adjacency -----------------------------------------------------------------


def test_stacked_stripes_are_adjacent():
    grid = np.zeros((4, 4), dtype=int)
    grid[:2] = int(P.PORCH)
    grid[2:] = int(P.WALKWAY)
    adj = adjacency(SegmentationMap(grid))
    assert adj.matrix[int(P.PORCH) - 1, int(P.WALKWAY) - 1]


def test_background_moat_blocks_adjacency():
    grid = np.zeros((6, 6), dtype=int)
    grid[0] = int(P.STREET)
    grid[5] = int(P.PORCH)  # rows 1..4 are background
    adj = adjacency(SegmentationMap(grid))
    assert not adj.matrix[int(P.STREET) - 1, int(P.PORCH) - 1]


def test_diagonal_contact_counts():
    grid = np.zeros((2, 2), dtype=int)
    grid[0, 0] = int(P.WALKWAY)
    grid[1, 1] = int(P.DRIVEWAY)
    adj = adjacency(SegmentationMap(grid))
    assert adj.matrix[int(P.WALKWAY) - 1, int(P.DRIVEWAY) - 1]


def test_adjacency_matches_cell_scan_oracle_on_random_maps():
    rng = np.random.default_rng(13)
    for _ in range(12):
        grid = rng.integers(0, 7, (20, 20))
        adj = adjacency(SegmentationMap(grid))
        np.testing.assert_array_equal(adj.matrix, adjacency_oracle(grid))
        np.testing.assert_array_equal(adj.matrix, adj.matrix.T)


def test_diagonal_marks_present_places_only():
    grid = np.zeros((3, 3), dtype=int)
    grid[0, 0] = int(P.LAWN)
    adj = adjacency(SegmentationMap(grid))
    want = np.zeros(N_PLACES, dtype=bool)
    want[int(P.LAWN) - 1] = True
    np.testing.assert_array_equal(np.diag(adj.matrix), want)


# -- h_connected_set -----------------------------------------------------------


def test_zero_hops_is_the_place_itself():
    adj = adjacency(yard_map())
    assert h_connected_set(adj, P.PORCH, 0) == {P.PORCH}


def test_yard_map_reachability_chain():
    adj = adjacency(yard_map())
    assert h_connected_set(adj, P.PORCH, 1) == {P.PORCH, P.WALKWAY, P.DRIVEWAY, P.LAWN}
    assert h_connected_set(adj, P.PORCH, 2) == set(PLACES) - {P.STREET}
    assert h_connected_set(adj, P.PORCH, 3) == set(PLACES)


def test_reachability_matches_bfs_oracle_and_closure():
    rng = np.random.default_rng(17)
    for _ in range(25):
        adj = random_adjacency(rng)
        for p in PLACES:
            if not adj.present(p):
                with pytest.raises(ValueError):
                    h_connected_set(adj, p, 1)
                continue
            prev = None
            for h in range(0, 6):
                got = {int(q) - 1 for q in h_connected_set(adj, p, h)}
                assert got == bfs_oracle(adj.matrix, int(p) - 1, h)
                if prev is not None:
                    assert prev <= got  # monotone in h
                prev = got
            # 5 hops on 6 nodes reaches the whole component
            closure = closure_oracle(adj.matrix)
            assert got == set(np.nonzero(closure[int(p) - 1])[0])


def test_reachability_is_symmetric():
    rng = np.random.default_rng(23)
    for _ in range(10):
        adj = random_adjacency(rng)
        for h in range(0, 4):
            sets = {
                int(p) - 1: {int(q) - 1 for q in h_connected_set(adj, p, h)}
                for p in PLACES
                if adj.present(p)
            }
            for a, reach in sets.items():
                for b in reach:
                    assert a in sets[b]


# -- action_place_matrix -------------------------------------------------------


def test_zero_hop_gate_is_one_hot_per_action():
    adj = adjacency(yard_map())
    gate = action_place_matrix(adj, 0)
    for i, act in enumerate(ACTIONS):
        want = np.zeros(N_PLACES, dtype=bool)
        want[int(act.place) - 1] = True
        np.testing.assert_array_equal(gate.T[i], want)


def test_yard_map_porch_action_rows():
    gate = action_place_matrix(adjacency(yard_map()), 1)
    want = np.zeros(N_PLACES, dtype=bool)
    for q in (P.PORCH, P.WALKWAY, P.DRIVEWAY, P.LAWN):
        want[int(q) - 1] = True
    for i, act in enumerate(ACTIONS):
        if act.place == P.PORCH:
            np.testing.assert_array_equal(gate.T[i], want)


def test_large_h_rows_become_component_indicators():
    rng = np.random.default_rng(29)
    adj = random_adjacency(rng)
    gate = action_place_matrix(adj, 5)
    closure = closure_oracle(adj.matrix)
    for i, act in enumerate(ACTIONS):
        pi = int(act.place) - 1
        if adj.present(act.place):
            np.testing.assert_array_equal(gate.T[i], closure[pi])


def test_absent_place_gives_zero_row_and_diagnostic():
    grid = np.full((4, 4), int(P.LAWN))  # nothing else present
    gate = action_place_matrix(adjacency(SegmentationMap(grid)), 1)
    for i, act in enumerate(ACTIONS):
        if act.place != P.LAWN:
            assert not gate.T[i].any()
    assert any("absent" in d for d in gate.diagnostics)


def test_actions_sharing_a_place_share_gate_rows():
    gate = action_place_matrix(adjacency(yard_map()), 1)
    by_place = {}
    for i, act in enumerate(ACTIONS):
        by_place.setdefault(act.place, []).append(i)
    for rows in by_place.values():
        for i in rows[1:]:
            np.testing.assert_array_equal(gate.T[i], gate.T[rows[0]])


# -- expand_gate ----------------------------------------------------------------


def test_expand_with_m1_returns_t_itself():
    gate = action_place_matrix(adjacency(yard_map()), 1)
    np.testing.assert_array_equal(expand_gate(gate, 1), gate.T)


def test_expand_all_ones_stays_all_ones():
    gate = GateMatrix(np.ones((N_ACTIONS, N_PLACES), dtype=bool), h=1)
    assert expand_gate(gate, 7).all()


def test_expand_is_blockwise_and_preserves_row_sums():
    rng = np.random.default_rng(31)
    T = rng.random((N_ACTIONS, N_PLACES)) < 0.5
    gate = GateMatrix(T, h=2)
    m = 4
    wide = expand_gate(gate, m)
    assert wide.shape == (N_ACTIONS, N_PLACES * m)
    for i in range(N_ACTIONS):
        for j in range(N_PLACES):
            assert (wide[i, j * m:(j + 1) * m] == T[i, j]).all()
    np.testing.assert_array_equal(wide.sum(axis=1), m * T.sum(axis=1))


def test_action_catalog_is_the_fixed_vocabulary():
    assert N_ACTIONS == 15
    for act in ACTIONS:
        assert act.place in PLACES
    assert len({a.name for a in ACTIONS}) == 15
