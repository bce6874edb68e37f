"""Place adjacency, h-hop connectivity, and the action-place gate matrices.

Each action is tied to one place; the gate matrix says which places' feature
descriptions may flow into each action's output node, based on how many
adjacency hops separate them in the scene at hand.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .layout import N_PLACES, PLACES, PlaceCategory, SegmentationMap


@dataclass(frozen=True)
class ActionSpec:
    agent: str
    verb: str
    place: PlaceCategory

    @property
    def name(self) -> str:
        return f"{self.agent}_{self.verb}_{self.place.label}"


# The closed 15-action vocabulary: <agent, verb, place>, one place per action.
ACTIONS: tuple[ActionSpec, ...] = (
    ActionSpec("vehicle", "move_along", PlaceCategory.STREET),
    ActionSpec("person", "move_along", PlaceCategory.SIDEWALK),
    ActionSpec("pet", "move_along", PlaceCategory.SIDEWALK),
    ActionSpec("person", "stay", PlaceCategory.LAWN),
    ActionSpec("person", "move_away_home", PlaceCategory.DRIVEWAY),
    ActionSpec("person", "move_toward_home", PlaceCategory.DRIVEWAY),
    ActionSpec("person", "move_toward_home", PlaceCategory.WALKWAY),
    ActionSpec("person", "move_away_home", PlaceCategory.WALKWAY),
    ActionSpec("vehicle", "move_away_home", PlaceCategory.DRIVEWAY),
    ActionSpec("vehicle", "move_toward_home", PlaceCategory.DRIVEWAY),
    ActionSpec("person", "interact_with_vehicle", PlaceCategory.DRIVEWAY),
    ActionSpec("person", "move_across", PlaceCategory.LAWN),
    ActionSpec("person", "stay", PlaceCategory.PORCH),
    ActionSpec("person", "move_toward_home", PlaceCategory.PORCH),
    ActionSpec("person", "move_away_home", PlaceCategory.PORCH),
)

N_ACTIONS = len(ACTIONS)

AGENTS = ("person", "vehicle", "pet")
VERBS = ("move_along", "stay", "move_away_home", "move_toward_home", "interact_with_vehicle", "move_across")


def action_index(agent: str, verb: str, place: PlaceCategory) -> int | None:
    for i, a in enumerate(ACTIONS):
        if a.agent == agent and a.verb == verb and a.place == place:
            return i
    return None


@dataclass
class PlaceAdjacency:
    """Symmetric 6x6 boolean matrix over the place categories.

    Row/column i corresponds to PLACES[i]; the diagonal marks presence in the
    scene rather than self-adjacency.
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=bool)
        if self.matrix.shape != (N_PLACES, N_PLACES):
            raise ValueError("adjacency matrix must be 6x6")

    def present(self, p: PlaceCategory) -> bool:
        return bool(self.matrix[_pi(p), _pi(p)])


def _pi(p: PlaceCategory) -> int:
    return int(p) - 1


def adjacency(seg: SegmentationMap) -> PlaceAdjacency:
    """8-neighborhood adjacency between distinct place categories.

    Background never participates. Multiple disjoint components of the same
    category count as one node.
    """
    g = seg.grid
    adj = np.zeros((N_PLACES, N_PLACES), dtype=bool)
    for p in seg.present_places():
        adj[_pi(p), _pi(p)] = True
    shifts = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    h, w = g.shape
    for dy, dx in shifts:
        a = g[max(0, dy): h + min(0, dy), max(0, dx): w + min(0, dx)]
        b = g[max(0, -dy): h + min(0, -dy), max(0, -dx): w + min(0, -dx)]
        touching = (a != 0) & (b != 0) & (a != b)
        if not touching.any():
            continue
        pairs = np.unique(a[touching] * 8 + b[touching])
        for code in pairs:
            pa, pb = int(code) // 8, int(code) % 8
            adj[pa - 1, pb - 1] = True
            adj[pb - 1, pa - 1] = True
    return PlaceAdjacency(adj)


def h_connected_set(adj: PlaceAdjacency, p: PlaceCategory, h: int) -> set[PlaceCategory]:
    """All places reachable from ``p`` in at most ``h`` adjacency hops, p included."""
    if not adj.present(p):
        raise ValueError(f"place not in scene: {p.label}")
    seen = {_pi(p)}
    frontier = deque([(_pi(p), 0)])
    while frontier:
        node, depth = frontier.popleft()
        if depth == h:
            continue
        for nxt in range(N_PLACES):
            if nxt != node and adj.matrix[node, nxt] and nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, depth + 1))
    return {PLACES[i] for i in seen}


@dataclass
class GateMatrix:
    """Binary action x place matrix: row i marks the h-hop set of action i's place."""

    T: np.ndarray  # (n_actions, n_places) bool
    h: int
    diagnostics: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        self.T = np.asarray(self.T, dtype=bool)
        if self.T.shape != (N_ACTIONS, N_PLACES):
            raise ValueError("gate matrix must be n_actions x n_places")


def action_place_matrix(adj: PlaceAdjacency, h: int, actions: tuple[ActionSpec, ...] = ACTIONS) -> GateMatrix:
    """Build the gate matrix for one scene.

    Actions whose place is absent from the scene get an all-zero row plus a
    diagnostic; scenes legitimately lack places, so this is not an error.
    """
    T = np.zeros((len(actions), N_PLACES), dtype=bool)
    diags: list[str] = []
    reach: dict[int, set[PlaceCategory]] = {}
    for i, act in enumerate(actions):
        if not adj.present(act.place):
            diags.append(f"action {act.name}: place {act.place.label} absent from scene")
            continue
        pi = _pi(act.place)
        if pi not in reach:
            reach[pi] = h_connected_set(adj, act.place, h)
        for q in reach[pi]:
            T[i, _pi(q)] = True
    return GateMatrix(T, h, tuple(diags))


def expand_gate(gate: GateMatrix, m: int) -> np.ndarray:
    """Kronecker-expand the gate to a weight mask of shape (n_actions, n_places*m)."""
    if m < 1:
        raise ValueError("feature width must be >= 1")
    return np.kron(gate.T, np.ones((1, m), dtype=bool))
