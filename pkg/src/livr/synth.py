"""Procedural stand-in for a yard surveillance dataset.

Scenes are band layouts (street strip, sidewalk strip, lawn fill, porch
strip, one walkway and one driveway cutting through) with randomized
widths, slants, insets, and one of eight dihedral orientations. Place
colors and background texture are resampled per scene so pixel statistics
never transfer across scenes; agent colors are global so agent identity
does. Labels come from a geometry-only oracle (majority place, porch
distance trend, displacement pattern), never from the renderer.

Trajectory semantics:
  move_along          follow the place's long axis end to end
  move_toward_home    strictly decreasing anchor distance per frame
  move_away_home      strictly increasing anchor distance per frame
  stay                sub-cell jitter around one spot
  move_across         traverse the place with little distance change
  interact_with_vehicle  static person next to a static vehicle (driveway)

The anchor distance is the porch distance field, except for trajectories
on the porch itself, which use distance to the home edge of the frame
(the frame edge nearest the porch).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import AnchorSpec, distance_transform
from .layout import (
    PLACES,
    PlaceCategory,
    Region,
    SceneAnnotation,
    SegmentationMap,
    annotation_to_json,
    rasterize_scene,
    validate_annotation,
)
from .topology import ACTIONS, ActionSpec, N_ACTIONS, action_index, adjacency, h_connected_set

AGENT_COLORS = {
    "person": np.array([0.97, 0.05, 0.05]),
    "vehicle": np.array([0.05, 0.15, 0.97]),
    "pet": np.array([0.98, 0.85, 0.05]),
}
# footprint (rows, cols) at the 36-row reference scale, long side first
AGENT_SIZE = {"person": (6, 4), "vehicle": (10, 6), "pet": (4, 3)}

# oracle thresholds, relative to per-place geometry
STAY_DISP = 2.0          # px: below this net displacement a sprite "stays"
RADIAL_FRACTION = 0.15   # of the place's anchor-distance range
RADIAL_DOMINANCE = 0.4   # |distance change| vs displacement for toward/away
INTERACT_GAP = 2.5       # px beyond footprint radii for "adjacent"

CLIP_MAGIC = b"LIVRCLIP"
CLIP_VERSION = 1


@dataclass
class SceneTemplate:
    """Sampled layout parameters plus the annotation they produce."""

    seed: int
    annotation: SceneAnnotation
    orientation: int  # dihedral index 0..7


@dataclass
class AgentSprite:
    agent: str
    footprint: tuple[int, int]
    color: np.ndarray
    trajectory: np.ndarray  # (frames, 2) float, rows then cols

    def __post_init__(self) -> None:
        if self.trajectory.ndim != 2 or self.trajectory.shape[1] != 2:
            raise ValueError("trajectory must be (frames, 2)")


@dataclass
class LabeledClip:
    video: np.ndarray  # (frames, h, w, 3) float32
    scene_id: str
    labels: np.ndarray  # (15,) int8
    intended: tuple[str, ...] = ()
    attempts: int = 1

    def __post_init__(self) -> None:
        if not self.labels.any():
            raise ValueError("a clip must carry at least one positive label")


def _dihedral(u: np.ndarray, v: np.ndarray, o: int) -> tuple[np.ndarray, np.ndarray]:
    if o & 4:
        u, v = v, u
    if o & 1:
        u = 1.0 - u
    if o & 2:
        v = 1.0 - v
    return u, v


def _sample_layout(rng: np.random.Generator) -> list[tuple[PlaceCategory, list[tuple[float, float]]]]:
    """Canonical unit-square layout, painter's order, porch at the bottom."""
    s1 = rng.uniform(0.12, 0.20)
    s2 = s1 + rng.uniform(0.10, 0.16)
    p0 = rng.uniform(0.74, 0.82)
    ww = rng.uniform(0.07, 0.12)
    dw = rng.uniform(0.13, 0.20)

    drive_left = bool(rng.integers(0, 2))
    edge_off = rng.uniform(0.06, 0.14)
    dxc = edge_off + dw / 2 if drive_left else 1.0 - edge_off - dw / 2
    lo = dxc + dw / 2 + 0.16 + ww / 2 if drive_left else 0.08 + ww / 2
    hi = 0.92 - ww / 2 if drive_left else dxc - dw / 2 - 0.16 - ww / 2
    wxc = rng.uniform(lo, hi)

    wslant_t, wslant_b = rng.uniform(-0.04, 0.04, size=2)
    dslant = rng.uniform(-0.02, 0.02)
    pl, pr = rng.uniform(0.0, 0.04), rng.uniform(0.96, 1.0)

    def vstrip(xc_top: float, xc_bot: float, half: float, y_top: float, y_bot: float):
        return [
            (xc_top - half, y_top), (xc_top + half, y_top),
            (xc_bot + half, y_bot), (xc_bot - half, y_bot),
        ]

    regions = [
        (PlaceCategory.LAWN, [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]),
        (PlaceCategory.STREET, [(0.0, 0.0), (1.0, 0.0), (1.0, s1), (0.0, s1)]),
        (PlaceCategory.SIDEWALK, [(0.0, s1), (1.0, s1), (1.0, s2), (0.0, s2)]),
        (PlaceCategory.WALKWAY,
         vstrip(wxc + wslant_t, wxc + wslant_b, ww / 2, s2 - 0.03, p0 + 0.03)),
        (PlaceCategory.DRIVEWAY,
         vstrip(dxc + dslant, dxc, dw / 2, s1 - 0.01, p0 + 0.03)),
        (PlaceCategory.PORCH, [(pl, p0), (pr, p0), (pr, 1.0), (pl, 1.0)]),
    ]
    return regions


def gen_scene(seed, width: int = 64, height: int = 36) -> tuple[SceneAnnotation, SegmentationMap]:
    """Deterministic scene; distinct seeds vary geometry, topology, orientation."""
    for attempt in range(20):
        rng = np.random.default_rng(_seed_list(seed, attempt))
        orientation = int(rng.integers(0, 8))
        regions = []
        for cat, poly in _sample_layout(rng):
            us = np.array([p[0] for p in poly])
            vs = np.array([p[1] for p in poly])
            us, vs = _dihedral(us, vs, orientation)
            pts = tuple((float(u * width), float(v * height)) for u, v in zip(us, vs))
            regions.append(Region(category=cat, polygon=pts))
        ann = SceneAnnotation(
            scene_id=f"seed{_seed_tag(seed)}",
            image_width=width,
            image_height=height,
            regions=tuple(regions),
        )
        if validate_annotation(ann):
            continue
        seg = rasterize_scene(ann, width, height)
        if len(seg.present_places()) != len(PLACES):
            continue
        near = h_connected_set(adjacency(seg), PlaceCategory.PORCH, 1)
        if PlaceCategory.WALKWAY not in near or PlaceCategory.DRIVEWAY not in near:
            continue
        return ann, seg
    raise RuntimeError(f"could not sample a valid scene for seed {seed!r}")


def _seed_list(seed, *extra: int) -> list[int]:
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return base + list(extra)


def _seed_tag(seed) -> str:
    return "-".join(str(s) for s in _seed_list(seed))


@dataclass
class _PlaceGeom:
    cells: np.ndarray        # (n, 2) int, rows/cols
    center: np.ndarray
    axis_long: np.ndarray    # unit vector, rows/cols
    extent_long: float
    extent_short: float
    drange: tuple[float, float]


@dataclass
class SceneAsset:
    """Everything clip generation and the oracle need for one scene."""

    scene_id: str
    seed: object
    annotation: SceneAnnotation
    seg: SegmentationMap
    orientation: int
    porch_dist: np.ndarray   # (h, w) anchor distance to the porch
    home_dist: np.ndarray    # (h, w) distance to the home edge of the frame
    geoms: dict[int, _PlaceGeom] = field(default_factory=dict)
    colors: Optional[np.ndarray] = None   # (7, 3) per-category paint
    texture: Optional[np.ndarray] = None  # (h, w, 1) static luminance grain

    def dist_field(self, pid: int) -> np.ndarray:
        return self.home_dist if pid == int(PlaceCategory.PORCH) else self.porch_dist


def _place_geom(seg: SegmentationMap, pid: int, dist: np.ndarray) -> _PlaceGeom:
    cells = np.argwhere(seg.grid == pid)
    center = cells.mean(axis=0)
    cov = np.cov(cells.T) if len(cells) > 1 else np.eye(2)
    evals, evecs = np.linalg.eigh(np.atleast_2d(cov))
    axis = evecs[:, int(np.argmax(evals))]
    proj = (cells - center) @ axis
    perp = (cells - center) @ evecs[:, int(np.argmin(evals))]
    d = dist[cells[:, 0], cells[:, 1]]
    return _PlaceGeom(
        cells=cells,
        center=center,
        axis_long=axis,
        extent_long=float(proj.max() - proj.min()),
        extent_short=float(perp.max() - perp.min()),
        drange=(float(d.min()), float(d.max())),
    )


def _home_edge_field(seg: SegmentationMap) -> np.ndarray:
    """Distance to the frame edge nearest the porch centroid."""
    h, w = seg.height, seg.width
    cells = np.argwhere(seg.grid == int(PlaceCategory.PORCH))
    cy, cx = cells.mean(axis=0)
    rows = np.arange(h, dtype=np.float64)[:, None] * np.ones((1, w))
    cols = np.ones((h, 1)) * np.arange(w, dtype=np.float64)[None, :]
    margins = {
        "top": cy, "bottom": h - 1 - cy, "left": cx, "right": w - 1 - cx,
    }
    edge = min(margins, key=margins.get)
    if edge == "top":
        return rows
    if edge == "bottom":
        return (h - 1) - rows
    if edge == "left":
        return cols
    return (w - 1) - cols


def build_asset(seed, width: int = 64, height: int = 36, scene_id: str = "") -> SceneAsset:
    ann, seg = gen_scene(seed, width, height)
    porch = distance_transform(seg, AnchorSpec.place(PlaceCategory.PORCH)).dist
    home = _home_edge_field(seg)
    asset = SceneAsset(
        scene_id=scene_id or ann.scene_id,
        seed=seed,
        annotation=ann,
        seg=seg,
        orientation=0,
        porch_dist=porch,
        home_dist=home,
    )
    for p in PLACES:
        asset.geoms[int(p)] = _place_geom(seg, int(p), asset.dist_field(int(p)))

    rng = np.random.default_rng(_seed_list(seed, 7001))
    agent_rgb = np.stack(list(AGENT_COLORS.values()))
    colors = np.empty((7, 3))
    for i in range(7):
        for _ in range(64):
            c = rng.uniform(0.15, 0.85, size=3)
            if np.linalg.norm(agent_rgb - c, axis=1).min() >= 0.5:
                break
        colors[i] = c
    asset.colors = colors
    asset.texture = rng.normal(0.0, 0.02, size=(height, width, 1))
    return asset


# -- trajectory synthesis ----------------------------------------------------


def _snap(cells: np.ndarray, point: np.ndarray) -> np.ndarray:
    d2 = ((cells - point) ** 2).sum(axis=1)
    return cells[int(np.argmin(d2))].astype(np.float64)


def _traj_along(asset: SceneAsset, pid: int, rng: np.random.Generator, frames: int) -> np.ndarray:
    g = asset.geoms[pid]
    proj = (g.cells - g.center) @ g.axis_long
    lo, hi = np.quantile(proj, 0.08), np.quantile(proj, 0.92)
    if rng.random() < 0.5:
        lo, hi = hi, lo
    a = _snap(g.cells, g.center + lo * g.axis_long)
    b = _snap(g.cells, g.center + hi * g.axis_long)
    pts = np.linspace(a, b, frames) + rng.uniform(-0.6, 0.6, size=(frames, 2))
    out = np.stack([_snap(g.cells, p) for p in pts])
    return out + rng.uniform(-0.3, 0.3, size=out.shape)


def _traj_radial(asset: SceneAsset, pid: int, rng: np.random.Generator, frames: int,
                 toward: bool) -> Optional[np.ndarray]:
    g = asset.geoms[pid]
    d = asset.dist_field(pid)[g.cells[:, 0], g.cells[:, 1]]
    d_start, d_end = np.quantile(d, 0.92), np.quantile(d, 0.06)
    if not toward:
        d_start, d_end = d_end, d_start
    if abs(d_start - d_end) < 1e-9:
        return None
    targets = np.linspace(d_start, d_end, frames)
    sign = -1.0 if toward else 1.0
    pos = _snap(g.cells, g.cells[int(np.argmin(np.abs(d - d_start)))]
                + rng.uniform(-1.5, 1.5, size=2))
    prev_d = float(asset.dist_field(pid)[int(pos[0]), int(pos[1])])
    out = [pos]
    for f in range(1, frames):
        # candidates must make strict progress in the required direction
        ok = sign * (d - prev_d) > 1e-9
        if not ok.any():
            return None
        cand = g.cells[ok]
        cd = d[ok]
        score = np.abs(cd - targets[f]) * 2.0 + 0.2 * np.sqrt(((cand - pos) ** 2).sum(axis=1))
        pick = int(np.argmin(score))
        pos = cand[pick].astype(np.float64)
        prev_d = float(cd[pick])
        out.append(pos)
    return np.stack(out) + rng.uniform(-0.3, 0.3, size=(frames, 2))


def _traj_glide(asset: SceneAsset, pid: int, rng: np.random.Generator, frames: int,
                toward: bool) -> Optional[np.ndarray]:
    """Linear drift down/up the distance field; used on the porch, whose
    home-edge field has too few distinct levels for strict cell hopping."""
    g = asset.geoms[pid]
    d = asset.dist_field(pid)[g.cells[:, 0], g.cells[:, 1]]
    hi_cells = g.cells[d >= np.quantile(d, 0.85)]
    lo_cells = g.cells[d <= np.quantile(d, 0.15)]
    if not len(hi_cells) or not len(lo_cells):
        return None
    start = hi_cells[int(rng.integers(0, len(hi_cells)))].astype(np.float64)
    gaps = np.abs(lo_cells - start)[:, 1] + 0.01 * np.abs(lo_cells - start)[:, 0]
    end = lo_cells[int(np.argmin(gaps))].astype(np.float64)
    if not toward:
        start, end = end, start
    pts = np.linspace(start, end, frames) + rng.uniform(-0.2, 0.2, size=(frames, 2))
    out = np.stack([_snap(g.cells, p) for p in pts])
    return out + rng.uniform(-0.3, 0.3, size=out.shape)


def _traj_stay(asset: SceneAsset, pid: int, rng: np.random.Generator, frames: int) -> np.ndarray:
    g = asset.geoms[pid]
    home = g.cells[int(rng.integers(0, len(g.cells)))].astype(np.float64)
    return home[None, :] + rng.uniform(-0.4, 0.4, size=(frames, 2))


def _traj_across(asset: SceneAsset, pid: int, rng: np.random.Generator,
                 frames: int) -> Optional[np.ndarray]:
    """Traverse the place along a level set of the anchor distance, so the
    crossing stays distance-neutral whatever the scene's orientation."""
    g = asset.geoms[pid]
    d = asset.dist_field(pid)[g.cells[:, 0], g.cells[:, 1]]
    drange = float(d.max() - d.min())
    d0 = float(np.quantile(d, rng.uniform(0.35, 0.65)))
    width = max(1.5, 0.08 * drange)
    for _ in range(3):
        keep = np.abs(d - d0) <= width
        if keep.sum() >= max(8, frames):
            break
        width *= 2.0
    band = g.cells[keep]
    center = band.mean(axis=0)
    cov = np.cov(band.T) if len(band) > 1 else np.eye(2)
    evals, evecs = np.linalg.eigh(np.atleast_2d(cov))
    axis = evecs[:, int(np.argmax(evals))]
    proj = (band - center) @ axis
    lo, hi = np.quantile(proj, 0.08), np.quantile(proj, 0.92)
    if abs(hi - lo) < 4.0:
        return None
    if rng.random() < 0.5:
        lo, hi = hi, lo
    a = _snap(band, center + lo * axis)
    b = _snap(band, center + hi * axis)
    pts = np.linspace(a, b, frames) + rng.uniform(-0.6, 0.6, size=(frames, 2))
    out = np.stack([_snap(band, p) for p in pts])
    return out + rng.uniform(-0.3, 0.3, size=out.shape)


def _footprint(agent: str, traj: np.ndarray, height: int) -> tuple[int, int]:
    long_side, short_side = AGENT_SIZE[agent]
    scale = max(1.0, height / 36.0)
    long_side = max(2, round(long_side * scale))
    short_side = max(1, round(short_side * scale))
    span = np.abs(traj[-1] - traj[0])
    if agent == "vehicle":
        # orient the long side along the dominant motion axis
        if span[1] >= span[0]:
            return short_side, long_side
        return long_side, short_side
    return long_side, short_side


def _sprites_for_action(asset: SceneAsset, action: ActionSpec, rng: np.random.Generator,
                        frames: int) -> Optional[list[AgentSprite]]:
    pid = int(action.place)
    if pid not in {int(p) for p in asset.seg.present_places()}:
        raise ValueError(f"place {action.place.label} absent from scene {asset.scene_id}")
    h = asset.seg.height
    if action.verb == "move_along":
        traj = _traj_along(asset, pid, rng, frames)
    elif action.verb == "move_across":
        traj = _traj_across(asset, pid, rng, frames)
    elif action.verb == "stay":
        traj = _traj_stay(asset, pid, rng, frames)
    elif action.verb in ("move_toward_home", "move_away_home"):
        toward = action.verb == "move_toward_home"
        if pid == int(PlaceCategory.PORCH):
            traj = _traj_glide(asset, pid, rng, frames, toward)
        else:
            traj = _traj_radial(asset, pid, rng, frames, toward)
    elif action.verb == "interact_with_vehicle":
        g = asset.geoms[pid]
        vehicle_pos = _snap(g.cells, g.center + rng.uniform(-2.0, 2.0, size=2))
        offset = g.axis_long * (AGENT_SIZE["vehicle"][0] / 2 + AGENT_SIZE["person"][0] / 2 + 1.0)
        person_pos = _snap(g.cells, vehicle_pos + offset * (1 if rng.random() < 0.5 else -1))
        vt = vehicle_pos[None, :] + rng.uniform(-0.3, 0.3, size=(frames, 2))
        pt = person_pos[None, :] + rng.uniform(-0.3, 0.3, size=(frames, 2))
        return [
            AgentSprite("person", _footprint("person", pt, h), AGENT_COLORS["person"].copy(), pt),
            AgentSprite("vehicle", _footprint("vehicle", vt, h), AGENT_COLORS["vehicle"].copy(), vt),
        ]
    else:
        raise ValueError(f"no trajectory builder for verb {action.verb!r}")
    if traj is None:
        return None
    return [AgentSprite(action.agent, _footprint(action.agent, traj, h),
                        AGENT_COLORS[action.agent].copy(), traj)]


# -- geometry-only label oracle ----------------------------------------------


def classify_trajectory(asset: SceneAsset, agent: str, traj: np.ndarray,
                        companions: Sequence[tuple[str, np.ndarray]] = ()) -> Optional[int]:
    """Action index for one trajectory, or None when nothing in the catalog fits."""
    rows = np.clip(np.rint(traj[:, 0]).astype(int), 0, asset.seg.height - 1)
    cols = np.clip(np.rint(traj[:, 1]).astype(int), 0, asset.seg.width - 1)
    pids = asset.seg.grid[rows, cols]
    counts = np.bincount(pids, minlength=7)
    pid = int(np.argmax(counts[1:]) + 1)
    if counts[pid] == 0:
        return None
    place = PlaceCategory(pid)
    g = asset.geoms[pid]
    dist = asset.dist_field(pid)
    d_path = dist[rows, cols]
    displacement = float(np.linalg.norm(traj[-1] - traj[0]))
    net_d = float(d_path[-1] - d_path[0])
    drange = g.drange[1] - g.drange[0]

    static = displacement < STAY_DISP
    if static and agent == "person":
        for c_agent, c_traj in companions:
            if c_agent != "vehicle":
                continue
            c_disp = float(np.linalg.norm(c_traj[-1] - c_traj[0]))
            gap = float(np.linalg.norm((c_traj - traj).mean(axis=0)))
            radius = (AGENT_SIZE["vehicle"][0] + AGENT_SIZE["person"][0]) / 2 + INTERACT_GAP
            c_rows = np.clip(np.rint(c_traj[:, 0]).astype(int), 0, asset.seg.height - 1)
            c_cols = np.clip(np.rint(c_traj[:, 1]).astype(int), 0, asset.seg.width - 1)
            c_pid = int(np.argmax(np.bincount(asset.seg.grid[c_rows, c_cols], minlength=7)[1:]) + 1)
            if c_disp < STAY_DISP and gap <= radius and c_pid == pid:
                idx = action_index(agent, "interact_with_vehicle", place)
                if idx is not None:
                    return idx
    if static:
        return action_index(agent, "stay", place)
    if drange > 1e-9 and abs(net_d) >= RADIAL_FRACTION * drange \
            and abs(net_d) >= RADIAL_DOMINANCE * displacement:
        verb = "move_toward_home" if net_d < 0 else "move_away_home"
        return action_index(agent, verb, place)
    idx = action_index(agent, "move_along", place)
    if idx is None:
        idx = action_index(agent, "move_across", place)
    return idx


def label_oracle(asset: SceneAsset, trajectories: Sequence[tuple[str, np.ndarray]]) -> np.ndarray:
    """Multi-hot label vector derived purely from scene geometry and paths."""
    labels = np.zeros(N_ACTIONS, dtype=np.int8)
    for i, (agent, traj) in enumerate(trajectories):
        companions = [t for j, t in enumerate(trajectories) if j != i]
        idx = classify_trajectory(asset, agent, traj, companions)
        if idx is not None:
            labels[idx] = 1
    return labels


# -- rendering -----------------------------------------------------------------


def render_clip(asset: SceneAsset, sprites: Sequence[AgentSprite], rng: np.random.Generator,
                frames: int) -> np.ndarray:
    h, w = asset.seg.height, asset.seg.width
    base = asset.colors[asset.seg.grid] + asset.texture
    video = np.repeat(base[None, :, :, :], frames, axis=0)
    for sp in sprites:
        tint = sp.color + rng.uniform(-0.02, 0.02, size=3)
        fh, fw = sp.footprint
        for f in range(frames):
            r = int(round(sp.trajectory[f, 0])) - fh // 2
            c = int(round(sp.trajectory[f, 1])) - fw // 2
            r0, r1 = max(0, r), min(h, r + fh)
            c0, c1 = max(0, c), min(w, c + fw)
            if r0 < r1 and c0 < c1:
                video[f, r0:r1, c0:c1] = tint
    video += rng.normal(0.0, 0.015, size=video.shape)
    return np.clip(video, 0.0, 1.0).astype(np.float32)


def gen_clip(asset: SceneAsset, action: ActionSpec, seed,
             second: Optional[ActionSpec] = None, frames: int = 8,
             max_attempts: int = 20) -> LabeledClip:
    """One rendered clip realizing ``action`` (plus an optional second action),
    relabeled by the oracle; regenerates until oracle and intent agree."""
    intended = np.zeros(N_ACTIONS, dtype=np.int8)
    for a in filter(None, (action, second)):
        idx = action_index(a.agent, a.verb, a.place)
        if idx is None:
            raise ValueError(f"action {a} not in the catalog")
        intended[idx] = 1
    for attempt in range(max_attempts):
        rng = np.random.default_rng(_seed_list(seed, attempt))
        sprites = _sprites_for_action(asset, action, rng, frames)
        if sprites is None:
            continue
        if second is not None:
            extra = _sprites_for_action(asset, second, rng, frames)
            if extra is None:
                continue
            sprites += extra
        got = label_oracle(asset, [(s.agent, s.trajectory) for s in sprites])
        if not np.array_equal(got, intended):
            continue
        video = render_clip(asset, sprites, rng, frames)
        names = tuple(a.name for a, on in zip(ACTIONS, intended) if on)
        return LabeledClip(video=video, scene_id=asset.scene_id, labels=got,
                           intended=names, attempts=attempt + 1)
    raise RuntimeError(
        f"label oracle kept disagreeing with intent for {action} in {asset.scene_id}")


# -- dataset on disk -----------------------------------------------------------


def write_clip(path, video: np.ndarray) -> None:
    """Raw clip container: 8-byte magic, five little-endian uint32 fields
    (version, frames, height, width, channels), then float32 data."""
    f, h, w, c = video.shape
    with open(path, "wb") as fh:
        fh.write(CLIP_MAGIC)
        fh.write(struct.pack("<5I", CLIP_VERSION, f, h, w, c))
        fh.write(video.astype("<f4").tobytes())


def read_clip(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(8) != CLIP_MAGIC:
            raise ValueError(f"{path}: not a clip file")
        version, f, h, w, c = struct.unpack("<5I", fh.read(20))
        if version != CLIP_VERSION:
            raise ValueError(f"{path}: unsupported clip version {version}")
        data = np.frombuffer(fh.read(4 * f * h * w * c), dtype="<f4")
    return data.reshape(f, h, w, c)


def _pick_second(rng: np.random.Generator, primary: ActionSpec) -> ActionSpec:
    pool = [a for a in ACTIONS
            if a.place != primary.place and a.verb != "interact_with_vehicle"]
    return pool[int(rng.integers(0, len(pool)))]


def build_dataset(out_dir, scenes: int = 18, clips_per_scene: int = 40, seed: int = 0,
                  width: int = 64, height: int = 36, frames: int = 8,
                  unseen: Optional[int] = None, composite_every: int = 5) -> dict:
    """Write scenes, clips, a labels manifest, and a default scene split.

    Scenes cycle through the 15-action catalog so every action appears in
    every scene; every ``composite_every``-th clip carries a second agent.
    Returns the manifest dict.
    """
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    if unseen is None:
        unseen = scenes // 3
    if unseen >= scenes:
        raise ValueError("unseen scene count must leave observed scenes")

    manifest = {
        "format": "livr-dataset",
        "version": 1,
        "seed": seed,
        "width": width,
        "height": height,
        "frames": frames,
        "actions": [a.name for a in ACTIONS],
        "regenerated": 0,
        "scenes": [],
    }
    for i in range(scenes):
        scene_id = f"scene{i:03d}"
        asset = build_asset([seed, i], width, height, scene_id=scene_id)
        ann_path, seg_path = f"{scene_id}.annotation.json", f"{scene_id}.seg.json"
        (out / ann_path).write_text(annotation_to_json(asset.annotation))
        (out / seg_path).write_text(asset.seg.to_json())
        entry = {"scene_id": scene_id, "annotation": ann_path, "segmentation": seg_path,
                 "clips": []}
        for j in range(clips_per_scene):
            action = ACTIONS[j % N_ACTIONS]
            rng = np.random.default_rng([seed, i, j, 555])
            second = _pick_second(rng, action) if (j + 1) % composite_every == 0 else None
            clip = gen_clip(asset, action, [seed, i, j], second=second, frames=frames)
            manifest["regenerated"] += clip.attempts - 1
            rel = f"clips/{scene_id}_clip{j:03d}.livr"
            write_clip(out / rel, clip.video)
            entry["clips"].append({
                "path": rel,
                "labels": [int(x) for x in np.flatnonzero(clip.labels)],
                "actions": list(clip.intended),
            })
        manifest["scenes"].append(entry)

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    ids = [s["scene_id"] for s in manifest["scenes"]]
    observed = ids[: scenes - unseen]
    split = {
        "observed_train": observed[0::2],
        "observed_val": observed[1::2],
        "unseen": ids[scenes - unseen:],
    }
    (out / "split.json").write_text(json.dumps(split, indent=2))
    return manifest
