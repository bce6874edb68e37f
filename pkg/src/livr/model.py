"""Video models over yard layouts: raw baselines and layout-aware variants.

All variants share one 9-block 3D ConvNet skeleton (two single-conv blocks,
seven double-conv blocks; spatial 2x2 pooling after blocks 1..5, temporal
pooling after 6..9). The layout-aware variants split the net at block
``level`` into one branch per place category, optionally sub-branch
discretized places into distance bands, and aggregate the per-place
descriptions with a plain or topology-gated head.

Variants:
  BL1  raw frames, single trunk, plain FC head
  BL2  frames + 6 binary place maps as extra input channels, otherwise BL1
  V1   place decomposition only, plain FC over the concatenated descriptions
  V2   V1 with the topology-gated head
  V3   V1 plus distance-band sub-branches for the discretized places
  V4   V3 with the topology-gated head
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import (
    EmptyPlaceError,
    anchor_from_annotation,
    discretize_place,
    distance_transform,
    downsample_field,
)
from .layout import PLACES, PlaceCategory, SegmentationMap, downsample_map, place_mask
from .nn import (
    conv3d_backward,
    conv3d_stack,
    conv3d_stack_backward,
    conv3d_unfolded,
    he_init,
    maxpool_spatial,
    maxpool_spatial_backward,
    maxpool_temporal,
    maxpool_temporal_backward,
    relu,
    relu_backward,
    sgmp,
    sgmp_backward,
    sgmp_stack,
    sgmp_stack_backward,
    sigmoid,
)
from .topology import GateMatrix, N_ACTIONS, action_place_matrix, adjacency, expand_gate

VARIANTS = ("BL1", "BL2", "V1", "V2", "V3", "V4")
_SPATIAL_BLOCKS = (1, 2, 3, 4, 5)
_TEMPORAL_BLOCKS = (6, 7, 8, 9)
_DEFAULT_DISCRETIZED = (PlaceCategory.WALKWAY, PlaceCategory.DRIVEWAY, PlaceCategory.LAWN)


def _convs_in_block(block: int) -> int:
    return 1 if block <= 2 else 2


def _ceil_half(n: int) -> int:
    return -(-n // 2)


@dataclass
class ModelConfig:
    """Architecture knobs. ``level``/``parts``/``hops`` are ignored by BL1/BL2."""

    variant: str
    level: int = 2
    parts: int = 3
    hops: int = 1
    discretized: tuple[PlaceCategory, ...] = _DEFAULT_DISCRETIZED
    frames: int = 15
    height: int = 90
    width: int = 160
    filters: int = 64
    share_part_weights: bool = False
    agg: str = ""  # "" = variant default; else one of fc1 / fc2 / gated
    gate_test_only: bool = False

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0 <= self.level <= 5:
            raise ValueError("decomposition level must lie in 0..5")
        if self.parts < 1:
            raise ValueError("parts per place must be >= 1")
        if self.hops < 0:
            raise ValueError("hops must be >= 0")
        if self.variant in ("V1", "V2"):
            self.discretized = ()
        self.discretized = tuple(PlaceCategory(p) for p in self.discretized)
        if any(p == PlaceCategory.BACKGROUND for p in self.discretized):
            raise ValueError("background cannot be discretized")
        if not self.agg:
            self.agg = "gated" if self.variant in ("V2", "V4") else "fc1"
        if self.agg not in ("fc1", "fc2", "gated"):
            raise ValueError(f"unknown aggregation {self.agg!r}")
        if self.agg == "gated" and self.variant in ("BL1", "BL2"):
            raise ValueError("gated aggregation needs per-place branches")
        if self.gate_test_only and self.agg != "gated":
            raise ValueError("gate_test_only applies to the gated head only")

    @property
    def has_branches(self) -> bool:
        return self.variant not in ("BL1", "BL2")

    @property
    def in_channels(self) -> int:
        return 9 if self.variant == "BL2" else 3

    @property
    def feature_length(self) -> int:
        return len(PLACES) * self.filters if self.has_branches else self.filters

    def level_shape(self) -> tuple[int, int]:
        """Spatial extent of the feature map where decomposition happens."""
        h, w = self.height, self.width
        for _ in range(self.level):
            h, w = _ceil_half(h), _ceil_half(w)
        return h, w

    def part_count(self, p: PlaceCategory) -> int:
        return self.parts if p in self.discretized else 1

    def to_json(self) -> str:
        d = {
            "variant": self.variant,
            "level": self.level,
            "parts": self.parts,
            "hops": self.hops,
            "discretized": [int(p) for p in self.discretized],
            "frames": self.frames,
            "height": self.height,
            "width": self.width,
            "filters": self.filters,
            "share_part_weights": self.share_part_weights,
            "agg": self.agg,
            "gate_test_only": self.gate_test_only,
        }
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        d["discretized"] = tuple(PlaceCategory(int(p)) for p in d.get("discretized", []))
        return cls(**d)


@dataclass
class SceneBundle:
    """Per-scene artifacts a model consumes at forward time.

    ``masks`` holds the six place bitmaps at the decomposition resolution
    (index = category id - 1); ``part_masks`` maps a discretized category id
    to its (k, h, w) band bitmaps; ``full_masks`` is the full-resolution
    stack used by the map-concatenation baseline.
    """

    scene_id: str
    masks: np.ndarray
    part_masks: dict[int, np.ndarray] = field(default_factory=dict)
    full_masks: Optional[np.ndarray] = None
    gate: Optional[GateMatrix] = None
    gate_expanded: Optional[np.ndarray] = None


def prepare_scene(seg: SegmentationMap, config: ModelConfig, porch_line=None,
                  scene_id: str = "") -> SceneBundle:
    """Precompute masks, distance bands, and the gate for one scene."""
    lh, lw = config.level_shape()
    seg_l = seg if (lh, lw) == (seg.height, seg.width) else downsample_map(seg, lw, lh)
    masks = np.stack([place_mask(seg_l, p).bits for p in PLACES])

    part_masks: dict[int, np.ndarray] = {}
    if config.has_branches and config.discretized:
        anchor = anchor_from_annotation(seg, porch_line)
        field_full = distance_transform(seg, anchor)
        field_l = downsample_field(field_full, lw, lh)
        for p in config.discretized:
            bands = np.zeros((config.parts, lh, lw), dtype=bool)
            try:
                pim = discretize_place(seg_l, field_l, p, config.parts)
                for i in range(config.parts):
                    bands[i] = pim.part == i
            except EmptyPlaceError:
                pass  # place absent at this resolution: all-zero bands
            part_masks[int(p)] = bands

    full_masks = np.stack([place_mask(seg, p).bits for p in PLACES])

    gate = gate_expanded = None
    if config.agg == "gated":
        gate = action_place_matrix(adjacency(seg), config.hops)
        gate_expanded = expand_gate(gate, config.filters)

    return SceneBundle(scene_id=scene_id, masks=masks, part_masks=part_masks,
                       full_masks=full_masks, gate=gate, gate_expanded=gate_expanded)


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float64) -> dict[str, np.ndarray]:
    """He-initialized weights for every stream the variant needs."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}

    def add_conv(name: str, cin: int, cout: int) -> None:
        params[f"{name}.w"] = he_init(rng, (3, 3, 3, cin, cout), 27 * cin, dtype)
        params[f"{name}.b"] = np.zeros(cout, dtype=dtype)

    def add_block_run(prefix: str, blocks: range, cin: int) -> None:
        c = cin
        for b in blocks:
            for ci in range(_convs_in_block(b)):
                add_conv(f"{prefix}b{b}.c{ci}", c, config.filters)
                c = config.filters

    m = config.filters
    if not config.has_branches:
        add_block_run("net.", range(1, 10), config.in_channels)
    else:
        level = config.level
        c_at_level = config.in_channels if level == 0 else m
        add_block_run("trunk.", range(1, level + 1), config.in_channels)
        for p in PLACES:
            pre = f"place{int(p)}."
            k = config.part_count(p)
            if k == 1:
                add_block_run(pre, range(level + 1, 10), c_at_level)
            else:
                part_ids = [0] if config.share_part_weights else list(range(k))
                for q in part_ids:
                    add_block_run(f"{pre}part{q}.", range(level + 1, 6), c_at_level)
                # temporal blocks take the channel-wise part concatenation
                c = k * m
                for b in _TEMPORAL_BLOCKS:
                    for ci in range(_convs_in_block(b)):
                        add_conv(f"{pre}b{b}.c{ci}", c, m)
                        c = m

    feat = config.feature_length
    rng_w = rng.standard_normal
    if config.agg == "fc2":
        params["head_hidden.w"] = (rng_w((feat, feat)) / np.sqrt(feat)).astype(dtype)
        params["head_hidden.b"] = np.zeros(feat, dtype=dtype)
    params["head.w"] = (rng_w((N_ACTIONS, feat)) / np.sqrt(feat)).astype(dtype)
    params["head.b"] = np.zeros(N_ACTIONS, dtype=dtype)
    return params


class Model:
    """A parameterized variant with hand-rolled forward and backward passes.

    ``forward`` caches intermediates; ``backward`` must follow the forward
    it belongs to. Gradients come back as a dict keyed like ``params``.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self._cache: dict = {}

    # -- block plumbing ----------------------------------------------------

    def _run_blocks(self, x: np.ndarray, prefix: str, blocks: range, tape: list) -> np.ndarray:
        for b in blocks:
            for ci in range(_convs_in_block(b)):
                w = self.params[f"{prefix}b{b}.c{ci}.w"]
                bias = self.params[f"{prefix}b{b}.c{ci}.b"]
                pre, cols = conv3d_unfolded(x, w, bias)
                out = relu(pre)
                tape.append(("conv", f"{prefix}b{b}.c{ci}", x, pre, cols))
                x = out
            if b in _SPATIAL_BLOCKS:
                tape.append(("pool_s", None, x, None, None))
                x = maxpool_spatial(x)
            else:
                tape.append(("pool_t", None, x, None, None))
                x = maxpool_temporal(x)
        return x

    def _rewind_blocks(self, grad: np.ndarray, tape: list, grads: dict,
                       input_is_leaf: bool = False) -> Optional[np.ndarray]:
        for i, (kind, name, x_in, pre, cols) in enumerate(reversed(tape)):
            if kind == "pool_s":
                grad = maxpool_spatial_backward(x_in, grad)
            elif kind == "pool_t":
                grad = maxpool_temporal_backward(x_in, grad)
            else:
                grad = relu_backward(pre, grad)
                # the tape's first conv reads the raw input, whose gradient
                # nobody consumes when input_is_leaf
                need_dx = not (input_is_leaf and i == len(tape) - 1)
                dx, dw, db = conv3d_backward(x_in, self.params[f"{name}.w"], grad, cols,
                                             need_dx=need_dx)
                grads[f"{name}.w"] += dw
                grads[f"{name}.b"] += db
                grad = dx
        return grad

    # -- stream stacks -------------------------------------------------------

    def _streams(self, scene: SceneBundle):
        """Flatten the branch layout into parallel streams of equal shape.

        Returns (prefixes, masks, plain, parts): per-stream weight prefixes,
        the (s, h, w) bool stack the streams are cut with, (pid, stream)
        rows for undiscretized places, and (pid, [streams]) rows for
        discretized ones.
        """
        cfg = self.config
        prefixes: list[str] = []
        masks: list[np.ndarray] = []
        plain: list[tuple[int, int]] = []
        parts: list[tuple[int, list[int]]] = []
        for p in PLACES:
            pid = int(p)
            k = cfg.part_count(p)
            if k == 1:
                plain.append((pid, len(prefixes)))
                prefixes.append(f"place{pid}.")
                masks.append(scene.masks[pid - 1])
            else:
                bands = scene.part_masks[pid]
                slots = []
                for q in range(k):
                    slots.append(len(prefixes))
                    prefixes.append(f"place{pid}.part{0 if cfg.share_part_weights else q}.")
                    masks.append(bands[q])
                parts.append((pid, slots))
        return prefixes, np.stack(masks), plain, parts

    def _run_stack(self, x: np.ndarray, prefixes: list[str], blocks: range,
                   tape: list) -> np.ndarray:
        """_run_blocks over a (s, t, h, w, c) stream stack, one GEMM per layer."""
        for b in blocks:
            for ci in range(_convs_in_block(b)):
                names = [f"{pre}b{b}.c{ci}" for pre in prefixes]
                w = np.stack([self.params[f"{n}.w"] for n in names])
                bias = np.stack([self.params[f"{n}.b"] for n in names])
                pre, cols = conv3d_stack(x, w, bias)
                out = relu(pre)
                tape.append(("conv", names, x, pre, cols, w))
                x = out
            if b in _SPATIAL_BLOCKS:
                tape.append(("pool_s", None, x, None, None, None))
                x = maxpool_spatial(x)
            else:
                tape.append(("pool_t", None, x, None, None, None))
                x = maxpool_temporal(x)
        return x

    def _rewind_stack(self, grad: np.ndarray, tape: list, grads: dict) -> np.ndarray:
        for kind, names, x_in, pre, cols, w in reversed(tape):
            if kind == "pool_s":
                grad = maxpool_spatial_backward(x_in, grad)
            elif kind == "pool_t":
                grad = maxpool_temporal_backward(x_in, grad)
            else:
                grad = relu_backward(pre, grad)
                dx, dw, db = conv3d_stack_backward(x_in, w, grad, cols)
                for s, n in enumerate(names):
                    # shared part weights repeat a name; += collects them all
                    grads[f"{n}.w"] += dw[s]
                    grads[f"{n}.b"] += db[s]
                grad = dx
        return grad

    # -- forward -----------------------------------------------------------

    def forward(self, video: np.ndarray, scene: SceneBundle,
                perturb: Optional[dict[int, np.ndarray]] = None,
                apply_gate: bool = True) -> np.ndarray:
        """Action logits for one clip. ``perturb`` adds a delta to the named
        places' branch inputs right after decomposition (diagnostics only)."""
        cfg = self.config
        if video.shape != (cfg.frames, cfg.height, cfg.width, 3):
            raise ValueError(f"clip shape {video.shape} does not match config")
        cache: dict = {"scene": scene, "apply_gate": apply_gate}
        perturb = perturb or {}

        if not cfg.has_branches:
            x = video
            if cfg.variant == "BL2":
                if scene.full_masks is None:
                    raise ValueError("BL2 needs full-resolution place maps")
                maps = np.broadcast_to(
                    scene.full_masks.transpose(1, 2, 0)[None], video.shape[:3] + (len(PLACES),)
                ).astype(video.dtype)
                x = np.concatenate([video, maps], axis=3)
            tape: list = []
            out = self._run_blocks(x, "net.", range(1, 10), tape)
            cache["tape"] = tape
            cache["sgmp_in"] = out
            f = sgmp(out)
        else:
            if scene.masks.shape[1:] != cfg.level_shape():
                raise ValueError("scene masks do not match the decomposition resolution")
            trunk_tape: list = []
            x0 = self._run_blocks(video, "trunk.", range(1, cfg.level + 1), trunk_tape)
            cache["trunk_tape"] = trunk_tape
            cache["x0"] = x0

            prefixes, mask_stack, plain, parts = self._streams(scene)
            cache["streams"] = (mask_stack, plain, parts)
            xs = x0[None] * mask_stack[:, None, :, :, None]
            if perturb:
                slot_map = {pid: [s] for pid, s in plain}
                slot_map.update({pid: list(slots) for pid, slots in parts})
                for pid, delta in perturb.items():
                    for s in slot_map.get(pid, ()):
                        xs[s] += delta
            spatial_tape: list = []
            xs_out = self._run_stack(xs, prefixes, range(cfg.level + 1, 6), spatial_tape)
            cache["spatial_tape"] = spatial_tape
            cache["xs_out_shape"] = xs_out.shape

            descs: dict[int, np.ndarray] = {}
            if plain:
                tape_p: list = []
                out_p = self._run_stack(xs_out[[s for _, s in plain]],
                                        [f"place{pid}." for pid, _ in plain],
                                        range(6, 10), tape_p)
                fp = sgmp_stack(out_p)
                cache["plain_run"] = (tape_p, out_p)
                for i, (pid, _) in enumerate(plain):
                    descs[pid] = fp[i]
            if parts:
                # temporal blocks read each place's channel-wise part concat
                xq = np.stack([np.concatenate([xs_out[s] for s in slots], axis=3)
                               for _, slots in parts])
                tape_q: list = []
                out_q = self._run_stack(xq, [f"place{pid}." for pid, _ in parts],
                                        range(6, 10), tape_q)
                fq = sgmp_stack(out_q)
                cache["part_run"] = (tape_q, out_q)
                for i, (pid, _) in enumerate(parts):
                    descs[pid] = fq[i]
            f = np.concatenate([descs[int(p)] for p in PLACES])

        cache["f"] = f
        w, b = self.params["head.w"], self.params["head.b"]
        if cfg.agg == "fc1":
            logits = w @ f + b
        elif cfg.agg == "fc2":
            h_pre = self.params["head_hidden.w"] @ f + self.params["head_hidden.b"]
            h_act = relu(h_pre)
            cache["head_hidden"] = (h_pre, h_act)
            logits = w @ h_act + b
        else:
            if apply_gate:
                if scene.gate_expanded is None:
                    raise ValueError("gated head needs the scene's gate matrix")
                gate = scene.gate_expanded
            else:
                gate = np.ones_like(w, dtype=bool)
            cache["gate"] = gate
            logits = np.where(gate, w, 0.0) @ f + b
        self._cache = cache
        return logits

    def predict(self, video: np.ndarray, scene: SceneBundle, apply_gate: bool = True) -> np.ndarray:
        return sigmoid(self.forward(video, scene, apply_gate=apply_gate))

    # -- backward ----------------------------------------------------------

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def backward(self, grad_logits: np.ndarray,
                 grads: Optional[dict[str, np.ndarray]] = None) -> dict[str, np.ndarray]:
        """Accumulate parameter gradients for the most recent forward pass."""
        cfg = self.config
        cache = self._cache
        if not cache:
            raise RuntimeError("backward called before forward")
        if grads is None:
            grads = self.zero_grads()

        f = cache["f"]
        w = self.params["head.w"]
        if cfg.agg == "fc1":
            grads["head.w"] += np.outer(grad_logits, f)
            grads["head.b"] += grad_logits
            df = w.T @ grad_logits
        elif cfg.agg == "fc2":
            h_pre, h_act = cache["head_hidden"]
            grads["head.w"] += np.outer(grad_logits, h_act)
            grads["head.b"] += grad_logits
            dh = relu_backward(h_pre, w.T @ grad_logits)
            grads["head_hidden.w"] += np.outer(dh, f)
            grads["head_hidden.b"] += dh
            df = self.params["head_hidden.w"].T @ dh
        else:
            gate = cache["gate"]
            grads["head.w"] += np.where(gate, np.outer(grad_logits, f), 0.0)
            grads["head.b"] += grad_logits
            df = np.where(gate, w, 0.0).T @ grad_logits

        if not cfg.has_branches:
            grad = sgmp_backward(cache["sgmp_in"], df)
            self._rewind_blocks(grad, cache["tape"], grads, input_is_leaf=True)
            return grads

        m = cfg.filters
        x0 = cache["x0"]
        mask_stack, plain, parts = cache["streams"]
        row = {int(p): i for i, p in enumerate(PLACES)}
        df_place = df.reshape(len(PLACES), m)

        # gradient w.r.t. the spatial stack's output, assembled slot by slot
        gss = np.zeros(cache["xs_out_shape"], dtype=x0.dtype)
        cw = gss.shape[-1]
        if plain:
            tape_p, out_p = cache["plain_run"]
            g = sgmp_stack_backward(out_p, df_place[[row[pid] for pid, _ in plain]])
            g = self._rewind_stack(g, tape_p, grads)
            for i, (pid, s) in enumerate(plain):
                gss[s] = g[i]
        if parts:
            tape_q, out_q = cache["part_run"]
            g = sgmp_stack_backward(out_q, df_place[[row[pid] for pid, _ in parts]])
            g = self._rewind_stack(g, tape_q, grads)
            for i, (pid, slots) in enumerate(parts):
                for q, s in enumerate(slots):
                    gss[s] = g[i, ..., q * cw: (q + 1) * cw]

        dxs = self._rewind_stack(gss, cache["spatial_tape"], grads)
        dx0 = (dxs * mask_stack[:, None, :, :, None]).sum(axis=0)
        if cfg.level > 0:
            self._rewind_blocks(dx0, cache["trunk_tape"], grads, input_is_leaf=True)
        return grads


def build(config: ModelConfig, seed: int = 0, dtype=np.float64) -> Model:
    return Model(config, init_params(config, seed=seed, dtype=dtype))


def shape_trace(config: ModelConfig) -> list[tuple[str, tuple[int, int, int, int]]]:
    """Pure-arithmetic layer-by-layer shape table for the single-trunk view.

    Branch streams repeat the same trace from ``level`` onward, so one table
    describes every variant's tensor extents; the final row is the
    concatenated description length.
    """
    t, h, w = config.frames, config.height, config.width
    c = config.in_channels
    rows: list[tuple[str, tuple[int, int, int, int]]] = [("input", (t, h, w, c))]
    for b in range(1, 10):
        c = config.filters
        for ci in range(_convs_in_block(b)):
            rows.append((f"conv{b}.{ci}", (t, h, w, c)))
        if b in _SPATIAL_BLOCKS:
            h, w = _ceil_half(h), _ceil_half(w)
            rows.append((f"pool{b}", (t, h, w, c)))
        else:
            t = _ceil_half(t)
            rows.append((f"pool{b}", (t, h, w, c)))
    rows.append(("sgmp_in", (t, h, w, c)))
    rows.append(("features", (1, 1, 1, config.feature_length)))
    return rows


CHECKPOINT_FORMAT = "livr-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, config: ModelConfig, params: dict[str, np.ndarray],
                    adam=None) -> None:
    """Versioned npz container: config JSON + named arrays (+ Adam buffers)."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": json.loads(config.to_json()),
    }
    arrays = {f"param/{k}": v for k, v in params.items()}
    if adam is not None:
        meta["adam"] = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                        "eps": adam.eps, "step": adam.step}
        arrays.update({f"adam_m/{k}": v for k, v in adam.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in adam.v.items()})
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns (config, params, adam_state_or_none)."""
    from .nn import AdamState

    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a model checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        config = ModelConfig.from_json(json.dumps(meta["config"]))
        params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
        adam = None
        if "adam" in meta:
            a = meta["adam"]
            adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"],
                             eps=a["eps"], step=int(a["step"]))
            adam.m = {k[len("adam_m/"):]: z[k] for k in z.files if k.startswith("adam_m/")}
            adam.v = {k[len("adam_v/"):]: z[k] for k in z.files if k.startswith("adam_v/")}
    return config, params, adam
