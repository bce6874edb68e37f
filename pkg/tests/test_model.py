"""Variant assembly checks: an independent op-by-op recomposition of every
forward pass, structural equalities between variants, gate locality through
the backward pass, and checkpoint round-trips."""

import numpy as np
import pytest

from livr.layout import PLACES, PlaceCategory, SegmentationMap
from livr.model import (
    ModelConfig,
    SceneBundle,
    build,
    init_params,
    load_checkpoint,
    prepare_scene,
    save_checkpoint,
    shape_trace,
)
from livr.nn import adam_init, adam_step, conv3d, maxpool_spatial, maxpool_temporal, relu, sgmp
from livr.topology import ACTIONS, N_ACTIONS, adjacency, h_connected_set

P = PlaceCategory

DESK = dict(frames=4, height=24, width=32, filters=4)


def yard_scene():
    """All six places, porch at the bottom, street sealed off behind the sidewalk."""
    grid = np.full((24, 32), int(P.LAWN))
    grid[0:4] = int(P.STREET)
    grid[4:8] = int(P.SIDEWALK)
    grid[16:20, 8:16] = int(P.WALKWAY)
    grid[16:20, 20:28] = int(P.DRIVEWAY)
    grid[20:24] = int(P.PORCH)
    return SegmentationMap(grid)


def clip(seed=0, frames=4):
    return np.random.default_rng(seed).standard_normal((frames, 24, 32, 3))


def run_blocks_oracle(params, prefix, blocks, x):
    """Straight-line recomposition of a block range from the tensor primitives."""
    for b in blocks:
        for ci in range(1 if b <= 2 else 2):
            x = relu(conv3d(x, params[f"{prefix}b{b}.c{ci}.w"], params[f"{prefix}b{b}.c{ci}.b"]))
        x = maxpool_spatial(x) if b <= 5 else maxpool_temporal(x)
    return x


def forward_oracle(config, params, bundle, video):
    if config.variant in ("BL1", "BL2"):
        x = video
        if config.variant == "BL2":
            maps = np.broadcast_to(
                bundle.full_masks.transpose(1, 2, 0)[None], video.shape[:3] + (6,)
            ).astype(video.dtype)
            x = np.concatenate([video, maps], axis=3)
        f = sgmp(run_blocks_oracle(params, "net.", range(1, 10), x))
    else:
        x0 = run_blocks_oracle(params, "trunk.", range(1, config.level + 1), video)
        descs = []
        for p in PLACES:
            pid = int(p)
            if config.part_count(p) == 1:
                xin = x0 * bundle.masks[pid - 1][None, :, :, None]
                out = run_blocks_oracle(params, f"place{pid}.", range(config.level + 1, 10), xin)
            else:
                pieces = []
                for q in range(config.parts):
                    xin = x0 * bundle.part_masks[pid][q][None, :, :, None]
                    name = 0 if config.share_part_weights else q
                    pieces.append(run_blocks_oracle(
                        params, f"place{pid}.part{name}.", range(config.level + 1, 6), xin))
                out = run_blocks_oracle(params, f"place{pid}.", range(6, 10),
                                        np.concatenate(pieces, axis=3))
            descs.append(sgmp(out))
        f = np.concatenate(descs)
    w, b = params["head.w"], params["head.b"]
    if config.agg == "fc1":
        return w @ f + b
    if config.agg == "fc2":
        hidden = relu(params["head_hidden.w"] @ f + params["head_hidden.b"])
        return w @ hidden + b
    return np.where(bundle.gate_expanded, w, 0.0) @ f + b


@pytest.mark.parametrize("variant,extra", [
    ("BL1", {}),
    ("BL2", {}),
    ("V1", {}),
    ("V2", {}),
    ("V3", {"parts": 2}),
    ("V4", {"parts": 2}),
    ("V4", {"parts": 3, "share_part_weights": True}),
    ("V3", {"parts": 2, "agg": "fc2"}),
])
def test_forward_matches_op_by_op_recomposition(variant, extra):
    config = ModelConfig(variant=variant, level=2, hops=1, **DESK, **extra)
    bundle = prepare_scene(yard_scene(), config, scene_id="s")
    model = build(config, seed=3)
    video = clip(1)
    got = model.forward(video, bundle)
    want = forward_oracle(config, model.params, bundle, video)
    np.testing.assert_array_equal(got, want)


def test_zero_weights_output_the_head_bias():
    for variant in ("BL1", "V4"):
        config = ModelConfig(variant=variant, level=2, parts=2, **DESK)
        model = build(config, seed=0)
        for k in model.params:
            model.params[k][:] = 0.0
        beta = np.linspace(-1, 1, N_ACTIONS)
        model.params["head.b"][:] = beta
        bundle = prepare_scene(yard_scene(), config, scene_id="s")
        np.testing.assert_array_equal(model.forward(clip(2), bundle), beta)


def test_v2_with_all_ones_gate_equals_v1():
    v1 = ModelConfig(variant="V1", level=2, **DESK)
    v2 = ModelConfig(variant="V2", level=2, **DESK)
    m1, m2 = build(v1, seed=5), build(v2, seed=5)
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k], m2.params[k])
    b1 = prepare_scene(yard_scene(), v1, scene_id="s")
    b2 = prepare_scene(yard_scene(), v2, scene_id="s")
    video = clip(3)
    np.testing.assert_array_equal(
        m2.forward(video, b2, apply_gate=False), m1.forward(video, b1))
    # literal all-ones gate, not just the bypass flag
    b2.gate_expanded = np.ones_like(b2.gate_expanded)
    np.testing.assert_array_equal(m2.forward(video, b2), m1.forward(video, b1))


def test_v4_with_one_part_has_v3_branch_structure():
    v4 = ModelConfig(variant="V4", level=2, parts=1, **DESK)
    v3 = ModelConfig(variant="V3", level=2, parts=1, **DESK)
    p4, p3 = init_params(v4), init_params(v3)
    conv4 = {k: v.shape for k, v in p4.items() if not k.startswith("head")}
    conv3_ = {k: v.shape for k, v in p3.items() if not k.startswith("head")}
    assert conv4 == conv3_
    assert not any("part" in k for k in p4)


def test_discretized_description_length_equals_plain_length():
    for parts in range(1, 6):
        config = ModelConfig(variant="V4", level=2, parts=parts, **DESK)
        model = build(config, seed=1)
        # part concatenation enters temporal block 6 with k*m channels, exits with m
        w6 = model.params["place5.b6.c0.w"]  # walkway is discretized
        assert w6.shape[3] == parts * config.filters and w6.shape[4] == config.filters
        bundle = prepare_scene(yard_scene(), config, scene_id="s")
        model.forward(clip(4), bundle)
        assert model._cache["f"].shape == (6 * config.filters,)


def test_baselines_ignore_decomposition_knobs():
    a = init_params(ModelConfig(variant="BL1", level=2, parts=3, hops=1, **DESK))
    b = init_params(ModelConfig(variant="BL1", level=4, parts=5, hops=0, **DESK))
    assert sorted(a) == sorted(b)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_bl2_consumes_nine_channels():
    config = ModelConfig(variant="BL2", **DESK)
    assert config.in_channels == 9
    params = init_params(config)
    assert params["net.b1.c0.w"].shape == (3, 3, 3, 9, config.filters)
    bundle = prepare_scene(yard_scene(), config, scene_id="s")
    assert build(config, seed=0).forward(clip(5), bundle).shape == (N_ACTIONS,)


def test_v1_and_v2_force_empty_discretization():
    cfg = ModelConfig(variant="V1", discretized=(P.WALKWAY,), **DESK)
    assert cfg.discretized == ()
    cfg = ModelConfig(variant="V2", **DESK)
    assert cfg.discretized == ()


# -- perturbation and gate locality ---------------------------------------------


def porch_action_rows():
    return [i for i, a in enumerate(ACTIONS) if a.place == P.PORCH]


def test_street_perturbation_leaves_porch_actions_unchanged():
    config = ModelConfig(variant="V4", level=2, parts=2, hops=1, **DESK)
    seg = yard_scene()
    reach = h_connected_set(adjacency(seg), P.PORCH, 1)
    assert P.STREET not in reach  # the scene is built to keep street two hops out
    model = build(config, seed=7)
    bundle = prepare_scene(seg, config, scene_id="s")
    video = clip(6)
    base = model.forward(video, bundle)
    x0_shape = (config.frames,) + config.level_shape() + (config.filters,)
    delta = np.random.default_rng(8).standard_normal(x0_shape)
    bumped = model.forward(video, bundle, perturb={int(P.STREET): delta})
    for i in porch_action_rows():
        assert bumped[i] - base[i] == 0.0  # exactly zero, not small
    street_row = next(i for i, a in enumerate(ACTIONS) if a.place == P.STREET)
    assert bumped[street_row] != base[street_row]


def test_backward_gives_exact_zero_grads_outside_the_hop_set():
    config = ModelConfig(variant="V4", level=2, parts=2, hops=1, **DESK)
    seg = yard_scene()
    model = build(config, seed=9)
    bundle = prepare_scene(seg, config, scene_id="s")
    model.forward(clip(7), bundle)
    grad_logits = np.zeros(N_ACTIONS)
    grad_logits[porch_action_rows()] = 1.0  # only porch actions carry loss
    grads = model.backward(grad_logits)
    reach = {int(p) for p in h_connected_set(adjacency(seg), P.PORCH, 1)}
    for p in PLACES:
        branch = [k for k in grads if k.startswith(f"place{int(p)}.")]
        total = sum(np.abs(grads[k]).sum() for k in branch)
        if int(p) in reach:
            assert total > 0.0
        else:
            assert total == 0.0


def test_plain_head_spreads_grads_everywhere():
    # sanity inverse of the locality test: V3 has no gate to stop the flow
    config = ModelConfig(variant="V3", level=2, parts=2, **DESK)
    model = build(config, seed=9)
    bundle = prepare_scene(yard_scene(), config, scene_id="s")
    model.forward(clip(7), bundle)
    grad_logits = np.zeros(N_ACTIONS)
    grad_logits[porch_action_rows()] = 1.0
    grads = model.backward(grad_logits)
    for p in PLACES:
        total = sum(np.abs(v).sum() for k, v in grads.items() if k.startswith(f"place{int(p)}."))
        assert total > 0.0


def test_swapping_two_place_masks_swaps_their_descriptions():
    config = ModelConfig(variant="V1", level=2, **DESK)
    model = build(config, seed=11)
    # tie every branch to the street branch weights so branches are interchangeable
    for p in PLACES:
        for k in list(model.params):
            if k.startswith("place1."):
                model.params[k.replace("place1.", f"place{int(p)}.")] = model.params[k]
    bundle = prepare_scene(yard_scene(), config, scene_id="s")
    video = clip(8)
    model.forward(video, bundle)
    f_before = model._cache["f"].copy()

    swapped = bundle.masks.copy()
    a, b = int(P.STREET) - 1, int(P.SIDEWALK) - 1
    swapped[[a, b]] = swapped[[b, a]]
    model.forward(video, SceneBundle(scene_id="s", masks=swapped))
    f_after = model._cache["f"]

    m = config.filters
    np.testing.assert_array_equal(f_after[a * m:(a + 1) * m], f_before[b * m:(b + 1) * m])
    np.testing.assert_array_equal(f_after[b * m:(b + 1) * m], f_before[a * m:(a + 1) * m])
    rest = np.ones(6 * m, dtype=bool)
    rest[a * m:(a + 1) * m] = rest[b * m:(b + 1) * m] = False
    np.testing.assert_array_equal(f_after[rest], f_before[rest])


# -- shape traces ------------------------------------------------------------------


def test_full_size_trace_matches_the_reference_table():
    rows = dict(shape_trace(ModelConfig(variant="V4")))
    assert rows["input"] == (15, 90, 160, 3)
    assert rows["pool1"] == (15, 45, 80, 64)
    assert rows["pool2"] == (15, 23, 40, 64)
    assert rows["pool5"] == (15, 3, 5, 64)
    assert rows["pool9"] == (1, 3, 5, 64)
    assert rows["sgmp_in"] == (1, 3, 5, 64)
    assert rows["features"] == (1, 1, 1, 384)


def test_desk_scale_trace():
    rows = dict(shape_trace(ModelConfig(variant="V4", frames=8, height=36, width=64, filters=8)))
    assert rows["input"] == (8, 36, 64, 3)
    assert rows["pool5"] == (8, 2, 2, 8)
    assert rows["sgmp_in"] == (1, 2, 2, 8)
    assert rows["features"] == (1, 1, 1, 48)


# -- config and checkpoint serialization --------------------------------------------


def test_config_json_round_trip():
    cfg = ModelConfig(variant="V4", level=3, parts=4, hops=2, **DESK,
                      share_part_weights=True)
    again = ModelConfig.from_json(cfg.to_json())
    assert again == cfg


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        ModelConfig(variant="V9")
    with pytest.raises(ValueError):
        ModelConfig(variant="V4", level=6)
    with pytest.raises(ValueError):
        ModelConfig(variant="V4", parts=0)
    with pytest.raises(ValueError):
        ModelConfig(variant="BL1", agg="gated")
    with pytest.raises(ValueError):
        ModelConfig(variant="V3", gate_test_only=True)  # needs the gated head
    with pytest.raises(ValueError):
        ModelConfig(variant="V4", agg="softmax")


def test_checkpoint_round_trip_with_optimizer_state(tmp_path):
    config = ModelConfig(variant="V4", level=2, parts=2, **DESK)
    params = init_params(config, seed=13)
    state = adam_init(params)
    grads = {k: np.full_like(v, 0.01) for k, v in params.items()}
    adam_step(params, grads, state)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, config, params, adam=state)
    cfg2, params2, state2 = load_checkpoint(path)
    assert cfg2 == config
    assert sorted(params2) == sorted(params)
    for k in params:
        np.testing.assert_array_equal(params2[k], params[k])
        np.testing.assert_array_equal(state2.m[k], state.m[k])
        np.testing.assert_array_equal(state2.v[k], state.v[k])
    assert state2.step == 1 and state2.lr == state.lr


def test_checkpoint_without_optimizer_state(tmp_path):
    config = ModelConfig(variant="BL1", **DESK)
    params = init_params(config)
    path = tmp_path / "plain.npz"
    save_checkpoint(path, config, params)
    _, params2, state2 = load_checkpoint(path)
    assert state2 is None
    assert sorted(params2) == sorted(params)


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(path, __meta__=np.frombuffer(b'{"format": "other"}', dtype=np.uint8))
    with pytest.raises(ValueError):
        load_checkpoint(path)


# -- error paths ----------------------------------------------------------------------


def test_forward_rejects_wrong_video_shape():
    config = ModelConfig(variant="V1", level=2, **DESK)
    model = build(config)
    bundle = prepare_scene(yard_scene(), config, scene_id="s")
    with pytest.raises(ValueError):
        model.forward(np.zeros((4, 24, 32, 1)), bundle)


def test_forward_rejects_mismatched_mask_resolution():
    config = ModelConfig(variant="V1", level=2, **DESK)
    other = ModelConfig(variant="V1", level=1, **DESK)
    model = build(config)
    with pytest.raises(ValueError):
        model.forward(clip(0), prepare_scene(yard_scene(), other, scene_id="s"))


def test_gated_forward_requires_a_gate():
    config = ModelConfig(variant="V4", level=2, parts=2, **DESK)
    model = build(config)
    bundle = prepare_scene(yard_scene(), config, scene_id="s")
    bundle.gate_expanded = None
    with pytest.raises(ValueError):
        model.forward(clip(0), bundle)


def test_build_is_deterministic():
    config = ModelConfig(variant="V4", level=2, parts=2, **DESK)
    a, b = build(config, seed=21), build(config, seed=21)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    bundle = prepare_scene(yard_scene(), config, scene_id="s")
    video = clip(9)
    np.testing.assert_array_equal(a.forward(video, bundle), b.forward(video, bundle))
