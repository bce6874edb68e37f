"""Command-line entry points.

Subcommands: gen (synthetic dataset), dt (distance transform + place
discretization), topo (adjacency / reachable sets / gate matrix),
train / eval / ablate (harness), gradcheck (differentiable-op audit).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import geometry, harness, synth
from .layout import PLACES, PlaceCategory, SegmentationMap, place_from_label
from .model import ModelConfig, load_checkpoint
from .topology import ACTIONS, action_place_matrix, adjacency, h_connected_set


def _load_seg(path: str) -> SegmentationMap:
    return SegmentationMap.from_json(Path(path).read_text())


def _parse_anchor(text: str) -> geometry.AnchorSpec:
    if text == "porch":
        return geometry.AnchorSpec.place(PlaceCategory.PORCH)
    if text.startswith("line:"):
        vals = [float(v) for v in text[len("line:"):].split(",")]
        if len(vals) != 4:
            raise argparse.ArgumentTypeError("line anchor needs x1,y1,x2,y2")
        return geometry.AnchorSpec.line((vals[0], vals[1]), (vals[2], vals[3]))
    raise argparse.ArgumentTypeError(f"unknown anchor {text!r}")


def _write_pgm(path, grid: np.ndarray) -> None:
    """8-bit binary PGM, min-max normalized."""
    finite = np.isfinite(grid)
    lo = float(grid[finite].min()) if finite.any() else 0.0
    hi = float(grid[finite].max()) if finite.any() else 1.0
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.where(finite, (grid - lo) * scale, 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def _cmd_gen(args) -> int:
    manifest = synth.build_dataset(
        args.out, scenes=args.scenes, clips_per_scene=args.clips_per_scene,
        seed=args.seed, width=args.width, height=args.height,
        frames=args.frames, unseen=args.unseen)
    n_clips = sum(len(s["clips"]) for s in manifest["scenes"])
    print(f"wrote {len(manifest['scenes'])} scenes / {n_clips} clips to {args.out}")
    print(f"regenerated clips after oracle disagreement: {manifest['regenerated']}")
    return 0


def _cmd_dt(args) -> int:
    seg = _load_seg(args.segmentation)
    anchor = _parse_anchor(args.anchor)
    dfield = geometry.distance_transform(seg, anchor)
    print(geometry.field_to_json(dfield))
    if args.place:
        pim = geometry.discretize_place(seg, dfield, place_from_label(args.place), args.k)
        print(geometry.parts_to_json(pim))
        if args.pgm:
            _write_pgm(f"{args.pgm}.parts.pgm", pim.part.astype(float))
    if args.pgm:
        _write_pgm(f"{args.pgm}.dist.pgm", dfield.dist)
    return 0


def _cmd_topo(args) -> int:
    seg = _load_seg(args.segmentation)
    adj = adjacency(seg)
    gate = action_place_matrix(adj, args.hops)
    reach = {}
    for p in PLACES:
        if adj.present(p):
            reach[p.label] = sorted(q.label for q in h_connected_set(adj, p, args.hops))
    print(json.dumps({
        "adjacency": adj.matrix.astype(int).tolist(),
        "reachable": reach,
        "gate": gate.T.astype(int).tolist(),
        "diagnostics": list(gate.diagnostics),
    }, indent=2))
    return 0


def _cmd_train(args) -> int:
    config = ModelConfig.from_json(Path(args.config).read_text())
    split = harness.SplitSpec.from_json(Path(args.split).read_text())
    result = harness.train(config, args.data, split, seed=args.seed,
                           epochs=args.epochs, batch=args.batch, lr=args.lr,
                           patience=args.patience, warmup=args.warmup,
                           lr_final=args.lr_final, val_stride=args.val_stride,
                           clip=args.clip, out_dir=args.out, log=print)
    print(f"best val mAP {result.best_val_map:.4f} at epoch {result.best_epoch}")
    return 0


def _cmd_eval(args) -> int:
    config, params, _ = load_checkpoint(args.ckpt)
    split = harness.SplitSpec.from_json(Path(args.split).read_text())
    scene_ids = {"unseen": split.unseen, "val": split.observed_val,
                 "train": split.observed_train}[args.subset]
    report = harness.evaluate_on(config, params, args.data, scene_ids)
    print(report.table())
    if args.report:
        Path(args.report).write_text(report.to_json())
    return 0


def _cmd_ablate(args) -> int:
    base = ModelConfig.from_json(Path(args.config).read_text())
    split = harness.SplitSpec.from_json(Path(args.split).read_text())
    rows = harness.ablate(args.dim, args.values.split(","), base, args.data, split,
                          seed=args.seed, out_dir=args.out, log=print,
                          epochs=args.epochs, patience=args.patience)
    for row in rows:
        print(f"{row['dim']}={row['value']}: val {row['val_map']:.4f} "
              f"unseen {row['unseen_map']:.4f}")
    return 0


def _cmd_gradcheck(args) -> int:
    failed = False
    for name, err, ok in harness.gradcheck_suite(seed=args.seed):
        print(f"{name:<18} max rel err {err:.3e}  {'ok' if ok else 'FAIL'}")
        failed |= not ok
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="livr",
                                     description="layout-induced video representation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic yard dataset")
    p.add_argument("--scenes", type=int, default=18)
    p.add_argument("--clips-per-scene", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=36)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--unseen", type=int, default=None)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("dt", help="distance transform and place discretization")
    p.add_argument("segmentation", help="segmentation map JSON")
    p.add_argument("--anchor", default="porch", help="'porch' or 'line:x1,y1,x2,y2'")
    p.add_argument("--place", default=None, help="place label to discretize")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--pgm", default=None, help="path prefix for PGM previews")
    p.set_defaults(fn=_cmd_dt)

    p = sub.add_parser("topo", help="adjacency, reachable sets, gate matrix")
    p.add_argument("segmentation")
    p.add_argument("--h", dest="hops", type=int, default=1)
    p.set_defaults(fn=_cmd_topo)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--warmup", type=int, default=0,
                   help="epochs of linear learning-rate ramp up to --lr")
    p.add_argument("--lr-final", type=float, default=0.0,
                   help="anneal the rate linearly to this value by the last epoch")
    p.add_argument("--val-stride", type=int, default=1,
                   help="early-stop on every Nth validation clip")
    p.add_argument("--clip", type=float, default=0.0,
                   help="global gradient-norm bound per step (0 disables)")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--subset", choices=("unseen", "val", "train"), default="unseen")
    p.add_argument("--report", default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="sweep one config dimension")
    p.add_argument("--dim", required=True, choices=("L", "k", "h", "PL_DT", "agg"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--patience", type=int, default=5)
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference audit of every op")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_gradcheck)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
