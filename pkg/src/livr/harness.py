"""Training, evaluation, and ablation driver for the synthetic benchmark.

The protocol mirrors an observed/unseen camera split: models train on the
observed-train scenes, early-stop on observed-val mAP, and report
generalization on scenes never seen during training. Per-scene gate
matrices are always recomputed from each evaluated scene's own map.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .layout import SegmentationMap, place_from_label
from .model import Model, ModelConfig, SceneBundle, build, prepare_scene, save_checkpoint
from .nn import (
    AdamState,
    GatedFCParams,
    adam_init,
    adam_step,
    clip_grad_norm,
    conv3d,
    conv3d_backward,
    decompose,
    decompose_backward,
    gated_fc,
    gated_fc_backward,
    gradcheck,
    maxpool_spatial,
    maxpool_spatial_backward,
    maxpool_temporal,
    maxpool_temporal_backward,
    sgmp,
    sgmp_backward,
    sigmoid,
    sigmoid_bce,
    sigmoid_bce_backward,
)
from .synth import read_clip
from .topology import ACTIONS, N_ACTIONS

GRADCHECK_TOL = 1e-5


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint scene-id sets: observed train/val halves plus unseen test."""

    observed_train: tuple[str, ...]
    observed_val: tuple[str, ...]
    unseen: tuple[str, ...]

    def __post_init__(self) -> None:
        groups = [set(self.observed_train), set(self.observed_val), set(self.unseen)]
        total = sum(len(g) for g in groups)
        if total != len(set().union(*groups)):
            raise ValueError("split scene sets overlap")

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        d = json.loads(text)
        return cls(tuple(d["observed_train"]), tuple(d["observed_val"]), tuple(d["unseen"]))

    def to_json(self) -> str:
        return json.dumps({
            "observed_train": list(self.observed_train),
            "observed_val": list(self.observed_val),
            "unseen": list(self.unseen),
        }, indent=2)


@dataclass
class ClipRecord:
    video: np.ndarray
    labels: np.ndarray
    scene_id: str


def load_manifest(data_dir) -> dict:
    manifest = json.loads((Path(data_dir) / "manifest.json").read_text())
    if manifest.get("format") != "livr-dataset":
        raise ValueError(f"{data_dir}: not a generated dataset")
    return manifest


def load_records(data_dir, manifest: dict, scene_ids: Sequence[str]) -> list[ClipRecord]:
    wanted = set(scene_ids)
    root = Path(data_dir)
    records = []
    for scene in manifest["scenes"]:
        if scene["scene_id"] not in wanted:
            continue
        for clip in scene["clips"]:
            labels = np.zeros(N_ACTIONS, dtype=np.int8)
            labels[clip["labels"]] = 1
            records.append(ClipRecord(read_clip(root / clip["path"]), labels, scene["scene_id"]))
    missing = wanted - {s["scene_id"] for s in manifest["scenes"]}
    if missing:
        raise ValueError(f"scenes absent from manifest: {sorted(missing)}")
    return records


def scene_bundles(data_dir, manifest: dict, config: ModelConfig,
                  scene_ids: Sequence[str]) -> dict[str, SceneBundle]:
    wanted = set(scene_ids)
    root = Path(data_dir)
    bundles = {}
    for scene in manifest["scenes"]:
        sid = scene["scene_id"]
        if sid not in wanted:
            continue
        seg = SegmentationMap.from_json((root / scene["segmentation"]).read_text())
        bundles[sid] = prepare_scene(seg, config, scene_id=sid)
    return bundles


# -- metrics -------------------------------------------------------------------


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Precision-at-positive averaging; ties broken by original index."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order].astype(np.float64)
    hits = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    return float((hits[ranked == 1] / ranks[ranked == 1]).mean())


@dataclass
class EvalReport:
    per_action: list[dict]
    map: float

    def to_json(self) -> str:
        return json.dumps({"mAP": self.map, "per_action": self.per_action}, indent=2)

    def table(self) -> str:
        lines = [f"{'action':<42} {'AP':>8} {'pos':>5}"]
        for row in self.per_action:
            ap = "---" if row["ap"] is None else f"{row['ap']:.4f}"
            lines.append(f"{row['action']:<42} {ap:>8} {row['positives']:>5}")
        lines.append(f"{'mAP':<42} {self.map:>8.4f}")
        return "\n".join(lines)


def _center(video: np.ndarray) -> np.ndarray:
    # clips arrive in [0, 1]; zero-mean inputs keep the early conv layers out
    # of the all-positive ReLU regime
    return video - 0.5


def evaluate(model: Model, records: Sequence[ClipRecord],
             bundles: dict[str, SceneBundle]) -> EvalReport:
    scores = np.zeros((len(records), N_ACTIONS))
    labels = np.zeros((len(records), N_ACTIONS), dtype=np.int8)
    for i, rec in enumerate(records):
        scores[i] = sigmoid(model.forward(_center(rec.video), bundles[rec.scene_id]))
        labels[i] = rec.labels
    per_action = []
    defined = []
    for a, action in enumerate(ACTIONS):
        pos = int(labels[:, a].sum())
        ap = average_precision(scores[:, a], labels[:, a]) if pos else None
        if ap is not None:
            defined.append(ap)
        per_action.append({"action": action.name, "ap": ap, "positives": pos})
    if not defined:
        raise ValueError("no action has positives; nothing to evaluate")
    return EvalReport(per_action=per_action, map=float(np.mean(defined)))


# -- training ------------------------------------------------------------------


@dataclass
class TrainResult:
    config: ModelConfig
    params: dict[str, np.ndarray]
    curves: list[dict] = field(default_factory=list)
    best_val_map: float = 0.0
    best_epoch: int = 0
    epochs_run: int = 0

    def model(self) -> Model:
        return Model(self.config, self.params)


def train(config: ModelConfig, data_dir, split: SplitSpec, seed: int = 0,
          epochs: int = 40, batch: int = 8, lr: float = 1e-3, patience: int = 5,
          warmup: int = 0, lr_final: float = 0.0, val_stride: int = 1,
          clip: float = 0.0,
          out_dir=None, log: Optional[Callable[[str], None]] = None) -> TrainResult:
    """Adam + mean BCE with early stopping on observed-val mAP.

    ``warmup`` ramps the learning rate linearly from lr/warmup to lr over the
    first ``warmup`` epochs ("initial learning rate" protocol), and a nonzero
    ``lr_final`` then anneals it linearly down to that value by the last
    epoch. ``val_stride`` early-stops on every val_stride-th validation clip
    instead of all of them, trading metric granularity for epoch wall time.
    ``clip`` bounds the global gradient norm per optimizer step (0 disables).
    """
    if not split.observed_train or not split.observed_val:
        raise ValueError("empty split: train and val scene lists are required")
    manifest = load_manifest(data_dir)
    train_recs = load_records(data_dir, manifest, split.observed_train)
    val_recs = load_records(data_dir, manifest, split.observed_val)
    if not train_recs or not val_recs:
        raise ValueError("split selects no clips")
    bundles = scene_bundles(data_dir, manifest, config,
                            split.observed_train + split.observed_val)
    # clip files are grouped by scene, so a stride keeps scenes balanced
    val_recs = val_recs[::val_stride]

    model = build(config, seed=seed, dtype=np.float32)
    adam = adam_init(model.params, lr=lr)
    rng = np.random.default_rng(seed)
    train_gate = not config.gate_test_only

    result = TrainResult(config=config, params={k: v.copy() for k, v in model.params.items()})
    patience_left = patience
    for epoch in range(1, epochs + 1):
        if warmup > 0 and epoch <= warmup:
            adam.lr = lr * epoch / warmup
        elif lr_final > 0.0 and epochs > warmup:
            frac = (epoch - warmup) / (epochs - warmup)
            adam.lr = lr + (lr_final - lr) * frac
        order = rng.permutation(len(train_recs))
        epoch_loss = 0.0
        for start in range(0, len(order), batch):
            chunk = order[start: start + batch]
            grads = model.zero_grads()
            for idx in chunk:
                rec = train_recs[idx]
                logits = model.forward(_center(rec.video), bundles[rec.scene_id],
                                       apply_gate=train_gate)
                loss = sigmoid_bce(logits, rec.labels)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch} on scene {rec.scene_id}")
                epoch_loss += loss
                model.backward(sigmoid_bce_backward(logits, rec.labels).astype(np.float32),
                               grads)
            for g in grads.values():
                g /= len(chunk)
            if clip > 0.0:
                clip_grad_norm(grads, clip)
            adam_step(model.params, grads, adam)
        val_report = evaluate(model, val_recs, bundles)
        row = {"epoch": epoch, "train_loss": epoch_loss / len(train_recs),
               "val_map": val_report.map}
        result.curves.append(row)
        result.epochs_run = epoch
        if log:
            log(f"epoch {epoch:3d}  loss {row['train_loss']:.4f}  val mAP {row['val_map']:.4f}")
        if val_report.map > result.best_val_map + 1e-9:
            result.best_val_map = val_report.map
            result.best_epoch = epoch
            result.params = {k: v.copy() for k, v in model.params.items()}
            patience_left = patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                break

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "best.npz", config, result.params, adam)
        with open(out / "curves.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_map"])
            writer.writeheader()
            writer.writerows(result.curves)
    return result


def evaluate_on(config: ModelConfig, params: dict, data_dir, scene_ids: Sequence[str]) -> EvalReport:
    manifest = load_manifest(data_dir)
    records = load_records(data_dir, manifest, scene_ids)
    bundles = scene_bundles(data_dir, manifest, config, scene_ids)
    return evaluate(Model(config, params), records, bundles)


def benchmark(data_dir, split: SplitSpec, variants: Sequence[str], seed: int = 0,
              base: Optional[ModelConfig] = None, log=None, **train_kw) -> dict:
    """Train each variant under one seed/split; report unseen-scene mAP."""
    manifest = load_manifest(data_dir)
    results = {}
    for variant in variants:
        if base is None:
            cfg = ModelConfig(variant=variant, frames=manifest["frames"],
                              height=manifest["height"], width=manifest["width"],
                              filters=8)
        else:
            cfg = replace(base, variant=variant, agg="",
                          discretized=_variant_discretized(variant, base))
        if log:
            log(f"== training {variant} ==")
        res = train(cfg, data_dir, split, seed=seed, log=log, **train_kw)
        unseen = evaluate_on(cfg, res.params, data_dir, split.unseen)
        results[variant] = {
            "config": json.loads(cfg.to_json()),
            "val_map": res.best_val_map,
            "unseen_map": unseen.map,
            "epochs": res.epochs_run,
            "unseen_report": json.loads(unseen.to_json()),
        }
        if log:
            log(f"{variant}: val mAP {res.best_val_map:.4f}, unseen mAP {unseen.map:.4f}")
    return results


def _variant_discretized(variant: str, base: ModelConfig):
    if variant in ("V1", "V2"):
        return ()
    return base.discretized or ModelConfig(variant="V4").discretized


# -- ablations -----------------------------------------------------------------


def _config_for(dim: str, value: str, base: ModelConfig) -> ModelConfig:
    if dim == "L":
        return replace(base, level=int(value))
    if dim == "k":
        return replace(base, parts=int(value))
    if dim == "h":
        return replace(base, hops=int(value))
    if dim == "PL_DT":
        cats = () if value in ("none", "") else tuple(
            place_from_label(tok) for tok in value.split("+"))
        return replace(base, discretized=cats)
    if dim == "agg":
        if value in ("fc1", "fc2"):
            return replace(base, agg=value, gate_test_only=False)
        if value.startswith("topo:"):
            tail = value.split(":", 1)[1]
            if tail == "test-only":
                return replace(base, agg="gated", gate_test_only=True)
            return replace(base, agg="gated", hops=int(tail), gate_test_only=False)
        raise ValueError(f"unknown agg token {value!r}")
    raise ValueError(f"unknown ablation dimension {dim!r}")


def ablate(dim: str, values: Sequence[str], base: ModelConfig, data_dir,
           split: SplitSpec, seed: int = 0, out_dir=None, log=None, **train_kw) -> list[dict]:
    """One trained model per value under a shared seed and split."""
    rows = []
    for value in values:
        cfg = _config_for(dim, str(value), base)
        res = train(cfg, data_dir, split, seed=seed, log=log, **train_kw)
        unseen = evaluate_on(cfg, res.params, data_dir, split.unseen)
        rows.append({"dim": dim, "value": str(value), "val_map": res.best_val_map,
                     "unseen_map": unseen.map, "epochs": res.epochs_run})
        if log:
            log(f"{dim}={value}: val {res.best_val_map:.4f} unseen {unseen.map:.4f}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"ablation_{dim}.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["dim", "value", "val_map",
                                                    "unseen_map", "epochs"])
            writer.writeheader()
            writer.writerows(rows)
        (out / f"ablation_{dim}.json").write_text(json.dumps(rows, indent=2))
    return rows


# -- gradient-check suite --------------------------------------------------------


def _tie_free(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    n = int(np.prod(shape))
    return rng.permutation(np.linspace(-1.0, 1.0, n)).reshape(shape)


def gradcheck_suite(seed: int = 0, trials: int = 5) -> list[tuple[str, float, bool]]:
    """Max relative finite-difference error per differentiable op."""
    rng = np.random.default_rng(seed)
    errs: dict[str, float] = {}

    def note(name: str, err: float) -> None:
        errs[name] = max(errs.get(name, 0.0), err)

    for _ in range(trials):
        t, h, w = (int(rng.integers(1, 4)) for _ in range(3))
        h, w = h + 2, w + 2
        ci, co = int(rng.integers(1, 4)), int(rng.integers(1, 4))

        x = rng.standard_normal((t, h, w, ci))
        wt = rng.standard_normal((3, 3, 3, ci, co))
        bias = rng.standard_normal(co)
        proj = rng.standard_normal((t, h, w, co))
        note("conv3d", max(
            gradcheck(lambda a: (float((conv3d(a, wt, bias) * proj).sum()),
                                 conv3d_backward(a, wt, proj)[0]), x),
            gradcheck(lambda a: (float((conv3d(x, a, bias) * proj).sum()),
                                 conv3d_backward(x, a, proj)[1]), wt),
            gradcheck(lambda a: (float((conv3d(x, wt, a) * proj).sum()),
                                 conv3d_backward(x, wt, proj)[2]), bias),
        ))

        xp = _tie_free(rng, (t + 1, h, w, ci))
        proj_s = rng.standard_normal(maxpool_spatial(xp).shape)
        note("maxpool_spatial", gradcheck(
            lambda a: (float((maxpool_spatial(a) * proj_s).sum()),
                       maxpool_spatial_backward(a, proj_s)), xp))
        proj_t = rng.standard_normal(maxpool_temporal(xp).shape)
        note("maxpool_temporal", gradcheck(
            lambda a: (float((maxpool_temporal(a) * proj_t).sum()),
                       maxpool_temporal_backward(a, proj_t)), xp))

        mask = rng.random((h, w)) < 0.6
        proj_d = rng.standard_normal(x.shape)
        note("decompose", gradcheck(
            lambda a: (float((decompose(a, mask) * proj_d).sum()),
                       decompose_backward(mask, proj_d)), x))

        xs = _tie_free(rng, (1, h, w, ci))
        proj_g = rng.standard_normal(ci)
        note("sgmp", gradcheck(
            lambda a: (float((sgmp(a) * proj_g).sum()), sgmp_backward(a, proj_g)), xs))

        na, nf = int(rng.integers(2, 6)), int(rng.integers(3, 9))
        gparams = GatedFCParams(weights=rng.standard_normal((na, nf)),
                                bias=rng.standard_normal(na),
                                mask=rng.random((na, nf)) < 0.5)
        fvec = rng.standard_normal(nf)
        proj_y = rng.standard_normal(na)
        note("gated_fc", max(
            gradcheck(lambda a: (
                float((gated_fc(a, gparams) * proj_y).sum()),
                gated_fc_backward(a, gparams, proj_y)[0]), fvec),
            gradcheck(lambda a: (
                float((gated_fc(fvec, GatedFCParams(a, gparams.bias, gparams.mask)) * proj_y).sum()),
                gated_fc_backward(fvec, GatedFCParams(a, gparams.bias, gparams.mask), proj_y)[1]),
                np.where(gparams.mask, rng.standard_normal((na, nf)), 0.0)),
        ))

        logits = rng.standard_normal(na) * 3.0
        lab = (rng.random(na) < 0.5).astype(np.float64)
        note("sigmoid_bce", gradcheck(
            lambda a: (sigmoid_bce(a, lab), sigmoid_bce_backward(a, lab)), logits))

    return [(name, err, err <= GRADCHECK_TOL) for name, err in errs.items()]
