"""Training, evaluation and single-person prediction for the fusion head.

The branches are frozen, so every person's branch features are computed once
(:class:`FeatureBank`) and training only touches the fusion parameters.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import branches as br
from .dataset_io import AnnotationTable, compute_frequencies, crop_body
from .domain import CATEGORIES, NUM_CATEGORIES, VAD_MAX, BoundingBox, bits_to_labels
from .face import FaceCache, FaceDetector, extract_face
from .fusion import FusionConfig, FusionParams, backward, forward, init_fusion
from .losses import ContinuousLossConfig, class_weights, combined_loss, cont_loss, disc_loss
from .metrics import EvalReport, average_precision, fit_thresholds, mae, mean_ap

log = logging.getLogger(__name__)

TASKS = ("discrete", "continuous", "joint")
DEFAULT_BACKBONE = "toy_rand_32"
LOG_HEADER = ("epoch", "lr", "train_loss", "val_map", "val_mae", "seconds")


class TrainingError(RuntimeError):
    pass


def parse_branches(text: str, default_backbone: str = DEFAULT_BACKBONE) -> tuple[tuple[str, str], ...]:
    """``"body,context=resnet50"`` -> ``(("body", default), ("context", "resnet50"))`` in canonical order."""
    chosen = {}
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        kind, _, backbone = item.partition("=")
        kind = kind.strip()
        if kind not in br.KINDS:
            raise ValueError(f"unknown branch kind {kind!r}; expected one of {br.KINDS}")
        if kind in chosen:
            raise ValueError(f"branch {kind!r} given twice")
        if "=" in backbone:
            raise ValueError(f"malformed branch entry {item!r}")
        chosen[kind] = backbone.strip() or default_backbone
    if not chosen:
        raise ValueError("at least one branch is required")
    return tuple((k, chosen[k]) for k in br.KINDS if k in chosen)


def format_branches(pairs) -> str:
    return ",".join(f"{k}={b}" for k, b in pairs)


@dataclass(frozen=True)
class TrainConfig:
    branches: tuple[tuple[str, str], ...] = (
        ("body", DEFAULT_BACKBONE),
        ("context", DEFAULT_BACKBONE),
        ("face", DEFAULT_BACKBONE),
    )
    task: str = "discrete"
    batch_size: int = 26
    lr0: float = 0.005
    momentum: float = 0.9
    decay_factor: float = 0.9
    decay_every: int = 7
    epochs: int = 15
    seed: int = 0
    c: float = 1.2
    theta: float = 0.1
    lambda_disc: Optional[float] = None
    lambda_cont: Optional[float] = None
    hidden_dim: int = 256
    dropout_rate: float = 0.5

    def __post_init__(self):
        if isinstance(self.branches, str):
            object.__setattr__(self, "branches", parse_branches(self.branches))
        if not self.branches:
            raise ValueError("at least one branch is required")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.batch_size < 1 or self.epochs < 1 or self.decay_every < 1:
            raise ValueError("batch_size, epochs and decay_every must be >= 1")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @property
    def loss_weights(self) -> tuple[float, float]:
        defaults = {"discrete": (1.0, 0.0), "continuous": (0.0, 1.0), "joint": (1.0, 1.0)}[self.task]
        ld = defaults[0] if self.lambda_disc is None else self.lambda_disc
        lc = defaults[1] if self.lambda_cont is None else self.lambda_cont
        return ld, lc

    @property
    def branch_kinds(self) -> list[str]:
        return [k for k, _ in self.branches]

    def to_json(self) -> dict:
        d = asdict(self)
        d["branches"] = format_branches(self.branches)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def dumps(self) -> str:
        """Flat ``key = value`` text, the run-config file format."""
        lines = ["# emotic-mbn run config"]
        for k, v in self.to_json().items():
            lines.append(f"{k} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        values = parse_config_text(Path(path).read_text())
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def parse_config_text(text: str) -> dict:
    types = {f.name: f.type for f in fields(TrainConfig)}
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ValueError(f"config line {n}: expected 'key = value', got {raw!r}")
        if key not in types:
            raise ValueError(f"config line {n}: unknown key {key!r}")
        t = str(types[key])
        if value == "":
            out[key] = None
        elif key == "branches" or key == "task":
            out[key] = value
        elif "int" in t:
            out[key] = int(value)
        else:
            out[key] = float(value)
    return out


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Step decay: ``lr0 * decay_factor ** (epoch // decay_every)``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr0 * config.decay_factor ** (epoch // config.decay_every)


def sgd_step(params: FusionParams, grads: FusionParams, velocity: FusionParams, lr: float, momentum: float):
    """Classic momentum: ``v <- momentum * v + g``; ``p <- p - lr * v``."""
    new_p, new_v = {}, {}
    for name, p in params.items():
        g = getattr(grads, name)
        v = getattr(velocity, name)
        if g.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"{name}: shape mismatch between params {p.shape}, grads {g.shape}, velocity {v.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"{name}: non-finite gradient")
        new_v[name] = momentum * v + g
        new_p[name] = p - lr * new_v[name]
    return FusionParams(**new_p), FusionParams(**new_v)


# ---------------------------------------------------------------------------
# features


class FeatureBank:
    """Per-row branch features over a whole annotation table, computed lazily and memoized.

    ``faces`` (a :class:`FaceCache`) supplies prepared faces; without it faces
    are extracted on the fly with ``detector`` (``None`` -> top-square fallback).
    """

    def __init__(self, table: AnnotationTable, images, faces: Optional[FaceCache] = None,
                 detector: Optional[FaceDetector] = None, batch_size: int = 64,
                 branch_weights: Optional[dict] = None):
        self.table = table
        self.images = images
        self.faces = faces
        self.detector = detector
        self.batch_size = batch_size
        self.branch_weights = branch_weights or {}
        self._extractors: dict[tuple[str, str], object] = {}
        self._features: dict[tuple[str, str], np.ndarray] = {}

    def extractor(self, kind: str, backbone: str):
        key = (kind, backbone)
        if key not in self._extractors:
            spec = br.registry_lookup(backbone, kind)
            self._extractors[key] = br.build_extractor(spec, self.branch_weights.get(kind))
        return self._extractors[key]

    def _input(self, kind: str, idx: int) -> np.ndarray:
        row = self.table.rows[idx]
        image = self.images.lookup(row.image_id)
        if kind == "context":
            return image
        body = crop_body(image, row.body_box)
        if kind == "body":
            return body
        if self.faces is not None:
            return self.faces.get(row.image_id, idx)
        return extract_face(body, self.detector).pixels

    def features(self, kind: str, backbone: str) -> np.ndarray:
        key = (kind, backbone)
        if key not in self._features:
            ext = self.extractor(kind, backbone)
            n = len(self.table)
            chunks = []
            for start in range(0, n, self.batch_size):
                stop = min(n, start + self.batch_size)
                chunks.append(br.extract(ext, [self._input(kind, i) for i in range(start, stop)]))
            feats = np.concatenate(chunks) if chunks else np.zeros((0, ext.spec.output_dim))
            feats.setflags(write=False)
            self._features[key] = feats
        return self._features[key]

    def matrix(self, branch_pairs, indices=None) -> np.ndarray:
        mats = [self.features(k, b) for k, b in branch_pairs]
        x = np.concatenate(mats, axis=1)
        return x if indices is None else x[np.asarray(indices, dtype=int)]

    def specs(self, branch_pairs) -> list[br.BranchSpec]:
        return [self.extractor(k, b).spec for k, b in branch_pairs]


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    params: FusionParams
    fusion_config: FusionConfig
    train_config: TrainConfig
    branch_specs: list[br.BranchSpec]
    epoch: int
    metrics: dict = field(default_factory=dict)
    thresholds: Optional[np.ndarray] = None

    @property
    def branch_names(self) -> list[str]:
        return [f"{s.kind}:{s.name}" for s in self.branch_specs]

    def save(self, path) -> Path:
        """Write ``<path>.npz`` (parameters) and ``<path>.json`` (sidecar)."""
        path = Path(path)
        if path.suffix in (".npz", ".json"):
            path = path.with_suffix("")
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path.with_suffix(".npz"), **self.params.as_dict())
        sidecar = {
            "config": self.fusion_config.to_json(),
            "train_config": self.train_config.to_json(),
            "epoch": self.epoch,
            "metrics": self.metrics,
            "branches": [
                {"kind": s.kind, "name": s.name, "output_dim": s.output_dim, "spec": s.to_json()}
                for s in self.branch_specs
            ],
            "thresholds": None if self.thresholds is None else [
                None if not math.isfinite(t) else float(t) for t in self.thresholds
            ],
            "param_digest": self.params.digest(),
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if path.suffix in (".npz", ".json"):
            path = path.with_suffix("")
        npz, sidecar = path.with_suffix(".npz"), path.with_suffix(".json")
        for p in (npz, sidecar):
            if not p.is_file():
                raise FileNotFoundError(f"checkpoint file not found: {p}")
        meta = json.loads(sidecar.read_text())
        with np.load(npz) as data:
            params = FusionParams(**{n: data[n] for n in FusionParams.names()})
        if params.digest() != meta["param_digest"]:
            raise ValueError(f"{npz}: parameter digest does not match {sidecar}")
        fcfg = FusionConfig(**meta["config"])
        params.check(fcfg)
        thresholds = meta.get("thresholds")
        if thresholds is not None:
            thresholds = np.array([math.inf if t is None else t for t in thresholds])
        return cls(
            params=params,
            fusion_config=fcfg,
            train_config=TrainConfig.from_json(meta["train_config"]),
            branch_specs=[br.BranchSpec.from_json(b["spec"]) for b in meta["branches"]],
            epoch=meta["epoch"],
            metrics=meta.get("metrics", {}),
            thresholds=thresholds,
        )


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_map: Optional[float]
    val_mae: Optional[float]
    seconds: float

    def row(self, with_time: bool = True) -> list[str]:
        fmt = lambda v: "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))  # noqa: E731
        out = [str(self.epoch), repr(self.lr), repr(self.train_loss), fmt(self.val_map), fmt(self.val_mae)]
        if with_time:
            out.append(f"{self.seconds:.3f}")
        return out


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    log: list[EpochLog]

    def log_without_time(self) -> list[list[str]]:
        return [e.row(with_time=False) for e in self.log]


def write_train_log(entries: Iterable[EpochLog], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for e in entries:
            w.writerow(e.row())


def _batch_loss(pred, y_disc, has_disc, y_cont, weights, cont_cfg, lambdas):
    """Mean per-row loss over the batch and its gradients w.r.t. the two heads."""
    ld, lc = lambdas
    n = has_disc.shape[0]
    disc_part = cont_part = None
    n_disc = int(has_disc.sum())
    if ld and n_disc:
        loss_d, grad_d = disc_loss(pred.disc_scores, y_disc, weights)
        # rows without any category only feed the continuous head
        disc_part = ((loss_d * has_disc).sum() / n_disc, grad_d * has_disc[:, None] / n_disc)
    if lc:
        loss_c, grad_c = cont_loss(pred.cont_values, y_cont, cont_cfg)
        cont_part = (loss_c.mean(), grad_c / n)
    gd = np.zeros_like(pred.disc_scores)
    gc = np.zeros_like(pred.cont_values)
    if disc_part is None and cont_part is None:
        return 0.0, gd, gc
    loss, grad_d, grad_c = combined_loss(disc_part, cont_part, ld, lc)
    return float(loss), gd if grad_d is None else grad_d, gc if grad_c is None else grad_c


def _val_metrics(params, x_val, disc_val, vad_val, task):
    if x_val.shape[0] == 0:
        return None, None
    pred, _ = forward(params, x_val, "infer")
    val_map = val_mae = None
    if task in ("discrete", "joint"):
        aps = [average_precision(pred.disc_scores[:, k], disc_val[:, k]) for k in range(NUM_CATEGORIES)]
        if not all(math.isnan(a) for a in aps):
            val_map = mean_ap(aps)
    if task in ("continuous", "joint"):
        val_mae = mae(denormalize_vad(pred.cont_values), vad_val)[1]
    return val_map, val_mae


def denormalize_vad(values: np.ndarray) -> np.ndarray:
    return np.clip(values * VAD_MAX, 0.0, VAD_MAX)


def train(table: AnnotationTable, images, config: TrainConfig, faces: Optional[FaceCache] = None,
          detector: Optional[FaceDetector] = None, out_dir=None,
          bank: Optional[FeatureBank] = None) -> TrainResult:
    """Fit the fusion head on the train split; select the best epoch on val.

    With ``out_dir`` set, writes ``best``/``last`` checkpoints and ``train_log.csv``.
    """
    train_idx = table.split_indices("train")
    if not train_idx:
        raise TrainingError("training split is empty")
    val_idx = table.split_indices("val")
    bank = bank or FeatureBank(table, images, faces, detector)
    specs = bank.specs(config.branches)
    x_all = bank.matrix(config.branches)
    fcfg = FusionConfig(sum(s.output_dim for s in specs), config.hidden_dim, config.dropout_rate, config.seed)
    if x_all.shape[1] != fcfg.input_dim:
        raise TrainingError(f"branch features have width {x_all.shape[1]}, fusion expects {fcfg.input_dim}")

    x_train, x_val = x_all[train_idx], x_all[val_idx]
    disc_all = table.discrete_matrix()
    vad_all = table.vad_matrix()
    y_disc, y_cont = disc_all[train_idx], vad_all[train_idx] / VAD_MAX
    has_disc = (y_disc.sum(axis=1) > 0).astype(np.float64)
    disc_val, vad_val = disc_all[val_idx], vad_all[val_idx]

    weights = class_weights(compute_frequencies(table), config.c)
    cont_cfg = ContinuousLossConfig(config.theta)
    lambdas = config.loss_weights

    params = init_fusion(fcfg)
    velocity = FusionParams.zeros_like(params)
    shuffle_rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng([config.seed, 1])

    history: list[EpochLog] = []
    best_key, best_state = None, None
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = lr_at(epoch, config)
        order = shuffle_rng.permutation(len(train_idx))
        loss_sum = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            rows = order[start : start + config.batch_size]
            pred, cache = forward(params, x_train[rows], "train", dropout_rng, config.dropout_rate)
            loss, gd, gc = _batch_loss(pred, y_disc[rows], has_disc[rows], y_cont[rows], weights, cont_cfg, lambdas)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = backward(params, cache, gd, gc)
            params, velocity = sgd_step(params, grads, velocity, lr, config.momentum)
            loss_sum += loss * len(rows)
        val_map, val_mae = _val_metrics(params, x_val, disc_val, vad_val, config.task)
        entry = EpochLog(epoch, lr, loss_sum / len(order), val_map, val_mae, time.perf_counter() - t0)
        history.append(entry)
        log.info("epoch %d lr %.6g loss %.5f val_map %s val_mae %s", epoch, lr, entry.train_loss, val_map, val_mae)

        if config.task == "continuous":
            key = -val_mae if val_mae is not None else None
        else:
            key = val_map
        if best_state is None or (key is not None and (best_key is None or key > best_key)):
            best_key, best_state = key, (epoch, params.copy(), val_map, val_mae)

    def make_checkpoint(epoch, p, vmap, vmae):
        thresholds = None
        if config.task != "continuous" and len(val_idx):
            scores = forward(p, x_val, "infer")[0].disc_scores
            thresholds = fit_thresholds(scores, disc_val)
        metrics = {"val_map": vmap, "val_mae": vmae}
        return Checkpoint(p, fcfg, config, specs, epoch, metrics, thresholds)

    last = make_checkpoint(history[-1].epoch, params, history[-1].val_map, history[-1].val_mae)
    best = make_checkpoint(*best_state)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        best.save(out / "best")
        last.save(out / "last")
        write_train_log(history, out / "train_log.csv")
        (out / "run_config.txt").write_text(config.dumps())
    return TrainResult(best, last, history)


# ---------------------------------------------------------------------------
# evaluation


def evaluate_predictions(
    val_scores: Optional[np.ndarray],
    val_labels: Optional[np.ndarray],
    scores: Optional[np.ndarray],
    labels: Optional[np.ndarray],
    vad_pred: Optional[np.ndarray] = None,
    vad_truth: Optional[np.ndarray] = None,
    fallback_thresholds: Optional[np.ndarray] = None,
) -> EvalReport:
    """Score already-computed predictions (raw-scale VAD) into an :class:`EvalReport`.

    Thresholds are fitted on the validation scores; AP/mAP and MAE are computed
    on the evaluated set.
    """
    rep = EvalReport()
    if scores is not None:
        aps = np.array([average_precision(scores[:, k], labels[:, k]) for k in range(scores.shape[1])])
        rep.per_category_ap = aps
        rep.support = labels.sum(axis=0).astype(int)
        rep.map = mean_ap(aps) if not np.all(np.isnan(aps)) else None
        if val_scores is not None and len(val_scores):
            rep.thresholds = fit_thresholds(val_scores, val_labels)
            degenerate = [
                CATEGORIES[k] for k in range(val_scores.shape[1])
                if val_labels[:, k].any() and not (val_scores[:, k] >= rep.thresholds[k]).any(where=val_labels[:, k] > 0)
            ]
            if degenerate:
                rep.notes.append(
                    "equal precision/recall thresholds with zero recall on val: " + ", ".join(degenerate)
                )
        elif fallback_thresholds is not None:
            rep.thresholds = np.asarray(fallback_thresholds, dtype=np.float64)
            rep.notes.append("validation split empty: using thresholds stored in the checkpoint")
        else:
            rep.thresholds = np.full(scores.shape[1], np.inf)
        if rep.excluded_categories:
            rep.notes.append(f"{len(rep.excluded_categories)} categories without positives excluded from mAP")
    if vad_pred is not None:
        rep.mae_per_dim, rep.mae_mean = mae(vad_pred, vad_truth)
    return rep


def predict_arrays(checkpoint: Checkpoint, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Discrete scores and raw-scale (clamped) VAD for a feature matrix."""
    pred, _ = forward(checkpoint.params, x, "infer")
    return pred.disc_scores, denormalize_vad(pred.cont_values)


def evaluate(checkpoint: Checkpoint, table: AnnotationTable, images=None, split: str = "test",
             faces: Optional[FaceCache] = None, detector: Optional[FaceDetector] = None,
             bank: Optional[FeatureBank] = None, task: Optional[str] = None) -> EvalReport:
    idx = table.split_indices(split)
    if not idx:
        raise ValueError(f"split {split!r} has no rows")
    val_idx = table.split_indices("val")
    bank = bank or FeatureBank(table, images, faces, detector)
    pairs = [(s.kind, s.name) for s in checkpoint.branch_specs]
    specs = bank.specs(pairs)
    if [s.output_dim for s in specs] != [s.output_dim for s in checkpoint.branch_specs]:
        raise ValueError("available branch features do not match the checkpoint's branch dimensions")
    task = task or checkpoint.train_config.task
    x = bank.matrix(pairs, idx)
    scores, vad = predict_arrays(checkpoint, x)
    disc = table.discrete_matrix(idx)
    rep_args = {}
    if task in ("discrete", "joint"):
        val_scores = predict_arrays(checkpoint, bank.matrix(pairs, val_idx))[0] if val_idx else None
        rep_args.update(
            val_scores=val_scores,
            val_labels=table.discrete_matrix(val_idx) if val_idx else None,
            scores=scores,
            labels=disc,
            fallback_thresholds=checkpoint.thresholds,
        )
    else:
        rep_args.update(val_scores=None, val_labels=None, scores=None, labels=None)
    if task in ("continuous", "joint"):
        rep_args.update(vad_pred=vad, vad_truth=table.vad_matrix(idx))
    rep = evaluate_predictions(**rep_args)
    rep.branches = checkpoint.branch_names
    rep.split = split
    return rep


# ---------------------------------------------------------------------------
# prediction


@dataclass
class PredictionRecord:
    image_id: str
    row_index: Optional[int]
    disc_scores: list[float]
    disc_decisions: Optional[list[int]]
    vad_pred: list[float]
    disc_truth: Optional[list[int]] = None
    vad_truth: Optional[list[float]] = None
    face_fallback: bool = False

    @property
    def predicted_categories(self) -> list[str]:
        return bits_to_labels(self.disc_decisions or [])

    def to_json(self) -> dict:
        d = asdict(self)
        d["predicted_categories"] = self.predicted_categories
        return d


def load_extractors(checkpoint: Checkpoint, branch_weights: Optional[dict] = None) -> dict:
    weights = branch_weights or {}
    return {s.kind: br.build_extractor(s, weights.get(s.kind)) for s in checkpoint.branch_specs}


def predict(checkpoint: Checkpoint, image: np.ndarray, body_box: BoundingBox,
            detector: Optional[FaceDetector] = None, extractors: Optional[dict] = None,
            image_id: str = "", row_index: Optional[int] = None,
            disc_truth=None, vad_truth=None) -> PredictionRecord:
    """Full pipeline for one person: crops, face, branch features, fusion head, decisions."""
    extractors = extractors or load_extractors(checkpoint)
    body = crop_body(image, body_box)
    face = None
    feats = []
    for spec in checkpoint.branch_specs:
        if spec.kind == "context":
            raster = image
        elif spec.kind == "body":
            raster = body
        else:
            face = face or extract_face(body, detector)
            raster = face.pixels
        feats.append(br.extract(extractors[spec.kind], [raster])[0])
    scores, vad = predict_arrays(checkpoint, np.concatenate(feats)[None, :])
    scores, vad = scores[0], vad[0]
    decisions = None
    if checkpoint.thresholds is not None:
        decisions = [int(s >= t) for s, t in zip(scores, checkpoint.thresholds)]
    return PredictionRecord(
        image_id=image_id,
        row_index=row_index,
        disc_scores=[float(s) for s in scores],
        disc_decisions=decisions,
        vad_pred=[float(v) for v in vad],
        disc_truth=None if disc_truth is None else [int(b) for b in disc_truth],
        vad_truth=None if vad_truth is None else [float(v) for v in vad_truth],
        face_fallback=bool(face.fallback_used) if face is not None else False,
    )


# ---------------------------------------------------------------------------
# ablation grid


def branch_subsets(kinds=br.KINDS) -> list[tuple[str, ...]]:
    return [c for r in range(1, len(kinds) + 1) for c in itertools.combinations(kinds, r)]


@dataclass
class AblationRow:
    kinds: tuple[str, ...]
    discrete: Optional[EvalReport]
    continuous: Optional[EvalReport]

    def merged(self) -> EvalReport:
        rep = EvalReport(branches=(self.discrete or self.continuous).branches)
        if self.discrete is not None:
            rep.map = self.discrete.map
        if self.continuous is not None:
            rep.mae_mean = self.continuous.mae_mean
        return rep


def ablation_grid(table: AnnotationTable, images, base: TrainConfig, faces=None, detector=None,
                  subsets=None, tasks=("discrete", "continuous"), split: str = "test",
                  bank: Optional[FeatureBank] = None) -> list[AblationRow]:
    """Train and evaluate every branch subset, once per task."""
    bank = bank or FeatureBank(table, images, faces, detector)
    backbone = dict(base.branches)
    rows = []
    for kinds in subsets or branch_subsets():
        pairs = tuple((k, backbone.get(k, DEFAULT_BACKBONE)) for k in kinds)
        reports = {}
        for task in tasks:
            cfg = replace(base, branches=pairs, task=task)
            result = train(table, images, cfg, bank=bank)
            reports[task] = evaluate(result.best, table, split=split, bank=bank)
        rows.append(AblationRow(tuple(kinds), reports.get("discrete"), reports.get("continuous")))
    return rows


def format_ablation(rows: list[AblationRow]) -> str:
    from .metrics import format_results_table

    return format_results_table([r.merged() for r in rows]) + "\n"
