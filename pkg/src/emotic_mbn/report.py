"""Static report figures: per-category AP bars, VAD error histogram, annotated sample grid."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import engine  # noqa: E402
from .domain import CATEGORIES, VAD_NAMES, bits_to_labels  # noqa: E402

# keeps PNG bytes stable across runs
_SAVE = {"dpi": 100, "metadata": {"Software": None}}


def ap_bar_chart(report, path: Path) -> Path:
    aps = np.nan_to_num(report.per_category_ap, nan=0.0)
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.bar(range(len(CATEGORIES)), aps, color="tab:blue")
    ax.set_xticks(range(len(CATEGORIES)))
    ax.set_xticklabels(CATEGORIES, rotation=70, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("AP")
    ax.set_title(f"Per-category AP ({report.split}), mAP = {report.map:.4f}")
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def vad_error_histogram(errors: np.ndarray, path: Path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(10, 3), sharey=True)
    bins = np.linspace(-10, 10, 41)
    for d, ax in enumerate(axes):
        ax.hist(errors[:, d], bins=bins, color="tab:orange")
        ax.set_title(f"{VAD_NAMES[d]}: MAE {np.mean(np.abs(errors[:, d])):.3f}")
        ax.set_xlabel("prediction - truth")
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def sample_grid(records, images, table, path: Path) -> Path:
    n = len(records)
    cols = min(4, n)
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 3.8 * rows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for ax, rec in zip(axes.ravel(), records):
        row = table.rows[rec.row_index]
        ax.imshow(images.lookup(row.image_id))
        b = row.body_box
        ax.add_patch(plt.Rectangle((b.x1 - 0.5, b.y1 - 0.5), b.width, b.height, fill=False, color="yellow"))
        truth = ", ".join(bits_to_labels(rec.disc_truth or []))
        pred = ", ".join(rec.predicted_categories) if rec.disc_decisions is not None else "n/a"
        vad_t = " ".join(f"{v:.0f}" for v in rec.vad_truth or [])
        vad_p = " ".join(f"{v:.1f}" for v in rec.vad_pred)
        ax.set_title(f"T: {truth}\nP: {pred}\nVAD T: {vad_t}  P: {vad_p}", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def write_report(checkpoint, table, images, out_dir, faces=None, detector=None,
                 vad_checkpoint=None, k: int = 8, seed: int = 0, split: str = "test") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bank = engine.FeatureBank(table, images, faces, detector)
    written = []

    disc_report = engine.evaluate(checkpoint, table, split=split, bank=bank, task="discrete")
    (out / "eval_discrete.json").write_text(disc_report.dumps())
    written.append(out / "eval_discrete.json")
    written.append(ap_bar_chart(disc_report, out / "ap_per_category.png"))

    if vad_checkpoint is None and checkpoint.train_config.task != "discrete":
        vad_checkpoint = checkpoint
    idx = table.split_indices(split)
    vad_pred = None
    if vad_checkpoint is not None:
        x = bank.matrix([(s.kind, s.name) for s in vad_checkpoint.branch_specs], idx)
        vad_pred = engine.predict_arrays(vad_checkpoint, x)[1]
        errors = vad_pred - table.vad_matrix(idx)
        written.append(vad_error_histogram(errors, out / "vad_errors.png"))

    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(idx), size=min(k, len(idx)), replace=False).tolist())
    pairs = [(s.kind, s.name) for s in checkpoint.branch_specs]
    x = bank.matrix(pairs, [idx[j] for j in chosen])
    scores, own_vad = engine.predict_arrays(checkpoint, x)
    records = []
    for n, j in enumerate(chosen):
        r = idx[j]
        row = table.rows[r]
        decisions = None
        if checkpoint.thresholds is not None:
            decisions = [int(s >= t) for s, t in zip(scores[n], checkpoint.thresholds)]
        vad = vad_pred[j] if vad_pred is not None else own_vad[n]
        records.append(engine.PredictionRecord(
            image_id=row.image_id, row_index=r, disc_scores=scores[n].tolist(), disc_decisions=decisions,
            vad_pred=vad.tolist(), disc_truth=list(row.discrete), vad_truth=list(row.vad),
        ))
    if records:
        written.append(sample_grid(records, images, table, out / "samples.png"))
    return written
