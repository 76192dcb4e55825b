"""Average precision, mAP, MAE and the equal precision/recall decision threshold."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import CATEGORIES, VAD_NAMES


def _ranked(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    # stable sort keeps the original order among tied scores
    order = np.argsort(-scores, kind="stable")
    return scores[order], labels[order]


def average_precision(scores, labels) -> float:
    """``sum_n (R_n - R_{n-1}) * P_n`` over the descending-score ranking, no interpolation.

    Returns NaN when there are no positive labels.
    """
    _, ranked = _ranked(scores, labels)
    n_pos = int(ranked.sum())
    if n_pos == 0:
        return math.nan
    tp = np.cumsum(ranked)
    precision = tp / np.arange(1, ranked.size + 1)
    # recall only moves at positive ranks, each time by 1/n_pos
    return float(np.sum(precision[ranked]) / n_pos)


def mean_ap(per_category_ap) -> float:
    aps = np.asarray(per_category_ap, dtype=np.float64)
    defined = aps[~np.isnan(aps)]
    if defined.size == 0:
        raise ValueError("mAP undefined: no category has a positive label")
    return float(defined.mean())


def eq_pr_threshold(scores, labels) -> float:
    """Observed score ``t`` (predict positive when ``score >= t``) minimizing |P - R|.

    Ties go to the larger threshold.
    """
    s, y = _ranked(scores, labels)
    if s.size == 0:
        raise ValueError("cannot choose a threshold on an empty set")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("cannot choose a threshold without positive labels")
    tp = np.cumsum(y)
    # the last index of each run of equal scores is where "score >= t" stops
    last = np.r_[np.nonzero(s[1:] != s[:-1])[0], s.size - 1]
    n_pred = last + 1
    # |P - R| * n_pos = tp * |n_pos - n_pred| / n_pred, compared exactly in integers so that
    # equal gaps tie instead of differing in the last bit
    num = tp[last].astype(np.int64) * np.abs(n_pos - n_pred)
    approx = num / n_pred
    near = np.nonzero(approx <= approx.min() * (1 + 1e-9))[0]
    # candidates are in descending t order, so the first exact minimum is the largest t
    best = near[0]
    for i in near[1:]:
        if int(num[i]) * int(n_pred[best]) < int(num[best]) * int(n_pred[i]):
            best = i
    return float(s[last[best]])


def mae(pred, truth) -> tuple[np.ndarray, float]:
    """Per-dimension mean absolute error over M rows and the mean of the dimensions."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[0] < 1:
        raise ValueError(f"MAE needs two equal (M, D) arrays with M >= 1, got {pred.shape} and {truth.shape}")
    per_dim = np.mean(np.abs(pred - truth), axis=0)
    return per_dim, float(per_dim.mean())


def fit_thresholds(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-category equal-PR thresholds; +inf for a category without positives."""
    out = np.full(scores.shape[1], np.inf)
    for k in range(scores.shape[1]):
        if labels[:, k].any():
            out[k] = eq_pr_threshold(scores[:, k], labels[:, k])
    return out


def _none_if_nan(v):
    return None if v is None or not math.isfinite(v) else float(v)


@dataclass
class EvalReport:
    per_category_ap: np.ndarray | None = None
    thresholds: np.ndarray | None = None
    support: np.ndarray | None = None
    map: float | None = None
    mae_per_dim: np.ndarray | None = None
    mae_mean: float | None = None
    branches: list[str] = field(default_factory=list)
    split: str = "test"
    notes: list[str] = field(default_factory=list)

    @property
    def excluded_categories(self) -> list[str]:
        if self.per_category_ap is None:
            return []
        return [CATEGORIES[i] for i, ap in enumerate(self.per_category_ap) if math.isnan(ap)]

    def to_json(self) -> dict:
        out: dict = {"split": self.split, "branches": list(self.branches)}
        if self.per_category_ap is not None:
            out["per_category"] = [
                {
                    "name": name,
                    "ap": _none_if_nan(self.per_category_ap[i]),
                    "threshold": _none_if_nan(self.thresholds[i]) if self.thresholds is not None else None,
                    "support": int(self.support[i]) if self.support is not None else None,
                }
                for i, name in enumerate(CATEGORIES)
            ]
            out["map"] = self.map
            out["excluded_categories"] = self.excluded_categories
        if self.mae_per_dim is not None:
            out["mae"] = {n: float(v) for n, v in zip(VAD_NAMES, self.mae_per_dim)}
            out["mae"]["mean"] = self.mae_mean
        if self.notes:
            out["notes"] = list(self.notes)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        rep = cls(branches=list(d.get("branches", [])), split=d.get("split", "test"), notes=list(d.get("notes", [])))
        if "per_category" in d:
            pc = d["per_category"]
            rep.per_category_ap = np.array([math.nan if e["ap"] is None else e["ap"] for e in pc])
            rep.thresholds = np.array([math.inf if e["threshold"] is None else e["threshold"] for e in pc])
            rep.support = np.array([e["support"] or 0 for e in pc])
            rep.map = d["map"]
        if "mae" in d:
            rep.mae_per_dim = np.array([d["mae"][n] for n in VAD_NAMES])
            rep.mae_mean = d["mae"]["mean"]
        return rep

    def to_text(self) -> str:
        lines = [format_results_table([self])]
        if self.per_category_ap is not None:
            lines.append("")
            lines.append(f"{'category':<16} {'AP':>7} {'thresh':>9} {'support':>8}")
            for i, name in enumerate(CATEGORIES):
                ap = self.per_category_ap[i]
                th = self.thresholds[i] if self.thresholds is not None else math.nan
                sup = int(self.support[i]) if self.support is not None else 0
                ap_s = "   n/a" if math.isnan(ap) else f"{ap:7.4f}"
                th_s = "      n/a" if not math.isfinite(th) else f"{th:9.4f}"
                lines.append(f"{name:<16} {ap_s:>7} {th_s} {sup:>8d}")
            if self.excluded_categories:
                lines.append("excluded from mAP (no positives): " + ", ".join(self.excluded_categories))
        lines.extend(self.notes)
        return "\n".join(lines) + "\n"


def format_results_table(reports, kinds=("body", "context", "face")) -> str:
    """One row per run: backbone per branch, mAP, MAE (the layout of an ablation table)."""
    header = [k.capitalize() for k in kinds] + ["mAP", "MAE"]
    rows = []
    for rep in reports:
        by_kind = dict(b.split(":", 1) if ":" in b else (b, b) for b in rep.branches)
        rows.append(
            [by_kind.get(k, "-") for k in kinds]
            + ["-" if rep.map is None else f"{rep.map:.4f}", "-" if rep.mae_mean is None else f"{rep.mae_mean:.4f}"]
        )
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    fmt = lambda r: " | ".join(str(c).ljust(w) for c, w in zip(r, widths))  # noqa: E731
    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(header), rule, *(fmt(r) for r in rows)])
