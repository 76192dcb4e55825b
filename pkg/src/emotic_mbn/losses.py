"""Weighted Euclidean loss for the 26 categories and margin-masked L2 loss for VAD.

All losses reduce over the last axis, so a (B, N) batch gives B losses and a
gradient of the same shape as the prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_C = 1.2
DEFAULT_THETA = 0.1


@dataclass(frozen=True)
class DiscreteLossWeights:
    w: np.ndarray
    c: float


@dataclass(frozen=True)
class ContinuousLossConfig:
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be > 0")


def class_weights(p, c: float = DEFAULT_C) -> DiscreteLossWeights:
    """``w_i = 1 / ln(c + p_i)``; ``c`` must exceed 1 so every weight is positive."""
    p = np.asarray(getattr(p, "p", p), dtype=np.float64)
    if not c > 1.0:
        raise ValueError(f"c must be > 1 so that ln(c + p_i) > 0 for p_i = 0, got {c}")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("category frequencies must lie in [0, 1]")
    return DiscreteLossWeights(w=1.0 / np.log(c + p), c=float(c))


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("loss received non-finite input")


def disc_loss(pred, target, weights: DiscreteLossWeights | np.ndarray):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    w = np.asarray(getattr(weights, "w", weights), dtype=np.float64)
    if pred.shape != target.shape or pred.shape[-1] != w.shape[-1]:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}, weights {w.shape}")
    _finite(pred, target)
    diff = pred - target
    return np.sum(w * diff**2, axis=-1), 2.0 * w * diff


def cont_mask(pred, target, theta: float) -> np.ndarray:
    """1 where the absolute error reaches the margin, 0 inside it."""
    return (np.abs(np.asarray(pred) - np.asarray(target)) >= theta).astype(np.float64)


def cont_loss(pred, target, config: ContinuousLossConfig | float = DEFAULT_THETA):
    theta = getattr(config, "theta", config)
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    _finite(pred, target)
    diff = pred - target
    v = cont_mask(pred, target, theta)
    # the mask is held constant for the gradient
    return np.sum(v * diff**2, axis=-1), 2.0 * v * diff


def combined_loss(disc, cont, lambda_disc: float = 1.0, lambda_cont: float = 1.0):
    """Weighted sum of ``(loss, grad)`` pairs; a zero lambda switches that head off.

    Returns ``(loss, grad_disc, grad_cont)``; a disabled or missing part yields
    a zero gradient (or None when the part itself is None).
    """
    if lambda_disc < 0 or lambda_cont < 0:
        raise ValueError("loss weights must be non-negative")
    if lambda_disc == 0 and lambda_cont == 0:
        raise ValueError("at least one of lambda_disc, lambda_cont must be positive")
    total = 0.0
    grads = []
    for part, lam in ((disc, lambda_disc), (cont, lambda_cont)):
        if part is None:
            grads.append(None)
            continue
        loss, grad = part
        if lam:
            total = total + lam * loss
        grads.append(lam * grad)
    return total, grads[0], grads[1]
