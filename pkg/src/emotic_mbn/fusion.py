"""Trainable fusion head: concat(features) -> 256 relu (+dropout) -> 26 scores and 3 VAD values."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from .domain import NUM_CATEGORIES

NUM_VAD = 3


@dataclass(frozen=True)
class FusionConfig:
    input_dim: int
    hidden_dim: int = 256
    dropout_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("input_dim and hidden_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class FusionParams:
    W1: np.ndarray
    b1: np.ndarray
    W_disc: np.ndarray
    b_disc: np.ndarray
    W_cont: np.ndarray
    b_cont: np.ndarray

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def items(self):
        return ((n, getattr(self, n)) for n in self.names())

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(self.items())

    def copy(self) -> "FusionParams":
        return FusionParams(**{n: a.copy() for n, a in self.items()})

    @classmethod
    def zeros_like(cls, other: "FusionParams") -> "FusionParams":
        return cls(**{n: np.zeros_like(a) for n, a in other.items()})

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    def digest(self, names=None) -> str:
        h = hashlib.sha256()
        for n in names or self.names():
            a = np.ascontiguousarray(getattr(self, n), dtype=np.float64)
            h.update(n.encode())
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
        return h.hexdigest()

    def check(self, config: FusionConfig) -> None:
        expected = {
            "W1": (config.hidden_dim, config.input_dim),
            "b1": (config.hidden_dim,),
            "W_disc": (NUM_CATEGORIES, config.hidden_dim),
            "b_disc": (NUM_CATEGORIES,),
            "W_cont": (NUM_VAD, config.hidden_dim),
            "b_cont": (NUM_VAD,),
        }
        for n, a in self.items():
            if a.shape != expected[n]:
                raise ValueError(f"{n} has shape {a.shape}, expected {expected[n]}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{n} contains non-finite values")


@dataclass
class Prediction:
    disc_scores: np.ndarray
    cont_values: np.ndarray


@dataclass
class ForwardCache:
    x: np.ndarray
    pre: np.ndarray  # W1 x + b1
    mask: np.ndarray | None  # dropout mask, already divided by keep probability
    h: np.ndarray  # hidden after relu and dropout
    batched: bool


def init_fusion(config: FusionConfig) -> FusionParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer, biases zero."""
    rng = np.random.default_rng(config.seed)

    def uniform(rows, cols):
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols))

    return FusionParams(
        W1=uniform(config.hidden_dim, config.input_dim),
        b1=np.zeros(config.hidden_dim),
        W_disc=uniform(NUM_CATEGORIES, config.hidden_dim),
        b_disc=np.zeros(NUM_CATEGORIES),
        W_cont=uniform(NUM_VAD, config.hidden_dim),
        b_cont=np.zeros(NUM_VAD),
    )


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def forward(
    params: FusionParams,
    x: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | int | None = None,
    dropout_rate: float = 0.5,
) -> tuple[Prediction, ForwardCache]:
    """Run the head on one feature vector (D,) or a batch (B, D).

    In ``train`` mode the hidden layer is multiplied by an inverted-dropout
    mask drawn from ``rng`` (a Generator or a seed).
    """
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    xb = x if batched else x[None, :]
    if xb.ndim != 2 or xb.shape[1] != params.input_dim:
        raise ValueError(f"feature length {x.shape[-1]} does not match input_dim {params.input_dim}")
    pre = xb @ params.W1.T + params.b1
    h = np.maximum(pre, 0.0)
    mask = None
    if mode == "train" and dropout_rate > 0:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        mask = dropout_mask(h.shape, dropout_rate, rng)
        h = h * mask
    elif mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    disc = h @ params.W_disc.T + params.b_disc
    cont = h @ params.W_cont.T + params.b_cont
    if not batched:
        disc, cont = disc[0], cont[0]
    return Prediction(disc, cont), ForwardCache(xb, pre, mask, h, batched)


def backward(
    params: FusionParams,
    cache: ForwardCache,
    grad_disc: np.ndarray,
    grad_cont: np.ndarray,
) -> FusionParams:
    """Gradients of the (batch-summed) upstream loss w.r.t. every parameter."""
    if cache is None:
        raise ValueError("backward needs the cache returned by forward")
    gd = np.asarray(grad_disc, dtype=np.float64).reshape(-1, NUM_CATEGORIES)
    gc = np.asarray(grad_cont, dtype=np.float64).reshape(-1, NUM_VAD)
    n = cache.h.shape[0]
    if gd.shape[0] != n or gc.shape[0] != n or cache.x.shape[1] != params.input_dim:
        raise ValueError("upstream gradients or cache do not match the forward pass")
    grad_h = gd @ params.W_disc + gc @ params.W_cont
    if cache.mask is not None:
        grad_h = grad_h * cache.mask
    grad_pre = grad_h * (cache.pre > 0)
    return FusionParams(
        W1=grad_pre.T @ cache.x,
        b1=grad_pre.sum(axis=0),
        W_disc=gd.T @ cache.h,
        b_disc=gd.sum(axis=0),
        W_cont=gc.T @ cache.h,
        b_cont=gc.sum(axis=0),
    )
