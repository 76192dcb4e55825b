"""Frozen feature-extraction branches (body, context, face) behind one interface.

Real backbones come from torchvision (ResNet-18/50, Swin-T) or from TorchScript
files for the FER face models; ``toy_rand_<D>`` is a seeded linear random
projection used at desk scale.  Torch is imported lazily so the toy path runs
on numpy alone.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .face import to_luminance

KINDS = ("body", "context", "face")
WEIGHT_SOURCES = ("imagenet", "places365", "fer_pretrained", "finetuned_checkpoint", "random_seeded")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
FER_MEAN = (0.5,)
FER_STD = (0.5,)

TOY_IMAGE_SIZE = 32


class UnknownBranchError(KeyError):
    pass


class BranchUnavailableError(RuntimeError):
    """The branch is registered but its weights cannot be loaded here."""


class NonFiniteFeatureError(FloatingPointError):
    pass


@dataclass(frozen=True)
class InputSpec:
    height: int
    width: int
    channels: int
    mean: tuple[float, ...]
    std: tuple[float, ...]


@dataclass(frozen=True)
class BranchSpec:
    name: str
    kind: str
    output_dim: int
    input_spec: InputSpec
    weight_source: str
    frozen: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"branch kind must be one of {KINDS}, got {self.kind!r}")
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")
        if self.input_spec.channels not in (1, 3):
            raise ValueError("input channels must be 1 or 3")
        if self.kind == "face" and (
            self.input_spec.height, self.input_spec.width, self.input_spec.channels
        ) != (48, 48, 1):
            raise ValueError("face branches take 48x48x1 input")
        if self.weight_source not in WEIGHT_SOURCES:
            raise ValueError(f"unknown weight source {self.weight_source!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "BranchSpec":
        d = dict(d)
        ins = d.pop("input_spec")
        ins = InputSpec(
            ins["height"], ins["width"], ins["channels"], tuple(ins["mean"]), tuple(ins["std"])
        )
        return cls(input_spec=ins, **d)


# ---------------------------------------------------------------------------
# registry

_TORCHVISION = {
    # name -> (constructor name, classifier attribute)
    "resnet18": ("resnet18", "fc"),
    "resnet50": ("resnet50", "fc"),
    "swint": ("swin_t", "head"),
}
_FER_ENV = {"sfer": "EMOTIC_MBN_SFER", "bfer": "EMOTIC_MBN_BFER"}
_TOY = re.compile(r"toy_rand_(\d+)$")

_FACE_INPUT = InputSpec(48, 48, 1, FER_MEAN, FER_STD)
_IMAGENET_INPUT = InputSpec(224, 224, 3, IMAGENET_MEAN, IMAGENET_STD)
_TOY_RGB_INPUT = InputSpec(TOY_IMAGE_SIZE, TOY_IMAGE_SIZE, 3, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5))


def registered_names() -> list[str]:
    return [*_TORCHVISION, *_FER_ENV, "toy_rand_<D>"]


@lru_cache(maxsize=None)
def _torchvision_dim(name: str) -> int:
    import torch.nn as nn
    import torchvision.models as tvm

    ctor, head = _TORCHVISION[name]
    model = getattr(tvm, ctor)(weights=None)
    layer = getattr(model, head)
    if not isinstance(layer, nn.Linear):
        raise TypeError(f"{name}: classifier {head} is not a linear layer")
    return int(layer.in_features)


def _fer_path(name: str) -> Path:
    var = _FER_ENV[name]
    value = os.environ.get(var)
    if not value:
        raise BranchUnavailableError(
            f"branch {name!r} needs a TorchScript model file; set {var} to its path"
        )
    path = Path(value)
    if not path.is_file():
        raise BranchUnavailableError(f"{var}={path} does not exist")
    return path


@lru_cache(maxsize=None)
def _fer_dim(path: str) -> int:
    import torch

    model = torch.jit.load(path, map_location="cpu").eval()
    with torch.no_grad():
        out = model(torch.zeros(1, 1, 48, 48))
    return int(out.reshape(1, -1).shape[1])


def registry_lookup(name: str, kind: str = "body") -> BranchSpec:
    """Resolve a backbone name for a given branch kind into its :class:`BranchSpec`."""
    if kind not in KINDS:
        raise ValueError(f"branch kind must be one of {KINDS}, got {kind!r}")
    m = _TOY.match(name)
    if m:
        dim = int(m.group(1))
        if dim < 1:
            raise UnknownBranchError(f"toy branch needs a positive dimension: {name!r}")
        ins = _FACE_INPUT if kind == "face" else _TOY_RGB_INPUT
        return BranchSpec(name, kind, dim, ins, "random_seeded")
    if name in _TORCHVISION:
        if kind == "face":
            raise ValueError(f"{name} is an RGB backbone and cannot serve the face branch")
        source = "places365" if kind == "context" else "imagenet"
        return BranchSpec(name, kind, _torchvision_dim(name), _IMAGENET_INPUT, source)
    if name in _FER_ENV:
        if kind != "face":
            raise ValueError(f"{name} is a face model and only serves the face branch")
        return BranchSpec(name, kind, _fer_dim(str(_fer_path(name))), _FACE_INPUT, "fer_pretrained")
    raise UnknownBranchError(f"unknown branch {name!r}; registered: {', '.join(registered_names())}")


# ---------------------------------------------------------------------------
# preprocessing


def preprocess(spec: BranchSpec, image: np.ndarray) -> np.ndarray:
    """Resize (bilinear), scale to [0, 1] and standardize per channel -> HxWxC float32."""
    ins = spec.input_spec
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if ins.channels == 1 and img.ndim == 3:
        img = to_luminance(img)
    elif ins.channels == 3 and img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    img = img.astype(np.float32)
    if img.shape[:2] != (ins.height, ins.width):
        img = cv2.resize(img, (ins.width, ins.height), interpolation=cv2.INTER_LINEAR)
    if img.ndim == 2:
        img = img[..., None]
    mean = np.asarray(ins.mean, dtype=np.float32)
    std = np.asarray(ins.std, dtype=np.float32)
    return (img / np.float32(255.0) - mean) / std


# ---------------------------------------------------------------------------
# extractors


class ToyRandomProjection:
    """Linear map ``features = W @ flatten(x)`` with W ~ N(0, 1/n_in), seeded by name and kind."""

    def __init__(self, spec: BranchSpec, weight: np.ndarray | None = None):
        self.spec = spec
        n_in = spec.input_spec.height * spec.input_spec.width * spec.input_spec.channels
        if weight is None:
            seed = int.from_bytes(hashlib.sha256(f"{spec.name}/{spec.kind}".encode()).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            weight = rng.standard_normal((spec.output_dim, n_in)) / np.sqrt(n_in)
        if weight.shape != (spec.output_dim, n_in):
            raise ValueError(f"toy weight shape {weight.shape} != {(spec.output_dim, n_in)}")
        self.weight = np.asarray(weight, dtype=np.float64)
        self.weight.setflags(write=False)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight}

    def forward(self, batch: np.ndarray) -> np.ndarray:
        flat = batch.reshape(batch.shape[0], -1).astype(np.float64)
        # row by row so a batch is bit-identical to item-wise calls
        return np.stack([self.weight @ row for row in flat])


class TorchBackbone:
    """A torch module with its classifier replaced by identity, held in eval mode."""

    def __init__(self, spec: BranchSpec, module):
        import torch

        self.spec = spec
        self.module = module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)
        self._torch = torch

    def parameters(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy() for k, v in self.module.state_dict().items()}

    def forward(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        x = torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2), dtype=np.float32))
        with torch.no_grad():
            out = self.module(x)
        return out.reshape(out.shape[0], -1).double().numpy()


def _torchvision_module(spec: BranchSpec, weights_path=None):
    import torch
    import torch.nn as nn
    import torchvision.models as tvm

    ctor, head = _TORCHVISION[spec.name]
    if spec.weight_source == "imagenet" and weights_path is None:
        model = getattr(tvm, ctor)(weights="DEFAULT")
    else:
        if spec.weight_source == "random_seeded":
            torch.manual_seed(0)
        model = getattr(tvm, ctor)(weights=None)
    setattr(model, head, nn.Identity())
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu")
        state = state.get("state_dict", state) if isinstance(state, dict) else state
        state = {k.removeprefix("module."): v for k, v in state.items()}
        # drop the original classifier, it was cut off above
        state = {k: v for k, v in state.items() if not k.startswith(head + ".")}
        model.load_state_dict(state)
    elif spec.weight_source in ("places365", "finetuned_checkpoint"):
        raise BranchUnavailableError(
            f"{spec.name} with {spec.weight_source} weights needs a weights file"
        )
    return model


def build_extractor(spec: BranchSpec, weights_path=None):
    """Instantiate the frozen extractor for ``spec``.

    ``weights_path`` points at a branch checkpoint written by
    :func:`save_branch_checkpoint` or, for torch backbones, a plain state dict.
    """
    if weights_path is not None and Path(weights_path).suffix == ".npz":
        return load_branch_checkpoint(weights_path)[1]
    if _TOY.match(spec.name):
        return ToyRandomProjection(spec)
    if spec.name in _TORCHVISION:
        return TorchBackbone(spec, _torchvision_module(spec, weights_path))
    if spec.name in _FER_ENV:
        import torch

        path = weights_path or _fer_path(spec.name)
        return TorchBackbone(spec, torch.jit.load(str(path), map_location="cpu"))
    raise UnknownBranchError(spec.name)


def extract(extractor, images: Sequence[np.ndarray]) -> np.ndarray:
    """Features for a batch of rasters, shape (B, output_dim)."""
    spec = extractor.spec
    if len(images) == 0:
        return np.zeros((0, spec.output_dim))
    batch = np.stack([preprocess(spec, im) for im in images])
    ins = spec.input_spec
    if batch.shape[1:] != (ins.height, ins.width, ins.channels):
        raise ValueError(f"{spec.name}: preprocessed batch has shape {batch.shape[1:]}")
    feats = extractor.forward(batch)
    if feats.shape != (len(images), spec.output_dim):
        raise ValueError(
            f"{spec.name}: produced features of shape {feats.shape}, "
            f"expected {(len(images), spec.output_dim)}"
        )
    if not np.all(np.isfinite(feats)):
        raise NonFiniteFeatureError(f"{spec.name}: non-finite features (corrupted weights?)")
    return feats


def param_digest(extractor) -> str:
    h = hashlib.sha256()
    for key, value in sorted(extractor.parameters().items()):
        arr = np.ascontiguousarray(value)
        h.update(key.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def save_branch_checkpoint(extractor, path) -> Path:
    """Write parameters to ``path`` (.npz) and a JSON sidecar next to it."""
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **extractor.parameters())
    spec = extractor.spec
    sidecar = {
        "name": spec.name,
        "kind": spec.kind,
        "output_dim": spec.output_dim,
        "weight_source": "finetuned_checkpoint",
        "content_digest": param_digest(extractor),
        "spec": spec.to_json(),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return path


def load_branch_checkpoint(path):
    path = Path(path).with_suffix(".npz")
    meta = json.loads(path.with_suffix(".json").read_text())
    spec = BranchSpec.from_json(meta["spec"])
    with np.load(path) as data:
        params = {k: data[k] for k in data.files}
    if _TOY.match(spec.name):
        extractor = ToyRandomProjection(spec, params["weight"])
    else:
        import torch

        module = _torchvision_module(
            BranchSpec(spec.name, spec.kind, spec.output_dim, spec.input_spec, "random_seeded")
        )
        module.load_state_dict({k: torch.from_numpy(v) for k, v in params.items()})
        extractor = TorchBackbone(spec, module)
    if param_digest(extractor) != meta["content_digest"]:
        raise ValueError(f"{path}: parameter digest does not match its sidecar")
    return meta, extractor
