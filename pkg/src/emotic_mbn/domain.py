"""Core value types: the 26 emotion categories, boxes and person annotations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

CATEGORIES: tuple[str, ...] = (
    "Peace",
    "Affection",
    "Esteem",
    "Anticipation",
    "Engagement",
    "Confidence",
    "Happiness",
    "Pleasure",
    "Excitement",
    "Surprise",
    "Sympathy",
    "Doubt/Confusion",
    "Disconnection",
    "Fatigue",
    "Embarrassment",
    "Yearning",
    "Disapproval",
    "Aversion",
    "Annoyance",
    "Anger",
    "Sensitivity",
    "Sadness",
    "Disquietment",
    "Fear",
    "Pain",
    "Suffering",
)
NUM_CATEGORIES = len(CATEGORIES)
VAD_NAMES = ("valence", "arousal", "dominance")
VAD_MAX = 10.0

GENDERS = ("male", "female")
AGES = ("kid", "teenager", "adult")
SPLITS = ("train", "val", "test")

NO_DISCRETE = "no discrete category set"

_CATEGORY_INDEX = {name: i for i, name in enumerate(CATEGORIES)}


class UnknownCategoryError(KeyError):
    pass


def category_index(name: str) -> int:
    """Position of ``name`` in the canonical category order (case-sensitive)."""
    try:
        return _CATEGORY_INDEX[name]
    except KeyError:
        raise UnknownCategoryError(f"unknown emotion category: {name!r}") from None


def labels_to_bits(names: Sequence[str]) -> tuple[int, ...]:
    bits = [0] * NUM_CATEGORIES
    for name in names:
        bits[category_index(name)] = 1
    return tuple(bits)


def bits_to_labels(bits: Sequence[int]) -> list[str]:
    return [CATEGORIES[i] for i, b in enumerate(bits) if b]


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel rectangle ``[x1, x2) x [y1, y2)``."""

    x1: int
    y1: int
    x2: int
    y2: int

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def is_valid(self) -> bool:
        return self.x1 < self.x2 and self.y1 < self.y2

    def is_inside(self, width: int, height: int) -> bool:
        return 0 <= self.x1 and 0 <= self.y1 and self.x2 <= width and self.y2 <= height

    def clip(self, width: int, height: int) -> "BoundingBox":
        return BoundingBox(
            max(0, min(self.x1, width)),
            max(0, min(self.y1, height)),
            max(0, min(self.x2, width)),
            max(0, min(self.y2, height)),
        )

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class PersonAnnotation:
    image_id: str
    body_box: BoundingBox
    gender: str
    age: str
    discrete: tuple[int, ...]
    vad: tuple[float, float, float]
    split: str

    @property
    def categories(self) -> list[str]:
        return bits_to_labels(self.discrete)

    @property
    def has_discrete(self) -> bool:
        return any(self.discrete)

    def discrete_array(self) -> np.ndarray:
        return np.asarray(self.discrete, dtype=np.float64)

    def vad_array(self) -> np.ndarray:
        return np.asarray(self.vad, dtype=np.float64)


def validate_annotation(a: PersonAnnotation) -> list[str]:
    """Return every violated invariant; an empty list means the annotation is valid.

    A missing discrete label is reported as ``"no discrete category set"``; callers
    that tolerate unlabeled rows (the CSV loader does) filter that message out.
    """
    problems: list[str] = []
    if not a.image_id:
        problems.append("empty image_id")
    if not a.body_box.is_valid():
        problems.append("degenerate bounding box")
    if a.body_box.x1 < 0 or a.body_box.y1 < 0:
        problems.append("bounding box has negative coordinates")
    if a.gender not in GENDERS:
        problems.append(f"gender {a.gender!r} not in {GENDERS}")
    if a.age not in AGES:
        problems.append(f"age {a.age!r} not in {AGES}")
    if a.split not in SPLITS:
        problems.append(f"split {a.split!r} not in {SPLITS}")
    if len(a.discrete) != NUM_CATEGORIES:
        problems.append(f"discrete label has length {len(a.discrete)}, expected 26")
    elif any(b not in (0, 1) for b in a.discrete):
        problems.append("discrete label bits must be 0 or 1")
    elif not any(a.discrete):
        problems.append(NO_DISCRETE)
    if len(a.vad) != 3:
        problems.append(f"vad has length {len(a.vad)}, expected 3")
    else:
        for name, value in zip(VAD_NAMES, a.vad):
            if not np.isfinite(value) or not 0.0 <= value <= VAD_MAX:
                problems.append(f"{name} out of [0,10]")
    return problems

