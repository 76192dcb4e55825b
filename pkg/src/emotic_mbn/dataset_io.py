"""Annotation CSV ingestion, category frequencies, image access and synthetic fixtures."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .domain import (
    AGES,
    GENDERS,
    NO_DISCRETE,
    NUM_CATEGORIES,
    SPLITS,
    BoundingBox,
    PersonAnnotation,
    UnknownCategoryError,
    category_index,
    labels_to_bits,
    validate_annotation,
)

log = logging.getLogger(__name__)

CSV_HEADER = (
    "image_id",
    "x1",
    "y1",
    "x2",
    "y2",
    "gender",
    "age",
    "categories",
    "valence",
    "arousal",
    "dominance",
    "split",
)
# fraction of unparseable rows above which loading fails outright
MAX_BAD_ROW_FRACTION = 0.01


class AnnotationFormatError(ValueError):
    pass


class DegenerateCropError(ValueError):
    pass


@dataclass(frozen=True)
class RowIssue:
    line: int
    reason: str


@dataclass
class AnnotationTable:
    rows: tuple[PersonAnnotation, ...]
    rejected: tuple[RowIssue, ...] = ()
    unparseable: tuple[RowIssue, ...] = ()
    zero_label_rows: int = 0
    split_counts: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.rows = tuple(self.rows)
        counts = Counter(r.split for r in self.rows)
        self.split_counts = {s: counts[s] for s in SPLITS if counts[s]}

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, AnnotationTable):
            return NotImplemented
        return self.rows == other.rows

    def split_indices(self, split: str) -> list[int]:
        return [i for i, r in enumerate(self.rows) if r.split == split]

    def discrete_matrix(self, indices=None) -> np.ndarray:
        rows = self.rows if indices is None else [self.rows[i] for i in indices]
        return np.array([r.discrete for r in rows], dtype=np.float64).reshape(-1, NUM_CATEGORIES)

    def vad_matrix(self, indices=None) -> np.ndarray:
        rows = self.rows if indices is None else [self.rows[i] for i in indices]
        return np.array([r.vad for r in rows], dtype=np.float64).reshape(-1, 3)


@dataclass(frozen=True)
class CategoryFrequencies:
    p: np.ndarray
    n_train: int


def _parse_row(rec: dict[str, str]) -> PersonAnnotation:
    try:
        box = BoundingBox(*(int(rec[k]) for k in ("x1", "y1", "x2", "y2")))
        vad = tuple(float(rec[k]) for k in ("valence", "arousal", "dominance"))
    except (TypeError, ValueError) as exc:
        raise AnnotationFormatError(f"bad numeric field: {exc}") from None
    names = [n.strip() for n in (rec["categories"] or "").split(";") if n.strip()]
    try:
        bits = labels_to_bits(names)
    except UnknownCategoryError as exc:
        raise AnnotationFormatError(str(exc.args[0])) from None
    return PersonAnnotation(
        image_id=rec["image_id"] or "",
        body_box=box,
        gender=(rec["gender"] or "").strip().lower(),
        age=(rec["age"] or "").strip().lower(),
        discrete=bits,
        vad=vad,  # type: ignore[arg-type]
        split=(rec["split"] or "").strip().lower(),
    )


def load_annotations(path) -> AnnotationTable:
    """Read an annotation CSV.

    Rows that parse but break a hard invariant (box, VAD range, enums) are
    rejected and listed with their line number. Rows that cannot be parsed at
    all are listed too; if more than 1% of the data rows are unparseable an
    :class:`AnnotationFormatError` is raised after the whole file was scanned.
    Rows without any category are kept and counted.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"annotation file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise AnnotationFormatError(f"{path}: empty file, missing header") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise AnnotationFormatError(
                f"{path}: malformed header {header!r}, expected {','.join(CSV_HEADER)}"
            )
        rows, rejected, unparseable = [], [], []
        zero_label = 0
        n_data = 0
        for fields in reader:
            line = reader.line_num
            if not fields:
                continue
            n_data += 1
            if len(fields) != len(CSV_HEADER):
                unparseable.append(RowIssue(line, f"expected 12 fields, got {len(fields)}"))
                continue
            try:
                ann = _parse_row(dict(zip(CSV_HEADER, fields)))
            except AnnotationFormatError as exc:
                unparseable.append(RowIssue(line, str(exc)))
                continue
            problems = [p for p in validate_annotation(ann) if p != NO_DISCRETE]
            if problems:
                rejected.append(RowIssue(line, "; ".join(problems)))
                continue
            if not ann.has_discrete:
                zero_label += 1
            rows.append(ann)

    for issue in unparseable:
        log.warning("%s:%d unparseable row: %s", path, issue.line, issue.reason)
    for issue in rejected:
        log.warning("%s:%d rejected row: %s", path, issue.line, issue.reason)
    if zero_label:
        log.warning("%s: %d rows carry no discrete category", path, zero_label)
    if n_data and len(unparseable) / n_data > MAX_BAD_ROW_FRACTION:
        detail = ", ".join(f"line {i.line}: {i.reason}" for i in unparseable[:10])
        raise AnnotationFormatError(
            f"{path}: {len(unparseable)} of {n_data} rows unparseable ({detail})"
        )
    return AnnotationTable(rows, tuple(rejected), tuple(unparseable), zero_label)


def _fmt_number(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _csv_field(value: str, force_quote: bool = False) -> str:
    if force_quote or any(ch in value for ch in ',"\n\r'):
        return '"' + value.replace('"', '""') + '"'
    return value


def dumps_annotations(rows) -> str:
    """Serialize rows in the interchange layout; ``categories`` is always quoted."""
    lines = [",".join(CSV_HEADER)]
    for r in rows:
        fields = [
            _csv_field(r.image_id),
            *(str(v) for v in r.body_box.as_tuple()),
            r.gender,
            r.age,
            _csv_field(";".join(r.categories), force_quote=True),
            *(_fmt_number(v) for v in r.vad),
            r.split,
        ]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def save_annotations(table_or_rows, path) -> None:
    rows = table_or_rows.rows if isinstance(table_or_rows, AnnotationTable) else table_or_rows
    Path(path).write_text(dumps_annotations(rows), encoding="utf-8")


def compute_frequencies(table: AnnotationTable) -> CategoryFrequencies:
    """Fraction of train-split annotations carrying each category."""
    train = table.split_indices("train")
    if not train:
        raise ValueError("cannot compute category frequencies: train split is empty")
    counts = table.discrete_matrix(train).sum(axis=0)
    return CategoryFrequencies(p=counts / len(train), n_train=len(train))


def crop_body(image: np.ndarray, box: BoundingBox) -> np.ndarray:
    h, w = image.shape[:2]
    clipped = box.clip(w, h)
    if not clipped.is_valid():
        raise DegenerateCropError(f"box {box.as_tuple()} is empty inside a {w}x{h} image")
    return image[clipped.y1 : clipped.y2, clipped.x1 : clipped.x2].copy()


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


class ImageStore:
    """Read-only access to RGB rasters addressed by ``image_id`` relative to ``root``."""

    def __init__(self, root, cache_size: int = 256):
        self.root = Path(root)
        self._load = lru_cache(maxsize=cache_size)(self._read)

    def _read(self, image_id: str) -> np.ndarray:
        path = self.root / image_id
        if not path.is_file():
            raise FileNotFoundError(f"image not found: {path}")
        arr = load_rgb(path)
        arr.setflags(write=False)
        return arr

    def lookup(self, image_id: str) -> np.ndarray:
        return self._load(image_id)

    __getitem__ = lookup


# ---------------------------------------------------------------------------
# synthetic fixture

FIXTURE_SIZE = 64
BACKGROUND_COLORS = (
    (40, 60, 160),
    (30, 140, 60),
    (170, 160, 60),
    (120, 40, 120),
    (90, 90, 90),
    (200, 120, 40),
)
PERSON_COLORS = (
    (230, 40, 40),
    (40, 220, 220),
    (250, 250, 250),
    (20, 20, 20),
    (240, 160, 200),
    (120, 240, 60),
    (60, 40, 240),
    (150, 100, 50),
)
FACE_TONES = ((255, 224, 189), (198, 134, 66), (141, 85, 36), (60, 40, 30))

# each color index switches on one category
PERSON_CATEGORY = ("Happiness", "Anger", "Peace", "Sadness", "Affection", "Excitement", "Fear", "Fatigue")
BACKGROUND_CATEGORY = ("Engagement", "Pleasure", "Anticipation", "Disquietment", "Disconnection", "Confidence")
FACE_CATEGORY = ("Surprise", "Sympathy", "Doubt/Confusion", "Annoyance")

PERSON_VALENCE = (8, 2, 7, 2, 9, 7, 3, 4)
PERSON_DOMINANCE = (7, 6, 5, 3, 5, 6, 2, 3)
BACKGROUND_AROUSAL = (5, 4, 6, 7, 2, 8)
FACE_VALENCE_SHIFT = (1, 0, 0, -1)


def split_for(image_id: str) -> str:
    """70/15/15 split from the first 8 bytes of the SHA-256 of ``image_id``."""
    bucket = int.from_bytes(hashlib.sha256(image_id.encode("utf-8")).digest()[:8], "big") % 100
    if bucket < 70:
        return "train"
    if bucket < 85:
        return "val"
    return "test"


def fixture_labels(person: int, background: int, face: int):
    names = {PERSON_CATEGORY[person], BACKGROUND_CATEGORY[background], FACE_CATEGORY[face]}
    valence = min(10, max(0, PERSON_VALENCE[person] + FACE_VALENCE_SHIFT[face]))
    vad = (float(valence), float(BACKGROUND_AROUSAL[background]), float(PERSON_DOMINANCE[person]))
    return sorted(names, key=category_index), vad


FIXTURE_RULES = {
    "image_size": FIXTURE_SIZE,
    "split_rule": "bucket = int.from_bytes(sha256(image_id)[:8], 'big') % 100; "
    "train if bucket < 70, val if bucket < 85, else test",
    "background_colors": BACKGROUND_COLORS,
    "person_colors": PERSON_COLORS,
    "face_tones": FACE_TONES,
    "categories": "union of person_category[person], background_category[background], face_category[face]",
    "person_category": PERSON_CATEGORY,
    "background_category": BACKGROUND_CATEGORY,
    "face_category": FACE_CATEGORY,
    "valence": "clip(person_valence[person] + face_valence_shift[face], 0, 10)",
    "arousal": "background_arousal[background]",
    "dominance": "person_dominance[person]",
    "person_valence": PERSON_VALENCE,
    "face_valence_shift": FACE_VALENCE_SHIFT,
    "background_arousal": BACKGROUND_AROUSAL,
    "person_dominance": PERSON_DOMINANCE,
    "geometry": "body rectangle width 12..22, height 1.6..2.4 x width; the top square "
    "of the body (side = body width) is painted with the face tone",
    "noise": "additive gaussian, sigma 6, clipped to [0,255]",
}


def _render(rng: np.random.Generator, person: int, background: int, face: int):
    size = FIXTURE_SIZE
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = BACKGROUND_COLORS[background]
    w = int(rng.integers(12, 23))
    h = min(size - 2, int(round(w * rng.uniform(1.6, 2.4))))
    x1 = int(rng.integers(0, size - w + 1))
    y1 = int(rng.integers(0, size - h + 1))
    box = BoundingBox(x1, y1, x1 + w, y1 + h)
    img[box.y1 : box.y2, box.x1 : box.x2] = PERSON_COLORS[person]
    img[box.y1 : box.y1 + w, box.x1 : box.x2] = FACE_TONES[face]
    img += rng.normal(0.0, 6.0, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), box


def generate_fixture(n_images: int, seed: int, out_dir) -> AnnotationTable:
    """Write ``n_images`` synthetic 64x64 scenes plus ``annotations.csv`` to ``out_dir``.

    Each scene holds one person rectangle (with a face-toned head square) on a
    flat background. Labels are a fixed function of the three colors, documented
    in ``fixture_spec.json`` next to the CSV.
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create fixture directory {out}: {exc}") from exc

    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_images):
        person = int(rng.integers(len(PERSON_COLORS)))
        background = int(rng.integers(len(BACKGROUND_COLORS)))
        face = int(rng.integers(len(FACE_TONES)))
        img, box = _render(rng, person, background, face)
        image_id = f"images/img_{i:05d}.png"
        Image.fromarray(img).save(out / image_id)
        names, vad = fixture_labels(person, background, face)
        rows.append(
            PersonAnnotation(
                image_id=image_id,
                body_box=box,
                gender=GENDERS[int(rng.integers(2))],
                age=AGES[int(rng.integers(3))],
                discrete=labels_to_bits(names),
                vad=vad,
                split=split_for(image_id),
            )
        )
    save_annotations(rows, out / "annotations.csv")
    (out / "fixture_spec.json").write_text(
        json.dumps({"n_images": n_images, "seed": seed, **FIXTURE_RULES}, indent=2) + "\n"
    )
    return AnnotationTable(tuple(rows))

