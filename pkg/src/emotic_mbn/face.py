"""Face extraction from a body crop: detect, square, crop/pad, resize to 48x48, enhance."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Protocol

import cv2
import numpy as np
from PIL import Image

from .domain import BoundingBox

log = logging.getLogger(__name__)

FACE_SIZE = 48
MIN_BODY_SIZE = 8
SHARPEN_KERNEL = np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=np.float32)
LUMA_PERMILLE = (299, 587, 114)  # 0.299 R + 0.587 G + 0.114 B


class PadSpec(NamedTuple):
    left: int = 0
    top: int = 0
    right: int = 0
    bottom: int = 0

    @property
    def any(self) -> bool:
        return any(self)


class FaceDetector(Protocol):
    """Anything that returns the most confident face box in body-crop pixels, or None."""

    reentrant: bool

    def detect(self, image: np.ndarray) -> Optional[BoundingBox]: ...


class StubDetector:
    """Returns a fixed box (clipped to the image) or nothing."""

    reentrant = True

    def __init__(self, box: Optional[BoundingBox] = None, full_frame: bool = False):
        self.box = box
        self.full_frame = full_frame

    def detect(self, image):
        h, w = image.shape[:2]
        if self.full_frame:
            return BoundingBox(0, 0, w, h)
        if self.box is None:
            return None
        box = self.box.clip(w, h)
        return box if box.is_valid() else None


class HaarCascadeDetector:
    """Adapter around OpenCV's bundled frontal-face Haar cascade."""

    reentrant = False

    def __init__(self, cascade: str = "haarcascade_frontalface_default.xml", min_size: int = 12):
        path = cascade if "/" in cascade else cv2.data.haarcascades + cascade
        self._clf = cv2.CascadeClassifier(path)
        if self._clf.empty():
            raise OSError(f"could not load Haar cascade {path}")
        self.min_size = min_size

    def detect(self, image):
        gray = to_luminance(image) if image.ndim == 3 else image
        faces, _, weights = self._clf.detectMultiScale3(
            gray, scaleFactor=1.1, minNeighbors=4,
            minSize=(self.min_size, self.min_size), outputRejectLevels=True,
        )
        if len(faces) == 0:
            return None
        x, y, w, h = (int(v) for v in faces[int(np.argmax(np.ravel(weights)))])
        box = BoundingBox(x, y, x + w, y + h).clip(image.shape[1], image.shape[0])
        return box if box.is_valid() else None


@dataclass(frozen=True)
class FaceImage:
    pixels: np.ndarray
    source_box: BoundingBox
    padded: bool
    fallback_used: bool = False


def to_luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma, rounded half-up to uint8 (exact integer arithmetic)."""
    c = rgb[..., :3].astype(np.int64)
    y = (LUMA_PERMILLE[0] * c[..., 0] + LUMA_PERMILLE[1] * c[..., 1] + LUMA_PERMILLE[2] * c[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def square_box(box: BoundingBox, image_w: int, image_h: int) -> tuple[BoundingBox, PadSpec]:
    """Grow the short side of ``box`` symmetrically to a square, then clip.

    When the grown square leaves the image, the clipped part is recorded per
    edge in the returned :class:`PadSpec`, so clipped size + pads == side on
    both axes. An odd growth puts the extra pixel on the right/bottom.
    """
    side = max(box.width, box.height)
    grow_x = side - box.width
    grow_y = side - box.height
    ideal = BoundingBox(
        box.x1 - grow_x // 2,
        box.y1 - grow_y // 2,
        box.x2 + grow_x - grow_x // 2,
        box.y2 + grow_y - grow_y // 2,
    )
    clipped = ideal.clip(image_w, image_h)
    pads = PadSpec(
        left=clipped.x1 - ideal.x1,
        top=clipped.y1 - ideal.y1,
        right=ideal.x2 - clipped.x2,
        bottom=ideal.y2 - clipped.y2,
    )
    return clipped, pads


def crop_pad_resize(image: np.ndarray, square: BoundingBox, pads: PadSpec = PadSpec()) -> np.ndarray:
    width = square.width + pads.left + pads.right
    height = square.height + pads.top + pads.bottom
    if width != height or min(pads) < 0:
        raise ValueError(
            f"inconsistent pad spec {tuple(pads)} for box {square.as_tuple()}: "
            f"padded size {width}x{height} is not square"
        )
    crop = image[square.y1 : square.y2, square.x1 : square.x2]
    if crop.shape[0] != square.height or crop.shape[1] != square.width:
        raise ValueError(f"box {square.as_tuple()} is not inside the image")
    gray = to_luminance(crop) if crop.ndim == 3 else crop.astype(np.uint8)
    if pads.any:
        gray = cv2.copyMakeBorder(
            gray, pads.top, pads.bottom, pads.left, pads.right, cv2.BORDER_CONSTANT, value=0
        )
    if gray.shape == (FACE_SIZE, FACE_SIZE):
        return gray.copy()
    return cv2.resize(gray, (FACE_SIZE, FACE_SIZE), interpolation=cv2.INTER_LINEAR)


def sharpen_raw(face: np.ndarray) -> np.ndarray:
    """Sharpen response before clamping (float32)."""
    return cv2.filter2D(
        face.astype(np.float32), cv2.CV_32F, SHARPEN_KERNEL, borderType=cv2.BORDER_REPLICATE
    )


def enhance(face: np.ndarray) -> np.ndarray:
    """3x3 median denoise followed by a 5-point sharpen, clamped to [0, 255]."""
    if face.shape != (FACE_SIZE, FACE_SIZE):
        raise ValueError(f"expected a {FACE_SIZE}x{FACE_SIZE} single-channel face, got {face.shape}")
    # medianBlur(ksize=3) replicates borders
    denoised = cv2.medianBlur(np.ascontiguousarray(face, dtype=np.uint8), 3)
    return np.clip(np.rint(sharpen_raw(denoised)), 0, 255).astype(np.uint8)


def fallback_face_box(body_w: int, body_h: int) -> BoundingBox:
    """Top-anchored square with side equal to the body width."""
    return BoundingBox(0, 0, body_w, body_w)


def extract_face(body: np.ndarray, detector: Optional[FaceDetector]) -> FaceImage:
    h, w = body.shape[:2]
    if h < MIN_BODY_SIZE or w < MIN_BODY_SIZE:
        raise ValueError(f"body crop {w}x{h} is smaller than {MIN_BODY_SIZE}x{MIN_BODY_SIZE}")
    box = detector.detect(body) if detector is not None else None
    fallback = box is None
    if fallback:
        box = fallback_face_box(w, h)
        log.debug("no face detected in %dx%d body crop, using top square", w, h)
    # the fallback square may run past a short crop; square_box clips and pads it
    square, pads = square_box(box.clip(w, h), w, h)
    pixels = enhance(crop_pad_resize(body, square, pads))
    return FaceImage(pixels=pixels, source_box=square, padded=pads.any, fallback_used=fallback)


# ---------------------------------------------------------------------------
# on-disk face cache

MANIFEST_HEADER = ("face_id", "source_image_id", "row_index", "fallback_used")


def face_id(image_id: str, row_index: int) -> str:
    return f"{image_id}__{row_index}.png"


def prepare_faces(table, images, detector: Optional[FaceDetector], out_dir) -> Path:
    """Write one enhanced 48x48 face per annotation plus ``manifest.csv``; returns the manifest path."""
    from .dataset_io import crop_body

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [",".join(MANIFEST_HEADER)]
    for i, row in enumerate(table.rows):
        body = crop_body(images.lookup(row.image_id), row.body_box)
        face = extract_face(body, detector)
        fid = face_id(row.image_id, i)
        target = out / fid
        target.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(face.pixels, mode="L").save(target)
        lines.append(f"{_quote(fid)},{_quote(row.image_id)},{i},{int(face.fallback_used)}")
    manifest = out / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def _quote(value: str) -> str:
    return '"' + value.replace('"', '""') + '"' if any(c in value for c in ',"\n') else value


class FaceCache:
    """Faces written by :func:`prepare_faces`, looked up by (image_id, row_index)."""

    def __init__(self, root):
        self.root = Path(root)
        manifest = self.root / "manifest.csv"
        if not manifest.is_file():
            raise FileNotFoundError(f"face cache manifest not found: {manifest}")
        with manifest.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != MANIFEST_HEADER:
                raise ValueError(f"{manifest}: unexpected header {reader.fieldnames}")
            self.entries = {
                (r["source_image_id"], int(r["row_index"])): (r["face_id"], r["fallback_used"] == "1")
                for r in reader
            }

    def __len__(self):
        return len(self.entries)

    def get(self, image_id: str, row_index: int) -> np.ndarray:
        try:
            fid, _ = self.entries[(image_id, row_index)]
        except KeyError:
            raise KeyError(f"no cached face for {image_id!r} row {row_index}") from None
        with Image.open(self.root / fid) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)
