"""Walk one person through the face pipeline: crop, square, pad, resize, enhance.

Run: python3 demos/02_face_pipeline.py [out_dir]
Writes face_pipeline.png next to the fixture.
"""

import sys
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from emotic_mbn import BoundingBox, ImageStore, generate_fixture
from emotic_mbn.dataset_io import crop_body
from emotic_mbn.face import StubDetector, crop_pad_resize, enhance, extract_face, square_box

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="emotic_faces_"))
table = generate_fixture(20, seed=1, out_dir=out)
row = table.rows[0]
image = ImageStore(out).lookup(row.image_id)
body = crop_body(image, row.body_box)
h, w = body.shape[:2]
print(f"body crop {w}x{h}")

# No detector: the top square of the body crop (side = crop width) stands in for the face.
face = extract_face(body, None)
print("fallback used:", face.fallback_used, "square:", face.source_box.as_tuple(), "padded:", face.padded)

# A wide detection flush with the top edge grows upward past the image; that strip is zero padded.
det = BoundingBox(2, 0, 20, 6)
sq, pads = square_box(det.clip(w, h), w, h)
print("wide detection at the top edge ->", sq.as_tuple(), "pads", tuple(pads))
raw = crop_pad_resize(body, sq, pads)
edge_face = extract_face(body, StubDetector(det))

panels = [("image", image), ("body crop", body), ("fallback face", face.pixels),
          ("padded, before enhance", raw), ("after enhance", enhance(raw)), ("extract_face", edge_face.pixels)]
fig, axes = plt.subplots(1, len(panels), figsize=(2.4 * len(panels), 2.8))
for ax, (title, img) in zip(axes, panels):
    ax.imshow(img, cmap="gray" if img.ndim == 2 else None, vmin=0, vmax=255)
    ax.set_title(title, fontsize=8)
    ax.axis("off")
fig.tight_layout()
fig.savefig(out / "face_pipeline.png", dpi=100)
print("wrote", out / "face_pipeline.png")
