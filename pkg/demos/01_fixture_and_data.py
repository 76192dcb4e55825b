"""Generate the synthetic dataset, load it back and look at what the loader reports.

Run: python3 demos/01_fixture_and_data.py [out_dir]
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from emotic_mbn import CATEGORIES, compute_frequencies, generate_fixture, load_annotations
from emotic_mbn.losses import class_weights

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="emotic_fixture_"))
generate_fixture(200, seed=1, out_dir=out)
print("fixture written to", out)

table = load_annotations(out / "annotations.csv")
print(f"{len(table)} annotations, splits {table.split_counts}")
print(f"rejected rows: {len(table.rejected)}, rows without any category: {table.zero_label_rows}")

row = table.rows[0]
print("first person:", row.image_id, row.body_box.as_tuple(), row.vad)
print("  categories:", [c for c, b in zip(CATEGORIES, row.discrete) if b])

# Category frequencies come from the train split only; rare categories get larger loss weights.
freq = compute_frequencies(table)
w = class_weights(freq, c=1.2).w
order = np.argsort(freq.p)
print("\nrarest / most common categories in train:")
for k in list(order[:3]) + list(order[-3:]):
    print(f"  {CATEGORIES[k]:<16} p = {freq.p[k]:.3f}  weight = {w[k]:.3f}")

# A malformed file is reported row by row instead of failing silently.
bad = out / "bad.csv"
lines = (out / "annotations.csv").read_text().splitlines()
lines[1] = lines[1].replace(",train", ",holiday").replace(",val", ",holiday").replace(",test", ",holiday")
bad.write_text("\n".join(lines) + "\n")
t = load_annotations(bad)
print("\nafter corrupting one row:", [(r.line, r.reason) for r in t.rejected + t.unparseable])
