"""Train the fusion head on toy branches, evaluate it and predict one person.

Run: python3 demos/03_train_and_evaluate.py [out_dir]
"""

import json
import sys
import tempfile
from pathlib import Path

from emotic_mbn import CATEGORIES, ImageStore, TrainConfig, evaluate, generate_fixture, predict, train
from emotic_mbn.engine import Checkpoint, FeatureBank

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="emotic_train_"))
table = generate_fixture(200, seed=1, out_dir=out / "data")
images = ImageStore(out / "data")
bank = FeatureBank(table, images)  # branch features are frozen, so compute them once

config = TrainConfig(epochs=10)
print("config:\n" + config.dumps())
result = train(table, images, config, bank=bank, out_dir=out / "run")
for e in result.log:
    print(f"epoch {e.epoch:2d}  lr {e.lr:.5f}  loss {e.train_loss:.4f}  val mAP {e.val_map:.4f}")
print("best epoch:", result.best.epoch)

# Reload from disk to show the checkpoint is self-contained.
best = Checkpoint.load(out / "run" / "best")
report = evaluate(best, table, bank=bank)
print("\n" + report.to_text())
for note in report.notes:
    print("note:", note)

vad_run = train(table, images, TrainConfig(epochs=10, task="continuous"), bank=bank)
vad_report = evaluate(vad_run.best, table, bank=bank)
print(f"VAD MAE per dimension {vad_report.mae_per_dim.round(3)}, mean {vad_report.mae_mean:.3f}")

row_index = table.split_indices("test")[0]
row = table.rows[row_index]
rec = predict(best, images.lookup(row.image_id), row.body_box, image_id=row.image_id, row_index=row_index,
              disc_truth=row.discrete, vad_truth=row.vad)
print("\nprediction for", row.image_id)
print(json.dumps({"predicted": rec.predicted_categories,
                  "truth": [c for c, b in zip(CATEGORIES, row.discrete) if b]}, indent=2))
