"""Desk-scale acceptance criteria, one test (and one PASS/FAIL line) per criterion."""

import hashlib
import itertools
import time

import numpy as np
import pytest

from emotic_mbn import engine
from emotic_mbn.domain import BoundingBox
from emotic_mbn.face import FACE_SIZE, StubDetector, extract_face, square_box
from emotic_mbn.fusion import FusionConfig, forward, init_fusion
from emotic_mbn.losses import ContinuousLossConfig, class_weights, cont_loss, disc_loss
from emotic_mbn.metrics import average_precision, mae

from conftest import ACCEPTANCE_LINES
from gradcheck import fusion_gradcheck, numeric_grad, rel_error
from oracles import ap_bruteforce


def verdict(name: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_metrics_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    while checked < 1000:
        m = int(rng.integers(1, 21))
        # coarse score grid so ties are common
        scores = (rng.integers(0, 8, m) / 7).tolist()
        labels = rng.integers(0, 2, m).tolist()
        if sum(labels) == 0:
            continue
        worst = max(worst, abs(average_precision(scores, labels) - float(ap_bruteforce(scores, labels))))
        checked += 1
    elapsed = time.perf_counter() - t0
    verdict("metrics oracle equivalence", worst <= 1e-12 and elapsed < 10,
            f"{checked} sets, max |AP - oracle| = {worst:.1e}, {elapsed:.2f} s")


def test_worked_metric_values():
    ap = average_precision([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
    _, m = mae([[5, 5, 5]], [[4, 6, 5]])
    ok = abs(ap - 5 / 6) <= 1e-12 and abs(m - 2 / 3) <= 1e-12
    verdict("worked metric values", ok, f"AP = {ap!r}, MAE = {m!r}")


def test_loss_correctness():
    rng = np.random.default_rng(11)
    worst, done, skipped = 0.0, 0, 0
    theta = 0.1
    # both losses are quadratic per coordinate, so a wide central step has no truncation error
    h = 1e-3
    while done < 100:
        w = rng.uniform(1, 6, 26)
        y = (rng.random(26) < 0.2).astype(float)
        pred = rng.normal(0.2, 0.6, 26)
        worst = max(worst, rel_error(disc_loss(pred, y, w)[1], numeric_grad(lambda p: disc_loss(p, y, w)[0], pred, h)))
        target = rng.random(3)
        p3 = rng.random(3)
        # finite differences are meaningless straddling the margin boundary
        if np.any(np.abs(np.abs(p3 - target) - theta) < 2 * h):
            skipped += 1
            continue
        num = numeric_grad(lambda p: cont_loss(p, target, theta)[0], p3, h)
        worst = max(worst, rel_error(cont_loss(p3, target, theta)[1], num))
        done += 1
    d = disc_loss([0.5, 0.5], [1, 0], np.array([2.0, 3.0]))[0]
    c = cont_loss([0.5, 0.05, 0.0], [0, 0, 0], ContinuousLossConfig(theta))[0]
    ok = worst < 1e-6 and d == 1.25 and c == 0.25
    verdict("loss correctness", ok,
            f"100 instances ({skipped} boundary draws redrawn), max rel err {worst:.1e}; values {d}, {c}")


def test_weight_formula():
    w = class_weights(np.array([0.0, 1.0]), 1.2).w
    rng = np.random.default_rng(5)
    pairs = rng.random((1000, 2))
    ww = class_weights(pairs.ravel(), 1.2).w.reshape(1000, 2)
    lower_p = pairs[:, 0] < pairs[:, 1]
    monotone = np.all((ww[:, 0] > ww[:, 1]) == lower_p)
    ok = abs(w[0] - 5.4848) <= 1e-3 and abs(w[1] - 1.2680) <= 1e-3 and monotone
    verdict("weight formula", ok, f"w(0) = {w[0]:.5f}, w(1) = {w[1]:.5f}, monotone on 1000 pairs: {monotone}")


def test_fusion_gradient_check():
    rng = np.random.default_rng(77)
    errors = []
    while len(errors) < 50:
        err = fusion_gradcheck(rng, int(rng.integers(1, 10)), int(rng.integers(2, 12)),
                               batch=int(rng.integers(1, 4)), dropout=float(rng.choice([0.0, 0.5])))
        if err is not None:
            errors.append(err)
    cfg = FusionConfig(6, hidden_dim=32, seed=2)
    p = init_fusion(cfg)
    x = np.random.default_rng(0).normal(size=6)
    ref = forward(p, x, "infer")[1].h[0]
    mrng = np.random.default_rng(9)
    mean = np.mean([forward(p, x, "train", mrng, 0.5)[1].h[0] for _ in range(10_000)], axis=0)
    drift = np.linalg.norm(mean - ref) / np.linalg.norm(ref)
    ok = max(errors) < 1e-4 and drift < 0.02
    verdict("fusion gradient check", ok,
            f"50 configs, max rel err {max(errors):.1e}; dropout mean drift {drift:.2%} over 10000 masks")


def test_face_geometry():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    problems = []
    for i in range(1000):
        w, h = (int(v) for v in rng.integers(8, 80, 2))
        x1, y1 = int(rng.integers(0, w - 1)), int(rng.integers(0, h - 1))
        box = BoundingBox(x1, y1, int(rng.integers(x1 + 1, w + 1)), int(rng.integers(y1 + 1, h + 1)))
        sq, pads = square_box(box, w, h)
        side = max(box.width, box.height)
        full_w = sq.width + pads.left + pads.right
        full_h = sq.height + pads.top + pads.bottom
        ideal_cx = (sq.x1 - pads.left + sq.x2 + pads.right) / 2
        ideal_cy = (sq.y1 - pads.top + sq.y2 + pads.bottom) / 2
        cx, cy = box.center
        if not (full_w == full_h == side):
            problems.append(f"case {i}: not square")
        if abs(ideal_cx - cx) > 0.5 or abs(ideal_cy - cy) > 0.5:
            problems.append(f"case {i}: center moved")
        if not sq.contains(box):
            problems.append(f"case {i}: not a superset")
        if i % 4 == 0:
            body = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
            det = StubDetector(box)
            a, b = extract_face(body, det), extract_face(body, det)
            if a.pixels.shape != (FACE_SIZE, FACE_SIZE) or not np.array_equal(a.pixels, b.pixels):
                problems.append(f"case {i}: extract_face shape or determinism")
            if extract_face(body, None).pixels.shape != (FACE_SIZE, FACE_SIZE):
                problems.append(f"case {i}: fallback shape")
    elapsed = time.perf_counter() - t0
    verdict("face geometry", not problems and elapsed < 30,
            f"1000 cases, {len(problems)} violations{': ' + problems[0] if problems else ''}, {elapsed:.2f} s")


def _prevalence(table, split="test"):
    labels = table.discrete_matrix(table.split_indices(split))
    support = labels.sum(axis=0)
    return float(np.mean(support[support > 0] / labels.shape[0]))


def test_end_to_end_learning(table, images):
    t0 = time.perf_counter()
    bank = engine.FeatureBank(table, images)
    prevalence = _prevalence(table)
    maps, loss_drops = [], []
    for seed in range(3):
        cfg = engine.TrainConfig(epochs=10, seed=seed)
        result = engine.train(table, images, cfg, bank=bank)
        loss_drops.append(result.log[-1].train_loss < result.log[0].train_loss)
        maps.append(engine.evaluate(result.best, table, bank=bank).map)
    gain = float(np.mean(maps)) - prevalence

    idx = table.split_indices("test")
    truth = table.vad_matrix(idx)
    midpoint = mae(np.full_like(truth, 5.0), truth)[1]
    maes = []
    for seed in range(3):
        cfg = engine.TrainConfig(epochs=10, seed=seed, task="continuous")
        result = engine.train(table, images, cfg, bank=bank)
        maes.append(engine.evaluate(result.best, table, bank=bank).mae_mean)
    rel = 1 - float(np.mean(maes)) / midpoint
    elapsed = time.perf_counter() - t0
    ok = all(loss_drops) and gain >= 0.05 and rel >= 0.10 and elapsed < 300
    verdict("end-to-end learning", ok,
            f"loss fell on {sum(loss_drops)}/3 seeds; test mAP {np.mean(maps):.4f} vs prevalence "
            f"{prevalence:.4f} (+{gain:.4f}); MAE {np.mean(maes):.4f} vs midpoint {midpoint:.4f} "
            f"({rel:.1%} lower); {elapsed:.1f} s")


def test_ablation_grid(table, images, bank):
    rows = engine.ablation_grid(table, images, engine.TrainConfig(epochs=3), bank=bank)
    text = engine.format_ablation(rows)
    subsets = [r.kinds for r in rows]
    expected = [c for r in range(1, 4) for c in itertools.combinations(("body", "context", "face"), r)]
    header = text.splitlines()[0]
    ok = sorted(subsets) == sorted(expected) and all(r.discrete.map is not None and r.continuous.mae_mean
                                                     is not None for r in rows) and "mAP" in header
    print(text)
    verdict("ablation grid", ok, f"{len(rows)} subsets trained and evaluated, {len(text.splitlines())}-line table")


def _tree(root):
    h = hashlib.sha256()
    for p in sorted(root.iterdir()):
        data = p.read_bytes()
        if p.name == "train_log.csv":
            # the wall-clock column is the only non-deterministic field
            data = "\n".join(line.rsplit(",", 1)[0] for line in data.decode().splitlines()).encode()
        h.update(p.name.encode() + data)
    return h.hexdigest()


def test_determinism(tmp_path, table, images):
    outs = []
    for run in ("a", "b"):
        bank = engine.FeatureBank(table, images)
        cfg = engine.TrainConfig(epochs=5, seed=4, task="joint")
        result = engine.train(table, images, cfg, bank=bank, out_dir=tmp_path / run)
        report = engine.evaluate(engine.Checkpoint.load(tmp_path / run / "best"), table, bank=bank)
        outs.append((result.log_without_time(), _tree(tmp_path / run), result.best.params.digest(), report.dumps()))
    same = [x == y for x, y in zip(*outs)]
    verdict("determinism", all(same), f"logs/files/digests/reports identical: {same}")


@pytest.mark.skip(reason="needs the real EMOTIC conversion and pretrained backbones supplied by the operator")
def test_full_scale_three_beats_two():
    pass
