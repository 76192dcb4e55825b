import hashlib
import json
from pathlib import Path

import pytest

from emotic_mbn.cli import build_parser, run


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    assert run(["fixture", "--n", "120", "--seed", "3", "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, data):
    out = tmp_path_factory.mktemp("cli_run")
    code = run(["train", "--data-root", str(data), "--out", str(out), "--branches", "body,context,face",
                "--epochs", "3"])
    assert code == 0
    return out


def test_fixture_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["fixture", "--n", "30", "--seed", "7", "--out", str(d)]) == 0
    assert tree_digest(a) == tree_digest(b)
    assert (a / "annotations.csv").is_file() and (a / "fixture_spec.json").is_file()


def test_train_writes_run_directory(run_dir):
    for name in ("best.npz", "best.json", "last.npz", "last.json", "train_log.csv", "run_config.txt"):
        assert (run_dir / name).is_file(), name
    assert len((run_dir / "train_log.csv").read_text().splitlines()) == 4


def test_eval_lists_all_branches(tmp_path, data, run_dir):
    out = tmp_path / "eval.json"
    assert run(["eval", "--data-root", str(data), "--checkpoint", str(run_dir / "best"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert len(report["branches"]) == 3
    assert len(report["per_category"]) == 26
    assert 0 <= report["map"] <= 1
    assert out.with_suffix(".txt").read_text().startswith("Body")


def test_eval_to_stdout(capsys, data, run_dir):
    assert run(["eval", "--data-root", str(data), "--checkpoint", str(run_dir / "best"), "--split", "val"]) == 0
    assert json.loads(capsys.readouterr().out)["split"] == "val"


def test_eval_missing_checkpoint(capsys, tmp_path, data):
    missing = tmp_path / "no_such_ckpt"
    assert run(["eval", "--data-root", str(data), "--checkpoint", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_prepare_faces_then_train(tmp_path, data):
    faces = tmp_path / "faces"
    assert run(["prepare-faces", "--data-root", str(data), "--out", str(faces)]) == 0
    lines = (faces / "manifest.csv").read_text().splitlines()
    assert len(lines) == 121
    out = tmp_path / "run"
    assert run(["train", "--data-root", str(data), "--faces-cache", str(faces), "--out", str(out),
                "--branches", "face", "--epochs", "1"]) == 0


def test_train_from_config_file(tmp_path, data):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("branches = body\ntask = continuous\nepochs = 2\nlr0 = 0.01\n")
    out = tmp_path / "run"
    assert run(["train", "--data-root", str(data), "--config", str(cfg), "--out", str(out), "--epochs", "1"]) == 0
    text = (out / "run_config.txt").read_text()
    assert "epochs = 1" in text and "task = continuous" in text and "lr0 = 0.01" in text


def test_predict(tmp_path, capsys, data, run_dir):
    out = tmp_path / "pred.json"
    image = data / "images" / "img_00000.png"
    args = ["predict", "--checkpoint", str(run_dir / "best"), "--image", str(image), "--box", "10,8,40,60"]
    assert run(args + ["--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert len(rec["disc_scores"]) == 26 and len(rec["vad_pred"]) == 3
    assert set(rec["predicted_categories"]) <= set(__import__("emotic_mbn").CATEGORIES)
    assert run(args) == 0
    assert json.loads(capsys.readouterr().out) == rec


def test_predict_bad_box(data, run_dir):
    image = str(data / "images" / "img_00000.png")
    ck = str(run_dir / "best")
    assert run(["predict", "--checkpoint", ck, "--image", image, "--box", "1,2,3"]) == 2
    assert run(["predict", "--checkpoint", ck, "--image", image, "--box", "5,5,5,9"]) == 2


def test_report(tmp_path, data, run_dir):
    vad_run = tmp_path / "vad"
    assert run(["train", "--data-root", str(data), "--out", str(vad_run), "--task", "continuous",
                "--epochs", "2"]) == 0
    out = tmp_path / "report"
    assert run(["report", "--data-root", str(data), "--checkpoint", str(run_dir / "best"),
                "--vad-checkpoint", str(vad_run / "best"), "--out", str(out), "--k", "4"]) == 0
    for name in ("eval_discrete.json", "ap_per_category.png", "vad_errors.png", "samples.png"):
        assert (out / name).stat().st_size > 0, name


def test_usage_errors(capsys):
    assert run([]) == 2
    assert run(["train"]) == 2
    assert run(["eval", "--checkpoint", "x", "--split", "bogus"]) == 2
    assert run(["fixture", "--n", "ten", "--out", "x"]) == 2


SUBCOMMAND_FLAGS = {
    "fixture": ["--n", "--seed", "--out"],
    "prepare-faces": ["--data-root", "--annotations", "--detector", "--out"],
    "train": ["--data-root", "--annotations", "--faces-cache", "--detector", "--config", "--out", "--branches",
              "--task", "--seed", "--lr0", "--batch-size", "--epochs", "--c", "--theta"],
    "eval": ["--data-root", "--checkpoint", "--split", "--task", "--out"],
    "predict": ["--checkpoint", "--image", "--box", "--detector", "--out"],
    "report": ["--data-root", "--checkpoint", "--vad-checkpoint", "--out", "--k", "--seed"],
}


@pytest.mark.parametrize("command", sorted(SUBCOMMAND_FLAGS))
def test_help_lists_flags_and_defaults(capsys, command):
    assert run([command, "--help"]) == 0
    text = capsys.readouterr().out
    for flag in SUBCOMMAND_FLAGS[command]:
        assert flag in text, flag
    assert "(default:" in text


def test_parser_has_every_subcommand():
    sub = next(a for a in build_parser()._actions if a.dest == "command")
    assert set(sub.choices) == set(SUBCOMMAND_FLAGS)
