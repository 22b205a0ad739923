import csv
import json
import shutil

import numpy as np
import pytest
from PIL import Image

from dfr import cli, svm
from dfr.data import annotations


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A tiny dataset with a one-epoch model and an SVM trained on it."""
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--out", str(root / "data"), "--subjects", "3", "--per-subject", "8", "--seed", "4"]) == 0
    assert cli.main(["train-kp", "--data", str(root / "data"), "--out", str(root / "m.dfrm"), "--epochs", "1"]) == 0
    assert cli.main(["train-svm", "--data", str(root / "data"), "--out", str(root / "s.dfrs"),
                     "--model", str(root / "m.dfrm")]) == 0
    return root


def test_precedence_preset_file_flags(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("# training settings\nepochs = 7\nbatch-size = 4  # small\n")
    cfg = cli.resolve("train-kp", {"data": "d", "out": "o"}, conf)
    assert (cfg["epochs"], cfg["batch_size"], cfg["lr"]) == (7, 4, 4e-3)
    cfg = cli.resolve("train-kp", {"data": "d", "out": "o", "epochs": 2}, conf)
    assert cfg["epochs"] == 2
    cfg = cli.resolve("train-kp", {"data": "d", "out": "o", "preset": "paper"})
    assert (cfg["epochs"], cfg["batch_size"]) == (1300, 50)


def test_unknown_config_key_lists_allowed(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("epochz = 3\n")
    with pytest.raises(cli.UsageError) as info:
        cli.resolve("train-kp", {"data": "d", "out": "o"}, conf)
    assert "epochz" in str(info.value) and "epochs" in str(info.value)


def test_bad_config_value(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("epochs = many\n")
    with pytest.raises(cli.UsageError):
        cli.resolve("train-kp", {"data": "d", "out": "o"}, conf)


def test_missing_required_option(capsys):
    assert cli.main(["train-kp", "--data", "x"]) == 2
    assert "needs --out" in capsys.readouterr().err


def test_missing_output_directory(tmp_path, capsys):
    code = cli.main(["synth", "--out", str(tmp_path / "nope" / "data"), "--subjects", "2", "--per-subject", "2"])
    assert code == 2
    assert "does not exist; create it first" in capsys.readouterr().err


def test_paper_preset_warns(tmp_path, capsys):
    cli.main(["train-kp", "--preset", "paper", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "m")])
    err = capsys.readouterr().err
    assert "warning" in err and "227x227" in err


def test_zero_epochs_writes_untrained_model(workdir, tmp_path):
    out = tmp_path / "zero.dfrm"
    assert cli.main(["train-kp", "--data", str(workdir / "data"), "--out", str(out), "--epochs", "0"]) == 0
    assert out.exists()
    assert (tmp_path / "zero.dfrm.history.csv").read_text() == "epoch,loss\n"


def test_training_outputs_are_deterministic(workdir, tmp_path):
    out = tmp_path / "m.dfrm"
    assert cli.main(["train-kp", "--data", str(workdir / "data"), "--out", str(out), "--epochs", "1"]) == 0
    assert out.read_bytes() == (workdir / "m.dfrm").read_bytes()
    assert cli.main(["train-svm", "--data", str(workdir / "data"), "--out", str(tmp_path / "s.dfrs"),
                     "--model", str(out)]) == 0
    assert (tmp_path / "s.dfrs").read_bytes() == (workdir / "s.dfrs").read_bytes()


def test_dataset_layout_mismatch_names_versions(workdir, tmp_path, capsys):
    data = tmp_path / "data"
    shutil.copytree(workdir / "data", data)
    manifest = json.loads((data / annotations.MANIFEST_FILE).read_text())
    manifest["keypoints"] = "keypoints-v2"
    (data / annotations.MANIFEST_FILE).write_text(json.dumps(manifest))
    assert cli.main(["train-kp", "--data", str(data), "--out", str(tmp_path / "m.dfrm"), "--epochs", "0"]) == 1
    err = capsys.readouterr().err
    assert "keypoints-v2" in err and "keypoints-v1" in err


def test_schema_mismatch_names_versions(workdir, tmp_path, capsys):
    machine = svm.load_svm(workdir / "s.dfrs")
    machine.schema = "other-v3"
    svm.save_svm(machine, tmp_path / "s.dfrs")
    code = cli.main(["eval", "--data", str(workdir / "data"), "--model", str(workdir / "m.dfrm"),
                     "--svm", str(tmp_path / "s.dfrs"), "--out", str(tmp_path)])
    assert code == 1
    err = capsys.readouterr().err
    assert "other-v3" in err and "default-v1" in err


def test_predict_notes_resize(workdir, tmp_path, capsys):
    image = np.full((60, 120), 128, np.uint8)
    Image.fromarray(image).save(tmp_path / "wide.png")
    out = tmp_path / "pred.csv"
    assert cli.main(["predict", "--model", str(workdir / "m.dfrm"), "--images", str(tmp_path / "wide.png"),
                     "--out", str(out), "--svm", str(workdir / "s.dfrs")]) == 0
    assert "resized 1 image(s) to 96x96" in capsys.readouterr().out
    rows = list(csv.reader(out.open()))
    assert len(rows) == 2 and len(rows[1]) == 42
    xs, ys = np.array(rows[1][2::2], float), np.array(rows[1][3::2], float)
    assert (xs <= 120).all() and (ys <= 60).all()
    assert rows[1][1].startswith("s")


def test_eval_writes_reports(workdir, tmp_path, capsys):
    args = ["eval", "--data", str(workdir / "data"), "--model", str(workdir / "m.dfrm"),
            "--svm", str(workdir / "s.dfrs"), "--out", str(tmp_path)]
    assert cli.main(args) == 0
    assert "subject accuracy" in capsys.readouterr().out
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["classification.csv", "classification.svg", "keypoints.csv", "keypoints.svg"]
    first = (tmp_path / "keypoints.csv").read_bytes()
    assert cli.main(args) == 0
    assert (tmp_path / "keypoints.csv").read_bytes() == first


def test_bench_output_format(workdir, tmp_path, capsys):
    out = tmp_path / "fps.csv"
    assert cli.main(["bench", "--model", str(workdir / "m.dfrm"), "--svm", str(workdir / "s.dfrs"),
                     "--frames", "4", "--batch", "2", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "inference only:" in text and "4 frames in" in text and "frames/second" in text
    assert out.read_text().startswith("section,key,field,value\n")
