import csv
import filecmp
import os

import numpy as np
import pytest

from skyghi.cli import main
from skyghi.imaging import load_ppm

K = 16


def run_pipeline(root):
    """synth -> train-kmeans -> extract -> train both models -> evaluate, inside ``root``."""
    data = os.path.join(root, "data")
    steps = [
        ["synth", "--count", "500", "--out", data, "--seed", "5", "--width", "32", "--height", "32"],
        ["train-kmeans", "--manifest", f"{data}/manifest.csv", "--k", str(K), "--epochs", "3",
         "--pixels-per-image", "64", "--seed", "5", "--out", f"{root}/palette.skym"],
        ["extract", "--model", f"{root}/palette.skym", "--manifest", f"{data}/manifest.csv",
         "--out", f"{root}/features.csv"],
        ["train-classifier", "--features", f"{root}/features.csv", "--seed", "5",
         "--out", f"{root}/clf.skym"],
        ["train-regressor", "--features", f"{root}/features.csv", "--epochs", "3",
         "--seed", "5", "--out", f"{root}/reg.skym"],
        ["evaluate", "--features", f"{root}/features.csv", "--task", "regressor", "--folds", "3",
         "--epochs", "2", "--seed", "5", "--out", f"{root}/report.csv"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return root


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(str(tmp_path_factory.mktemp("run")))


def test_artifacts_present(pipeline):
    for name in ("data/manifest.csv", "palette.skym", "features.csv", "clf.skym",
                 "clf.skym.scaler", "reg.skym", "reg.skym.scaler", "report.csv"):
        assert os.path.getsize(os.path.join(pipeline, name)) > 0


def test_extract_columns(pipeline):
    rows = list(csv.reader(open(os.path.join(pipeline, "features.csv"))))
    manifest = list(csv.reader(open(os.path.join(pipeline, "data/manifest.csv"))))
    assert len(rows) == len(manifest)
    assert all(len(r) == K + 2 for r in rows)
    first = load_ppm(os.path.join(pipeline, "data", manifest[1][0]))
    assert sum(int(v) for v in rows[1][:K]) <= first.width * first.height


def test_report_aggregate(pipeline):
    rows = list(csv.reader(open(os.path.join(pipeline, "report.csv"))))
    header = rows[0]
    folds = [r for r in rows[1:] if r[0].isdigit()]
    mean_row = next(r for r in rows if r[0] == "mean")
    assert len(folds) == 3
    for j in range(1, len(header)):
        assert abs(float(mean_row[j]) - np.mean([float(r[j]) for r in folds])) <= 1e-12


def test_segment_classify_estimate(pipeline, tmp_path, capsys):
    img = os.path.join(pipeline, "data", "images", "scene_000000.ppm")
    seg = str(tmp_path / "seg.ppm")
    assert main(["segment", "--model", f"{pipeline}/palette.skym", "--image", img, "--out", seg]) == 0
    out = load_ppm(seg)
    assert len({tuple(p) for p in out.pixels.reshape(-1, 3)}) <= K + 1
    capsys.readouterr()
    assert main(["classify", "--model", f"{pipeline}/clf.skym", "--scaler", f"{pipeline}/clf.skym.scaler",
                 "--features", f"{pipeline}/features.csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "item,label,p_clear,p_cloudy"
    for line in lines[1:]:
        _, label, p0, p1 = line.split(",")
        assert label in ("clear", "cloudy") and abs(float(p0) + float(p1) - 1) < 1e-9
    assert main(["estimate", "--model", f"{pipeline}/reg.skym", "--scaler", f"{pipeline}/reg.skym.scaler",
                 "--image", img, "--palette", f"{pipeline}/palette.skym"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "item,ghi" and len(lines) == 2
    assert float(lines[1].split(",")[1]) >= 0


def test_rerun_is_byte_identical(pipeline, tmp_path):
    again = run_pipeline(str(tmp_path))
    cmp = filecmp.dircmp(pipeline, again)
    names = ["palette.skym", "features.csv", "clf.skym", "clf.skym.scaler", "reg.skym",
             "reg.skym.scaler", "report.csv"]
    match, mismatch, errors = filecmp.cmpfiles(pipeline, again, names, shallow=False)
    assert mismatch == [] and errors == [] and cmp.left_only == []
    images = sorted(os.listdir(os.path.join(pipeline, "data", "images")))
    _, bad, _ = filecmp.cmpfiles(os.path.join(pipeline, "data", "images"),
                                 os.path.join(again, "data", "images"), images, shallow=False)
    assert bad == []


def test_missing_model_is_usage_error(capsys):
    assert main(["classify", "--scaler", "s.skym", "--features", "f.csv"]) == 2
    assert "--model" in capsys.readouterr().err


def test_unknown_flag_and_command():
    assert main(["synth", "--count", "1", "--out", "x", "--bogus"]) == 2
    assert main(["fly"]) == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    assert main(["extract", "--model", str(tmp_path / "none.skym"), "--manifest",
                 str(tmp_path / "m.csv"), "--out", str(tmp_path / "f.csv")]) == 1
    assert "IoFailure" in capsys.readouterr().err
