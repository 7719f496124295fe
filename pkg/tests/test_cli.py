import json

import numpy as np
import pytest

from fbgbezier.cli import main
from fbgbezier.frames import encode_frame
from fbgbezier.sensor_model import FbgFrame, FrameMode, SensorGeometry

SMALL = {"grid": {"amplitudes": [4, 12], "frequencies": [0.4, 1.0], "distances": [100, 90],
                  "duration": 1.0},
         "forest": {"trees": 5}, "net": {"hidden": [6], "max_epochs": 3},
         "evaluate": {"n_mc": 200}, "learning_curve": {"fractions": [0.5, 1.0]}}


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


def run(cfg, out, *argv):
    return main([*argv, "--config", str(cfg), "--seed", "7", "--output", str(out)])


def test_gen_data_is_reproducible(tmp_path, cfg):
    assert run(cfg, tmp_path / "a", "gen-data") == 0
    assert run(cfg, tmp_path / "b", "gen-data") == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma == mb
    assert ma["n_scenarios"] == 8 and ma["n_rows"] == 8 * 30
    assert len(list((tmp_path / "a" / "frames").glob("*.ndjson"))) == 8
    assert "frames/scenario_007.ndjson" in ma["files"]


def test_gen_data_zero_duration(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"grid": {"duration": 0}}))
    assert main(["gen-data", "--config", str(path), "--seed", "1", "--output", str(tmp_path / "o")]) == 0
    assert "zero frames" in capsys.readouterr().err
    assert (tmp_path / "o" / "dataset.csv").read_text().count("\n") == 1


def test_missing_seed_is_usage_error(tmp_path, cfg):
    assert main(["gen-data", "--config", str(cfg), "--output", str(tmp_path)]) == 2


def test_missing_config_or_calibration(tmp_path):
    assert main(["gen-data", "--config", str(tmp_path / "none.json"), "--seed", "1"]) == 2
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"calibration": "nope.json"}))
    assert main(["gen-data", "--config", str(path), "--seed", "1"]) == 2


def test_options_before_subcommand(tmp_path, cfg):
    assert main(["--seed", "7", "--config", str(cfg), "--output", str(tmp_path / "o"), "gen-data"]) == 0
    assert (tmp_path / "o" / "manifest.json").exists()


def test_reconstruct_straight_and_nan(tmp_path, cfg, capsys):
    zero = encode_frame(FbgFrame(0.0, FrameMode.STRAIN, np.zeros((26, 4))))
    bad = json.loads(zero)
    bad["v"][4][1] = float("nan")
    frames = tmp_path / "f.ndjson"
    frames.write_text(zero + "\n" + json.dumps(bad) + "\n" + zero.replace('"t":0.0', '"t":0.1') + "\n")
    assert run(cfg, tmp_path / "o", "reconstruct", str(frames), "--centerlines") == 0
    assert "frames=3 ok=2 skipped=1" in capsys.readouterr().err
    rows = (tmp_path / "o" / "bezier.csv").read_text().splitlines()
    assert len(rows) == 3
    vals = np.array(rows[1].split(","), float)[2:14].reshape(4, 3)
    np.testing.assert_allclose(vals[:, :2], 0, atol=1e-12)
    np.testing.assert_allclose(vals[:, 2], [0, 13.3333, 26.6667, 40], atol=1e-4)
    cl = (tmp_path / "o" / "centerlines.csv").read_text().splitlines()
    assert cl[0] == "frame,idx,x_mm,y_mm,z_mm" and len(cl) == 1 + 2 * 5


def test_reconstruct_calibration_mismatch_aborts(tmp_path, cfg):
    frames = tmp_path / "f.ndjson"
    frames.write_text(encode_frame(FbgFrame(0.0, FrameMode.STRAIN, np.zeros((20, 4)))) + "\n")
    assert run(cfg, tmp_path / "o", "reconstruct", str(frames)) == 3


def test_fit_bezier_on_points(tmp_path, cfg, capsys):
    s = np.linspace(0, 1, 9)
    pts = np.column_stack([s ** 2, 0 * s, 30 * s])
    path = tmp_path / "pts.csv"
    path.write_text("x,y,z\n" + "\n".join(",".join(repr(float(v)) for v in p) for p in pts) + "\n")
    # x = s^2, z = 30 s is a cubic in s, so uniform parameters recover it exactly
    assert main(["fit-bezier", str(path), "--precision", "12", "--parameterization", "uniform"]) == 0
    row = capsys.readouterr().out.splitlines()[1].split(",")
    assert float(row[-1]) < 1e-9


def test_train_evaluate_and_friends(tmp_path, cfg):
    out = tmp_path / "o"
    assert run(cfg, out, "gen-data") == 0
    assert run(cfg, out, "train", "forest") == 0
    assert run(cfg, out, "train", "net") == 0
    assert run(cfg, out, "evaluate", "--forest", str(out / "forest.json"),
               "--net", str(out / "net.json")) == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["models"]) == {"net", "forest"}
    assert 0 <= report["comparison"]["welch"]["p"] <= 1
    timing = json.loads((out / "timing.json").read_text())
    for kind in ("net", "forest"):
        assert timing[kind]["train_seconds"] > 0
        assert timing[kind]["predict_seconds_per_sample"] > 0
    hist = (out / "histogram_forest.csv").read_text().splitlines()
    assert len(hist) == 1 + 41
    assert run(cfg, out, "importance", "--model", str(out / "forest.json")) == 0
    imp = json.loads((out / "importance.json").read_text())
    assert len(imp["permutation_pct"]) == 12
    assert run(cfg, out, "learning-curve") == 0
    assert (out / "learning_curve_forest.csv").read_text().count("\n") == 3
    assert run(cfg, out, "predict", "--model", str(out / "forest.json")) == 0
    pred = out / "predictions_forest.csv"
    assert run(cfg, tmp_path / "same", "evaluate", "--pred", str(pred), "--truth", str(pred)) == 0
    same = json.loads((tmp_path / "same" / "report.json").read_text())
    assert same["models"]["pred"]["overall"]["rmse_mm"] == 0
    assert same["models"]["pred"]["overall"]["max_abs_err_mm"] == 0


def test_memorizing_forest(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**SMALL, "split": [1.0, 0.0, 0.0],
                                "forest": {"trees": 1, "min_leaf": 1, "mtry": 5,
                                           "bootstrap": False}}))
    out = tmp_path / "o"
    assert run(path, out, "gen-data") == 0
    assert run(path, out, "train", "forest") == 0
    assert run(path, out, "predict", "--model", str(out / "forest.json"), "--split", "all") == 0
    assert run(path, out, "evaluate", "--pred", str(out / "predictions_forest.csv"),
               "--truth", str(out / "dataset.csv")) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["models"]["pred"]["overall"]["rmse_mm"] < 1e-12


def test_schema_mismatch_is_data_error(tmp_path, cfg):
    out = tmp_path / "o"
    assert run(cfg, out, "gen-data") == 0
    assert run(cfg, out, "train", "forest") == 0
    model = json.loads((out / "forest.json").read_text())
    model["version"] = 2
    (out / "forest.json").write_text(json.dumps(model))
    assert run(cfg, out, "evaluate", "--forest", str(out / "forest.json")) == 3


def test_evaluate_usage(tmp_path, cfg):
    assert run(cfg, tmp_path, "evaluate") == 2
    assert run(cfg, tmp_path, "evaluate", "--pred", "x.csv") == 2


def test_replay_rate_zero_rejected(tmp_path, cfg):
    f = tmp_path / "f.ndjson"
    f.write_text("")
    assert run(cfg, tmp_path, "replay-server", str(f), "--rate", "0") == 2


def test_json_logs(tmp_path, cfg, capsys):
    main(["gen-data", "--config", str(cfg), "--output", str(tmp_path), "--log-json"])
    line = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(line)["level"] == "ERROR"
