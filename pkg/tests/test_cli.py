import csv
import json

import numpy as np
import pytest

from zitweedie.cli import main
from zitweedie.data import load_csv
from zitweedie.io import load_model

FAST = ["--em-iters", "3", "--trees-per-step", "5", "--max-leaves", "6", "--min-leaf-count", "30"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--n", "1500", "--p", "3", "--seed", "4", "--target-zero-rate", "0.7",
                 "--out", str(d / "data.csv"), "--truth", str(d / "truth.csv")]) == 0
    assert main(["train", "--data", str(d / "data.csv"), "--exposure", "exposure", *FAST,
                 "--model-out", str(d / "model.json")]) == 0
    return d


def test_simulate_outputs(sim):
    rows = read_csv(sim / "data.csv")
    assert len(rows) == 1500 and list(rows[0]) == ["x0", "x1", "x2", "exposure", "y"]
    zeros = np.mean([float(r["y"]) == 0 for r in rows])
    assert zeros == pytest.approx(0.7, abs=0.04)
    assert set(read_csv(sim / "truth.csv")[0]) == {"mu", "phi", "pi", "pure_premium"}


def test_predict_matches_fitted_values(sim):
    assert main(["predict", "--model", str(sim / "model.json"), "--data", str(sim / "data.csv"),
                 "--out", str(sim / "pred.csv")]) == 0
    model = load_model(sim / "model.json")
    data = load_csv(sim / "data.csv", "y", "exposure")
    fitted = model.predict(data.X)
    rows = read_csv(sim / "pred.csv")
    for k in ("mu", "phi", "pi", "pure_premium"):
        assert np.array_equal([float(r[k]) for r in rows], fitted[k])


def test_evaluate_writes_report(sim):
    assert main(["evaluate", "--model", str(sim / "model.json"), "--data", str(sim / "data.csv"),
                 "--metrics-out", str(sim / "m.json"), "--lorenz-out", str(sim / "l.csv")]) == 0
    rep = json.loads((sim / "m.json").read_text())
    assert -1 <= rep["gini"] <= 1 and rep["n"] == 1500
    pts = read_csv(sim / "l.csv")
    assert float(pts[0]["premium_share"]) == 0 and float(pts[-1]["loss_share"]) == 1


def test_undersample_command(sim):
    assert main(["undersample", "--data", str(sim / "data.csv"), "--keep-fraction", "0.15",
                 "--seed", "1", "--out", str(sim / "u.csv")]) == 0
    full, sub = read_csv(sim / "data.csv"), read_csv(sim / "u.csv")
    assert sum(float(r["y"]) == 0 for r in sub) == sum(float(r["y"]) == 0 for r in full)
    nz = sum(float(r["y"]) > 0 for r in full)
    assert sum(float(r["y"]) > 0 for r in sub) == int(np.floor(0.15 * nz + 0.5))
    assert all(r in full for r in sub[:20])


def test_zeta_grid_training(sim, tmp_path):
    out = tmp_path / "g.json"
    assert main(["train", "--data", str(sim / "data.csv"), "--zeta-grid", "1.3:1.7:0.2", *FAST,
                 "--em-iters", "1", "--model-out", str(out)]) == 0
    prof = load_model(out).training_meta["profile"]
    assert [p["zeta"] for p in prof] == [1.3, 1.5, 1.7]


def test_zeta_and_grid_are_exclusive(sim, capsys):
    code = main(["train", "--data", str(sim / "data.csv"), "--zeta", "1.5", "--zeta-grid", "1.3:1.7:0.1",
                 "--model-out", "x.json"])
    assert code == 2
    assert "not allowed with argument" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert main(["predict", "--bogus"]) == 2


def test_errors_are_one_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,-2\n")
    assert main(["train", "--data", str(bad), "--model-out", str(tmp_path / "m.json")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "bad.csv:2" in err[0]
    assert main(["predict", "--model", str(tmp_path / "none.json"), "--data", str(bad),
                 "--out", str(tmp_path / "p.csv")]) == 1


def test_bad_target_rate(tmp_path):
    assert main(["simulate", "--n", "10", "--target-zero-rate", "1.5", "--out", str(tmp_path / "d.csv")]) == 2
