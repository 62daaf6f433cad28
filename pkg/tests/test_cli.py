import csv
import json

import numpy as np
import pytest

from dualstage import cli
from dualstage.exceptions import ConfigurationError


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    rng = np.random.default_rng(0)
    n = 400
    base = 0.02 * np.arange(n) + np.sin(2 * np.pi * np.arange(n) / 12)
    target = base + rng.normal(0, 0.05, n)
    lagged = np.roll(base, 3) + rng.normal(0, 0.05, n)
    noise = rng.normal(size=n)
    path = tmp_path_factory.mktemp("data") / "series.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "lagged", "noise"])
        writer.writerows(zip(target, lagged, noise))
    return path


DATA_FLAGS = ["--target", "y", "--window", "24"]

TRAIN_FLAGS = DATA_FLAGS + [
    "--horizon", "3", "--hidden", "4", "--patch-len", "8",
    "--feature-dim", "4", "--epochs", "2", "--seed", "1",
]


@pytest.fixture(scope="module")
def trained_dir(data_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = cli.main(["train", "--input", str(data_csv),
                     "--out-dir", str(out)] + TRAIN_FLAGS)
    assert code == 0
    return out


class TestConfigFile:
    def test_parse_key_value_with_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nepochs = 5\nbatch-size=32\n\nlr=0.01\n")
        assert cli.read_config_file(path) == {
            "epochs": "5", "batch_size": "32", "lr": "0.01"}

    def test_malformed_line_cites_location(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("epochs 5\n")
        with pytest.raises(ConfigurationError, match="bad.cfg:1"):
            cli.read_config_file(path)

    def test_file_value_applies_but_flag_wins(self, data_csv, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs=1\nhidden=4\npatch-len=8\nfeature-dim=4\n")
        out = tmp_path / "out"
        code = cli.main(["train", "--input", str(data_csv), "--target", "y",
                         "--window", "24", "--epochs", "2",
                         "--config", str(cfg), "--out-dir", str(out)])
        assert code == 0
        with open(out / "history.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2  # flag epochs=2 beat the file's epochs=1
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["model_config"]["hidden"] == 4  # file value applied

    def test_unknown_key_is_exit_code_2(self, data_csv, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("no_such_option=1\n")
        code = cli.main(["correlate", "--input", str(data_csv),
                         "--config", str(cfg),
                         "--out-dir", str(tmp_path / "out")] + DATA_FLAGS)
        assert code == 2
        assert "no_such_option" in capsys.readouterr().err


class TestDecompose:
    def test_components_additive_and_figure_written(self, data_csv, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["decompose", "--input", str(data_csv),
                         "--out-dir", str(out)] + DATA_FLAGS)
        assert code == 0
        with open(out / "components.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 400
        for row in rows[::37]:
            total = (float(row["trend"]) + float(row["seasonal"])
                     + float(row["noise"]))
            assert total == pytest.approx(float(row["series"]), abs=1e-8)
        sidecar = json.loads((out / "decomposition.json").read_text())
        assert sidecar["method"] == "ssa"
        assert len(sidecar["eigenvalues"]) > 0
        assert (out / "components.png").stat().st_size > 0

    def test_stl_method(self, data_csv, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["decompose", "--input", str(data_csv),
                         "--decomposer", "stl", "--split", "train",
                         "--out-dir", str(out)] + DATA_FLAGS)
        assert code == 0
        sidecar = json.loads((out / "decomposition.json").read_text())
        assert sidecar["method"] == "stl"
        with open(out / "components.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 240


class TestCorrelate:
    def test_selection_table(self, data_csv, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["correlate", "--input", str(data_csv),
                         "--out-dir", str(out)] + DATA_FLAGS)
        assert code == 0
        with open(out / "correlations.csv") as fh:
            rows = {r["variable"]: r for r in csv.DictReader(fh)}
        assert rows["lagged"]["selected"] == "True"
        assert rows["noise"]["selected"] == "False"
        report = json.loads((out / "correlations.json").read_text())
        assert report["selected"] == ["lagged"]
        assert (out / "correlations.png").stat().st_size > 0


class TestTrain:
    def test_artifacts(self, trained_dir):
        for name in ("checkpoint.json", "manifest.json", "history.csv",
                     "history.png"):
            assert (trained_dir / name).exists()
        manifest = json.loads((trained_dir / "manifest.json").read_text())
        assert manifest["covariates"] == ["lagged"]
        assert 1 <= manifest["best_epoch"] <= 2
        checkpoint = json.loads((trained_dir / "checkpoint.json").read_text())
        assert checkpoint["config"]["n_covariates"] == 1
        assert "seasonal.W_f" in checkpoint["params"]

    def test_history_lr_column(self, trained_dir):
        with open(trained_dir / "history.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["epoch"] for r in rows] == ["1", "2"]
        assert all(float(r["lr"]) == 0.001 for r in rows)


class TestPredictEvaluate:
    def test_predict_outputs(self, data_csv, trained_dir, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["predict", "--checkpoint",
                         str(trained_dir / "checkpoint.json"),
                         "--input", str(data_csv), "--split", "test",
                         "--out-dir", str(out)])
        assert code == 0
        with open(out / "predictions.csv") as fh:
            rows = list(csv.DictReader(fh))
        # test split is rows 320..400: 80 - 24 - 3 + 1 windows
        assert len(rows) == 54
        raw = np.genfromtxt(data_csv, delimiter=",", names=True)
        for row in rows[::11]:
            assert float(row["truth_denorm"]) == pytest.approx(
                raw["y"][int(row["row"])], abs=1e-9)
        assert (out / "forecast.png").stat().st_size > 0

    def test_evaluate_outputs(self, data_csv, trained_dir, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["evaluate", "--checkpoint",
                         str(trained_dir / "checkpoint.json"),
                         "--input", str(data_csv), "--split", "valid",
                         "--out-dir", str(out)])
        assert code == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert set(payload) == {"split", "model", "persistence"}
        assert np.isfinite(payload["model"]["mae"])
        assert "MAE" in capsys.readouterr().out


class TestErrorHandling:
    def test_unknown_target_is_exit_code_2(self, data_csv, tmp_path, capsys):
        code = cli.main(["correlate", "--input", str(data_csv),
                         "--target", "nope", "--window", "24",
                         "--out-dir", str(tmp_path / "out")])
        assert code == 2
        err = capsys.readouterr().err
        assert "nope" in err and err.startswith("error:")

    def test_split_too_small_is_exit_code_2(self, data_csv, tmp_path, capsys):
        code = cli.main(["decompose", "--input", str(data_csv),
                         "--target", "y", "--window", "96",
                         "--out-dir", str(tmp_path / "out")])
        assert code == 2
        assert "window" in capsys.readouterr().err
