import csv
import json
import xml.etree.ElementTree as ET

import pytest

from uqreject.cli import main
from uqreject.data import load_csv

TINY_MLP = {"hidden_dims": [8], "dropout_rates": [0.3], "epochs": 3}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--n-train", "300", "--n-test", "120"]) == 0
    cfg = root / "train.json"
    cfg.write_text(json.dumps({"train": "data/train.csv", "mlp": TINY_MLP, "M": 3, "seed": 4}))
    assert main(["train", "--config", str(cfg), "--out", str(root / "models")]) == 0
    return root


class TestSynth:
    def test_files(self, workspace):
        names = sorted(p.name for p in (workspace / "data").iterdir())
        assert names == ["test_large.csv", "test_none.csv", "test_small.csv", "train.csv"]
        assert len(load_csv(workspace / "data" / "train.csv")) == 300

    def test_single_level(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path), "--level", "large", "--n-train", "10", "--n-test", "5"]) == 0
        assert (tmp_path / "test_large.csv").exists() and not (tmp_path / "test_none.csv").exists()

    def test_env_default_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv("UQREJECT_OUT", str(tmp_path))
        assert main(["synth", "--n-train", "10", "--n-test", "5", "--level", "none"]) == 0
        assert (tmp_path / "data" / "train.csv").exists()


class TestTrain:
    def test_outputs(self, workspace):
        models = workspace / "models"
        assert (models / "model.json").exists()
        assert len(list((models / "ensemble").glob("member_*.json"))) == 3
        report = json.loads((models / "train_report.json").read_text())
        assert report["member_02"]["seed"] == 6

    def test_missing_train_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"train": "nope.csv"}))
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"train": "x.csv", "colour": 1}))
        assert main(["train", "--config", str(cfg)]) == 2

    def test_bad_json(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{")
        assert main(["train", "--config", str(cfg)]) == 2


class TestUncertaintyAndReject:
    @pytest.mark.parametrize("method", ["standard", "mc_dropout", "deep_ensemble"])
    def test_pipeline(self, workspace, tmp_path, method):
        models = workspace / "models"
        model_arg = str(models / "ensemble") if method == "deep_ensemble" else str(models / "model.json")
        unc = tmp_path / "u.csv"
        code = main(["uncertainty", "--model", model_arg, "--data", str(workspace / "data" / "test_small.csv"),
                     "--method", method, "--T", "8", "--standardizer", str(models / "standardizer.json"),
                     "--out", str(unc)])
        assert code == 0
        rows = _rows(unc)
        assert len(rows) == 120
        assert list(rows[0]) == ["obs_id", "p_class1", "pred_label", "true_label", "u_total", "u_data", "u_model"]
        if method == "standard":
            assert all(float(r["u_model"]) == 0.0 for r in rows)

        curve, svg = tmp_path / "c.csv", tmp_path / "c.svg"
        assert main(["reject", "--data", str(unc), "--out", str(curve), "--plot", str(svg)]) == 0
        points = _rows(curve)
        assert len(points) == 20
        acc = sum(r["pred_label"] == r["true_label"] for r in rows) / len(rows)
        assert float(points[0]["nra"]) == pytest.approx(acc, abs=1e-9)
        assert ET.parse(svg).getroot().tag.endswith("svg")

    def test_one_model_for_mc(self, workspace):
        code = main(["uncertainty", "--model", str(workspace / "models" / "ensemble"),
                     "--data", str(workspace / "data" / "test_none.csv"), "--method", "mc_dropout"])
        assert code == 2

    def test_missing_model(self, workspace):
        assert main(["uncertainty", "--model", "absent.json", "--data", "x.csv"]) == 2

    def test_feature_mismatch(self, workspace, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,c,label\n1,2,3,0\n")
        code = main(["uncertainty", "--model", str(workspace / "models" / "model.json"), "--data", str(bad),
                     "--out", str(tmp_path / "u.csv")])
        assert code == 2

    def test_bad_grid(self, tmp_path):
        unc = tmp_path / "u.csv"
        unc.write_text("obs_id,p_class1,pred_label,true_label,u_total,u_data,u_model\n0,0.9,1,1,0.4,0.4,0\n")
        assert main(["reject", "--data", str(unc), "--grid", "0.5,0.2", "--out", str(tmp_path / "c.csv")]) == 2
        assert main(["reject", "--data", str(unc), "--grid", "x", "--out", str(tmp_path / "c.csv")]) == 2

    def test_malformed_uncertainty_csv(self, tmp_path):
        unc = tmp_path / "u.csv"
        unc.write_text("obs_id,u_total\n0,1\n")
        assert main(["reject", "--data", str(unc)]) == 2


class TestExperiment:
    def _config(self, tmp_path, **extra):
        cfg = {"data": {"source": "synthetic", "n_train": 200, "n_test": 80}, "mlp": TINY_MLP,
               "M": 2, "T": 8, "runs": 2, "seed": 1, **extra}
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_outputs(self, tmp_path):
        out = tmp_path / "out"
        assert main(["experiment", "--config", str(self._config(tmp_path)), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["shifts"] == ["none", "small", "large"]
        assert len(report["runs"]) == 2
        for shift in ("none", "small", "large"):
            ET.parse(out / f"rejection_{shift}.svg")
            assert len(_rows(out / f"curve_deep_ensemble_{shift}.csv")) == 20
        assert "| large |" in (out / "summary.md").read_text()
        hist = _rows(out / "hist_mc_dropout.csv")
        assert len(hist) == 3 * 3 * 20

    def test_unknown_key(self, tmp_path):
        assert main(["experiment", "--config", str(self._config(tmp_path, bogus=1))]) == 2

    def test_bad_method(self, tmp_path):
        assert main(["experiment", "--config", str(self._config(tmp_path, methods=["bayes"]))]) == 2

    def test_csv_source_with_holdout(self, workspace, tmp_path):
        cfg = {"data": {"source": "csv", "train": str(workspace / "data" / "train.csv"),
                        "tests": {"shifted": str(workspace / "data" / "test_large.csv")},
                        "holdout_name": "iid"},
               "mlp": TINY_MLP, "M": 2, "T": 4, "runs": 1, "methods": ["standard"]}
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        assert main(["experiment", "--config", str(path), "--out", str(out)]) == 0
        assert json.loads((out / "report.json").read_text())["shifts"] == ["iid", "shifted"]

    def test_missing_csv_is_user_error(self, tmp_path):
        cfg = {"data": {"source": "csv", "train": "missing.csv"}, "runs": 1}
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(cfg))
        assert main(["experiment", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_internal_failure_exit_code(self, tmp_path, monkeypatch):
        import uqreject.experiment as exp

        def boom(*a, **k):
            raise RuntimeError("unexpected")

        monkeypatch.setattr(exp, "sweep_curve", boom)
        assert main(["experiment", "--config", str(self._config(tmp_path)), "--out", str(tmp_path / "o")]) == 3
