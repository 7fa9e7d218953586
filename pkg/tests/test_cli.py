import json
import math
from pathlib import Path

import numpy as np
import pytest

from logitprob import io
from logitprob.cli import main
from logitprob.datagen import Cluster, GeneratorSpec
from logitprob.inference import ml_score
from logitprob.model import CalibrationModel, LogitRecord, Split
from logitprob.plots import read_bar_heights


@pytest.fixture
def scenario(tmp_path):
    out = tmp_path / "data"
    assert main(["generate", "--out", str(out), "--per-class", "200", "--unseen-count", "50"]) == 0
    return out


def write_spec(path, count=40, unseen=10, seed=5):
    spec = GeneratorSpec(3, tuple(Cluster(np.eye(3)[i] * 6, (1, 1, 1), count) for i in range(3)),
                         Cluster((2, 2, 2), (3, 3, 3), unseen) if unseen else None, seed)
    path.write_text(json.dumps(spec.to_dict()))
    return path


class TestGenerate:
    def test_deterministic_files(self, tmp_path):
        spec = write_spec(tmp_path / "spec.json")
        for d in ("a", "b"):
            assert main(["generate", "--spec", str(spec), "--out", str(tmp_path / d)]) == 0
        for name in ("train.csv", "validation.csv", "test.csv", "unseen.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_counts_header_only(self, tmp_path):
        spec = write_spec(tmp_path / "spec.json", count=0, unseen=0)
        assert main(["generate", "--spec", str(spec), "--out", str(tmp_path / "z")]) == 0
        for name in ("train.csv", "test.csv"):
            assert (tmp_path / "z" / name).read_text() == "sample_id,label,objectness,logit_0,logit_1,logit_2\n"

    def test_scenario_fits(self, scenario, tmp_path):
        assert main(["fit", "--train", str(scenario / "train.csv"), "--out", str(tmp_path / "m")]) == 0
        model = CalibrationModel.loads((tmp_path / "m" / "model.json").read_text())
        assert model.nc == 3

    def test_bad_spec(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"nc": 2, "per_class": []}')
        assert main(["generate", "--spec", str(p), "--out", str(tmp_path)]) == 2


class TestFit:
    @pytest.mark.parametrize("bins, lam", [("25", "3.5e-11"), ("25", "1.0e-7")])
    def test_table_settings_accepted(self, scenario, tmp_path, bins, lam):
        out = tmp_path / "m"
        assert main(["fit", "--train", str(scenario / "train.csv"), "--bins", bins, "--lambda", lam,
                     "--out", str(out)]) == 0
        model = CalibrationModel.loads((out / "model.json").read_text())
        assert model.bin_count == int(bins) and model.lam == float(lam)

    def test_preset(self, scenario, tmp_path):
        assert main(["fit", "--train", str(scenario / "train.csv"), "--preset", "kitti-rv-ml",
                     "--out", str(tmp_path)]) == 0
        model = CalibrationModel.loads((tmp_path / "model.json").read_text())
        assert (model.bin_count, model.lam) == (31, 2.5e-4)

    def test_one_bin_is_config_error(self, scenario, tmp_path):
        assert main(["fit", "--train", str(scenario / "train.csv"), "--bins", "1", "--out", str(tmp_path)]) == 2

    def test_missing_input(self, tmp_path):
        assert main(["fit", "--train", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2

    def test_underpopulated_is_data_error(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("sample_id,label,objectness,logit_0,logit_1\na,0,,1,0\nb,0,,2,0\nc,1,,0,1\n")
        assert main(["fit", "--train", str(p), "--out", str(tmp_path)]) == 3

    def test_arity_error_line(self, tmp_path, capsys):
        p = tmp_path / "t.csv"
        p.write_text("sample_id,label,objectness,logit_0,logit_1\na,0,,1,0\nb,0,,2\n")
        assert main(["fit", "--train", str(p), "--out", str(tmp_path)]) == 3
        assert "t.csv:3" in capsys.readouterr().err

    def test_config_file_and_flag_precedence(self, scenario, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bins": 12, "lambda": 0.5, "inputs": {"train": str(scenario / "train.csv")},
                                   "output_dir": str(tmp_path / "m")}))
        assert main(["fit", "--config", str(cfg), "--lambda", "0.25"]) == 0
        model = CalibrationModel.loads((tmp_path / "m" / "model.json").read_text())
        assert (model.bin_count, model.lam) == (12, 0.25)


class TestPredict:
    def test_softmax_uniform_row(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("sample_id,label,objectness,logit_0,logit_1,logit_2\ns1,,,0,0,0\n")
        assert main(["predict", "--method", "softmax", "--input", str(p), "--out", str(tmp_path)]) == 0
        row = (tmp_path / "scores_softmax_x.csv").read_text().splitlines()[1].split(",")
        assert row[0] == "s1" and row[1] == "softmax"
        assert all(v.startswith("0.333333") for v in row[2:5]) and row[5] == "0"

    def test_ml_matches_library_and_is_stable(self, scenario, tmp_path):
        main(["fit", "--train", str(scenario / "train.csv"), "--lambda", "1e-3", "--out", str(tmp_path)])
        args = ["predict", "--model", str(tmp_path / "model.json"), "--method", "ml",
                "--input", str(scenario / "test.csv")]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "scores_ml_test.csv").read_bytes()
        assert a == (tmp_path / "b" / "scores_ml_test.csv").read_bytes()
        model = CalibrationModel.loads((tmp_path / "model.json").read_text())
        recs = io.read_logit_file(scenario / "test.csv")
        rows = io.read_scores_file(tmp_path / "a" / "scores_ml_test.csv")
        assert len(rows) == len(recs)
        for r, row in zip(recs, rows):
            assert row.sample_id == r.sample_id
            assert np.array_equal(row.score.scores, ml_score(model, r).scores)

    def test_arity_mismatch(self, scenario, tmp_path):
        main(["fit", "--train", str(scenario / "train.csv"), "--out", str(tmp_path)])
        p = tmp_path / "two.csv"
        p.write_text("sample_id,label,objectness,logit_0,logit_1\na,,,0,0\n")
        assert main(["predict", "--model", str(tmp_path / "model.json"), "--method", "map",
                     "--input", str(p), "--out", str(tmp_path)]) == 3

    def test_ts_needs_temperature(self, scenario, tmp_path):
        assert main(["predict", "--method", "ts", "--input", str(scenario / "test.csv"),
                     "--out", str(tmp_path)]) == 2


def calibrated_file(path, scale, n=4000, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.normal(0, 2, size=(n, 3))
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    y = np.minimum((p.cumsum(axis=1) < rng.random(n)[:, None]).sum(axis=1), 2)
    io.write_logit_file(path, [LogitRecord(f"v{k}", scale * z[k], int(y[k])) for k in range(n)])
    return path


class TestTemp:
    @pytest.mark.parametrize("scale, tol", [(3.0, 0.3), (1.0, 0.1)])
    def test_recovery(self, tmp_path, capsys, scale, tol):
        v = calibrated_file(tmp_path / "val.csv", scale)
        assert main(["temp", "--validation", str(v), "--test", str(v), "--out", str(tmp_path)]) == 0
        ts = json.loads((tmp_path / "temperature.json").read_text())["ts"]
        assert abs(ts - scale) <= tol
        assert f"ts={ts!r}" in capsys.readouterr().out
        assert (tmp_path / "scores_ts_val.csv").exists()

    def test_empty_validation(self, tmp_path):
        v = tmp_path / "val.csv"
        io.write_logit_file(v, [], nc=3)
        assert main(["temp", "--validation", str(v), "--out", str(tmp_path)]) == 3


def write_scores(path, method, rows):
    with open(path, "w") as fh:
        fh.write("sample_id,method,score_0,score_1,predicted_class,confidence\n")
        for sid, s0 in rows:
            k = 0 if s0 >= 1 - s0 else 1
            fh.write(f"{sid},{method},{s0!r},{1 - s0!r},{k},{max(s0, 1 - s0)!r}\n")


class TestEvaluate:
    def test_perfect(self, tmp_path):
        labels = tmp_path / "labels.csv"
        labels.write_text("sample_id,label,objectness,logit_0,logit_1\na,0,,1,0\nb,1,,0,1\n")
        write_scores(tmp_path / "s.csv", "softmax", [("a", 1.0), ("b", 0.0)])
        assert main(["evaluate", "--labels", str(labels), "--scores", str(tmp_path / "s.csv"),
                     "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "report_softmax.json").read_text())
        assert (rep["macro_fscore"], rep["macro_fpr"], rep["ece"]) == (1.0, 0.0, 0.0)
        assert rep["reliability"]["bin_count"] == 15

    def test_hand_binned_case(self, tmp_path):
        labels = tmp_path / "labels.csv"
        labels.write_text("sample_id,label,objectness,logit_0,logit_1\n"
                          "a,1,,0,0\nb,1,,0,0\nc,0,,0,0\nd,0,,0,0\n")
        write_scores(tmp_path / "s.csv", "ml", [("a", 0.6), ("b", 0.6), ("c", 0.9), ("d", 0.9)])
        assert main(["evaluate", "--labels", str(labels), "--scores", str(tmp_path / "s.csv"),
                     "--reliability-bins", "2", "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "report_ml.json").read_text())
        assert rep["ece"] == pytest.approx(0.25, abs=1e-12) and rep["mce"] == pytest.approx(0.25, abs=1e-12)
        table = (tmp_path / "reliability_ml.csv").read_text().splitlines()
        assert table[0] == "low,high,count,accuracy,confidence,gap" and len(table) == 3

    def test_join_mismatch(self, tmp_path, capsys):
        labels = tmp_path / "labels.csv"
        labels.write_text("sample_id,label,objectness,logit_0,logit_1\na,0,,1,0\n")
        write_scores(tmp_path / "s.csv", "softmax", [("a", 1.0), ("zz", 0.2)])
        assert main(["evaluate", "--labels", str(labels), "--scores", str(tmp_path / "s.csv"),
                     "--out", str(tmp_path)]) == 3
        assert "zz" in capsys.readouterr().err

    def test_four_methods_and_plots(self, scenario, tmp_path):
        out = tmp_path / "run"
        assert main(["run", "--train", str(scenario / "train.csv"), "--validation", str(scenario / "validation.csv"),
                     "--test", str(scenario / "test.csv"), "--unseen", str(scenario / "unseen.csv"),
                     "--lambda", "1e-3", "--out", str(out)]) == 0
        for m in ("softmax", "ml", "map", "ts"):
            rep = json.loads((out / f"report_{m}.json").read_text())
            assert rep["method"] == m and rep["unseen"]["n"] == 50
            assert sum(rep["unseen"]["histogram"]) == 50
        assert json.loads((out / "report_ts.json").read_text())["temperature"] > 0
        svg = (out / "reliability_ml.svg").read_text()
        rel = json.loads((out / "report_ml.json").read_text())["reliability"]
        heights = read_bar_heights(svg, "accuracy")
        assert len(heights) == 15
        assert heights == [b["accuracy"] for b in rel["bins"]]
        assert read_bar_heights(svg, "gap") == [abs(b["gap"]) for b in rel["bins"]]
        assert (out / "unseen_map.svg").exists()


class TestPlots:
    def test_zero_ece_has_flat_gaps(self, tmp_path):
        labels = tmp_path / "labels.csv"
        labels.write_text("sample_id,label,objectness,logit_0,logit_1\na,0,,1,0\nb,1,,0,1\n")
        write_scores(tmp_path / "s.csv", "softmax", [("a", 1.0), ("b", 0.0)])
        main(["evaluate", "--labels", str(labels), "--scores", str(tmp_path / "s.csv"),
              "--reliability-bins", "10", "--out", str(tmp_path)])
        assert main(["plots", "--reports", str(tmp_path / "report_softmax.json"), "--out", str(tmp_path / "p")]) == 0
        svg = (tmp_path / "p" / "reliability_softmax.svg").read_text()
        assert read_bar_heights(svg, "gap") == [0.0] * 10
        assert len(read_bar_heights(svg, "accuracy")) == 10

    def test_missing_report(self, tmp_path):
        assert main(["plots", "--reports", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2


class TestDetection:
    def test_match_and_pr(self, tmp_path):
        dets = tmp_path / "dets.csv"
        dets.write_text("sample_id,frame,x1,y1,x2,y2,class,score\n"
                        "d1,f0,0,0,10,10,0,0.9\n"
                        "d2,f0,1,1,10,10,0,0.8\n"
                        "d3,f1,50,50,60,60,0,0.7\n"
                        "d4,f1,0,0,5,5,1,0.6\n")
        gt = tmp_path / "gt.csv"
        gt.write_text("frame,x1,y1,x2,y2,class\nf0,0,0,10,10,0\nf1,50,50,60,61,0\nf1,0,0,5,5,1\nf1,90,90,99,99,1\n")
        logits = tmp_path / "det.csv"
        logits.write_text("sample_id,label,objectness,logit_0,logit_1\n"
                          "d1,,0.9,3,0\nd2,,0.8,2,0\nd3,,0.7,1,0\nd4,,0.6,0,2\n")
        assert main(["match", "--detections", str(dets), "--ground-truth", str(gt), "--logits", str(logits),
                     "--out", str(tmp_path)]) == 0
        matched = io.read_logit_file(tmp_path / "det_matched.csv")
        assert [r.is_tp for r in matched] == [True, False, True, True]
        assert [r.true_label for r in matched] == [0, None, 0, 1]
        totals = json.loads((tmp_path / "total_positives.json").read_text())["total_positives"]
        assert totals == [2, 2]

        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"mode": "detection", "total_positives": totals}))
        assert main(["predict", "--method", "softmax", "--input", str(tmp_path / "det_matched.csv"),
                     "--out", str(tmp_path)]) == 0
        assert main(["evaluate", "--config", str(cfg), "--labels", str(tmp_path / "det_matched.csv"),
                     "--scores", str(tmp_path / "scores_softmax_det_matched.csv"), "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "report_softmax.json").read_text())
        car = rep["pr_curves"][0]
        # class-0 ranking: d1 (TP), d2 (FP), d3 (TP), d4 (FP for class 0)
        assert car["points"][:4] == [[0.0, 1.0], [0.5, 1.0], [0.5, 0.5], [1.0, 2 / 3]]
        assert rep["pr_curves"][1]["auc"] == pytest.approx(0.5)
