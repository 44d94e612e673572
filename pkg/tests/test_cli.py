import json

import pytest

from campusrank.cli import main
from campusrank.events import read_ranks
from campusrank.model.inference import Prediction, read_predictions_csv, write_predictions_csv

pytestmark = pytest.mark.filterwarnings("ignore::sklearn.exceptions.ConvergenceWarning")

BENCH_SPEC = {"n_majors": 2, "n_semesters": 2, "major_sizes": [12, 15], "n_features": 5,
              "rank": 2}
EVENT_SPEC = {"major_sizes": [6, 6], "semester_days": 30, "exam_days": 7}


@pytest.fixture
def bench_dir(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(BENCH_SPEC))
    out = tmp_path / "bench"
    assert main(["synth", "--kind", "benchmark", "--spec", str(spec), "--out", str(out),
                 "--seed", "3"]) == 0
    return out


@pytest.fixture
def events_dir(tmp_path):
    spec = tmp_path / "events_spec.json"
    spec.write_text(json.dumps(EVENT_SPEC))
    out = tmp_path / "events"
    assert main(["synth", "--kind", "events", "--spec", str(spec), "--out", str(out)]) == 0
    return out


def _inputs(d):
    return ["--events", str(d / "events.csv"), "--roster", str(d / "roster.csv"),
            "--calendar", str(d / "calendar.csv")]


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["train"]) == 1
    assert main(["bench", "--variants", "BLTR+XYZ"]) == 1
    assert main(["train", "--features", "f.csv", "--out", "m.npz", "--threads", "0"]) == 1
    assert "--threads must be positive" in capsys.readouterr().err


def test_missing_input_exits_2(tmp_path, capsys):
    code = main(["ingest", "--events", str(tmp_path / "nope.csv"), "--roster",
                 str(tmp_path / "r.csv"), "--calendar", str(tmp_path / "c.csv"),
                 "--out", str(tmp_path / "report.json")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_version_exits_0(capsys):
    assert main(["--version"]) == 0
    assert "campusrank" in capsys.readouterr().out


def test_synth_writes_run_json(bench_dir):
    run = json.loads((bench_dir / "run.json").read_text())
    assert run["command"] == "synth" and run["arguments"]["seed"] == 3
    assert len(run["inputs"]) == 1
    assert {"features_train.csv", "truth.json", "similarity.csv"} <= {
        p.split("/")[-1] for p in run["outputs"]}


def test_refuses_to_overwrite_without_force(bench_dir, tmp_path):
    # the fixture wrote its spec to tmp_path
    args = ["synth", "--kind", "benchmark", "--spec", str(tmp_path / "spec.json"),
            "--out", str(bench_dir)]
    assert main(args) == 1
    assert main(args + ["--force"]) == 0


def test_train_predict_evaluate(bench_dir, tmp_path, capsys):
    model = tmp_path / "model.npz"
    assert main(["train", "--features", str(bench_dir / "features_train.csv"),
                 "--similarity", str(bench_dir / "similarity.csv"), "--variant", "MTLTR-APP",
                 "--k", "2", "--max-iter", "50", "--out", str(model)]) == 0
    run = json.loads(model.with_name("model.run.json").read_text())
    assert run["train_config"]["k"] == 2 and run["iterations"] == 50
    preds = tmp_path / "preds.csv"
    assert main(["predict", "--model", str(model), "--features",
                 str(bench_dir / "features_test.csv"), "--similarity",
                 str(bench_dir / "similarity.csv"), "--out", str(preds)]) == 0
    assert len(read_predictions_csv(preds)) == 2 * (12 + 15)
    report = tmp_path / "eval"
    capsys.readouterr()
    assert main(["evaluate", "--predictions", str(preds), "--ranks",
                 str(bench_dir / "ranks.csv"), "--out", str(report)]) == 0
    data = json.loads(report.with_suffix(".json").read_text())
    assert [s["semester_id"] for s in data["semesters"]] == [1, 2]
    assert "Spearman" in capsys.readouterr().out


def test_perfect_predictions_score_one(bench_dir, tmp_path):
    truth = read_ranks(bench_dir / "ranks.csv")
    majors = dict(line.split(",")[:2] for line in
                  (bench_dir / "roster.csv").read_text().splitlines()[1:])
    preds = [Prediction(sid, sem, majors[sid], -r, r) for (sid, sem), r in sorted(truth.items())
             if sid.startswith("B-")]
    path = tmp_path / "perfect.csv"
    write_predictions_csv(preds, path)
    assert main(["evaluate", "--predictions", str(path), "--ranks",
                 str(bench_dir / "ranks.csv"), "--out", str(tmp_path / "perfect")]) == 0
    data = json.loads((tmp_path / "perfect.json").read_text())
    assert all(s["mean"] == 1.0 for s in data["semesters"])


def test_train_rejects_bad_config(bench_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lambda_q": 1}))
    assert main(["train", "--features", str(bench_dir / "features_train.csv"), "--config",
                 str(cfg), "--out", str(tmp_path / "m.npz")]) == 1
    assert main(["train", "--features", str(bench_dir / "features_train.csv"), "--xi", "2",
                 "--out", str(tmp_path / "m.npz")]) == 1


def test_output_may_not_overwrite_input(bench_dir):
    feats = str(bench_dir / "features_train.csv")
    assert main(["train", "--features", feats, "--out", feats, "--force"]) == 1


def test_event_pipeline(events_dir, tmp_path, capsys):
    report = tmp_path / "ingest.json"
    assert main(["ingest", *_inputs(events_dir), "--out", str(report)]) == 0
    assert json.loads(report.read_text())["rejected"] == 0
    feats = tmp_path / "features.csv"
    assert main(["featurize", *_inputs(events_dir), "--ranks", str(events_dir / "ranks.csv"),
                 "--out", str(feats)]) == 0
    sim = tmp_path / "sim"
    assert main(["similarity", *_inputs(events_dir), "--repetitions", "3", "--out",
                 str(sim), "--threads", "2"]) == 0
    assert (sim / "thresholds.json").exists() and (sim / "run.json").exists()
    out = tmp_path / "report"
    assert main(["report", "--features", str(feats), "--similarity",
                 str(sim / "similarity.csv"), "--out", str(out)]) == 0
    data = json.loads((out / "report.json").read_text())
    assert len(data["feature_correlations"]) == 14
    assert (out / "scatter.csv").exists()


def test_bench_small(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(BENCH_SPEC))
    out = tmp_path / "b"
    assert main(["bench", "--spec", str(spec), "--variants", "BLTR", "BLTR+SS",
                 "--max-iter", "20", "--out", str(out), "--seed", "2"]) == 0
    data = json.loads((out / "bench.json").read_text())
    assert [r["variant"] for r in data["variants"]] == ["BLTR", "BLTR+SS"]
    assert data["config"]["lambda_s"] == 100.0 and data["seed"] == 2
    assert "oracle mean" in capsys.readouterr().out
