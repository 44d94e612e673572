import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from campusrank.model import TrainConfig
from campusrank.model.dataset import ModelParams, RankingDataset
from campusrank.model.inference import (Prediction, blend_scores, normalized_ranks, predict,
                                        read_predictions_csv, write_predictions_csv)


def test_blend_toy_four_students():
    # 0 ~ 1 (tau 1), 0 ~ 2 (tau 0.5); 3 isolated
    f = np.array([1.0, 3.0, 0.0, 5.0])
    edges = np.array([[0, 1], [1, 0], [0, 2], [2, 0]])
    tau = np.array([1.0, 1.0, 0.5, 0.5])
    out = blend_scores(f, edges, tau, 0.2)
    group0 = (1.0 * 3.0 + 0.5 * 0.0) / 1.5
    np.testing.assert_allclose(out, [0.8 * 1 + 0.2 * group0, 0.8 * 3 + 0.2 * 1,
                                     0.8 * 0 + 0.2 * 1, 5.0],
                               rtol=1e-14)


def test_blend_extremes():
    f = np.array([1.0, 3.0, 0.0])
    edges = np.array([[0, 1], [1, 0]])
    tau = np.array([2.0, 2.0])
    np.testing.assert_array_equal(blend_scores(f, edges, tau, 0.0), f)
    np.testing.assert_array_equal(blend_scores(f, edges, tau, 1.0), [3.0, 1.0, 0.0])


def test_blend_without_edges_is_identity():
    f = np.array([0.3, -1.0])
    np.testing.assert_array_equal(blend_scores(f, np.zeros((0, 2)), np.zeros(0), 0.5), f)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_normalized_ranks_span_unit_interval(scores):
    ids = [f"s{i:03d}" for i in range(len(scores))]
    r = normalized_ranks(scores, ids)
    n = len(scores)
    np.testing.assert_allclose(np.sort(r), np.arange(n) / max(n - 1, 1))
    best = int(np.argmax(scores))
    assert r[best] == 0.0 or scores[int(np.argmin(r))] == scores[best]


def test_normalized_rank_ties_broken_by_id():
    r = normalized_ranks([1.0, 1.0, 0.0], ["b", "a", "c"])
    np.testing.assert_array_equal(r, [0.5, 0.0, 1.0])


def _data_and_params(variant):
    X = np.eye(4)
    sim = {"s0": {"s3": 1.0}, "s3": {"s0": 1.0}}
    data = RankingDataset.from_arrays(X, [0, 1 / 3, 2 / 3, 1], [1] * 4, ["a"] * 4,
                                      ["s0", "s1", "s2", "s3"], sim)
    w = np.array([1.0, 2.0, 3.0, 4.0])
    return data, ModelParams([1], ["a"], variant, W=w[None, None, :])


def test_predict_blends_only_for_similarity_variants():
    data, params = _data_and_params("BLTR+SS")
    cfg = TrainConfig(xi=0.5)
    blended = {p.student_id: p.score for p in predict(data, params, cfg, "BLTR+SS")}
    raw = {p.student_id: p.score for p in predict(data, params, cfg, "BLTR+SEQ")}
    assert raw == {"s0": 1.0, "s1": 2.0, "s2": 3.0, "s3": 4.0}
    assert blended["s0"] == pytest.approx(2.5) and blended["s3"] == pytest.approx(2.5)
    assert blended["s1"] == 2.0


def test_predicted_ranks_per_task():
    data, params = _data_and_params("BLTR+SEQ")
    preds = predict(data, params, TrainConfig(), "BLTR+SEQ")
    assert [p.predicted_rank for p in preds] == [1.0, 2 / 3, 1 / 3, 0.0]


def test_predict_rejects_missing_features():
    X = np.array([[1.0, np.nan], [0.0, 1.0]])
    data = RankingDataset.from_arrays(X, [np.nan, np.nan], [1, 1], ["a", "a"])
    params = ModelParams([1], ["a"], "BLTR+SS", W=np.ones((1, 1, 2)))
    with pytest.raises(ValueError):
        predict(data, params, TrainConfig())


def test_predict_requires_trained_params():
    data, _ = _data_and_params("BLTR")
    with pytest.raises(ValueError):
        predict(data, ModelParams([1], ["a"], "BLTR"), TrainConfig())


def test_prediction_csv_round_trip(tmp_path):
    rows = [Prediction("s1", 1, "cs", 0.1 + 0.2, 0.0), Prediction("s2", 2, "ee", -1e-300, 1.0)]
    path = tmp_path / "p.csv"
    write_predictions_csv(rows, path)
    assert read_predictions_csv(path) == rows
