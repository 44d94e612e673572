import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from campusrank.evaluation import (EvalReport, FeatureCorrelation, SemesterScore, VariantRow,
                                   cramers_v, feature_correlations, grouped_spearman,
                                   rank_quintiles, semester_report, spearman, variant_comparison)
from campusrank.features import FEATURE_NAMES, N_SCALED
from campusrank.model import TrainConfig
from campusrank.model.inference import Prediction
from oracles import cramers_v_oracle, random_instance, spearman_oracle


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=3, max_size=40))
def test_spearman_matches_midrank_oracle_with_ties(pairs):
    a, b = zip(*pairs)
    if len(set(a)) < 2 or len(set(b)) < 2:
        assert math.isnan(spearman(a, b))
        return
    assert spearman(a, b) == pytest.approx(spearman_oracle(a, b), abs=1e-12)


def test_spearman_permutations_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.permutation(100), rng.permutation(100)
        assert abs(spearman(a, b) - spearman_oracle(a, b)) < 1e-12


def test_spearman_basic_values():
    x = np.arange(10.0)
    assert spearman(x, x) == 1.0
    assert spearman(x, -x) == -1.0
    assert spearman(x, np.exp(x)) == 1.0
    with pytest.raises(ValueError):
        spearman([1.0], [2.0])
    with pytest.raises(ValueError):
        spearman([1.0, 2.0], [1.0, 2.0, 3.0])


@given(st.permutations(list(range(12))))
def test_spearman_symmetric(perm):
    x = list(range(12))
    assert spearman(x, perm) == spearman(perm, x)


def test_cramers_v_perfect_and_independent():
    assert cramers_v([0, 0, 1, 1] * 5, ["a", "a", "b", "b"] * 5) == pytest.approx(1.0)
    assert cramers_v([0, 1, 0, 1], ["a", "a", "b", "b"]) == pytest.approx(0.0)
    assert math.isnan(cramers_v([0, 0, 0], [1, 2, 3]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=4, max_size=60))
def test_cramers_v_matches_oracle(pairs):
    x, y = zip(*pairs)
    if len(set(x)) < 2 or len(set(y)) < 2:
        assert math.isnan(cramers_v(x, y))
        return
    assert cramers_v(x, y) == pytest.approx(cramers_v_oracle(x, y), abs=1e-12)


def test_rank_quintiles_equal_counts_best_first():
    y = np.linspace(0, 1, 25)
    q = rank_quintiles(y)
    assert np.bincount(q).tolist() == [5] * 5
    assert q[0] == 0 and q[-1] == 4
    assert np.all(np.diff(q) >= 0)


def test_grouped_spearman_skips_missing_and_small_groups():
    pred = [0.0, 0.5, 1.0, 0.0, 0.3, 9.0]
    truth = [0.0, 0.5, 1.0, 1.0, np.nan, 0.0]
    sem = [1, 1, 1, 1, 1, 2]
    maj = ["a", "a", "a", "b", "b", "a"]
    out = grouped_spearman(pred, truth, sem, maj)
    assert out[1].per_major == {"a": 1.0}
    assert out[2].per_major == {}
    assert math.isnan(out[2].mean)


def test_semester_mean_is_unweighted():
    score = SemesterScore(1, {"a": 1.0, "b": 0.0, "c": math.nan})
    assert score.mean == 0.5


def test_semester_report_from_predictions():
    preds = [Prediction(f"s{i}", 1, "a", 0.0, i / 3) for i in range(4)]
    truth = {(f"s{i}", 1): (3 - i) / 3 for i in range(4)}
    assert semester_report(preds, truth)[1].per_major["a"] == -1.0
    with pytest.raises(ValueError):
        semester_report(preds + [Prediction("x", 1, "b", 0.0, 0.0)], truth)


def test_feature_correlations_statistics():
    rng = np.random.default_rng(0)
    n = 200
    y = rng.permutation(n) / (n - 1)
    X = rng.normal(size=(n, len(FEATURE_NAMES)))
    X[:, 0] = -y
    X[:, 1] = 3.0
    wake = (rank_quintiles(y) % 5)
    X[:, N_SCALED:N_SCALED + 5] = np.eye(5)[wake]
    X[:, N_SCALED + 5:] = 0
    out = {c.feature: c for c in feature_correlations(X, y)}
    assert out["lib_entries"].value == pytest.approx(-1.0)
    assert out["lib_entries_weekend"].value is None
    assert out["wake_time"].statistic == "cramers_v"
    assert out["wake_time"].value == pytest.approx(1.0)
    assert out["bed_time"].value is None
    assert len(out) == N_SCALED + 2


@pytest.mark.filterwarnings("ignore::sklearn.exceptions.ConvergenceWarning")
def test_variant_comparison_rows():
    rng = np.random.default_rng(1)
    train, _, _ = random_instance(rng)
    test, _, _ = random_instance(rng)
    rows = variant_comparison(train, test, TrainConfig(max_iter=5), ["BLTR", "nope"])
    assert rows[0].variant == "BLTR" and not rows[0].errors
    assert set(rows[0].per_semester) == set(test.semesters)
    assert rows[1].errors and math.isnan(rows[1].mean)


def test_report_serialization():
    report = EvalReport(
        semesters={1: SemesterScore(1, {"a": 0.5, "b": math.nan})},
        variants=[VariantRow("BLTR", {1: 0.25})],
        correlations=[FeatureCorrelation("lib_entries", "spearman", None)],
        ttest={"1": {"t_statistic": -2.5, "reject": True}},
        extra={"seed": 7},
    )
    d = report.to_dict()
    assert d["semesters"][0]["per_major"] == {"a": 0.5, "b": None}
    assert d["variants"][0]["mean"] == 0.25 and d["seed"] == 7
    text = report.to_text()
    assert "BLTR" in text and "t_statistic=-2.5" in text and "reject=True" in text
    assert report.to_json() == EvalReport(**vars(report)).to_json()
