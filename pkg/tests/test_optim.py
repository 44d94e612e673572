import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import ConvergenceWarning

from campusrank.model import TrainConfig
from campusrank.model.dataset import ModelParams, RankingDataset
from campusrank.model.objective import grad_u, objective, smooth_objective
from campusrank.model.optim import TrainingDivergence, init_params, project_nonneg, prox_l1, train
from oracles import prox_by_grid, random_instance


def _small(seed=0, **kw):
    return random_instance(np.random.default_rng(seed), **kw)[0]


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 20))
def test_prox_matches_grid_minimizer(x, lam_t):
    assert abs(float(prox_l1(x, lam_t)) - prox_by_grid(x, lam_t)) < 1e-6


@given(st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_prox_closed_form(x, t):
    z = float(prox_l1(x, t))
    if abs(x) <= t:
        assert z == 0.0
    else:
        assert z == pytest.approx(x - np.sign(x) * t, rel=1e-12, abs=1e-9)


def test_prox_identity_at_zero_threshold():
    x = np.array([-2.0, 0.0, 3.5])
    np.testing.assert_array_equal(prox_l1(x, 0.0), x)


def test_prox_rejects_negative_threshold():
    with pytest.raises(ValueError):
        prox_l1(1.0, -0.1)


def test_projection_clamps_negatives_only():
    np.testing.assert_array_equal(project_nonneg([-1.0, 0.0, 2.0]), [0.0, 0.0, 2.0])


def test_init_params_shapes_and_ranges():
    data = _small(1)
    cfg = TrainConfig(k=4)
    rng = np.random.default_rng(0)
    p = init_params(data, cfg, "MTLTR-APP", rng)
    assert p.U.shape == (data.S, data.M, 4) and p.V.shape == (data.S, 4, data.n_features)
    assert p.U.min() >= 0 and p.U.max() <= 0.1
    flat = init_params(data, cfg, "BLTR", rng)
    assert flat.W.shape == (data.S, data.M, data.n_features)
    assert np.all(flat.W == flat.W[0])


@pytest.mark.parametrize("variant", ["MTLTR-APP", "BLTR", "BLTR+SS", "BLTR+MS", "BLTR+SEQ"])
def test_trace_is_non_increasing(variant):
    data = _small(2)
    cfg = TrainConfig(max_iter=40, tol=0.0, lambda_n=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = train(data, cfg, variant)
    trace = np.array(res.trace)
    assert len(trace) == 41
    assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))


def test_u_non_negative_after_every_step():
    data = _small(3)
    cfg = TrainConfig(max_iter=50, tol=0.0, lambda_1=0.05)
    seen = []

    def check(it, params):
        seen.append(params.U.min())

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        train(data, cfg, "MTLTR-APP", callback=check)
    assert len(seen) == 50 and min(seen) >= 0.0


def test_huge_l1_zeroes_mixing_matrix():
    data = _small(4)
    res = train(data, TrainConfig(lambda_1=1e3, max_iter=50), "MTLTR-APP")
    assert not np.any(res.params.U)


def test_converged_point_satisfies_prox_optimality():
    # at a fixed point u = P(u - eta g) for the projected soft threshold
    data = _small(5)
    cfg = TrainConfig(max_iter=3000, tol=1e-13, lambda_1=0.3, k=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = train(data, cfg, "MTLTR-APP")
    p = res.params
    for s in range(data.S):
        for m in range(data.M):
            g = grad_u(data, p, cfg, s, m)
            u = p.U[s, m]
            for c in range(len(u)):
                if u[c] > 1e-8:
                    assert abs(g[c] + cfg.lambda_1) < 1e-3
                else:
                    assert g[c] + cfg.lambda_1 >= -1e-3


def test_converges_with_loose_tolerance():
    data = _small(6)
    res = train(data, TrainConfig(tol=1e-3, max_iter=500), "BLTR+SS")
    assert res.converged and res.n_iter < 500


def test_warns_when_iteration_cap_hit():
    data = _small(7)
    with pytest.warns(ConvergenceWarning):
        res = train(data, TrainConfig(tol=0.0, max_iter=3), "MTLTR-APP")
    assert not res.converged and res.n_iter == 3


def test_divergence_raised_on_non_finite_start():
    data = _small(8)
    params = init_params(data, TrainConfig(), "BLTR+SS", np.random.default_rng(0))
    params.W[0, 0, 0] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(TrainingDivergence):
        train(data, TrainConfig(max_iter=5), "BLTR+SS", params=params)


def test_training_is_seeded():
    data = _small(9)
    cfg = TrainConfig(max_iter=20, tol=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        a = train(data, cfg, "MTLTR-APP")
        b = train(data, cfg, "MTLTR-APP")
    np.testing.assert_array_equal(a.params.U, b.params.U)
    assert a.trace == b.trace


def test_shared_variant_keeps_one_weight_matrix():
    data = _small(10)
    res = train(data, TrainConfig(max_iter=30), "BLTR")
    W = res.params.W
    assert np.all(W == W[0])


def test_flat_variant_with_identical_semesters_matches_shared():
    # replicate one semester's tasks; +SEQ with huge smoothing pins all W^s together
    rng = np.random.default_rng(11)
    X = rng.normal(size=(12, 3))
    y = rng.permutation(12) / 11
    data = RankingDataset.from_arrays(np.vstack([X, X]), np.concatenate([y, y]),
                                      [1] * 12 + [2] * 12, ["a"] * 24)
    cfg = TrainConfig(lambda_s=1e4, tol=1e-12, max_iter=2000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        seq = train(data, cfg, "BLTR+SEQ").params.W
        shared = train(data, cfg, "BLTR").params.W
    np.testing.assert_allclose(seq[0], seq[1], atol=1e-4)
    np.testing.assert_allclose(seq[0], shared[0], atol=1e-3)


def test_learns_planted_order():
    rng = np.random.default_rng(12)
    w = np.array([2.0, -1.0, 0.5])
    X = rng.normal(size=(40, 3))
    y = np.argsort(np.argsort(-(X @ w))) / 39
    data = RankingDataset.from_arrays(X, y, [1] * 40, ["a"] * 40)
    res = train(data, TrainConfig(lambda_e=0.01, max_iter=300), "BLTR+SS")
    w_hat = res.params.W[0, 0]
    cos = w_hat @ w / np.linalg.norm(w_hat) / np.linalg.norm(w)
    assert cos > 0.95


def test_minibatch_training_runs_and_stays_finite():
    data = _small(13, n_max=12)
    cfg = TrainConfig(batch_size=4, max_iter=20, tol=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = train(data, cfg, "MTLTR-APP")
    assert np.all(np.isfinite(res.trace))
    assert res.params.U.min() >= 0


def test_warm_start_does_not_mutate_input():
    data = _small(14)
    cfg = TrainConfig(max_iter=5, tol=0.0)
    start = init_params(data, cfg, "MTLTR-APP", np.random.default_rng(0))
    before = start.U.copy()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        train(data, cfg, "MTLTR-APP", params=start)
    np.testing.assert_array_equal(start.U, before)


def test_smooth_part_excludes_l1():
    data, params, _ = random_instance(np.random.default_rng(15))
    cfg = TrainConfig(lambda_1=0.7)
    diff = objective(data, params, cfg) - smooth_objective(data, params, cfg)
    assert diff == pytest.approx(0.7 * np.abs(params.U).sum(), rel=1e-12)


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        train(_small(16), TrainConfig(max_iter=1), "BLTR+XYZ")


def test_params_index_unknown_task():
    p = ModelParams([1], ["a"], "BLTR+SS", W=np.zeros((1, 1, 2)))
    with pytest.raises(KeyError):
        p.index(2, "a")
