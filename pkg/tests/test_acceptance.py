"""End-to-end acceptance checks.

Each test records one PASS/FAIL line, collected in the ``acceptance``
section of the pytest terminal summary.  The benchmark-scale checks are
marked ``slow``; deselect them with ``-m "not slow"``.
"""

import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import pearsonr
from sklearn.exceptions import ConvergenceWarning
from threadpoolctl import threadpool_limits

from campusrank.cli import BENCH_CONFIG, VARIANT_ORDER, main, run_bench
from campusrank.evaluation import cramers_v, spearman
from campusrank.events import ingest_events
from campusrank.features import (BED_BINS, DILIGENCE_FEATURES, FEATURE_NAMES,
                                 ORDERLINESS_FEATURES, WAKE_BINS, student_features)
from campusrank.model import TrainConfig
from campusrank.model.objective import (grad_u, grad_V, omega_ms, omega_seq, omega_sn, pair_loss,
                                        smooth_objective)
from campusrank.model.optim import prox_l1, train
from campusrank.similarity import (DEFAULT_LOCATIONS, combine_similarity, count_cooccurrences,
                                   null_model_threshold)
from campusrank.synth import EventSpec, SynthSpec, gen_colocation_log, gen_event_log, gen_planted
from oracles import (central_difference, cramers_v_oracle, max_relative_error, naive_omega_ms,
                     naive_omega_seq, naive_omega_sn, naive_pair_loss, naive_weights,
                     prox_by_grid, random_instance, spearman_oracle)

ABLATION_SPEC = Path(__file__).resolve().parent.parent / "benchmarks" / "ablation.json"
LAMBDA_GRID = (0.0, 0.1, 1.0)
BENCH_SEED = 7


def _fd(data, params, cfg, block, index):
    def fun(value):
        trial = params.copy()
        getattr(trial, block)[index] = value
        return smooth_objective(data, trial, cfg)
    return central_difference(fun, getattr(params, block)[index], h=1e-5)


def test_gradients_match_finite_differences(acceptance):
    with acceptance("gradient fidelity") as check:
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        combos = list(itertools.product(LAMBDA_GRID, repeat=4))
        instances = [random_instance(rng, M=3, S=3, p=5, k=2, n_max=8) for _ in range(25)]
        worst = 0.0
        # every grid point is visited and every instance sees several grid points
        for i, (ls, ln, l1, l2) in enumerate(combos):
            data, params, _ = instances[i % len(instances)]
            cfg = TrainConfig(lambda_s=ls, lambda_n=ln, lambda_1=l1, lambda_2=l2)
            for s in range(data.S):
                worst = max(worst, max_relative_error(grad_V(data, params, cfg, s),
                                                      _fd(data, params, cfg, "V", s)))
                for m in range(data.M):
                    worst = max(worst, max_relative_error(grad_u(data, params, cfg, s, m),
                                                          _fd(data, params, cfg, "U", (s, m))))
        elapsed = time.perf_counter() - start
        check.detail = f"max rel err {worst:.2e} over {len(combos)} grid points, {elapsed:.1f} s"
        assert worst < 1e-5, check.detail
        assert elapsed < 30, check.detail


def test_objective_terms_match_naive_loops(acceptance):
    with acceptance("objective-term oracles") as check:
        start = time.perf_counter()
        rng = np.random.default_rng(99)
        worst = 0.0
        for _ in range(100):
            data, params, sim = random_instance(rng)
            l1, l2 = rng.uniform(0, 2, size=2)
            cfg = TrainConfig(lambda_1=l1, lambda_2=l2)
            W = naive_weights(params)
            worst = max(worst,
                        abs(pair_loss(data, params) - naive_pair_loss(data, W)),
                        abs(omega_seq(params) - naive_omega_seq(W)),
                        abs(omega_ms(params, cfg) - naive_omega_ms(params.U, params.V, l1, l2)),
                        abs(omega_sn(data, params) - naive_omega_sn(data, W, sim)))
        elapsed = time.perf_counter() - start
        check.detail = f"max abs err {worst:.2e}, {elapsed:.1f} s"
        assert worst <= 1e-10, check.detail
        assert elapsed < 10, check.detail


@pytest.fixture(scope="module")
def bench_run(tmp_path_factory):
    """Two ``bench --seed 7`` runs through the CLI, at one and eight threads."""
    root = tmp_path_factory.mktemp("bench")
    runs = {}
    for threads in (1, 8):
        out = root / f"threads{threads}"
        start = time.perf_counter()
        code = main(["bench", "--seed", str(BENCH_SEED), "--threads", str(threads),
                     "--out", str(out)])
        runs[threads] = {"code": code, "seconds": time.perf_counter() - start, "dir": out}
    return runs


def test_prox_and_projection(acceptance):
    with acceptance("prox and projection") as check:
        rng = np.random.default_rng(3)
        xs = rng.uniform(-10, 10, size=10_000)
        ts = rng.uniform(0, 5, size=10_000)
        worst = max(abs(float(prox_l1(x, t)) - prox_by_grid(x, t)) for x, t in zip(xs, ts))

        data = gen_planted(SynthSpec(seed=BENCH_SEED))
        train_ds = data.train.dataset(data.semesters, data.majors)
        cfg = TrainConfig(**{**BENCH_CONFIG, "max_iter": 50, "tol": 0.0})
        minima, zeros = [], []

        def watch(it, params):
            minima.append(float(params.U.min()))
            zeros.append(int((params.U == 0).sum()))

        with pytest.warns(ConvergenceWarning):
            with threadpool_limits(1):
                train(train_ds, cfg, "MTLTR-APP", callback=watch)
        check.detail = (f"prox max err {worst:.1e}; min U entry {min(minima)} over "
                        f"{len(minima)} steps, up to {max(zeros)} exact zeros")
        assert worst <= 1e-6, check.detail
        assert len(minima) == 50 and min(minima) >= 0.0, check.detail


@pytest.mark.slow
def test_descent_on_default_benchmark(acceptance, bench_run):
    with acceptance("descent property") as check:
        report = json.loads((bench_run[1]["dir"] / "bench.json").read_text())
        worst = -math.inf
        for variant in VARIANT_ORDER:
            trace = np.array(report["training"][variant]["trace"])
            assert len(trace) > 1, variant
            rise = np.diff(trace) / np.maximum(np.abs(trace[:-1]), 1.0)
            worst = max(worst, float(rise.max()))
        check.detail = (f"largest relative step increase {worst:.1e} "
                        f"over {len(VARIANT_ORDER)} variants")
        assert worst <= 1e-12, check.detail


@pytest.mark.slow
def test_synthetic_recovery(acceptance, bench_run):
    with acceptance("synthetic recovery") as check:
        run = bench_run[1]
        assert run["code"] == 0
        report = json.loads((run["dir"] / "bench.json").read_text())
        means = {row["variant"]: row["mean"] for row in report["variants"]}
        ours, oracle = means["MTLTR-APP"], report["oracle"]["mean"]
        check.detail = (f"MTLTR-APP {ours:.3f}, oracle {oracle:.3f}, "
                        f"bench {run['seconds']:.0f} s")
        assert ours >= 0.85, check.detail
        assert abs(oracle - ours) <= 0.05, check.detail
        assert run["seconds"] < 300, check.detail


@pytest.mark.slow
def test_ablation_ordering(acceptance):
    with acceptance("ablation ordering") as check:
        spec = json.loads(ABLATION_SPEC.read_text())
        top, middle = [], []
        with threadpool_limits(1):
            for seed in range(1, 6):
                report = run_bench(seed, TrainConfig(**BENCH_CONFIG, seed=seed), spec=spec)
                means = {row.variant: row.mean for row in report.variants}
                best_single = max(means[v] for v in ("BLTR+SS", "BLTR+MS", "BLTR+SEQ"))
                top.append(means["MTLTR-APP"] - best_single)
                middle.append(best_single - means["BLTR"])
        check.detail = (f"median margins {np.median(top):+.4f} (full vs best single), "
                        f"{np.median(middle):+.4f} (best single vs BLTR)")
        assert np.median(top) >= 0, check.detail
        assert np.median(middle) >= 0, check.detail


def test_similarity_calibration(acceptance):
    with acceptance("similarity calibration") as check:
        bundle = gen_colocation_log(n_pairs=50, seed=11)
        log = bundle.log()
        results = [null_model_threshold(log, lt, 20, seed=5) for lt in DEFAULT_LOCATIONS]
        counts = [count_cooccurrences(log, lt) for lt in DEFAULT_LOCATIONS]
        graph = combine_similarity(counts, {r.location_type: r.threshold for r in results})
        predicted = {tuple(sorted((a, b))) for a, b, _ in graph.edges()}
        hits = len(predicted & bundle.planted)
        precision = hits / max(len(predicted), 1)
        recall = hits / len(bundle.planted)
        thresholds = ", ".join(f"{r.location_type.value}={r.threshold}" for r in results)
        check.detail = f"precision {precision:.3f}, recall {recall:.3f} ({thresholds})"
        assert precision >= 0.9 and recall >= 0.8, check.detail


def test_metric_correctness(acceptance):
    with acceptance("metric correctness") as check:
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(200):
            a, b = rng.permutation(100), rng.permutation(100)
            worst = max(worst, abs(spearman(a, b) - spearman_oracle(a, b)))
        perfect = []
        for n in (2, 10, 101):
            x = rng.integers(0, 2, size=n)
            x[:2] = (0, 1)
            perfect.append(cramers_v(x, np.where(x == 1, "yes", "no")))
            perfect.append(cramers_v_oracle(x, 1 - x))
        small = {}
        for shape in (2, 5):
            values = []
            for seed in range(100):
                r = np.random.default_rng(seed)
                values.append(cramers_v(r.integers(0, shape, 2000), r.integers(0, shape, 2000)))
            small[shape] = sum(v < 0.08 for v in values)
        check.detail = (f"Spearman max err {worst:.1e}; perfect V {min(perfect):.15f}; "
                        f"independent V < 0.08 in {small[2]}/100 (2x2), {small[5]}/100 (5x5)")
        assert worst <= 1e-12, check.detail
        assert all(v == pytest.approx(1.0, abs=1e-12) for v in perfect), check.detail
        assert min(small.values()) >= 95, check.detail


def test_pipeline_round_trip(acceptance, tmp_path):
    with acceptance("pipeline round-trip") as check:
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({"major_sizes": [50, 50, 50]}))
        out = tmp_path / "events"
        assert main(["synth", "--kind", "events", "--spec", str(spec_path), "--seed", "5",
                     "--out", str(out)]) == 0
        log, registry, calendar, report = ingest_events(out / "events.csv", out / "roster.csv",
                                                        out / "calendar.csv")
        assert report.rejected == 0
        expected = gen_event_log(EventSpec(major_sizes=(50, 50, 50), seed=5)).expected_features(1)
        ids = registry.students()
        raw = np.array([student_features(log.events_for(s, 1), calendar[1]) for s in ids])

        families = {}
        for family, names in (("diligence", DILIGENCE_FEATURES),
                              ("orderliness", ORDERLINESS_FEATURES)):
            families[family] = min(
                pearsonr(raw[:, FEATURE_NAMES.index(name)],
                         [expected[s][name] for s in ids])[0] for name in names)
        wake_col = FEATURE_NAMES.index(f"wake_{WAKE_BINS[0]}")
        bed_col = FEATURE_NAMES.index(f"bed_{BED_BINS[0]}")
        wake = np.array(WAKE_BINS)[raw[:, wake_col:wake_col + len(WAKE_BINS)].argmax(axis=1)]
        bed = np.array(BED_BINS)[raw[:, bed_col:bed_col + len(BED_BINS)].argmax(axis=1)]
        wake_ok = np.mean(wake == [expected[s]["wake_mode"] for s in ids])
        bed_ok = np.mean(bed == [expected[s]["bed_mode"] for s in ids])
        check.detail = (", ".join(f"{k} min r {v:.3f}" for k, v in families.items())
                        + f"; wake modes {wake_ok:.1%}, bed modes {bed_ok:.1%}")
        assert min(families.values()) > 0.9, check.detail
        assert min(wake_ok, bed_ok) >= 0.95, check.detail


@pytest.mark.slow
def test_bench_is_deterministic(acceptance, bench_run):
    with acceptance("determinism") as check:
        one, eight = bench_run[1]["dir"], bench_run[8]["dir"]
        same = {name: (one / name).read_bytes() == (eight / name).read_bytes()
                for name in ("bench.json", "bench.txt")}
        check.detail = ", ".join(f"{k} {'identical' if v else 'differs'}"
                                 for k, v in same.items())
        assert all(r["code"] == 0 for r in bench_run.values())
        assert all(same.values()), check.detail
