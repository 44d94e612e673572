"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .evaluation import (EvalReport, VariantRow, feature_correlations, semester_report,
                         write_scatter_csv, write_tie_strength_csv)
from .events import IngestError, LocationType, ingest_events, read_ranks, write_events_csv
from .features import assemble_features, read_feature_csv, write_feature_csv
from .model.dataset import VARIANTS, RankingDataset, TrainConfig, load_checkpoint, save_checkpoint
from .model.inference import predict, read_predictions_csv, write_predictions_csv
from .model.optim import TrainingDivergence, train
from .similarity import (DEFAULT_LOCATIONS, SimilarityGraph, combine_similarity,
                         count_cooccurrences, null_model_threshold, similarity_ttest,
                         tie_strength_curve, write_thresholds_json)
from .synth import EventSpec, SynthSpec, gen_event_log, gen_planted

logger = logging.getLogger("campusrank")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

VARIANT_ORDER = ("MTLTR-APP", "BLTR+SS", "BLTR+MS", "BLTR+SEQ", "BLTR")

# The summed pair loss of a benchmark task is in the thousands, so a
# smoothness weight of 1 is negligible next to it; the benchmark scales it up
# for every variant alike.
BENCH_CONFIG = {"lambda_s": 100.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers -----------------------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_output(path: Path, force: bool, inputs=()) -> Path:
    path = Path(path)
    resolved = path.resolve()
    for p in inputs:
        if p is not None and Path(p).resolve() == resolved:
            raise UsageError(f"output {path} would overwrite an input")
    if path.exists() and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")
    return path


def _out_dir(path, force: bool, names, inputs=()) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} is not a directory")
    for name in names:
        _check_output(out / name, force, inputs)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_run_json(path, args, inputs=(), outputs=(), extra=None) -> None:
    """Record resolved arguments and input digests next to the outputs."""
    resolved = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    payload = {
        "command": args.command,
        "version": __version__,
        "arguments": _jsonable(resolved),
        "inputs": {str(p): sha256(p) for p in inputs if p is not None},
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        payload.update(_jsonable(extra))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _run_json_for(path: Path) -> Path:
    return path.with_name(path.stem + ".run.json")


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise IngestError(f"{path}: expected a JSON object")
    return data


_CONFIG_FIELDS = [f for f in dataclasses.fields(TrainConfig)]


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig keys")
    for f in _CONFIG_FIELDS:
        if f.name == "seed":
            continue
        kind = int if f.type in ("int", "int | None") else float
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", type=kind,
                       default=None, metavar=f.name.upper())


def _resolve_config(args, base=None) -> TrainConfig:
    values = dict(base or {})
    if getattr(args, "config", None) is not None:
        values.update(_load_json(args.config))
    for f in _CONFIG_FIELDS:
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            values[f.name] = v
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _similarity_for(path, matrices):
    if path is None:
        return None
    majors = {sid: fm.major_id for fm in matrices for sid in fm.student_ids}
    return SimilarityGraph.read_csv(path, majors)


# -- subcommands -------------------------------------------------------------------------


def cmd_synth(args):
    if args.kind == "benchmark":
        names = ["features_train.csv", "features_test.csv", "similarity.csv", "ranks.csv",
                 "roster.csv", "truth.json", "run.json"]
        out = _out_dir(args.out, args.force, names)
        values = _load_json(args.spec) if args.spec else {}
        values["seed"] = args.seed
        data = gen_planted(SynthSpec.from_dict(values))
        write_feature_csv(data.train.matrices, out / "features_train.csv")
        write_feature_csv(data.test.matrices, out / "features_test.csv")
        edges = data.train.edges + data.test.edges
        ids = data.train.student_ids + data.test.student_ids
        SimilarityGraph.from_edges(edges, ids).to_csv(out / "similarity.csv")
        ranks = {**data.train.ranks, **data.test.ranks}
        majors = {**data.train.majors, **data.test.majors}
        grades = {s: g.grade_id for g in (data.train, data.test) for s in g.student_ids}
        data.write_truth(out / "truth.json")
    else:
        names = ["events.csv", "roster.csv", "calendar.csv", "ranks.csv", "intents.json",
                 "run.json"]
        out = _out_dir(args.out, args.force, names)
        values = _load_json(args.spec) if args.spec else {}
        values["seed"] = args.seed
        bundle = gen_event_log(EventSpec(**values))
        write_events_csv(bundle.events, out / "events.csv")
        with open(out / "calendar.csv", "w", encoding="utf-8") as fh:
            fh.write("semester_id,start_date,end_date,exam_start_date\n")
            for s in bundle.calendar:
                fh.write(f"{s.semester_id},{s.start_date},{s.end_date},{s.exam_start_date}\n")
        with open(out / "intents.json", "w", encoding="utf-8") as fh:
            json.dump({"intents": [it.to_dict() for it in bundle.intents],
                       "expected": {str(s): bundle.expected_features(s)
                                    for s in bundle.calendar.ids}}, fh, indent=1)
            fh.write("\n")
        ranks, majors = bundle.ranks, bundle.registry.majors
        grades = bundle.registry.grades
    with open(out / "roster.csv", "w", encoding="utf-8") as fh:
        fh.write("student_id,major_id,grade_id\n")
        for sid in sorted(majors):
            fh.write(f"{sid},{majors[sid]},{grades[sid]}\n")
    with open(out / "ranks.csv", "w", encoding="utf-8") as fh:
        fh.write("student_id,semester_id,normalized_rank\n")
        for (sid, sem), r in sorted(ranks.items()):
            fh.write(f"{sid},{sem},{r!r}\n")
    write_run_json(out / "run.json", args, [args.spec], [out / n for n in names[:-1]])
    print(f"wrote {out}")


def cmd_ingest(args):
    out = _check_output(args.out, args.force, [args.events, args.roster, args.calendar])
    log, registry, calendar, report = ingest_events(args.events, args.roster, args.calendar)
    payload = report.to_dict()
    payload["students"] = len(registry)
    payload["semesters"] = calendar.ids
    payload["indexed"] = len(log)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    write_run_json(_run_json_for(out), args, [args.events, args.roster, args.calendar], [out])
    print(f"accepted {report.accepted}, rejected {report.rejected}, "
          f"out of semester {report.out_of_semester}")


def cmd_featurize(args):
    inputs = [args.events, args.roster, args.calendar, args.ranks]
    out = _check_output(args.out, args.force, inputs)
    log, registry, calendar, _ = ingest_events(args.events, args.roster, args.calendar)
    ranks = read_ranks(args.ranks) if args.ranks else None
    semesters = args.semester or calendar.ids
    matrices = []
    for sem in semesters:
        matrices.extend(assemble_features(log, registry, calendar, sem, ranks, args.grade,
                                          args.bandwidth))
    write_feature_csv(matrices, out)
    write_run_json(_run_json_for(out), args, inputs, [out])
    print(f"wrote {sum(len(m.student_ids) for m in matrices)} rows to {out}")


def cmd_similarity(args):
    inputs = [args.events, args.roster, args.calendar]
    out = _out_dir(args.out, args.force, ["similarity.csv", "thresholds.json", "run.json"],
                   inputs)
    log, registry, calendar, _ = ingest_events(args.events, args.roster, args.calendar)
    locations = [LocationType(l) for l in args.locations]
    seeds = np.random.SeedSequence(args.seed).spawn(len(locations))
    results, counts = [], []
    for lt, child in zip(locations, seeds):
        res = null_model_threshold(log, lt, args.repetitions, child, args.window, args.semester,
                                   n_jobs=args.threads, scope=args.scope)
        results.append(res)
        counts.append(count_cooccurrences(log, lt, args.window, args.semester))
        logger.info("%s: threshold %s", lt.value, res.threshold)
    graph = combine_similarity(counts, {r.location_type: r.threshold for r in results},
                               registry.majors)
    graph.to_csv(out / "similarity.csv")
    write_thresholds_json(results, out / "thresholds.json")
    write_run_json(out / "run.json", args, inputs,
                   [out / "similarity.csv", out / "thresholds.json"])
    for r in results:
        print(f"{r.location_type.value}: threshold {r.threshold}")


def cmd_train(args):
    out = _check_output(args.out, args.force, [args.features, args.similarity, args.config])
    cfg = _resolve_config(args)
    matrices = read_feature_csv(args.features)
    data = RankingDataset.from_feature_matrices(matrices, _similarity_for(args.similarity,
                                                                          matrices))
    if data.n_pairs == 0:
        raise IngestError(f"{args.features}: no ranked student pairs to train on")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = train(data, cfg, args.variant)
    for w in caught:
        logger.warning("%s", w.message)
    save_checkpoint(out, result.params, cfg, result.trace)
    write_run_json(_run_json_for(out), args, [args.features, args.similarity, args.config],
                   [out], {"train_config": cfg.to_dict(), "converged": result.converged,
                           "iterations": result.n_iter})
    print(f"{args.variant}: {result.n_iter} iterations, objective {result.trace[-1]:.6g}"
          + ("" if result.converged else " (not converged)"))


def cmd_predict(args):
    out = _check_output(args.out, args.force, [args.model, args.features, args.similarity])
    params, cfg, _ = load_checkpoint(args.model)
    matrices = read_feature_csv(args.features)
    data = RankingDataset.from_feature_matrices(matrices, _similarity_for(args.similarity,
                                                                          matrices),
                                                params.semesters, params.majors)
    preds = predict(data, params, cfg, params.variant)
    write_predictions_csv(preds, out)
    write_run_json(_run_json_for(out), args, [args.model, args.features, args.similarity], [out])
    print(f"wrote {len(preds)} predictions to {out}")


def _write_report(report: EvalReport, out: Path):
    with open(out.with_suffix(".json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(out.with_suffix(".txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())


def cmd_evaluate(args):
    out = Path(args.out)
    targets = [out.with_suffix(".json"), out.with_suffix(".txt")]
    for t in targets:
        _check_output(t, args.force, [args.predictions, args.ranks])
    preds = read_predictions_csv(args.predictions)
    truth = read_ranks(args.ranks)
    report = EvalReport(semesters=semester_report(preds, truth))
    _write_report(report, out)
    write_run_json(_run_json_for(out), args, [args.predictions, args.ranks], targets)
    print(report.to_text(), end="")


def cmd_report(args):
    names = ["report.json", "report.txt", "scatter.csv", "run.json"]
    if args.similarity:
        names.append("tie_strength.csv")
    out = _out_dir(args.out, args.force, names, [args.features, args.similarity])
    matrices = read_feature_csv(args.features)
    X = np.vstack([fm.X for fm in matrices])
    y = np.concatenate([fm.y for fm in matrices])
    names_ = matrices[0].feature_names
    report = EvalReport(correlations=feature_correlations(X, y, names_))
    write_scatter_csv(X, y, out / "scatter.csv", names_)
    outputs = [out / "report.json", out / "report.txt", out / "scatter.csv"]
    if args.similarity:
        graph = _similarity_for(args.similarity, matrices)
        tests, curves = {}, {}
        for sem in sorted({fm.semester_id for fm in matrices}):
            ranks = {sid: float(r) for fm in matrices if fm.semester_id == sem
                     for sid, r in zip(fm.student_ids, fm.y) if not math.isnan(r)}
            try:
                tests[str(sem)] = similarity_ttest(graph, ranks, seed=args.seed).to_dict()
                curve = tie_strength_curve(graph, ranks)
                curves[sem] = curve
                tests[str(sem)]["tie_strength_slope"] = float(curve.slope().slope)
            except ValueError as exc:
                tests[str(sem)] = {"error": str(exc)}
        report.ttest = tests
        if curves:
            write_tie_strength_csv(curves[min(curves)], out / "tie_strength.csv")
            outputs.append(out / "tie_strength.csv")
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    write_run_json(out / "run.json", args, [args.features, args.similarity], outputs)
    print(report.to_text(), end="")


def run_bench(seed: int, cfg: TrainConfig, variants=VARIANT_ORDER, spec=None,
              threads: int = 1) -> EvalReport:
    """Train every variant on the synthetic training grade and score the test grade."""
    values = dict(spec or {})
    values["seed"] = seed
    data = gen_planted(SynthSpec.from_dict(values))
    train_ds = data.train.dataset(data.semesters, data.majors)
    test_ds = data.test.dataset(data.semesters, data.majors)

    def one(variant):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                result = train(train_ds, cfg, variant)
            except TrainingDivergence as exc:
                return VariantRow(variant, {s: math.nan for s in data.semesters},
                                  {s: str(exc) for s in data.semesters}), None
        report = semester_report(predict(test_ds, result.params, cfg, variant), data.test.ranks)
        row = VariantRow(variant, {s: report[s].mean for s in data.semesters})
        return row, result

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, variants))
    else:
        results = [one(v) for v in variants]
    training = {row.variant: ({"iterations": res.n_iter, "converged": res.converged,
                               "final_objective": res.trace[-1],
                               "trace": [float(v) for v in res.trace]} if res else None)
                for row, res in results}
    return EvalReport(variants=[row for row, _ in results],
                      extra={"seed": seed, "spec": data.spec.to_dict(),
                             "config": cfg.to_dict(), "oracle": data.oracle,
                             "training": training})


def cmd_bench(args):
    cfg = _resolve_config(args, {**BENCH_CONFIG, "seed": args.seed})
    variants = args.variants or list(VARIANT_ORDER)
    for v in variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}")
    spec = _load_json(args.spec) if args.spec else None
    if args.out is not None:
        out = _out_dir(args.out, args.force, ["bench.json", "bench.txt", "run.json"],
                       [args.spec, args.config])
    report = run_bench(args.seed, cfg, variants, spec, args.threads)
    text = report.to_text() + (f"oracle mean {report.extra['oracle']['mean']:.3f}\n")
    if args.out is not None:
        with open(out / "bench.json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        with open(out / "bench.txt", "w", encoding="utf-8") as fh:
            fh.write(text)
        write_run_json(out / "run.json", args, [args.spec, args.config],
                       [out / "bench.json", out / "bench.txt"], {"train_config": cfg.to_dict()})
    print(text, end="")


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="campusrank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for independent jobs (results do not depend on it)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    def add_inputs(p):
        p.add_argument("--events", type=Path, required=True)
        p.add_argument("--roster", type=Path, required=True)
        p.add_argument("--calendar", type=Path, required=True)

    p = add("synth", cmd_synth, "generate a synthetic dataset")
    p.add_argument("--kind", choices=("benchmark", "events"), default="benchmark")
    p.add_argument("--spec", type=Path, help="JSON generator parameters")
    p.add_argument("--out", type=Path, required=True)

    p = add("ingest", cmd_ingest, "validate an event log and write an ingest report")
    add_inputs(p)
    p.add_argument("--out", type=Path, required=True)

    p = add("featurize", cmd_featurize, "compute standardized feature matrices")
    add_inputs(p)
    p.add_argument("--ranks", type=Path)
    p.add_argument("--grade")
    p.add_argument("--semester", type=int, action="append")
    p.add_argument("--bandwidth", type=float, default=1.0)
    p.add_argument("--out", type=Path, required=True)

    p = add("similarity", cmd_similarity, "calibrate thresholds and build the similarity graph")
    add_inputs(p)
    p.add_argument("--locations", nargs="+", default=[l.value for l in DEFAULT_LOCATIONS],
                   choices=[l.value for l in LocationType])
    p.add_argument("--repetitions", type=int, default=20)
    p.add_argument("--window", type=int, default=60)
    p.add_argument("--semester", type=int)
    p.add_argument("--scope", choices=("student", "location"), default="student")
    p.add_argument("--out", type=Path, required=True)

    p = add("train", cmd_train, "train a model variant")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--similarity", type=Path)
    p.add_argument("--variant", choices=sorted(VARIANTS), default="MTLTR-APP")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, required=True)

    p = add("predict", cmd_predict, "predict normalized ranks")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--similarity", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = add("evaluate", cmd_evaluate, "score predictions against true ranks")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--ranks", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report path stem (.json and .txt)")

    p = add("report", cmd_report, "feature correlations and similarity tests")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--similarity", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = add("bench", cmd_bench, "run the synthetic variant benchmark")
    p.add_argument("--variants", nargs="+")
    p.add_argument("--spec", type=Path, help="JSON benchmark spec overrides")
    _add_config_flags(p)
    p.add_argument("--out", type=Path)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be positive")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        # single-threaded BLAS keeps every reduction in a fixed order
        with threadpool_limits(limits=1):
            args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (IngestError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
