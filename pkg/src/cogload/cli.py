"""Command-line front end.

Subcommands mirror the pipeline stages: simulate, ingest, featurize, clean,
train, cv, report, classify, stats (kruskal / chi2 / tukey / ratios / trend),
and serve.  Outputs are CSV for data, JSON for reports, and a Table-9-style
text block for classification metrics.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import cleaning, evaluation, features, forest, ingest, service, stats, synth
from .labels import BAND_NAMES, LoadLabel, Task, label_from_name, task_from_name


def _write_json(obj, path: str | None):
    text = json.dumps(obj, indent=2, default=str)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_matrix(path: str, labeled_only: bool = True):
    rows = features.read_features_csv(path)
    return features.to_matrix(rows, labeled_only=labeled_only), rows


def _forest_config(args) -> forest.ForestConfig:
    mf = args.max_features
    if mf not in ("sqrt", "all"):
        mf = int(mf)
    return forest.ForestConfig(n_estimators=args.trees, max_features=mf,
                               min_samples_leaf=args.min_samples_leaf,
                               min_samples_split=args.min_samples_split,
                               bootstrap=not args.no_bootstrap,
                               random_state=args.seed, vote=args.vote)


def _add_forest_args(p, default_seed=24):
    p.add_argument("--seed", type=int, default=default_seed)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--max-features", default="sqrt",
                   help="'sqrt', 'all', or an integer")
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--min-samples-split", type=int, default=2)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--vote", choices=("soft", "hard"), default="soft")


def cmd_simulate(args) -> int:
    if args.dump_profiles:
        _write_json(synth.profiles_to_json(synth.default_profiles()), args.dump_profiles)
        print(f"wrote default profiles to {args.dump_profiles}")
        return 0
    if args.flat:
        profiles = synth.flat_profiles()
    elif args.profiles:
        with open(args.profiles) as fh:
            profiles = synth.profiles_from_json(json.load(fh))
    else:
        profiles = synth.default_profiles()
    cohort = synth.SyntheticCohort(n_participants=args.participants,
                                   rounds=args.rounds, seed=args.seed)
    records = list(synth.generate_cohort(cohort, profiles))
    if args.inject_outliers > 0:
        records, hits = synth.inject_outliers(records, args.inject_outliers,
                                              seed=args.seed)
        print(f"injected outliers at {len(hits)} ticks")
    ingest.write_csv(records, args.out)
    print(f"wrote {len(records)} ticks for {args.participants} participants to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    records = list(ingest.iter_device_file(args.infile, args.participant,
                                           args.round, task_from_name(args.task)))
    ingest.write_csv(records, args.out)
    print(f"decoded {len(records)} ticks to {args.out}")
    return 0


def cmd_featurize(args) -> int:
    records = ingest.read_csv(args.infile)
    records = features.truncate_head(records, args.truncate)
    rows = features.featurize_stream(records, args.rr_window)
    features.write_features_csv(rows, args.out)
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return 0


def cmd_clean(args) -> int:
    (X, y, groups), rows = _load_matrix(args.infile)
    report = cleaning.knn_filter(X, y, k=args.k, c=args.c, scope=args.scope,
                                 groups=groups if args.scope == "participant" else None)
    labeled = [r for r in rows if r.label is not None]
    kept = [labeled[i] for i in report.kept_indices]
    features.write_features_csv(kept, args.out)
    if args.report:
        _write_json(report.to_dict(), args.report)
    print(f"kept {len(report.kept_indices)} of {len(labeled)} rows "
          f"(removed {len(report.removed_indices)}) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    (X, y, groups), _ = _load_matrix(args.infile)
    model = forest.fit(X, y, _forest_config(args))
    forest.save(model, args.model)
    classes = [LoadLabel(int(c)).display for c in model.classes]
    print(f"trained {len(model.trees)} trees on {X.shape[0]} rows "
          f"(classes: {', '.join(classes)}) -> {args.model}")
    if model.degenerate:
        print("warning: single-class training data, model is degenerate")
    return 0


def cmd_cv(args) -> int:
    (X, y, groups), _ = _load_matrix(args.infile)
    result = evaluation.logo_cv(X, y, groups, _forest_config(args))
    for fold in result.folds:
        print(f"fold {fold.held_out_group}: accuracy {fold.accuracy:.4f}")
    print(f"mean {result.mean_accuracy:.4f} std {result.std_accuracy:.4f} "
          f"over {len(result.folds)} folds")
    if args.out:
        _write_json(result.to_dict(), args.out)
    return 0


def _read_label_column(path: str) -> list[int]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                out.append(int(label_from_name(line)))
    return out


def cmd_report(args) -> int:
    if args.truth:
        truth = _read_label_column(args.truth)
        pred = _read_label_column(args.pred)
    else:
        truth = []
        pred = []
        with open(args.pred, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            try:
                li = header.index("label")
                pi = header.index("predicted")
            except ValueError:
                raise ingest.SchemaMismatch("predictions CSV needs label and predicted columns")
            for row in rd:
                if row[li]:
                    truth.append(int(label_from_name(row[li])))
                    pred.append(int(label_from_name(row[pi])))
    report = evaluation.score(truth, pred)
    if args.format == "json":
        _write_json(report.to_dict(), args.out)
    else:
        text = report.format_text()
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
    return 0


def cmd_classify(args) -> int:
    model = forest.load(args.model)
    result = service.classify_file(model, args.infile, args.out,
                                   window_capacity=args.rr_window,
                                   truncate_seconds=args.truncate)
    print(f"classified {result.n_ticks} ticks -> {args.out}")
    if result.report:
        print(result.report.format_text())
    if result.chi_square:
        print(f"difficulty x prediction chi2 {result.chi_square.chi2:.1f} "
              f"df {result.chi_square.df} p {result.chi_square.p_value:.3g} "
              f"V {result.chi_square.cramers_v:.4f}")
    if args.report_out:
        _write_json(result.to_dict(), args.report_out)
    return 0


def _read_predictions(path: str):
    """Rows of the classify output CSV as dicts."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return list(rd)


def cmd_stats(args) -> int:
    if args.stat == "kruskal":
        rows = features.read_features_csv(args.infile)
        labeled = [r for r in rows if r.label is not None]
        present = sorted({r.label for r in labeled})
        out = {"groups": [lab.display for lab in present], "features": {}}
        for i, name in enumerate(features.FEATURE_NAMES):
            groups = [[r.vector[i] for r in labeled if r.label == lab] for lab in present]
            r = stats.kruskal_wallis(groups)
            out["features"][name] = r.to_dict()
        _write_json(out, args.out)
        return 0

    if args.stat == "tukey":
        groups: dict[str, list[float]] = {}
        with open(args.infile, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header[:2] != ["group", "value"]:
                raise ingest.SchemaMismatch("tukey input needs header group,value")
            for row in rd:
                groups.setdefault(row[0], []).append(float(row[1]))
        _write_json(stats.tukey_hsd(groups).to_dict(), args.out)
        return 0

    preds = _read_predictions(args.infile)
    tagged = [(p, task_from_name(p["task"])) for p in preds]
    by_diff: dict[str, list[dict]] = {}
    for p, task in tagged:
        d = {Task.EXAM_LOW: "Low", Task.EXAM_HIGH: "High"}.get(task)
        if d is not None:
            by_diff.setdefault(d, []).append(p)

    if args.stat == "chi2":
        labels = [int(label_from_name(p["predicted"])) for d in by_diff for p in by_diff[d]]
        diffs = [d for d in by_diff for _ in by_diff[d]]
        counts = {d: {lab: 0 for lab in LoadLabel} for d in by_diff}
        for d, l in zip(diffs, labels):
            counts[d][LoadLabel(l)] += 1
        cols = [lab for lab in LoadLabel if any(counts[d][lab] for d in by_diff)]
        table = [[counts[d][lab] for lab in cols] for d in by_diff]
        result = stats.chi_square_independence(table)
        _write_json({"rows": list(by_diff), "cols": [lab.display for lab in cols],
                     "table": table, **result.to_dict()}, args.out)
        return 0

    if args.stat == "ratios":
        labels = [int(label_from_name(p["predicted"])) for d in by_diff for p in by_diff[d]]
        diffs = [d for d in by_diff for _ in by_diff[d]]
        _write_json(stats.frequency_ratios(labels, diffs), args.out)
        return 0

    if args.stat == "trend":
        report = {}
        svg_series = {}
        for d, rows in by_diff.items():
            per_part: dict[str, list[int]] = {}
            for p in sorted(rows, key=lambda p: (p["participant"], int(p["tick"]))):
                per_part.setdefault(p["participant"], []).append(
                    int(label_from_name(p["predicted"])))
            tr = stats.load_trend(per_part)
            report[d] = tr.to_dict()
            svg_series[d] = tr.per_tick_mean
        _write_json(report, args.out)
        if args.svg:
            with open(args.svg, "w") as fh:
                fh.write(stats.trend_svg(svg_series) + "\n")
            print(f"wrote trend chart to {args.svg}")
        return 0

    raise AssertionError(args.stat)


def cmd_serve(args) -> int:
    import uvicorn

    model = forest.load(args.model) if args.model else None
    plan = service.load_plan(args.plan) if args.plan else service.SessionPlan.default()
    if args.source == "synthetic":
        source = synth.generate_cohort(synth.SyntheticCohort(n_participants=1,
                                                             rounds=plan.rounds,
                                                             seed=args.seed))
    else:
        source = ingest.read_csv(args.source)
    host, _, port = args.listen.rpartition(":")
    app = service.create_app(plan, source, model=model, log_path=args.log,
                             tick_interval=args.interval)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cogload",
                                 description="Real-time cognitive-load classification toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort session CSV")
    p.add_argument("--participants", type=int, default=30)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="synth.csv")
    p.add_argument("--profiles", help="class profiles JSON")
    p.add_argument("--flat", action="store_true",
                   help="identical profiles for all classes (leakage guard)")
    p.add_argument("--inject-outliers", type=float, default=0.0, metavar="P")
    p.add_argument("--dump-profiles", metavar="PATH",
                   help="write the default profiles JSON and exit")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("ingest", help="decode a binary device capture to session CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--participant", required=True)
    p.add_argument("--round", type=int, default=1)
    p.add_argument("--task", default="Unlabeled")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("featurize", help="session CSV -> feature CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truncate", type=int, default=features.DEFAULT_TRUNCATE)
    p.add_argument("--rr-window", type=int, default=features.DEFAULT_WINDOW)
    p.set_defaults(fn=cmd_featurize)

    p = sub.add_parser("clean", help="KNN distance outlier filter")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=cleaning.DEFAULT_K)
    p.add_argument("--c", type=float, default=cleaning.DEFAULT_C)
    p.add_argument("--scope", choices=cleaning.SCOPES, default="class")
    p.add_argument("--report", help="outlier report JSON path")
    p.set_defaults(fn=cmd_clean)

    p = sub.add_parser("train", help="fit the random forest and save the model file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True)
    _add_forest_args(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("cv", help="leave-one-group-out cross-validation")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", help="folds JSON path")
    _add_forest_args(p)
    p.set_defaults(fn=cmd_cv)

    p = sub.add_parser("report", help="classification metrics report")
    p.add_argument("--truth", help="label-per-line file (omit to read a predictions CSV)")
    p.add_argument("--pred", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("classify", help="classify a session CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truncate", type=int, default=0)
    p.add_argument("--rr-window", type=int, default=features.DEFAULT_WINDOW)
    p.add_argument("--report-out", help="full result JSON path")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("stats", help="statistical reports")
    p.add_argument("stat", choices=("kruskal", "chi2", "tukey", "ratios", "trend"))
    p.add_argument("--in", dest="infile", required=True,
                   help="features CSV (kruskal), predictions CSV (chi2/ratios/trend), "
                        "or group,value CSV (tukey)")
    p.add_argument("--out", help="report JSON path (stdout when omitted)")
    p.add_argument("--svg", help="trend only: SVG chart path")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("serve", help="run the live session web service")
    p.add_argument("--model")
    p.add_argument("--plan", help="session plan JSON")
    p.add_argument("--listen", default="127.0.0.1:8765")
    p.add_argument("--source", default="synthetic",
                   help="'synthetic' or a session CSV to replay")
    p.add_argument("--interval", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--log", help="session log CSV path")
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ingest.SchemaMismatch, ingest.BadValue, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
