"""Command-line entry point.

Exit codes: 0 success, 2 parameter error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from fuzzyflow import balance as bal
from fuzzyflow import fcm, fis, harness, ingest, scenario
from fuzzyflow import reduce as red
from fuzzyflow.core import DataError, FuzzyflowError, InternalError, ParameterError, SchemaError, parse_class
from fuzzyflow.features import DEFAULT_WINDOW, FeatureTable, extract, read_feature_csv, write_feature_csv

EXIT_OK, EXIT_PARAM, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    # route usage errors through the same exit-code mapping as everything else
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ParameterError(message)


def _c_range(text: str) -> range:
    try:
        if ".." in text:
            lo, hi = (int(p) for p in text.split(".."))
        else:
            lo = hi = int(text)
    except ValueError:
        raise ParameterError(f"--c-range must look like 2..12, got {text!r}") from None
    if lo > hi:
        raise ParameterError("--c-range lower bound exceeds upper bound")
    return range(lo, hi + 1)


def _config(args) -> harness.PipelineConfig:
    overrides = {"seed": args.seed} if args.seed is not None else {}
    if args.config:
        return harness.load_config(args.config, overrides)
    return harness.PipelineConfig(**overrides)


def _out(args, given, default_name: str) -> Path:
    if given:
        return Path(given)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / default_name


def _class_arg(text: str):
    try:
        return parse_class(text)
    except SchemaError as exc:
        raise ParameterError(str(exc)) from None


def _pick(value, default):
    return default if value is None else value


# -- subcommands -----------------------------------------------------------

def cmd_generate(args, cfg: harness.PipelineConfig) -> int:
    if args.mix:
        try:
            spec = json.loads(Path(args.mix).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read mix file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParameterError(f"mix file is not valid JSON: {exc}") from None
        entries = spec["configs"] if isinstance(spec, dict) else spec
        configs = []
        for entry in entries:
            entry = dict(entry)
            if "class" not in entry:
                raise ParameterError("every mix entry needs a 'class'")
            cls = _class_arg(entry.pop("class"))
            entry.setdefault("seed", cfg.seed)
            for k in ("port_range", "open_ports", "spy_upload_bytes"):
                if k in entry:
                    entry[k] = tuple(entry[k])
            try:
                configs.append(scenario.ScenarioConfig(cls, **entry))
            except TypeError as exc:
                raise ParameterError(f"bad mix entry: {exc}") from None
        flows = scenario.generate_mixed(configs, interleave_seed=cfg.seed)
    elif args.cls:
        knobs = {k: getattr(cfg, k) for k in harness.SCENARIO_KNOBS}
        cls = _class_arg(args.cls)
        if cls is not scenario.TrafficClass.PORT_SCAN:
            knobs["wide_scan_share"] = 0.0
        config = scenario.ScenarioConfig(cls, device_count=_pick(args.devices, cfg.devices),
                                         flows_per_device=_pick(args.flows, cfg.flows_per_class),
                                         seed=cfg.seed, **knobs)
        flows = scenario.generate(config)
    else:
        knobs = {k: getattr(cfg, k) for k in harness.SCENARIO_KNOBS}
        configs = scenario.default_mix(_pick(args.flows, cfg.flows_per_class), seed=cfg.seed,
                                       devices=_pick(args.devices, cfg.devices), **knobs)
        flows = scenario.generate_mixed(configs, interleave_seed=cfg.seed)
    path = _out(args, args.output, "flows.jsonl")
    n = ingest.write_flow_log(flows.records, path)
    print(f"wrote {n} records to {path}")
    return EXIT_OK


def cmd_ingest(args, cfg) -> int:
    offsets = ingest.load_offsets(args.offsets) if args.offsets else None
    flows = ingest.parse_flow_log(args.input, strict=args.strict or cfg.strict_ingest, offsets=offsets)
    for issue in flows.errors[:20]:
        print(f"line {issue.line}: {issue.message}", file=sys.stderr)
    if len(flows.errors) > 20:
        print(f"... {len(flows.errors) - 20} more malformed lines", file=sys.stderr)
    path = _out(args, args.output, "flows_clean.jsonl")
    n = ingest.write_flow_log(ingest.sort_records(flows.records), path)
    print(f"wrote {n} records to {path} ({len(flows.errors)} skipped)")
    return EXIT_OK


def cmd_extract(args, cfg) -> int:
    flows = ingest.parse_flow_log(args.input, strict=True)
    table = FeatureTable.from_vectors(extract(flows.records, _pick(args.window, cfg.window)))
    path = _out(args, args.output, "features.csv")
    write_feature_csv(table, path)
    print(f"wrote {len(table)} feature rows to {path}")
    return EXIT_OK


def cmd_reduce(args, cfg) -> int:
    table = read_feature_csv(args.input)
    if args.apply:
        report = red.ReductionReport.from_dict(json.loads(Path(args.apply).read_text(encoding="utf-8")))
    else:
        report = red.fit_reduction(table, _pick(args.epsilon, cfg.variance_epsilon),
                                   _pick(args.pearson, cfg.pearson_threshold),
                                   _pick(args.min_support, cfg.min_support),
                                   use_deviation=None if cfg.deviation_pruning else False)
        rpath = _out(args, args.report, "reduction.json")
        rpath.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        print(f"kept {len(report.kept)} of {len(table.names)} features; report in {rpath}")
    path = _out(args, args.output, "reduced.csv")
    write_feature_csv(red.transform(table, report), path)
    print(f"wrote normalized features to {path}")
    return EXIT_OK


def cmd_balance(args, cfg) -> int:
    table = read_feature_csv(args.input)
    if not table.labeled:
        raise DataError("balancing needs a label on every row")
    config = bal.BalanceConfig.from_ratio(_pick(args.ratio, cfg.ratio), k_neighbors=_pick(args.k, cfg.k_neighbors),
                                          seed=cfg.seed, max_oversample=cfg.max_oversample)
    out = bal.rebalance(table, config)
    path = _out(args, args.output, "balanced.csv")
    write_feature_csv(out, path, include_synthetic=True)
    print(f"wrote {len(out)} rows ({int(out.synthetic.sum())} synthetic) to {path}")
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    table = read_feature_csv(args.input)
    if not table.labeled:
        raise DataError("training needs a label on every row")
    if args.reduction:
        report = red.ReductionReport.from_dict(json.loads(Path(args.reduction).read_text(encoding="utf-8")))
        if list(table.names) != list(report.kept):
            raise DataError("training columns do not match the reduction report's kept features")
    else:
        # already-normalized input without a report: identity scalers
        report = red.ReductionReport(kept=list(table.names), scalers={n: (0.0, 1.0) for n in table.names})
    fconf = fcm.FcmConfig(m=_pick(args.m, cfg.m), max_iters=cfg.max_iters, tol=cfg.tol,
                          restarts=cfg.restarts, seed=cfg.seed)
    crange = _c_range(args.c_range) if args.c_range else range(cfg.c_min, cfg.c_max + 1)
    c_star, rows = fcm.select_c(table.X, crange, fconf, max_iters=cfg.select_max_iters,
                                wcsd_rtol=cfg.wcsd_rtol, metric=cfg.wcsd_metric)
    model = next(r.model for r in rows if r.c == c_star)
    fcm.label_clusters(model, table.y)
    spread = _pick(args.spread, cfg.spread)
    rules = fis.rules_from_clusters(model, table.X, spread, report.kept)
    path = _out(args, args.model, "model.json")
    harness.Predictor(report, rules, model, spread).save(path)
    for r in rows:
        mark = "*" if r.c == c_star else " "
        print(f"{mark} c={r.c:<3d} wcsd={r.wcsd:.4f} fpc={r.fpc:.4f} silhouette={r.mean_silhouette:.4f}")
    print(f"chose c={c_star}; model written to {path}")
    return EXIT_OK


def _looks_like_flow_log(path) -> bool:
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    return line.lstrip().startswith("{")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return False


def cmd_predict(args, cfg) -> int:
    predictor = harness.Predictor.load(args.model)
    if _looks_like_flow_log(args.input):
        flows = ingest.parse_flow_log(args.input, strict=True)
        table = FeatureTable.from_vectors(extract(flows.records, _pick(args.window, cfg.window)))
    else:
        table = read_feature_csv(args.input)
    raw = table.X[:, predictor.columns(table.names)]
    if args.normalized:
        lo, hi = predictor.report.scaler_arrays()
        raw = lo + raw * (hi - lo)
    out = predictor.predict_batch(raw)
    lat = None if args.no_latency else harness.timed_predictions(predictor, raw)
    path = _out(args, args.output, "predictions.csv")
    harness.write_predictions(path, table, out, lat)
    print(f"wrote {len(table)} predictions to {path}")
    if lat is not None and len(lat):
        print(f"latency median {np.median(lat) / 1000:.4f} ms, p95 {np.percentile(lat, 95) / 1000:.4f} ms")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    actual, predicted, malicious = harness.read_predictions(args.predictions)
    ev = harness.evaluate(actual, predicted, malicious)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ev["multiclass"].to_csv(out_dir / "confusion_multiclass.csv")
    ev["attack"].to_csv(out_dir / "confusion_attack.csv")
    ev["binary"].to_csv(out_dir / "confusion_binary.csv")
    payload = {
        "binary": ev["binary_report"].to_dict(),
        "multiclass": ev["multiclass_report"].to_dict(),
        "attack_mean_f1": ev["attack_mean_f1"],
        "dominant_confusion": {"pair": list(ev["dominant_pair"]), "count": ev["dominant_count"]},
    }
    path = _out(args, args.output, "metrics.json")
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    b = ev["binary_report"]
    print(f"binary accuracy {b.binary_accuracy:.4f}  FPR {b.fpr:.4f}  attack mean F1 {ev['attack_mean_f1']:.4f}")
    return EXIT_OK


def cmd_run(args, cfg) -> int:
    res = harness.run_pipeline(cfg, args.out_dir)
    m = res.metrics
    if m:
        print(f"binary accuracy {m['binary']['binary_accuracy']:.4f}  FPR {m['binary']['fpr']:.4f}  "
              f"attack mean F1 {m['attack_mean_f1']:.4f}  c*={m['c_star']}")
    print(f"artifacts in {res.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fuzzyflow", description="Fuzzy-clustering IoT traffic classifier.")
    p.add_argument("--seed", type=int, default=None, help="global seed (overrides the config)")
    p.add_argument("--config", help="key-value config file")
    p.add_argument("--out-dir", default=".", help="directory for default output paths")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic labeled flow log")
    g.add_argument("--class", dest="cls", help="single class to generate")
    g.add_argument("--mix", help="JSON list of per-class scenario configs")
    g.add_argument("--devices", type=int)
    g.add_argument("--flows", type=int, help="flows per device (single class) or per class (mix)")
    g.add_argument("--output")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("ingest", help="validate and sort a flow log")
    i.add_argument("--input", required=True)
    i.add_argument("--output")
    i.add_argument("--offsets", help="JSON map of device IP to clock offset in seconds")
    i.add_argument("--strict", action="store_true")
    i.set_defaults(func=cmd_ingest)

    e = sub.add_parser("extract", help="compute the 39 features per connection")
    e.add_argument("--input", required=True)
    e.add_argument("--window", type=int, help=f"last-n window (default {DEFAULT_WINDOW})")
    e.add_argument("--output")
    e.set_defaults(func=cmd_extract)

    r = sub.add_parser("reduce", help="fit or apply feature reduction and normalization")
    r.add_argument("--input", required=True)
    r.add_argument("--output")
    r.add_argument("--report", help="where to write the fitted reduction report")
    r.add_argument("--apply", help="existing reduction report to apply instead of fitting")
    r.add_argument("--epsilon", type=float)
    r.add_argument("--pearson", type=float)
    r.add_argument("--min-support", type=float)
    r.set_defaults(func=cmd_reduce)

    b = sub.add_parser("balance", help="undersample benign and SMOTE the attack classes")
    b.add_argument("--input", required=True)
    b.add_argument("--output")
    b.add_argument("--ratio")
    b.add_argument("--k", type=int)
    b.set_defaults(func=cmd_balance)

    t = sub.add_parser("train", help="select c, cluster and build the rule base")
    t.add_argument("--input", required=True)
    t.add_argument("--reduction", help="reduction report to embed in the model")
    t.add_argument("--c-range")
    t.add_argument("--m", type=float)
    t.add_argument("--spread", type=float)
    t.add_argument("--model")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="classify feature rows with a trained model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True, help="raw feature CSV (from extract) or a JSON-lines flow log")
    pr.add_argument("--window", type=int, help="last-n window when the input is a flow log")
    pr.add_argument("--normalized", action="store_true", help="input CSV is already reduced and normalized")
    pr.add_argument("--output")
    pr.add_argument("--no-latency", action="store_true", help="skip per-row latency timing")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="metrics and confusion matrices from predictions")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--output")
    ev.set_defaults(func=cmd_evaluate)

    run = sub.add_parser("run", help="run the full pipeline from the config")
    run.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InternalError, FuzzyflowError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # unexpected: report as internal
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
