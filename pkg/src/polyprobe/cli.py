"""polyprobe command line: build, stats, probe, evaluate, report.

Config file is JSON; command-line flags win over config values. Exit codes:
0 ok, 2 input error, 3 scorer error, 4 state mismatch, 5 internal.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import builder, corpus, metrics, prober, report
from .errors import InputError, PolyprobeError
from .scorer import scorer_from_spec

logger = logging.getLogger("polyprobe")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError(f"config {path} must be a JSON object")
    return cfg


def _pick(flag_value, config: dict, key: str, default=None):
    return flag_value if flag_value is not None else config.get(key, default)


def _build_config(config: dict) -> builder.BuildConfig:
    return builder.BuildConfig.from_dict(config.get("build", {}))


def cmd_build(args) -> int:
    config = _load_config(args.config)
    raw_root = _pick(args.input, config, "data_root")
    out_root = _pick(args.output, config, "corpus_root")
    if not raw_root or not out_root:
        raise InputError("build needs --input and --output (or data_root/corpus_root in config)")
    languages = args.lang or config.get("languages")
    reference = _pick(args.reference, config, "reference_language", "en")
    build_report = builder.build_all(raw_root, out_root, _build_config(config),
                                     languages=languages, reference_language=reference)
    for entry in build_report["selection"]:
        status = "retained" if entry["retained"] else "excluded"
        print(f"{entry['language']}: {status} "
              f"(relation coverage {entry['relation_coverage']:.3f}, "
              f"phrase coverage {entry['phrase_coverage']:.3f}, reason {entry['reason']})")
    print(f"build report: {os.path.join(out_root, 'build_report.json')}")
    return 0


def cmd_stats(args) -> int:
    config = _load_config(args.config)
    pack_root = _pick(args.pack, config, "corpus_root")
    if not pack_root:
        raise InputError("stats needs --pack (or corpus_root in config)")
    languages = args.lang or config.get("languages") or corpus.available_languages(pack_root)
    if not languages:
        raise InputError(f"no languages found under {pack_root}")
    stats_list = []
    for lang in sorted(languages):
        pack, _ = corpus.load_language_pack(pack_root, lang)
        stats_list.append(builder.compute_stats(pack))
    print(report.emit_stats_table(stats_list), end="")
    out_dir = _pick(args.output, config, "output_dir")
    if out_dir:
        for stats in stats_list:
            path = report.write_stats_csv(stats, out_dir)
            logger.info("wrote %s", path)
    return 0


def cmd_probe(args) -> int:
    config = _load_config(args.config)
    pack_root = _pick(args.pack, config, "corpus_root")
    scorer_spec = _pick(args.scorer, config, "scorer")
    if not pack_root or not args.lang or not scorer_spec:
        raise InputError("probe needs --pack, --lang and --scorer")
    cache_path = _pick(args.cache, config, "cache_path")
    if not cache_path:
        cache_dir = config.get("cache_dir", ".")
        cache_path = os.path.join(cache_dir, f"predictions_{args.lang}.jsonl")
    policy = _pick(args.punctuation, config, "punctuation", "strip")
    jobs = _pick(args.jobs, config, "jobs", 1)

    pack, _ = corpus.load_language_pack(pack_root, args.lang)
    scorer = scorer_from_spec(scorer_spec)
    pset = prober.run_probe(pack, scorer, policy, cache_path, jobs=jobs, resume=args.resume)
    print(f"{args.lang}: {len(pset.predictions)} predictions, {len(pset.skipped)} skipped -> {cache_path}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    pack_root = _pick(args.pack, config, "corpus_root")
    out_dir = _pick(args.output, config, "output_dir")
    if not pack_root or not args.lang or not args.cache or not out_dir:
        raise InputError("evaluate needs --pack, --lang, --cache and --output")
    pack, _ = corpus.load_language_pack(pack_root, args.lang)
    pset = prober.load_prediction_set(args.cache, pack=pack)
    result = metrics.evaluate(pset, pack)
    json_path, csv_path = metrics.write_report_files(result, out_dir)
    macro = {k: round(v, 4) for k, v in result.macro.items()}
    print(f"{result.language} [{result.model_tag}, {result.policy}]: {macro}")
    print(f"wrote {json_path} and {csv_path}")
    return 0


def cmd_report(args) -> int:
    config = _load_config(args.config)
    in_dir = _pick(args.input, config, "output_dir")
    out_dir = args.output or in_dir
    if not in_dir:
        raise InputError("report needs --input (directory of metrics_*.json)")
    paths = sorted(
        os.path.join(in_dir, name) for name in os.listdir(in_dir)
        if name.startswith("metrics_") and name.endswith(".json")
    )
    if not paths:
        raise InputError(f"no metrics_*.json reports under {in_dir}")
    loaded = [(metrics.load_metrics_json(p), p) for p in paths]

    os.makedirs(out_dir, exist_ok=True)
    table = report.emit_comparison(loaded)
    comparison_path = os.path.join(out_dir, "comparison.csv")
    report.write_comparison_csv(table, comparison_path)
    print(report.comparison_to_text(table), end="")

    policy = _pick(args.punctuation, config, "punctuation", "strip")
    chart_reports = [r for r, _ in loaded if r.policy == policy]
    if chart_reports:
        chart_path = os.path.join(out_dir, "consistency_by_language.svg")
        report.emit_language_chart(chart_reports, args.metric, chart_path)
        print(f"wrote {comparison_path} and {chart_path}")
    else:
        print(f"wrote {comparison_path} (no {policy!r} reports for the chart)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyprobe",
                                     description="multilingual cloze consistency probing harness")
    parser.add_argument("--seedless", action="store_true",
                        help="accepted for interface compatibility; runs are always deterministic")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="construct language packs from raw translation output")
    p.add_argument("--config")
    p.add_argument("--input", help="raw input root (translations/, entities/, mlama/, reviews/, tuples/)")
    p.add_argument("--output", help="corpus output root")
    p.add_argument("--lang", action="append", help="language filter (repeatable)")
    p.add_argument("--reference", help="reference language (default en)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="pack statistics table and CSVs")
    p.add_argument("--config")
    p.add_argument("--pack", help="corpus root")
    p.add_argument("--lang", action="append")
    p.add_argument("--output", help="directory for stats_<lang>.csv files")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("probe", help="run the scorer over every (relation, template, tuple) cell")
    p.add_argument("--config")
    p.add_argument("--pack", help="corpus root")
    p.add_argument("--lang", required=True)
    p.add_argument("--scorer", help="reference:PATH or remote:URL")
    p.add_argument("--cache", help="prediction cache file (JSONL)")
    p.add_argument("--punctuation", choices=prober.PUNCTUATION_POLICIES)
    p.add_argument("--jobs", type=int)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("evaluate", help="compute metrics from a prediction cache")
    p.add_argument("--config")
    p.add_argument("--pack", help="corpus root")
    p.add_argument("--lang", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--output", help="directory for metrics files")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="comparison table and per-language chart from metrics files")
    p.add_argument("--config")
    p.add_argument("--input", help="directory holding metrics_*.json")
    p.add_argument("--output", help="output directory (default: --input)")
    p.add_argument("--metric", default="consistency", choices=report.METRIC_NAMES)
    p.add_argument("--punctuation", choices=prober.PUNCTUATION_POLICIES,
                   help="policy variant to chart (default strip)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PolyprobeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
