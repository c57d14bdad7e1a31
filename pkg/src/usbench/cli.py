"""Command-line interface.

Exit codes: 0 success, 1 data error (parse/integrity/geometry), 2 usage
error. `--workers` falls back to the USBENCH_WORKERS environment variable,
then to the available parallelism; results never depend on it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .convert import (
    convert_manga109,
    default_manga109_splits,
    extract_wod_f0_subset,
    load_split_file,
    parse_wod_records,
)
from .errors import BenchmarkError
from .ingest import parse_dataset, parse_detections, serialize_dataset
from .metrics import (
    EXCLUDE,
    ZERO_FILL,
    EvalParams,
    aggregate_mcap,
    default_partitions,
    evaluate_dataset,
    kitti_style_ap,
)
from .model import absolute_octaves, relative_octaves
from .protocol import check_compatibility, classify_submission, parse_submission_meta
from .report import (
    build_rows,
    format_percent,
    leaderboard_csv,
    leaderboard_table,
    scale_curve_csv,
)

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2


def _default_workers() -> int:
    env = os.environ.get("USBENCH_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _partitions_from_names(names: str):
    table = {"asap": absolute_octaves, "rsap": relative_octaves}
    parts = []
    for name in filter(None, (n.strip() for n in names.split(","))):
        if name == "none":
            continue
        if name not in table:
            raise argparse.ArgumentTypeError(
                f"unknown partition {name!r} (choose from asap, rsap, none)"
            )
        parts.append(table[name]())
    return tuple(parts)


def cmd_evaluate(args) -> int:
    if len(args.ann) != len(args.det):
        print(
            "error: --ann and --det must be given in matching pairs",
            file=sys.stderr,
        )
        return EXIT_USAGE
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = EvalParams(
        max_dets=args.max_dets,
        partitions=args.partitions,
        undefined_policy=args.undefined,
    )
    summaries = []
    for ann_path, det_path in zip(args.ann, args.det):
        dataset = parse_dataset(Path(ann_path).read_bytes())
        detections = parse_detections(Path(det_path).read_bytes(), dataset)
        method = args.method or Path(det_path).stem
        result = evaluate_dataset(
            dataset, detections, params, workers=args.workers, method=method
        )
        if args.kitti:
            result.kap = kitti_style_ap(
                dataset, detections, max_dets=args.max_dets, workers=args.workers
            )
        doc = result.to_dict()
        dataset_name = dataset.dataset_id or Path(ann_path).stem
        out_path = out_dir / f"{_safe_name(dataset_name)}.json"
        out_path.write_text(json.dumps(doc, indent=1, sort_keys=True))
        summaries.append((dataset_name, result))
        print(f"{dataset_name}: CAP {format_percent(result.cap)}", end="")
        if result.kap is not None:
            print(f"  KAP {format_percent(result.kap)}", end="")
        print(f"  [{out_path}]")

    if len(summaries) > 1:
        caps = [r.cap for _n, r in summaries if r.cap is not None]
        mcap = aggregate_mcap(caps) if caps else None
        summary_doc = {
            "schema_version": 1,
            "kind": "mcap-summary",
            "method": args.method or "unknown",
            "datasets": [name for name, _r in summaries],
            "per_dataset_cap": {
                name: (None if r.cap is None else r.cap) for name, r in summaries
            },
            "mcap": mcap,
        }
        for key in ("ap50", "ap75", "ap_small", "ap_medium", "ap_large"):
            values = [getattr(r, key) for _n, r in summaries]
            defined = [v for v in values if v is not None]
            summary_doc[f"m{key}"] = (
                aggregate_mcap(defined) if defined else None
            )
        summary_path = out_dir / "mcap_summary.json"
        summary_path.write_text(json.dumps(summary_doc, indent=1, sort_keys=True))
        print(f"mCAP {format_percent(mcap)}  [{summary_path}]")
    return EXIT_OK


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def cmd_convert(args) -> int:
    out_path = Path(args.out)
    if args.source == "manga109":
        in_path = Path(args.input)
        files = (
            sorted(in_path.glob("*.xml")) if in_path.is_dir() else [in_path]
        )
        if not files:
            print(f"error: no XML files under {in_path}", file=sys.stderr)
            return EXIT_DATA_ERROR
        splits = (
            load_split_file(Path(args.split_file).read_bytes())
            if args.split_file
            else default_manga109_splits()
        )
        if args.split not in {s.name for s in splits}:
            print(f"error: unknown split {args.split!r}", file=sys.stderr)
            return EXIT_USAGE
        documents = [f.read_bytes() for f in files]
        dataset = convert_manga109(documents, splits, args.split)
    else:  # wod-intermediate
        with open(args.input, "r", encoding="utf-8") as handle:
            dataset = extract_wod_f0_subset(
                parse_wod_records(handle),
                dataset_id=f"wod-{args.split}" if args.split else "wod-f0",
            )
    out_path.write_text(serialize_dataset(dataset))
    print(
        f"{dataset.dataset_id}: {len(dataset.images)} images, "
        f"{len(dataset.ground_truths)} annotations  [{out_path}]"
    )
    return EXIT_OK


def cmd_classify(args) -> int:
    meta = parse_submission_meta(Path(args.meta).read_bytes())
    label = classify_submission(meta)
    obligations = check_compatibility(meta)
    if args.json:
        print(
            json.dumps(
                {
                    "label": label.text,
                    "training": label.training_text,
                    "training_base": label.training_base,
                    "evaluation": label.evaluation,
                    "obligations": [
                        {"kind": o.kind, "code": o.code, "message": o.message}
                        for o in obligations
                    ],
                },
                indent=1,
                sort_keys=True,
            )
        )
        return EXIT_OK
    print(label.text)
    if obligations:
        print(f"{len(obligations)} open obligation(s):")
        for o in obligations:
            print(f"  [{o.kind}] {o.message}")
    else:
        print("all compatibility obligations met")
    return EXIT_OK


def cmd_report(args) -> int:
    documents, names = [], []
    for path in args.results:
        doc = json.loads(Path(path).read_text())
        if isinstance(doc, dict) and doc.get("kind") == "mcap-summary":
            continue  # summaries are derived; rows come from per-dataset docs
        documents.append(doc)
        names.append(path)
    rows = build_rows(documents, names)
    if args.format == "csv":
        sys.stdout.write(leaderboard_csv(rows))
    else:
        print(leaderboard_table(rows))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "leaderboard.csv").write_text(leaderboard_csv(rows))
        (out_dir / "asap.csv").write_text(scale_curve_csv(rows, "asap"))
        (out_dir / "rsap.csv").write_text(scale_curve_csv(rows, "rsap"))
    else:
        for which in ("asap", "rsap"):
            print(f"\n# {which} curve")
            sys.stdout.write(scale_curve_csv(rows, which))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usbench",
        description="Universal-scale object detection benchmark toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="evaluate detections on datasets")
    p_eval.add_argument("--ann", action="append", required=True,
                        help="annotation document (repeat per dataset)")
    p_eval.add_argument("--det", action="append", required=True,
                        help="result document paired with --ann")
    p_eval.add_argument("--max-dets", type=int, default=100)
    p_eval.add_argument("--partitions", type=_partitions_from_names,
                        default=default_partitions(),
                        help="comma list of scale partitions: asap,rsap or none")
    p_eval.add_argument("--kitti", action="store_true",
                        help="also compute the per-category-threshold AP")
    p_eval.add_argument("--undefined", choices=[EXCLUDE, ZERO_FILL],
                        default=EXCLUDE, help="undefined-cell policy")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--method", default=None,
                        help="method name stored in result documents")
    p_eval.add_argument("--workers", type=int, default=_default_workers())
    p_eval.set_defaults(func=cmd_evaluate)

    p_conv = sub.add_parser("convert", help="convert annotations to the common format")
    p_conv.add_argument("--from", dest="source", required=True,
                        choices=["manga109", "wod-intermediate"])
    p_conv.add_argument("--in", dest="input", required=True)
    p_conv.add_argument("--split", default=None,
                        help="split name (manga109: 68train/4val/15test)")
    p_conv.add_argument("--split-file", default=None,
                        help="JSON file with custom split definitions")
    p_conv.add_argument("--out", required=True)
    p_conv.set_defaults(func=cmd_convert)

    p_cls = sub.add_parser("classify", help="classify a submission's protocol")
    p_cls.add_argument("--meta", required=True, help="submission metadata JSON")
    p_cls.add_argument("--json", action="store_true", help="machine-readable output")
    p_cls.set_defaults(func=cmd_classify)

    p_rep = sub.add_parser("report", help="leaderboard from result documents")
    p_rep.add_argument("--results", nargs="+", required=True)
    p_rep.add_argument("--format", choices=["table", "csv"], default="table")
    p_rep.add_argument("--out", default=None,
                       help="directory for leaderboard.csv/asap.csv/rsap.csv")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "convert" and args.source == "manga109" and not args.split:
        parser.error("--split is required for manga109")
    try:
        return args.func(args)
    except (BenchmarkError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
