"""Leaderboard tables and plot-ready scale-wise CSV from result documents."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import ParseError
from .metrics import aggregate_mcap, fill_undefined

LEADERBOARD_COLUMNS = (
    "method",
    "mcap",
    "ap50",
    "ap75",
    "ap_small",
    "ap_medium",
    "ap_large",
)


@dataclass
class ReportRow:
    """One leaderboard line: a method's cross-dataset aggregates."""

    method: str
    per_dataset_cap: dict
    mcap: Optional[float]
    ap50: Optional[float]
    ap75: Optional[float]
    ap_small: Optional[float]
    ap_medium: Optional[float]
    ap_large: Optional[float]
    asap: list = field(default_factory=list)
    rsap: list = field(default_factory=list)
    protocol_label: Optional[str] = None


def _check_document(doc: dict, where: str) -> None:
    if not isinstance(doc, dict) or doc.get("schema_version") != 1:
        raise ParseError(f"{where}: not a result document (schema_version 1)")
    for key in ("dataset_id", "metrics", "scale_ap"):
        if key not in doc:
            raise ParseError(f"{where}: missing field {key!r}")


def _cross_dataset(values: list, policy: str) -> Optional[float]:
    if not values:
        return None
    return fill_undefined(values, policy)


def build_rows(documents: Sequence[dict], names: Optional[Sequence[str]] = None) -> list[ReportRow]:
    """Group result documents by method and aggregate across datasets.

    Scale-wise bins undefined on every dataset of a method are zero-filled,
    matching the convention used when curves span datasets with disjoint
    scale coverage.
    """
    by_method: dict = {}
    for i, doc in enumerate(documents):
        where = names[i] if names else f"results[{i}]"
        _check_document(doc, where)
        method = doc.get("method") or "unknown"
        by_method.setdefault(method, []).append(doc)

    rows = []
    for method, docs in by_method.items():
        per_dataset_cap = {}
        for doc in docs:
            dataset = doc["dataset_id"] or "dataset"
            if dataset in per_dataset_cap:
                raise ParseError(
                    f"method {method!r} has two results for dataset "
                    f"{dataset!r}"
                )
            per_dataset_cap[dataset] = doc["metrics"].get("cap")
        defined = [v for v in per_dataset_cap.values() if v is not None]
        mcap = aggregate_mcap(defined) if defined else None

        def metric_mean(key, docs=docs):
            return _cross_dataset(
                [d["metrics"].get(key) for d in docs], "exclude"
            )

        def octave_means(name, docs=docs):
            per_bin = []
            n_bins = max(
                (len(d["scale_ap"].get(name, {}).get("bins", [])) for d in docs),
                default=0,
            )
            for j in range(n_bins):
                values = []
                for d in docs:
                    bins = d["scale_ap"].get(name, {}).get("bins", [])
                    values.append(bins[j]["ap"] if j < len(bins) else None)
                per_bin.append(fill_undefined(values, "zero-fill"))
            return per_bin

        rows.append(
            ReportRow(
                method=method,
                per_dataset_cap=per_dataset_cap,
                mcap=mcap,
                ap50=metric_mean("ap50"),
                ap75=metric_mean("ap75"),
                ap_small=metric_mean("ap_small"),
                ap_medium=metric_mean("ap_medium"),
                ap_large=metric_mean("ap_large"),
                asap=octave_means("asap"),
                rsap=octave_means("rsap"),
            )
        )
    rows.sort(key=lambda r: (-(r.mcap if r.mcap is not None else -1), r.method))
    return rows


def format_percent(value: Optional[float]) -> str:
    """Human rendering: percentage with one decimal; '-' when undefined."""
    return "-" if value is None else f"{100 * value:.1f}"


def _dataset_columns(rows: Sequence[ReportRow]) -> list[str]:
    seen: list[str] = []
    for row in rows:
        for dataset in row.per_dataset_cap:
            if dataset not in seen:
                seen.append(dataset)
    return seen


def leaderboard_table(rows: Sequence[ReportRow]) -> str:
    """Fixed-width text leaderboard sorted by mCAP descending."""
    datasets = _dataset_columns(rows)
    header = ["Method", "mCAP", "AP50", "AP75", "APs", "APm", "APl"] + datasets
    lines = [header]
    for row in rows:
        lines.append(
            [
                row.method,
                format_percent(row.mcap),
                format_percent(row.ap50),
                format_percent(row.ap75),
                format_percent(row.ap_small),
                format_percent(row.ap_medium),
                format_percent(row.ap_large),
            ]
            + [format_percent(row.per_dataset_cap.get(d)) for d in datasets]
        )
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    out = []
    for line in lines:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
    return "\n".join(out)


def leaderboard_csv(rows: Sequence[ReportRow]) -> str:
    """CSV leaderboard: comma separation, header row, dot decimals."""
    datasets = _dataset_columns(rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(LEADERBOARD_COLUMNS) + [f"cap_{d}" for d in datasets])
    for row in rows:
        writer.writerow(
            [
                row.method,
                _csv_value(row.mcap),
                _csv_value(row.ap50),
                _csv_value(row.ap75),
                _csv_value(row.ap_small),
                _csv_value(row.ap_medium),
                _csv_value(row.ap_large),
            ]
            + [_csv_value(row.per_dataset_cap.get(d)) for d in datasets]
        )
    return buf.getvalue()


def _csv_value(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def scale_curve_csv(rows: Sequence[ReportRow], which: str) -> str:
    """Per-bin curve data, one row per (bin, method): bin_upper, method, ap.

    `which` selects "asap" or "rsap". Bin uppers follow the octave
    partitions; the unbounded top bin is written as "inf".
    """
    if which == "asap":
        uppers = [8.0 * 2**i for i in range(8)] + [float("inf")]
    elif which == "rsap":
        uppers = [1.0 / 256 * 2**i for i in range(8)] + [1.0]
    else:
        raise ValueError(f"unknown curve {which!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin_upper", "method", "ap"])
    for row in rows:
        values = getattr(row, which)
        for upper, value in zip(uppers, values):
            writer.writerow(
                [
                    "inf" if upper == float("inf") else repr(upper),
                    row.method,
                    _csv_value(value),
                ]
            )
    return buf.getvalue()
