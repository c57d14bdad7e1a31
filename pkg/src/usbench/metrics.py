"""PR curves, interpolated AP and the CAP/ASAP/RSAP/KAP metric family.

The AP tensor is indexed (iou threshold, category, bin). Cells without any
non-ignored ground truth are undefined (NaN internally, null in documents)
and are excluded from aggregate means under the default policy; the
"zero-fill" policy counts them as 0 instead.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, IntegrityError
from .ingest import cap_detections_per_image
from .matching import (
    MatchResult,
    det_bin_value,
    greedy_match_kernel,
    gt_bin_value,
    iou_matrix,
)
from .model import (
    DatasetAnnotations,
    Detection,
    ScalePartition,
    absolute_octaves,
    relative_octaves,
)

EXCLUDE = "exclude"
ZERO_FILL = "zero-fill"

DEFAULT_IOU_THRESHOLDS = tuple(i / 100 for i in range(50, 100, 5))
DEFAULT_RECALL_THRESHOLDS = tuple(i / 100 for i in range(101))
KITTI_IOU_OVERRIDES = {"vehicle": 0.7, "pedestrian": 0.5, "cyclist": 0.5}


def default_partitions() -> tuple[ScalePartition, ...]:
    return (absolute_octaves(), relative_octaves())


@dataclass(frozen=True)
class EvalParams:
    """Threshold grids and evaluation options."""

    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    recall_thresholds: tuple[float, ...] = DEFAULT_RECALL_THRESHOLDS
    max_dets: int = 100
    partitions: tuple[ScalePartition, ...] = field(
        default_factory=default_partitions
    )
    undefined_policy: str = EXCLUDE
    category_iou_overrides: Optional[dict] = None

    def __post_init__(self):
        t = self.iou_thresholds
        if len(t) < 1 or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("iou thresholds must be non-empty and increasing")
        if any(not 0 < x <= 1 for x in t):
            raise ValueError("iou thresholds must lie in (0, 1]")
        r = self.recall_thresholds
        if len(r) < 2 or any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("recall thresholds must be increasing")
        if r[0] != 0.0 or r[-1] != 1.0:
            raise ValueError("recall thresholds must span [0, 1]")
        if self.max_dets < 1:
            raise ValueError("max_dets must be >= 1")
        if self.undefined_policy not in (EXCLUDE, ZERO_FILL):
            raise ValueError(
                f"unknown undefined policy {self.undefined_policy!r}"
            )


@dataclass(frozen=True)
class RangeSpec:
    """One evaluated bin: a half-open (lower, upper] interval on a basis."""

    label: str
    basis: str
    lower: float
    upper: float


def _range_specs(partitions: Sequence[ScalePartition]) -> list[RangeSpec]:
    specs = [
        RangeSpec("all", "absolute-area", 0.0, np.inf),
        RangeSpec("small", "absolute-area", 0.0, 32.0**2),
        RangeSpec("medium", "absolute-area", 32.0**2, 96.0**2),
        RangeSpec("large", "absolute-area", 96.0**2, np.inf),
    ]
    for part in partitions:
        for j, (lo, hi) in enumerate(part.bins):
            specs.append(RangeSpec(f"{part.name}[{j}]", part.basis, lo, hi))
    return specs


@dataclass
class EvalResult:
    """Full AP tensor plus every aggregate for one dataset."""

    dataset_id: str
    method: Optional[str]
    iou_thresholds: tuple[float, ...]
    category_ids: list
    category_names: dict
    ranges: list[RangeSpec]
    ap_tensor: np.ndarray  # (T, K, A), NaN = undefined
    n_gt: np.ndarray  # (K, A) non-ignored ground-truth counts
    undefined_policy: str
    cap: Optional[float]
    ap50: Optional[float]
    ap75: Optional[float]
    ap_small: Optional[float]
    ap_medium: Optional[float]
    ap_large: Optional[float]
    asap: list
    rsap: list
    per_category_cap: dict
    kap: Optional[float] = None
    n_images: int = 0
    n_annotations: int = 0
    n_detections: int = 0

    def to_dict(self) -> dict:
        """Result document: a nested map with explicit bin edges."""

        def opt(v):
            return None if v is None else float(v)

        tensor = [
            [
                [None if np.isnan(v) else float(v) for v in row]
                for row in plane
            ]
            for plane in self.ap_tensor
        ]
        scale_ap = {}
        for name, values in (("asap", self.asap), ("rsap", self.rsap)):
            specs = [r for r in self.ranges if r.label.startswith(f"{name}[")]
            if not specs or not values:
                continue
            bins = [
                {
                    "lower": spec.lower,
                    "upper": None if np.isinf(spec.upper) else spec.upper,
                    "ap": opt(value),
                }
                for spec, value in zip(specs, values)
            ]
            scale_ap[name] = {"basis": specs[0].basis, "bins": bins}
        return {
            "schema_version": 1,
            "dataset_id": self.dataset_id,
            "method": self.method,
            "params": {
                "iou_thresholds": list(self.iou_thresholds),
                "recall_thresholds": 101,
                "undefined_policy": self.undefined_policy,
            },
            "categories": [
                {"id": cid, "name": self.category_names.get(cid, str(cid))}
                for cid in self.category_ids
            ],
            "metrics": {
                "cap": opt(self.cap),
                "ap50": opt(self.ap50),
                "ap75": opt(self.ap75),
                "ap_small": opt(self.ap_small),
                "ap_medium": opt(self.ap_medium),
                "ap_large": opt(self.ap_large),
                "kap": opt(self.kap),
            },
            "per_category_cap": {
                str(cid): opt(v) for cid, v in self.per_category_cap.items()
            },
            "scale_ap": scale_ap,
            "ap_tensor": {
                "iou_thresholds": list(self.iou_thresholds),
                "category_ids": list(self.category_ids),
                "ranges": [
                    {
                        "label": r.label,
                        "basis": r.basis,
                        "lower": r.lower,
                        "upper": None if np.isinf(r.upper) else r.upper,
                    }
                    for r in self.ranges
                ],
                "values": tensor,
            },
            "counts": {
                "images": self.n_images,
                "annotations": self.n_annotations,
                "detections": self.n_detections,
            },
        }


def average_precision(
    precision: Sequence[float],
    recall: Sequence[float],
    recall_thresholds: Sequence[float] = DEFAULT_RECALL_THRESHOLDS,
) -> float:
    """Interpolated AP: monotone precision envelope sampled at fixed recalls.

    The envelope is the right-to-left running maximum of `precision`; each
    recall threshold samples the envelope at the first point with
    recall >= threshold, or 0 past the curve's end.
    """
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    if precision.shape != recall.shape:
        raise ValueError("precision and recall must be aligned")
    thresholds = np.asarray(recall_thresholds, dtype=np.float64)
    if precision.size == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, thresholds, side="left")
    samples = np.where(
        idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0
    )
    return float(np.mean(samples))


def pr_curve(
    matches: Sequence[MatchResult], n_gt: int
) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Pooled precision/recall arrays for one (threshold, category, bin) cell.

    Detections are pooled across the given per-image match results, sorted
    by score descending (ties keep pooling order) and accumulated skipping
    ignored detections. Returns None when the cell has no ground truth.
    """
    if n_gt < 0:
        raise ValueError("n_gt must be >= 0")
    if n_gt == 0:
        return None
    pooled = []
    seq = 0
    for match in matches:
        for det_idx in range(len(match.scores)):
            pooled.append(
                (
                    match.scores[det_idx],
                    seq,
                    match.det_matched[det_idx] is not None
                    and not match.det_ignored[det_idx],
                    match.det_ignored[det_idx],
                )
            )
            seq += 1
    pooled.sort(key=lambda rec: (-rec[0], rec[1]))
    tp = fp = 0
    precision, recall = [], []
    for _score, _seq, is_tp, is_ig in pooled:
        if is_ig:
            continue
        if is_tp:
            tp += 1
        else:
            fp += 1
        precision.append(tp / (tp + fp))
        recall.append(tp / n_gt)
    return np.asarray(precision), np.asarray(recall)


def _ap_from_flags(
    tp: np.ndarray, ig: np.ndarray, n_gt: int, thresholds: np.ndarray
) -> float:
    """AP from score-sorted tp/ignore flags. Caller guarantees n_gt > 0."""
    keep = ~ig
    tp_kept = tp[keep]
    if tp_kept.size == 0:
        return 0.0
    tp_cum = np.cumsum(tp_kept, dtype=np.float64)
    fp_cum = np.cumsum(~tp_kept, dtype=np.float64)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, thresholds, side="left")
    samples = np.where(
        idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0
    )
    return float(np.mean(samples))


def _evaluate_image(task) -> list:
    """Match every category of one image across all bins and thresholds.

    Returns per-category tuples
    (cat_index, scores, global_indices, tp[A,T,D], ig[A,T,D], n_gt[A]).
    """
    (img, cells, thresholds, ranges) = task
    out = []
    for cat_idx, (det_entries, gts) in cells.items():
        order = sorted(
            range(len(det_entries)),
            key=lambda i: (-det_entries[i][1].score, det_entries[i][0]),
        )
        det_entries = [det_entries[i] for i in order]
        det_boxes = np.array(
            [
                [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h]
                for _gidx, d in det_entries
            ],
            dtype=np.float64,
        ).reshape(len(det_entries), 4)
        gt_boxes = np.array(
            [[g.bbox.x, g.bbox.y, g.bbox.w, g.bbox.h] for g in gts],
            dtype=np.float64,
        ).reshape(len(gts), 4)
        iscrowd = np.array([g.iscrowd for g in gts], dtype=np.bool_)
        ious = iou_matrix(det_boxes, gt_boxes, iscrowd)

        A = len(ranges)
        gt_ignored = np.zeros((A, len(gts)), dtype=np.bool_)
        det_outside = np.zeros((A, len(det_entries)), dtype=np.bool_)
        for a, spec in enumerate(ranges):
            for g, gt in enumerate(gts):
                v = gt_bin_value(gt, spec.basis, img)
                gt_ignored[a, g] = (
                    gt.iscrowd or gt.ignore or not spec.lower < v <= spec.upper
                )
            for d, (_gidx, det) in enumerate(det_entries):
                v = det_bin_value(det, spec.basis, img)
                det_outside[a, d] = not spec.lower < v <= spec.upper

        det_tp, det_ig, _m, _gm = greedy_match_kernel(
            ious, thresholds, gt_ignored, det_outside, iscrowd
        )
        n_gt = (~gt_ignored).sum(axis=1)
        scores = np.array([d.score for _gidx, d in det_entries], dtype=np.float64)
        gidx = np.array([g for g, _d in det_entries], dtype=np.int64)
        out.append((cat_idx, scores, gidx, det_tp, det_ig, n_gt))
    return out


def evaluate_dataset(
    anns: DatasetAnnotations,
    dets: Sequence[Detection],
    params: Optional[EvalParams] = None,
    workers: Optional[int] = None,
    method: Optional[str] = None,
) -> EvalResult:
    """Evaluate a detection result set against a dataset.

    Detections are capped to `params.max_dets` per image (across categories)
    on entry. The per-cell work is spread over `workers` threads; the
    reduction is ordered, so the result is identical for any worker count.
    """
    params = params or EvalParams()
    anns.validate()
    for i, det in enumerate(dets):
        if not anns.has_image(det.image_id):
            raise IntegrityError(f"detection {i}: unknown image {det.image_id!r}")
        if not anns.has_category(det.category_id):
            raise IntegrityError(
                f"detection {i}: unknown category {det.category_id!r}"
            )
    dets = cap_detections_per_image(list(dets), params.max_dets)

    ranges = _range_specs(params.partitions)
    thresholds = np.asarray(params.iou_thresholds, dtype=np.float64)
    recalls = np.asarray(params.recall_thresholds, dtype=np.float64)
    cat_ids = [c.id for c in anns.categories]
    cat_index = {cid: k for k, cid in enumerate(cat_ids)}

    gts_by_cell: dict = {}
    for gt in anns.ground_truths:
        gts_by_cell.setdefault((gt.image_id, cat_index[gt.category_id]), []).append(gt)
    dets_by_cell: dict = {}
    for gidx, det in enumerate(dets):
        dets_by_cell.setdefault(
            (det.image_id, cat_index[det.category_id]), []
        ).append((gidx, det))

    tasks = []
    for img in anns.images:
        cells = {}
        for k in range(len(cat_ids)):
            d = dets_by_cell.get((img.id, k), [])
            g = gts_by_cell.get((img.id, k), [])
            if d or g:
                cells[k] = (d, g)
        if cells:
            tasks.append((img, cells, thresholds, ranges))

    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(tasks) <= 1:
        per_image = [_evaluate_image(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_image = list(pool.map(_evaluate_image, tasks))

    T, K, A = len(thresholds), len(cat_ids), len(ranges)
    ap = np.full((T, K, A), np.nan)
    n_gt_total = np.zeros((K, A), dtype=np.int64)

    by_cat: dict = {k: [] for k in range(K)}
    for image_results in per_image:
        for cat_idx, scores, gidx, tp, ig, n_gt in image_results:
            by_cat[cat_idx].append((scores, gidx, tp, ig, n_gt))

    for k in range(K):
        chunks = by_cat[k]
        if not chunks:
            continue
        scores = np.concatenate([c[0] for c in chunks])
        gidx = np.concatenate([c[1] for c in chunks])
        # primary key score descending, secondary key original input order
        order = np.lexsort((gidx, -scores))
        tp_all = np.concatenate([c[2] for c in chunks], axis=2)[:, :, order]
        ig_all = np.concatenate([c[3] for c in chunks], axis=2)[:, :, order]
        n_gt = np.sum([c[4] for c in chunks], axis=0)
        n_gt_total[k] = n_gt
        for a in range(A):
            if n_gt[a] == 0:
                continue
            for t in range(T):
                ap[t, k, a] = _ap_from_flags(
                    tp_all[a, t], ig_all[a, t], int(n_gt[a]), recalls
                )

    result = _finalize_result(
        anns, dets, params, ranges, ap, n_gt_total, cat_ids, method
    )
    if params.category_iou_overrides is not None:
        result.kap = kitti_style_ap(
            anns,
            dets,
            params.category_iou_overrides,
            max_dets=params.max_dets,
            workers=workers,
        )
    return result


def _aggregate(values: np.ndarray, policy: str) -> Optional[float]:
    """Mean of an AP slice honoring the undefined-cell policy."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    if policy == ZERO_FILL:
        return float(np.where(np.isnan(flat), 0.0, flat).mean()) if flat.size else None
    defined = flat[~np.isnan(flat)]
    if defined.size == 0:
        return None
    return float(defined.mean())


def fill_undefined(values, policy: str = EXCLUDE) -> Optional[float]:
    """Aggregate a list of AP values that may contain undefined entries.

    `exclude` drops undefined cells from the mean (None when nothing is
    defined); `zero-fill` counts them as 0.
    """
    arr = np.array(
        [np.nan if v is None else float(v) for v in values], dtype=np.float64
    )
    return _aggregate(arr, policy)


def _finalize_result(anns, dets, params, ranges, ap, n_gt, cat_ids, method):
    policy = params.undefined_policy
    label_idx = {spec.label: a for a, spec in enumerate(ranges)}
    t_list = list(params.iou_thresholds)

    def slice_at(label, t=None):
        a = label_idx[label]
        plane = ap[:, :, a] if t is None else ap[t_list.index(t), :, a]
        return plane

    def octave(name):
        out = []
        for j in range(9):
            label = f"{name}[{j}]"
            if label not in label_idx:
                return []
            out.append(_aggregate(ap[:, :, label_idx[label]], policy))
        return out

    per_category = {
        cid: _aggregate(ap[:, k, label_idx["all"]], policy)
        for k, cid in enumerate(cat_ids)
    }
    return EvalResult(
        dataset_id=anns.dataset_id,
        method=method,
        iou_thresholds=params.iou_thresholds,
        category_ids=cat_ids,
        category_names={c.id: c.name for c in anns.categories},
        ranges=ranges,
        ap_tensor=ap,
        n_gt=n_gt,
        undefined_policy=policy,
        cap=_aggregate(slice_at("all"), policy),
        ap50=_aggregate(slice_at("all", 0.5), policy) if 0.5 in t_list else None,
        ap75=_aggregate(slice_at("all", 0.75), policy) if 0.75 in t_list else None,
        ap_small=_aggregate(slice_at("small"), policy),
        ap_medium=_aggregate(slice_at("medium"), policy),
        ap_large=_aggregate(slice_at("large"), policy),
        asap=octave("asap"),
        rsap=octave("rsap"),
        per_category_cap=per_category,
        n_images=len(anns.images),
        n_annotations=len(anns.ground_truths),
        n_detections=len(dets),
    )


def aggregate_mcap(caps: Sequence[float]) -> float:
    """Arithmetic mean of per-dataset values (CAP, AP50, ... alike)."""
    if len(caps) == 0:
        raise ValueError("cannot aggregate an empty list")
    return float(sum(caps) / len(caps))


def kitti_style_ap(
    anns: DatasetAnnotations,
    dets: Sequence[Detection],
    overrides: Optional[dict] = None,
    max_dets: int = 100,
    workers: Optional[int] = None,
) -> float:
    """Mean over categories of AP at per-category IoU thresholds.

    `overrides` maps category names (or ids) to thresholds; the default is
    0.7 for vehicles and 0.5 for pedestrians/cyclists. Every dataset
    category must be covered.
    """
    overrides = KITTI_IOU_OVERRIDES if overrides is None else overrides
    per_cat_t = {}
    for cat in anns.categories:
        if cat.name in overrides:
            per_cat_t[cat.id] = float(overrides[cat.name])
        elif cat.id in overrides:
            per_cat_t[cat.id] = float(overrides[cat.id])
        else:
            raise ConfigurationError(
                f"category {cat.name!r} has no IoU threshold override"
            )
    thresholds = tuple(sorted(set(per_cat_t.values())))
    params = EvalParams(
        iou_thresholds=thresholds,
        max_dets=max_dets,
        partitions=(),
    )
    result = evaluate_dataset(anns, dets, params, workers=workers)
    all_idx = [r.label for r in result.ranges].index("all")
    values = []
    for k, cid in enumerate(result.category_ids):
        t_idx = thresholds.index(per_cat_t[cid])
        values.append(result.ap_tensor[t_idx, k, all_idx])
    return _aggregate(np.array(values), params.undefined_policy)
