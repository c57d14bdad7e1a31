"""Naive reference evaluator used only by the test suite.

This is a deliberately unoptimized, pure-Python transcription of the
matching and 101-point interpolation rules. It works on plain COCO-style
dicts, shares no code with the package under test, and is kept slow and
obvious on purpose.
"""

from __future__ import annotations

import math

ALL_RANGE = ("all", "area", 0.0, math.inf)
SML_RANGES = [
    ("small", "area", 0.0, 32.0**2),
    ("medium", "area", 32.0**2, 96.0**2),
    ("large", "area", 96.0**2, math.inf),
]


def asap_ranges():
    edges = [8.0 * 2**i for i in range(8)]
    bounds = [0.0] + edges + [math.inf]
    return [
        (f"asap[{j}]", "scale", bounds[j], bounds[j + 1]) for j in range(9)
    ]


def rsap_ranges():
    edges = [1.0 / 256 * 2**i for i in range(8)]
    bounds = [0.0] + edges + [1.0]
    return [
        (f"rsap[{j}]", "relative", bounds[j], bounds[j + 1]) for j in range(9)
    ]


def box_iou(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def crowd_iou(det, crowd):
    dx, dy, dw, dh = det
    cx, cy, cw, ch = crowd
    iw = min(dx + dw, cx + cw) - max(dx, cx)
    ih = min(dy + dh, cy + ch) - max(dy, cy)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih / (dw * dh)


def _gt_value(ann, kind, image):
    w, h = ann["bbox"][2], ann["bbox"][3]
    if kind == "area":
        return ann.get("area") if ann.get("area") is not None else w * h
    if kind == "scale":
        return math.sqrt(w * h)
    return min(1.0, math.sqrt(w * h / (image["width"] * image["height"])))


def _det_value(det, kind, image):
    w, h = det["bbox"][2], det["bbox"][3]
    if kind == "area":
        return w * h
    if kind == "scale":
        return math.sqrt(w * h)
    return min(1.0, math.sqrt(w * h / (image["width"] * image["height"])))


def cap_per_image(results, limit):
    """Keep the `limit` best-scoring detections per image, earlier index
    winning ties, original order preserved."""
    by_image = {}
    for idx, det in enumerate(results):
        by_image.setdefault(det["image_id"], []).append(idx)
    keep = set()
    for indices in by_image.values():
        ranked = sorted(indices, key=lambda i: (-results[i]["score"], i))
        keep.update(ranked[:limit])
    return [(i, results[i]) for i in sorted(keep)]


def _match_one_cell(dets, gts, image, t, kind, lo, hi):
    """Greedy matching for one image+category at one threshold and bin.

    dets: list of (global_index, det dict). Returns a list of
    (score, global_index, status) with status in {"tp", "fp", "ig"}, plus
    the number of non-ignored ground truths.
    """
    gt_ig = []
    for ann in gts:
        v = _gt_value(ann, kind, image)
        outside = not (lo < v <= hi)
        gt_ig.append(bool(ann.get("iscrowd")) or bool(ann.get("ignore")) or outside)

    order = sorted(range(len(dets)), key=lambda i: (-dets[i][1]["score"], dets[i][0]))
    taken = [False] * len(gts)
    out = []
    for i in order:
        gidx, det = dets[i]
        # pass 1: best non-ignored, unmatched gt with IoU >= t
        best, best_iou = -1, 0.0
        for g, ann in enumerate(gts):
            if gt_ig[g] or taken[g]:
                continue
            v = box_iou(det["bbox"], ann["bbox"])
            if v < t:
                continue
            if best == -1 or v > best_iou:
                best, best_iou = g, v
        if best >= 0:
            taken[best] = True
            out.append((det["score"], gidx, "tp"))
            continue
        # pass 2: ignored gts; crowds can absorb many detections
        best, best_iou = -1, 0.0
        for g, ann in enumerate(gts):
            if not gt_ig[g]:
                continue
            crowd = bool(ann.get("iscrowd"))
            if taken[g] and not crowd:
                continue
            v = (crowd_iou if crowd else box_iou)(det["bbox"], ann["bbox"])
            if v < t:
                continue
            if best == -1 or v > best_iou:
                best, best_iou = g, v
        if best >= 0:
            if not gts[best].get("iscrowd"):
                taken[best] = True
            out.append((det["score"], gidx, "ig"))
        elif not (lo < _det_value(det, kind, image) <= hi):
            out.append((det["score"], gidx, "ig"))
        else:
            out.append((det["score"], gidx, "fp"))
    n_gt = sum(1 for ig in gt_ig if not ig)
    return out, n_gt


def average_precision_101(pooled, n_gt, recall_thresholds):
    """Interpolated AP from pooled (score, index, status) records."""
    pooled = sorted(pooled, key=lambda rec: (-rec[0], rec[1]))
    recalls, precisions = [], []
    tp = fp = 0
    for _score, _idx, status in pooled:
        if status == "ig":
            continue
        if status == "tp":
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    # monotone envelope, right to left
    for k in range(len(precisions) - 2, -1, -1):
        if precisions[k] < precisions[k + 1]:
            precisions[k] = precisions[k + 1]
    total = 0.0
    for r in recall_thresholds:
        value = 0.0
        for k, rc in enumerate(recalls):
            if rc >= r:
                value = precisions[k]
                break
        total += value
    return total / len(recall_thresholds)


def naive_evaluate(
    dataset,
    results,
    iou_thresholds=None,
    recall_thresholds=None,
    max_dets=100,
    extra_ranges=None,
    include_octaves=True,
):
    """Evaluate plain COCO-style dicts; returns every aggregate.

    Undefined cells (no non-ignored ground truth) are excluded from means;
    an aggregate with no defined cell at all is None. `include_octaves`
    turns the 18 octave bins off when only the area metrics are needed.
    """
    if iou_thresholds is None:
        iou_thresholds = [i / 100 for i in range(50, 100, 5)]
    if recall_thresholds is None:
        recall_thresholds = [i / 100 for i in range(101)]
    ranges = [ALL_RANGE] + SML_RANGES
    if include_octaves:
        ranges = ranges + asap_ranges() + rsap_ranges()
    if extra_ranges:
        ranges = ranges + list(extra_ranges)

    images = {img["id"]: img for img in dataset["images"]}
    cat_ids = [c["id"] for c in dataset["categories"]]
    capped = cap_per_image(results, max_dets)

    # cell AP indexed [t][cat][range_label]
    ap = {
        t: {c: {} for c in cat_ids} for t in iou_thresholds
    }
    for label, kind, lo, hi in ranges:
        for cat in cat_ids:
            for t in iou_thresholds:
                pooled = []
                n_gt_total = 0
                for img in dataset["images"]:
                    gts = [
                        a
                        for a in dataset["annotations"]
                        if a["image_id"] == img["id"] and a["category_id"] == cat
                    ]
                    dets = [
                        (gidx, d)
                        for gidx, d in capped
                        if d["image_id"] == img["id"] and d["category_id"] == cat
                    ]
                    recs, n_gt = _match_one_cell(
                        dets, gts, img, t, kind, lo, hi
                    )
                    pooled.extend(recs)
                    n_gt_total += n_gt
                if n_gt_total == 0:
                    ap[t][cat][label] = None
                else:
                    ap[t][cat][label] = average_precision_101(
                        pooled, n_gt_total, recall_thresholds
                    )

    def mean_over(labels, thresholds, cats):
        values = [
            ap[t][c][label]
            for label in labels
            for t in thresholds
            for c in cats
            if ap[t][c][label] is not None
        ]
        if not values:
            return None
        return sum(values) / len(values)

    out = {
        "cap": mean_over(["all"], iou_thresholds, cat_ids),
        "ap50": mean_over(["all"], [0.5], cat_ids) if 0.5 in iou_thresholds else None,
        "ap75": mean_over(["all"], [0.75], cat_ids) if 0.75 in iou_thresholds else None,
        "ap_small": mean_over(["small"], iou_thresholds, cat_ids),
        "ap_medium": mean_over(["medium"], iou_thresholds, cat_ids),
        "ap_large": mean_over(["large"], iou_thresholds, cat_ids),
        "per_category_cap": {
            c: mean_over(["all"], iou_thresholds, [c]) for c in cat_ids
        },
        "cells": ap,
    }
    if include_octaves:
        out["asap"] = [
            mean_over([f"asap[{j}]"], iou_thresholds, cat_ids) for j in range(9)
        ]
        out["rsap"] = [
            mean_over([f"rsap[{j}]"], iou_thresholds, cat_ids) for j in range(9)
        ]
    return out
