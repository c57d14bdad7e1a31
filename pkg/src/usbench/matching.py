"""IoU computation and greedy matching of detections to ground truths.

Matching follows the reference detection-evaluation semantics:

* detections are processed in score-descending order (ties keep input order);
* each detection takes the unmatched, non-ignored ground truth with the
  highest IoU >= threshold (equal IoU keeps the lowest ground-truth index);
* failing that, it may match an ignored ground truth (crowd regions use
  intersection-over-detection-area and can absorb many detections) and is
  then ignored itself;
* an unmatched detection whose own scale/area falls outside the evaluated
  bin is ignored rather than counted as a false positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .model import (
    ABSOLUTE_AREA,
    ABSOLUTE_SCALE,
    RELATIVE_SCALE,
    BBox,
    Detection,
    GroundTruth,
    ImageInfo,
)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_crowd(det: BBox, crowd_gt: BBox) -> float:
    """Crowd-region overlap: intersection over the detection's own area."""
    iw = min(det.x + det.w, crowd_gt.x + crowd_gt.w) - max(det.x, crowd_gt.x)
    ih = min(det.y + det.h, crowd_gt.y + crowd_gt.h) - max(det.y, crowd_gt.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih / det.area


def iou_matrix(
    det_boxes: np.ndarray, gt_boxes: np.ndarray, gt_iscrowd: np.ndarray
) -> np.ndarray:
    """Pairwise (D, G) overlap matrix; crowd columns use crowd-style IoU.

    Boxes are (N, 4) arrays of [x, y, w, h].
    """
    if det_boxes.size == 0 or gt_boxes.size == 0:
        return np.zeros((len(det_boxes), len(gt_boxes)))
    dx0, dy0 = det_boxes[:, 0:1], det_boxes[:, 1:2]
    dx1, dy1 = dx0 + det_boxes[:, 2:3], dy0 + det_boxes[:, 3:4]
    gx0, gy0 = gt_boxes[:, 0], gt_boxes[:, 1]
    gx1, gy1 = gx0 + gt_boxes[:, 2], gy0 + gt_boxes[:, 3]
    iw = np.minimum(dx1, gx1) - np.maximum(dx0, gx0)
    ih = np.minimum(dy1, gy1) - np.maximum(dy0, gy0)
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    det_area = (det_boxes[:, 2] * det_boxes[:, 3])[:, None]
    gt_area = gt_boxes[:, 2] * gt_boxes[:, 3]
    union = np.where(gt_iscrowd[None, :], det_area, det_area + gt_area - inter)
    return inter / union


@njit(cache=True, nogil=True)
def greedy_match_kernel(ious, thresholds, gt_ignored, det_outside, iscrowd):
    """Greedy assignment for every (bin, threshold) cell of one image+category.

    ious: (D, G) overlaps, crowd-style in crowd columns. Detections must
    already be in score-descending order.
    thresholds: (T,) ascending IoU thresholds.
    gt_ignored: (A, G) per-bin ignore flags (crowd/ignore/out-of-bin).
    det_outside: (A, D) whether a detection's own value is outside the bin.
    iscrowd: (G,) crowd flags.

    Returns det_tp (A, T, D), det_ig (A, T, D), det_match (A, T, D) with the
    matched gt index or -1, and gt_match (A, T, G) with the first matching
    detection index or -1.
    """
    A, G = gt_ignored.shape
    T = thresholds.shape[0]
    D = ious.shape[0]
    det_tp = np.zeros((A, T, D), dtype=np.bool_)
    det_ig = np.zeros((A, T, D), dtype=np.bool_)
    det_match = np.full((A, T, D), -1, dtype=np.int32)
    gt_match = np.full((A, T, G), -1, dtype=np.int32)
    for a in range(A):
        for t in range(T):
            thr = thresholds[t]
            gt_taken = np.zeros(G, dtype=np.bool_)
            for d in range(D):
                best = -1
                best_iou = 0.0
                for g in range(G):
                    if gt_ignored[a, g] or gt_taken[g]:
                        continue
                    v = ious[d, g]
                    if v < thr:
                        continue
                    if best == -1 or v > best_iou:
                        best = g
                        best_iou = v
                if best >= 0:
                    gt_taken[best] = True
                    det_tp[a, t, d] = True
                    det_match[a, t, d] = best
                    gt_match[a, t, best] = d
                    continue
                best = -1
                best_iou = 0.0
                for g in range(G):
                    if not gt_ignored[a, g]:
                        continue
                    if gt_taken[g] and not iscrowd[g]:
                        continue
                    v = ious[d, g]
                    if v < thr:
                        continue
                    if best == -1 or v > best_iou:
                        best = g
                        best_iou = v
                if best >= 0:
                    if not iscrowd[best]:
                        gt_taken[best] = True
                    det_ig[a, t, d] = True
                    det_match[a, t, d] = best
                    if gt_match[a, t, best] == -1:
                        gt_match[a, t, best] = d
                elif det_outside[a, d]:
                    det_ig[a, t, d] = True
    return det_tp, det_ig, det_match, gt_match


def gt_bin_value(gt: GroundTruth, basis: str, img: Optional[ImageInfo]) -> float:
    """Value a ground truth is binned on for the given basis."""
    if basis == ABSOLUTE_AREA:
        return gt.effective_area
    w, h = gt.bbox.w, gt.bbox.h
    if basis == ABSOLUTE_SCALE:
        return float(np.sqrt(w * h))
    if basis == RELATIVE_SCALE:
        if img is None:
            raise ValueError("relative scale needs the image size")
        return min(1.0, float(np.sqrt(w * h / (img.width * img.height))))
    raise ValueError(f"unknown basis {basis!r}")


def det_bin_value(det: Detection, basis: str, img: Optional[ImageInfo]) -> float:
    """Value a detection is binned on; detections never carry mask areas."""
    w, h = det.bbox.w, det.bbox.h
    if basis == ABSOLUTE_AREA:
        return w * h
    if basis == ABSOLUTE_SCALE:
        return float(np.sqrt(w * h))
    if basis == RELATIVE_SCALE:
        if img is None:
            raise ValueError("relative scale needs the image size")
        return min(1.0, float(np.sqrt(w * h / (img.width * img.height))))
    raise ValueError(f"unknown basis {basis!r}")


def in_range(value: float, scale_range: tuple[float, float]) -> bool:
    """Half-open bin membership: lower < value <= upper."""
    lo, hi = scale_range
    return lo < value <= hi


@dataclass
class MatchResult:
    """Outcome of matching one image+category at one (threshold, bin) cell.

    All per-detection fields are indexed like the input detection list;
    per-ground-truth fields like the input ground-truth list. `det_matched`
    holds the matched ground truth's id (or None); `gt_matched` holds the
    matching detection's index in the input list (first match for crowds).
    """

    det_matched: list
    det_ignored: list
    gt_matched: list
    gt_ignored: list
    scores: list

    @property
    def n_true_positives(self) -> int:
        return sum(
            1
            for m, ig in zip(self.det_matched, self.det_ignored)
            if m is not None and not ig
        )

    @property
    def n_matched_pairs(self) -> int:
        return sum(1 for m in self.det_matched if m is not None)


def match_image_category(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_t: float,
    scale_range: tuple[float, float] = (0.0, np.inf),
    basis: str = ABSOLUTE_AREA,
    img: Optional[ImageInfo] = None,
) -> MatchResult:
    """Greedily match the detections of one image+category pair.

    `scale_range` is a half-open (lower, upper] bin on the value selected by
    `basis`; the relative-scale basis requires `img`.
    """
    if not 0 < iou_t <= 1:
        raise ValueError(f"iou threshold must be in (0, 1], got {iou_t}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    det_boxes = np.array(
        [[dets[i].bbox.x, dets[i].bbox.y, dets[i].bbox.w, dets[i].bbox.h]
         for i in order],
        dtype=np.float64,
    ).reshape(len(order), 4)
    gt_boxes = np.array(
        [[g.bbox.x, g.bbox.y, g.bbox.w, g.bbox.h] for g in gts],
        dtype=np.float64,
    ).reshape(len(gts), 4)
    iscrowd = np.array([g.iscrowd for g in gts], dtype=np.bool_)
    ious = iou_matrix(det_boxes, gt_boxes, iscrowd)

    gt_ignored = np.array(
        [
            g.iscrowd or g.ignore
            or not in_range(gt_bin_value(g, basis, img), scale_range)
            for g in gts
        ],
        dtype=np.bool_,
    ).reshape(1, len(gts))
    det_outside = np.array(
        [
            not in_range(det_bin_value(dets[i], basis, img), scale_range)
            for i in order
        ],
        dtype=np.bool_,
    ).reshape(1, len(order))

    det_tp, det_ig, det_match, gt_match = greedy_match_kernel(
        ious,
        np.array([iou_t], dtype=np.float64),
        gt_ignored,
        det_outside,
        iscrowd,
    )

    det_matched: list = [None] * len(dets)
    det_ignored: list = [False] * len(dets)
    for pos, input_idx in enumerate(order):
        m = det_match[0, 0, pos]
        det_matched[input_idx] = gts[m].id if m >= 0 else None
        det_ignored[input_idx] = bool(det_ig[0, 0, pos])
    gt_matched = [
        order[gt_match[0, 0, g]] if gt_match[0, 0, g] >= 0 else None
        for g in range(len(gts))
    ]
    return MatchResult(
        det_matched=det_matched,
        det_ignored=det_ignored,
        gt_matched=gt_matched,
        gt_ignored=[bool(v) for v in gt_ignored[0]],
        scores=[d.score for d in dets],
    )
