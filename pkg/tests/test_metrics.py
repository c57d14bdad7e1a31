import copy
import random

import numpy as np
import pytest

from oracle import naive_evaluate
from instances import random_instance
from usbench.errors import ConfigurationError, IntegrityError
from usbench.ingest import parse_dataset, parse_detections
from usbench.matching import match_image_category
from usbench.metrics import (
    EvalParams,
    aggregate_mcap,
    average_precision,
    evaluate_dataset,
    fill_undefined,
    kitti_style_ap,
    pr_curve,
)
from usbench.model import BBox, Detection, GroundTruth


def make_match(scores_and_status):
    """Build a MatchResult-equivalent via the real matcher on crafted boxes."""
    gts, dets = [], []
    next_gt = 1
    for i, (score, status) in enumerate(scores_and_status):
        x = 100.0 * i
        if status == "tp":
            gts.append(GroundTruth(next_gt, 1, 1, BBox(x, 0, 10, 10)))
            dets.append(Detection(1, 1, BBox(x, 0, 10, 10), score))
            next_gt += 1
        else:  # fp
            dets.append(Detection(1, 1, BBox(x, 50, 10, 10), score))
    return match_image_category(dets, gts, 0.5)


class TestPrCurve:
    def test_single_true_positive(self):
        match = make_match([(0.9, "tp")])
        precision, recall = pr_curve([match], n_gt=1)
        assert precision.tolist() == [1.0]
        assert recall.tolist() == [1.0]

    def test_single_false_positive(self):
        match = make_match([(0.9, "fp")])
        precision, recall = pr_curve([match], n_gt=1)
        assert precision.tolist() == [0.0]
        assert recall.tolist() == [0.0]

    def test_tp_then_fp(self):
        match = make_match([(0.9, "tp"), (0.8, "fp")])
        precision, recall = pr_curve([match], n_gt=2)
        assert precision.tolist() == [1.0, 0.5]
        assert recall.tolist() == [0.5, 0.5]

    def test_no_ground_truth_is_undefined(self):
        match = make_match([(0.9, "fp")])
        assert pr_curve([match], n_gt=0) is None

    def test_pooling_across_images(self):
        first = make_match([(0.9, "tp")])
        second = make_match([(0.95, "fp"), (0.5, "tp")])
        precision, recall = pr_curve([first, second], n_gt=3)
        # pooled order by score: fp(.95), tp(.9), tp(.5)
        assert precision.tolist() == [0.0, 0.5, 2 / 3]
        assert recall.tolist() == [0.0, 1 / 3, 2 / 3]


class TestAveragePrecision:
    def test_perfect_single_detection(self):
        assert average_precision([1.0], [1.0]) == 1.0

    def test_no_true_positive(self):
        assert average_precision([0.0], [0.0]) == 0.0

    def test_half_recall_envelope(self):
        # precision 1.0 up to recall 0.5, nothing beyond: 51 of 101 samples hit
        value = average_precision([1.0, 0.5], [0.5, 0.5])
        assert value == pytest.approx(51 / 101)

    def test_envelope_is_monotone(self):
        precision = [0.3, 1.0, 0.5, 0.8]
        recall = [0.1, 0.2, 0.3, 0.4]
        p = np.asarray(precision)
        envelope = np.maximum.accumulate(p[::-1])[::-1]
        assert all(a >= b for a, b in zip(envelope, envelope[1:]))
        assert average_precision(precision, recall) <= 1.0

    def test_misaligned_arrays_rejected(self):
        with pytest.raises(ValueError):
            average_precision([1.0], [0.5, 1.0])


def evaluate_docs(doc, dets, **kw):
    dataset = parse_dataset(doc)
    parsed = parse_detections(dets, dataset)
    return evaluate_dataset(dataset, parsed, **kw)


class TestEvaluateDataset:
    def test_zero_detections_nonempty_gt(self, toy_dataset):
        result = evaluate_dataset(toy_dataset, [])
        assert result.cap == 0.0

    def test_perfect_detections(self, toy_dataset):
        dets = [
            Detection(gt.image_id, gt.category_id, gt.bbox, 1.0)
            for gt in toy_dataset.ground_truths
            if not gt.iscrowd
        ]
        result = evaluate_dataset(toy_dataset, dets)
        assert result.cap == 1.0
        assert result.ap50 == 1.0
        assert result.ap75 == 1.0

    def test_unknown_detection_ids_rejected(self, toy_dataset):
        with pytest.raises(IntegrityError):
            evaluate_dataset(
                toy_dataset, [Detection(99, 1, BBox(0, 0, 5, 5), 0.5)]
            )

    def test_orphan_ground_truth_rejected(self):
        from usbench.model import Category, DatasetAnnotations, GroundTruth, ImageInfo

        broken = DatasetAnnotations(
            "broken",
            [ImageInfo(1, 100, 100)],
            [Category(1, "c")],
            [GroundTruth(1, 99, 1, BBox(0, 0, 10, 10))],
        )
        with pytest.raises(IntegrityError, match="unknown image"):
            evaluate_dataset(broken, [])

    def test_matches_oracle_on_random_instances(self):
        rng = random.Random(1234)
        for _ in range(40):
            doc, dets = random_instance(rng)
            ref = naive_evaluate(doc, dets)
            got = evaluate_docs(doc, dets)
            defined = got.ap_tensor[~np.isnan(got.ap_tensor)]
            assert np.all((defined >= 0) & (defined <= 1))
            assert _close(ref["cap"], got.cap)
            assert _close(ref["ap50"], got.ap50)
            assert _close(ref["ap75"], got.ap75)
            assert _close(ref["ap_small"], got.ap_small)
            assert _close(ref["ap_medium"], got.ap_medium)
            assert _close(ref["ap_large"], got.ap_large)
            for j in range(9):
                assert _close(ref["asap"][j], got.asap[j])
                assert _close(ref["rsap"][j], got.rsap[j])

    def test_duplicating_images_preserves_ap(self):
        # exact only for distinct scores: a tie straddling a TP and an FP
        # interleaves differently once every image exists twice
        rng = random.Random(77)
        for _ in range(10):
            doc, dets = random_instance(rng)
            for i, d in enumerate(dets):
                d["score"] = round(0.1 + 0.8 * (i / (len(dets) + 1)), 6)
            base = evaluate_docs(doc, dets)
            doubled = copy.deepcopy(doc)
            offset = 1000
            extra_anns = []
            next_ann = max((a["id"] for a in doc["annotations"]), default=0) + 1
            for img in doc["images"]:
                dup = dict(img, id=img["id"] + offset)
                doubled["images"].append(dup)
            for ann in doc["annotations"]:
                extra_anns.append(
                    dict(ann, id=next_ann, image_id=ann["image_id"] + offset)
                )
                next_ann += 1
            doubled["annotations"].extend(extra_anns)
            dets_doubled = dets + [
                dict(d, image_id=d["image_id"] + offset) for d in dets
            ]
            other = evaluate_docs(doubled, dets_doubled)
            assert _close(base.cap, other.cap)
            assert _close(base.ap50, other.ap50)
            for j in range(9):
                assert _close(base.asap[j], other.asap[j])

    def test_cap_decomposes_over_thresholds(self):
        rng = random.Random(88)
        doc, dets = random_instance(rng)
        full = evaluate_docs(doc, dets)
        singles = []
        for t in full.iou_thresholds:
            params = EvalParams(iou_thresholds=(t,), partitions=())
            singles.append(evaluate_docs(doc, dets, params=params).cap)
        if full.cap is not None:
            assert full.cap == pytest.approx(
                sum(singles) / len(singles), abs=1e-12
            )

    def test_appending_lowest_fp_never_raises_ap(self):
        rng = random.Random(99)
        for _ in range(25):
            doc, dets = random_instance(rng)
            if not dets:
                continue
            base = evaluate_docs(doc, dets)
            lowest = min(d["score"] for d in dets)
            worse = dets + [
                {
                    "image_id": doc["images"][0]["id"],
                    "category_id": doc["categories"][0]["id"],
                    "bbox": [90000.0, 90000.0, 5.0, 5.0],
                    "score": lowest / 2,
                }
            ]
            other = evaluate_docs(doc, worse)
            for a, b in [
                (base.cap, other.cap),
                (base.ap50, other.ap50),
                (base.ap_small, other.ap_small),
            ]:
                if a is not None and b is not None:
                    assert b <= a + 1e-12

    def test_workers_do_not_change_result(self):
        rng = random.Random(55)
        doc, dets = random_instance(rng, max_images=5, max_boxes=8)
        results = [
            evaluate_docs(doc, dets, workers=w).to_dict() for w in (1, 2, 8)
        ]
        assert results[0] == results[1] == results[2]

    def test_max_dets_cap_applied(self):
        doc = {
            "images": [{"id": 1, "width": 600, "height": 600}],
            "categories": [{"id": 1, "name": "c"}],
            "annotations": [
                {"id": i + 1, "image_id": 1, "category_id": 1,
                 "bbox": [i * 50.0, 0, 40, 40]}
                for i in range(5)
            ],
        }
        # 5 perfect detections at low scores after 3 high-scoring misses
        dets = [
            {"image_id": 1, "category_id": 1, "bbox": [0, 500, 10, 10],
             "score": 0.9 - i * 0.01}
            for i in range(3)
        ] + [
            {"image_id": 1, "category_id": 1, "bbox": [i * 50.0, 0, 40, 40],
             "score": 0.5 - i * 0.01}
            for i in range(5)
        ]
        capped = evaluate_docs(doc, dets, params=EvalParams(max_dets=3, partitions=()))
        uncapped = evaluate_docs(doc, dets, params=EvalParams(max_dets=100, partitions=()))
        assert capped.cap == 0.0  # only the three misses survive the cap
        assert uncapped.cap > 0.0

    def test_undefined_category_excluded_vs_zero_filled(self):
        doc = {
            "images": [{"id": 1, "width": 100, "height": 100}],
            "categories": [{"id": 1, "name": "a"}, {"id": 2, "name": "empty"}],
            "annotations": [
                {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 50, 50]}
            ],
        }
        dets = [
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 50, 50], "score": 1.0}
        ]
        excl = evaluate_docs(doc, dets)
        assert excl.cap == 1.0
        assert excl.per_category_cap[2] is None
        zf = evaluate_docs(
            doc, dets, params=EvalParams(undefined_policy="zero-fill")
        )
        assert zf.cap == 0.5
        assert zf.per_category_cap[2] == 0.0

    def test_boundary_areas_use_half_open_bins(self):
        # areas exactly at the 32^2 and 96^2 edges belong to the lower bin;
        # the mask-area override wins over box area; absolute scale ignores
        # the override
        doc = {
            "images": [{"id": 1, "width": 1000, "height": 1000}],
            "categories": [{"id": 1, "name": "c"}],
            "annotations": [
                {"id": 1, "image_id": 1, "category_id": 1,
                 "bbox": [0, 0, 32, 32]},           # area 1024: small
                {"id": 2, "image_id": 1, "category_id": 1,
                 "bbox": [100, 0, 96, 96]},         # area 9216: medium
                {"id": 3, "image_id": 1, "category_id": 1,
                 "bbox": [300, 0, 8, 8]},           # scale exactly 8: asap[0]
                {"id": 4, "image_id": 1, "category_id": 1,
                 "bbox": [400, 0, 100, 100], "area": 1024.0},  # small via mask
            ],
        }
        dets = [
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 32, 32], "score": 0.9},
            {"image_id": 1, "category_id": 1, "bbox": [100, 0, 96, 96], "score": 0.8},
            {"image_id": 1, "category_id": 1, "bbox": [300, 0, 8, 8], "score": 0.7},
            {"image_id": 1, "category_id": 1, "bbox": [400, 0, 100, 100], "score": 0.6},
            # unmatched box of area exactly 1024: a small-bin FP, ignored in
            # medium (strict lower bound)
            {"image_id": 1, "category_id": 1, "bbox": [700, 700, 32, 32], "score": 0.5},
        ]
        got = evaluate_docs(doc, dets)
        assert got.ap_small == 1.0  # 3 TPs, trailing FP past full recall
        assert got.ap_medium == 1.0  # box 2 only; boundary FP is out of bin
        assert got.ap_large is None  # no ground truth lands in (96^2, inf)
        assert got.asap[0] == 1.0  # scale exactly 8 stays in the first bin
        assert got.cap == 1.0
        ref = naive_evaluate(doc, dets)
        assert _close(ref["ap_small"], got.ap_small)
        assert _close(ref["ap_medium"], got.ap_medium)
        assert ref["ap_large"] is None
        assert _close(ref["asap"][0], got.asap[0])

    def test_result_document_roundtrip_types(self, toy_dataset):
        result = evaluate_dataset(toy_dataset, [])
        doc = result.to_dict()
        assert doc["schema_version"] == 1
        assert doc["metrics"]["cap"] == 0.0
        assert len(doc["scale_ap"]["asap"]["bins"]) == 9
        assert doc["scale_ap"]["rsap"]["bins"][8]["upper"] == 1.0
        assert doc["scale_ap"]["asap"]["bins"][8]["upper"] is None  # inf


class TestAggregates:
    def test_mcap_singleton(self):
        assert aggregate_mcap([0.37]) == 0.37

    def test_mcap_mean(self):
        assert aggregate_mcap([0.374, 0.345, 0.658]) == pytest.approx(0.459)

    def test_mcap_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_mcap([])

    def test_fill_undefined_all_defined(self):
        assert fill_undefined([0.2, 0.4]) == pytest.approx(0.3)

    def test_fill_undefined_zero_fill(self):
        assert fill_undefined([None], "zero-fill") == 0.0
        assert fill_undefined([0.5, None], "zero-fill") == 0.25

    def test_fill_undefined_exclude(self):
        assert fill_undefined([0.5, None]) == 0.5
        assert fill_undefined([None, None]) is None


class TestKittiStyleAp:
    def _dataset(self):
        return {
            "images": [{"id": 1, "width": 1920, "height": 1280}],
            "categories": [
                {"id": 1, "name": "vehicle"},
                {"id": 2, "name": "pedestrian"},
                {"id": 3, "name": "cyclist"},
            ],
            "annotations": [
                {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10]},
                {"id": 2, "image_id": 1, "category_id": 2, "bbox": [50, 0, 10, 10]},
                {"id": 3, "image_id": 1, "category_id": 3, "bbox": [100, 0, 10, 10]},
            ],
        }

    def test_perfect_detections(self):
        doc = self._dataset()
        dataset = parse_dataset(doc)
        dets = parse_detections(
            [
                {"image_id": 1, "category_id": a["category_id"],
                 "bbox": a["bbox"], "score": 1.0}
                for a in doc["annotations"]
            ],
            dataset,
        )
        assert kitti_style_ap(dataset, dets) == 1.0

    def test_per_category_thresholds(self):
        doc = self._dataset()
        dataset = parse_dataset(doc)
        # each detection overlaps its ground truth at IoU exactly 0.6
        dets = parse_detections(
            [
                {"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 6], "score": 0.9},
                {"image_id": 1, "category_id": 2, "bbox": [50, 0, 10, 6], "score": 0.9},
                {"image_id": 1, "category_id": 3, "bbox": [100, 0, 10, 10], "score": 0.9},
            ],
            dataset,
        )
        # vehicle: 0.6 < 0.7 -> AP 0; pedestrian: 0.6 >= 0.5 -> AP 1; cyclist 1
        assert kitti_style_ap(dataset, dets) == pytest.approx(2 / 3)

    def test_missing_override_rejected(self):
        doc = self._dataset()
        doc["categories"].append({"id": 4, "name": "deer"})
        dataset = parse_dataset(doc)
        with pytest.raises(ConfigurationError, match="deer"):
            kitti_style_ap(dataset, [])

    def test_matches_oracle_at_per_category_thresholds(self):
        rng = random.Random(4321)
        overrides = {"cat1": 0.7, "cat2": 0.5, "cat3": 0.5}
        checked = 0
        for _ in range(25):
            doc, det_list = random_instance(rng, crowd_prob=0.1)
            ref = naive_evaluate(
                doc, det_list, iou_thresholds=[0.5, 0.7], include_octaves=False
            )
            dataset = parse_dataset(doc)
            dets = parse_detections(det_list, dataset)
            values = []
            for cat in doc["categories"]:
                t = overrides[cat["name"]]
                cell = ref["cells"][t][cat["id"]]["all"]
                if cell is not None:
                    values.append(cell)
            if not values:
                continue
            expected = sum(values) / len(values)
            got = kitti_style_ap(dataset, dets, overrides)
            assert _close(expected, got)
            checked += 1
        assert checked >= 15

    def test_overrides_via_eval_params(self):
        doc = self._dataset()
        dataset = parse_dataset(doc)
        dets = parse_detections(
            [
                {"image_id": 1, "category_id": a["category_id"],
                 "bbox": a["bbox"], "score": 1.0}
                for a in doc["annotations"]
            ],
            dataset,
        )
        params = EvalParams(
            partitions=(),
            category_iou_overrides={"vehicle": 0.7, "pedestrian": 0.5,
                                    "cyclist": 0.5},
        )
        result = evaluate_dataset(dataset, dets, params)
        assert result.kap == kitti_style_ap(dataset, dets)


def _close(a, b, tol=1e-9):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tol
