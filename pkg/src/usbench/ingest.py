"""Parsing and serialization of annotation/result documents.

The annotation document is COCO-style JSON:

    {"dataset_id": "...",           # optional
     "images": [{"id", "width", "height", "file_name"?}],
     "annotations": [{"id", "image_id", "category_id",
                      "bbox": [x, y, w, h], "area"?, "iscrowd"?, "ignore"?}],
     "categories": [{"id", "name"}]}

The result document is a flat JSON list of
``{"image_id", "category_id", "bbox": [x, y, w, h], "score"}``.
"""

from __future__ import annotations

import json
import math
from typing import Any, Union

from .errors import GeometryError, IntegrityError, ParseError
from .model import (
    BBox,
    Category,
    DatasetAnnotations,
    Detection,
    GroundTruth,
    ImageInfo,
)

DEFAULT_DETECTIONS_PER_IMAGE = 100


def _require(record: dict, key: str, where: str) -> Any:
    if key not in record:
        raise ParseError(f"{where}: missing field {key!r}")
    return record[key]


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _bbox(value: Any, where: str) -> BBox:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ParseError(f"{where}: bbox must be a [x, y, w, h] list")
    x, y, w, h = (_number(v, where) for v in value)
    try:
        return BBox(x, y, w, h)
    except GeometryError as exc:
        raise GeometryError(f"{where}: {exc}") from exc


def parse_dataset(document: Union[bytes, str, dict]) -> DatasetAnnotations:
    """Parse and validate a COCO-style annotation document.

    Accepts raw JSON bytes/text or an already-decoded mapping. Raises
    ParseError on malformed structure and IntegrityError on dangling or
    duplicate ids.
    """
    if isinstance(document, (bytes, str)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ParseError("annotation document must be a JSON object")

    images = []
    for i, rec in enumerate(_list_field(document, "images")):
        where = f"images[{i}]"
        images.append(
            ImageInfo(
                id=_id(_require(rec, "id", where), where),
                width=_number(_require(rec, "width", where), where),
                height=_number(_require(rec, "height", where), where),
                file_name=rec.get("file_name"),
            )
        )

    categories = []
    for i, rec in enumerate(_list_field(document, "categories")):
        where = f"categories[{i}]"
        categories.append(
            Category(
                id=_id(_require(rec, "id", where), where),
                name=str(_require(rec, "name", where)),
            )
        )

    ground_truths = []
    for i, rec in enumerate(_list_field(document, "annotations")):
        where = f"annotations[{i}]"
        area = rec.get("area")
        ground_truths.append(
            GroundTruth(
                id=_id(_require(rec, "id", where), where),
                image_id=_id(_require(rec, "image_id", where), where),
                category_id=_id(_require(rec, "category_id", where), where),
                bbox=_bbox(_require(rec, "bbox", where), where),
                area=None if area is None else _number(area, where),
                iscrowd=bool(rec.get("iscrowd", 0)),
                ignore=bool(rec.get("ignore", 0)),
            )
        )

    dataset = DatasetAnnotations(
        dataset_id=str(document.get("dataset_id", "")),
        images=images,
        categories=categories,
        ground_truths=ground_truths,
    )
    dataset.validate()
    return dataset


def _list_field(document: dict, key: str) -> list:
    value = document.get(key)
    if not isinstance(value, list):
        raise ParseError(f"top-level {key!r} must be a list")
    return value


def _id(value: Any, where: str):
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ParseError(f"{where}: id must be an integer or string, got {value!r}")
    return value


def serialize_dataset(dataset: DatasetAnnotations) -> str:
    """Canonical JSON for a dataset; byte-stable across runs."""
    doc = {
        "dataset_id": dataset.dataset_id,
        "images": [
            {
                "id": img.id,
                "width": img.width,
                "height": img.height,
                **({"file_name": img.file_name} if img.file_name else {}),
            }
            for img in dataset.images
        ],
        "annotations": [
            {
                "id": gt.id,
                "image_id": gt.image_id,
                "category_id": gt.category_id,
                "bbox": [gt.bbox.x, gt.bbox.y, gt.bbox.w, gt.bbox.h],
                **({"area": gt.area} if gt.area is not None else {}),
                "iscrowd": int(gt.iscrowd),
                **({"ignore": 1} if gt.ignore else {}),
            }
            for gt in dataset.ground_truths
        ],
        "categories": [
            {"id": cat.id, "name": cat.name} for cat in dataset.categories
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def parse_detections(
    document: Union[bytes, str, list], dataset: DatasetAnnotations
) -> list[Detection]:
    """Parse a result document and validate it against a dataset.

    Input order is preserved. Unknown image/category ids raise
    IntegrityError; non-finite scores raise ValueError.
    """
    if isinstance(document, (bytes, str)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(document, list):
        raise ParseError("result document must be a JSON list")

    detections = []
    for i, rec in enumerate(document):
        where = f"results[{i}]"
        if not isinstance(rec, dict):
            raise ParseError(f"{where}: expected an object")
        image_id = _id(_require(rec, "image_id", where), where)
        category_id = _id(_require(rec, "category_id", where), where)
        if not dataset.has_image(image_id):
            raise IntegrityError(f"{where}: unknown image id {image_id!r}")
        if not dataset.has_category(category_id):
            raise IntegrityError(f"{where}: unknown category id {category_id!r}")
        score = _number(_require(rec, "score", where), where)
        if not math.isfinite(score):
            raise ValueError(f"{where}: score is not finite: {score!r}")
        detections.append(
            Detection(
                image_id=image_id,
                category_id=category_id,
                bbox=_bbox(_require(rec, "bbox", where), where),
                score=score,
            )
        )
    return detections


def cap_detections_per_image(
    dets: list[Detection], limit: int = DEFAULT_DETECTIONS_PER_IMAGE
) -> list[Detection]:
    """Keep the `limit` highest-scoring detections per image, across categories.

    Score ties are broken by input order (earlier wins) and the relative
    input order of the survivors is preserved.
    """
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    by_image: dict = {}
    for idx, det in enumerate(dets):
        by_image.setdefault(det.image_id, []).append(idx)
    keep = set()
    for indices in by_image.values():
        if len(indices) <= limit:
            keep.update(indices)
            continue
        ranked = sorted(indices, key=lambda i: (-dets[i].score, i))
        keep.update(ranked[:limit])
    return [det for idx, det in enumerate(dets) if idx in keep]
