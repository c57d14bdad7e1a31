"""Converters producing the common annotation format.

Two sources are supported:

* Manga109-style XML, one document per book. Pages carry ``index``,
  ``width`` and ``height`` attributes; boxes are child elements named after
  their category with ``id``/``xmin``/``ymin``/``xmax``/``ymax`` attributes.
* A line-delimited intermediate format for driving-camera frames. Native
  sensor archives are deliberately not parsed; any upstream extractor can
  emit these records:

      {"sequence_id": "...", "frame_index": 0, "camera_id": "FRONT",
       "width": 1920, "height": 1280,
       "boxes": [{"category": "vehicle", "x": .., "y": .., "w": .., "h": ..}]}
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ElementTree
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import ConfigurationError, GeometryError, ParseError
from .model import (
    BBox,
    Category,
    DatasetAnnotations,
    GroundTruth,
    ImageInfo,
)

MANGA109_CATEGORIES = ("body", "face", "frame", "text")
WOD_CATEGORIES = ("vehicle", "pedestrian", "cyclist")


@dataclass(frozen=True)
class SplitSpec:
    """Membership list for one named dataset split."""

    name: str
    member_keys: tuple[str, ...]

    def __post_init__(self):
        if not self.member_keys:
            raise ConfigurationError(f"split {self.name!r} has no members")


# Test and validation volumes of the 87-volume manga dataset; the training
# split is everything else, so it is built per corpus (see
# `manga109_split_specs`).
MANGA109_15TEST_VOLUMES = (
    "Aku-Ham",
    "Bakuretsu! Kung Fu Girl",
    "Doll Gun",
    "Eva Lady",
    "Hinagiku Kenzan!",
    "Kyokugen Cyclone",
    "Love Hina vol. 1",
    "Momoyama Haikagura",
    "Tennen Senshi G",
    "Uchi no Nyan's Diary",
    "Unbalance Tokyo",
    "Yamato no Hane",
    "Youma Kourin",
    "Yume no Kayoiji",
    "Yumeiro Cooking",
)
MANGA109_4VAL_VOLUMES = (
    "Healing Planet",
    "Love Hina vol. 14",
    "Seijinki Vulnus",
    "That's! Izumiko",
)


def normalize_volume_name(name: str) -> str:
    """Fold case/punctuation/zero-padding differences between volume spellings."""
    slug = re.sub(r"[^0-9a-z]+", "", name.lower())
    return re.sub(r"0+(\d)", r"\1", slug)


def manga109_split_specs(volumes: Sequence[str]) -> list[SplitSpec]:
    """Build the 68train/4val/15test splits for a corpus of volume names.

    Test and validation membership is fixed; every remaining volume goes to
    the training split. Raises ConfigurationError when the corpus is missing
    a fixed member or the remainder is empty.
    """
    by_slug = {normalize_volume_name(v): v for v in volumes}
    if len(by_slug) != len(volumes):
        raise ConfigurationError("volume names collide after normalization")

    def resolve(members: Iterable[str], split: str) -> list[str]:
        out = []
        for member in members:
            slug = normalize_volume_name(member)
            if slug not in by_slug:
                raise ConfigurationError(
                    f"volume {member!r} of split {split!r} not in the corpus"
                )
            out.append(by_slug[slug])
        return out

    test = resolve(MANGA109_15TEST_VOLUMES, "15test")
    val = resolve(MANGA109_4VAL_VOLUMES, "4val")
    rest = [v for v in volumes if v not in set(test) | set(val)]
    if not rest:
        raise ConfigurationError("no volumes left for the 68train split")
    return [
        SplitSpec("68train", tuple(rest)),
        SplitSpec("4val", tuple(val)),
        SplitSpec("15test", tuple(test)),
    ]


def _parse_book(document: bytes | str) -> tuple[str, ElementTree.Element]:
    try:
        root = ElementTree.fromstring(document)
    except ElementTree.ParseError as exc:
        raise ParseError(f"invalid XML: {exc}") from exc
    title = root.get("title")
    if not title:
        raise ParseError("book document has no title attribute")
    return title, root


def convert_manga109(
    documents: Sequence[bytes | str],
    splits: Sequence[SplitSpec],
    split_name: str,
) -> DatasetAnnotations:
    """Convert per-book XML documents into one split's annotation set.

    Only books belonging to `split_name` are included; a book that is in no
    split at all raises ConfigurationError. Pages without any annotation are
    excluded. Boxes are converted from corner to corner+size form; category
    ids follow the fixed (body, face, frame, text) order.
    """
    split_by_name = {s.name: s for s in splits}
    if split_name not in split_by_name:
        raise ConfigurationError(f"unknown split {split_name!r}")
    membership = {}
    wildcard_split = None  # a "*" member catches every unlisted book
    for spec in splits:
        for key in spec.member_keys:
            if key == "*":
                wildcard_split = spec.name
                continue
            slug = normalize_volume_name(key)
            if membership.get(slug, spec.name) != spec.name:
                raise ConfigurationError(
                    f"volume {key!r} appears in splits "
                    f"{membership[slug]!r} and {spec.name!r}"
                )
            membership[slug] = spec.name

    categories = [
        Category(i + 1, name) for i, name in enumerate(MANGA109_CATEGORIES)
    ]
    cat_id = {name: i + 1 for i, name in enumerate(MANGA109_CATEGORIES)}

    books = []
    for doc in documents:
        title, root = _parse_book(doc)
        slug = normalize_volume_name(title)
        book_split = membership.get(slug, wildcard_split)
        if book_split is None:
            raise ConfigurationError(f"book {title!r} is not in any split")
        if book_split == split_name:
            books.append((title, root))
    books.sort(key=lambda item: item[0])

    images: list[ImageInfo] = []
    ground_truths: list[GroundTruth] = []
    next_image_id = 1
    next_ann_id = 1
    for title, root in books:
        for page in root.iter("page"):
            where = f"{title}/page[{page.get('index')}]"
            try:
                index = int(page.attrib["index"])
                width = float(page.attrib["width"])
                height = float(page.attrib["height"])
            except (KeyError, ValueError) as exc:
                raise ParseError(f"{where}: bad page attributes: {exc}") from exc
            boxes = []
            for elem in page:
                if elem.tag not in cat_id:
                    continue
                ann_id = elem.get("id", f"#{len(boxes)}")
                try:
                    xmin = float(elem.attrib["xmin"])
                    ymin = float(elem.attrib["ymin"])
                    xmax = float(elem.attrib["xmax"])
                    ymax = float(elem.attrib["ymax"])
                except (KeyError, ValueError) as exc:
                    raise ParseError(
                        f"{where}: box {ann_id}: bad attributes: {exc}"
                    ) from exc
                if xmax <= xmin or ymax <= ymin:
                    raise GeometryError(
                        f"{where}: box {ann_id} is degenerate "
                        f"({xmin},{ymin})-({xmax},{ymax})"
                    )
                boxes.append(
                    (elem.tag, BBox(xmin, ymin, xmax - xmin, ymax - ymin))
                )
            if not boxes:
                continue  # pages without annotations are excluded
            image_id = next_image_id
            next_image_id += 1
            images.append(
                ImageInfo(
                    id=image_id,
                    width=width,
                    height=height,
                    file_name=f"{title}/{index:03d}.jpg",
                )
            )
            for tag, bbox in boxes:
                ground_truths.append(
                    GroundTruth(
                        id=next_ann_id,
                        image_id=image_id,
                        category_id=cat_id[tag],
                        bbox=bbox,
                    )
                )
                next_ann_id += 1

    dataset = DatasetAnnotations(
        dataset_id=f"m109s-{split_name}",
        images=images,
        categories=categories,
        ground_truths=ground_truths,
    )
    dataset.validate()
    return dataset


@dataclass(frozen=True)
class WodFrameRecord:
    """One camera image of one frame of a driving sequence."""

    sequence_id: str
    frame_index: int
    camera_id: str
    image: ImageInfo
    boxes: tuple[GroundTruth, ...]

    def __post_init__(self):
        if self.frame_index < 0:
            raise ParseError(f"negative frame index {self.frame_index}")


def parse_wod_records(lines: Iterable[str]) -> Iterable[WodFrameRecord]:
    """Decode line-delimited intermediate records, lazily."""
    cat_id = {name: i + 1 for i, name in enumerate(WOD_CATEGORIES)}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        where = f"line {lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{where}: invalid JSON: {exc}") from exc
        try:
            sequence_id = str(rec["sequence_id"])
            frame_index = int(rec["frame_index"])
            camera_id = str(rec["camera_id"])
            width = float(rec["width"])
            height = float(rec["height"])
            raw_boxes = rec["boxes"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: bad record: {exc}") from exc
        # Image ids are not defined by the source data; one camera image is
        # keyed by sequence/frame/camera.
        image_id = f"{sequence_id}/{frame_index:06d}/{camera_id}"
        image = ImageInfo(id=image_id, width=width, height=height)
        boxes = []
        for b, raw in enumerate(raw_boxes):
            try:
                category = raw["category"]
                bbox = BBox(
                    float(raw["x"]), float(raw["y"]),
                    float(raw["w"]), float(raw["h"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{where}: box[{b}]: {exc}") from exc
            if category not in cat_id:
                raise ParseError(f"{where}: box[{b}]: unknown category {category!r}")
            boxes.append(
                GroundTruth(
                    id=0,  # assigned after subset filtering
                    image_id=image_id,
                    category_id=cat_id[category],
                    bbox=bbox,
                )
            )
        yield WodFrameRecord(sequence_id, frame_index, camera_id, image, tuple(boxes))


def extract_wod_f0_subset(
    records: Iterable[WodFrameRecord], dataset_id: str = "wod-f0"
) -> DatasetAnnotations:
    """Keep the frames whose index ends in 0 (0, 10, ..., 190 per sequence)."""
    images: list[ImageInfo] = []
    ground_truths: list[GroundTruth] = []
    categories = [Category(i + 1, name) for i, name in enumerate(WOD_CATEGORIES)]
    next_ann_id = 1
    for rec in records:
        if rec.frame_index % 10 != 0:
            continue
        images.append(rec.image)
        for gt in rec.boxes:
            ground_truths.append(
                GroundTruth(
                    id=next_ann_id,
                    image_id=gt.image_id,
                    category_id=gt.category_id,
                    bbox=gt.bbox,
                )
            )
            next_ann_id += 1
    dataset = DatasetAnnotations(
        dataset_id=dataset_id,
        images=images,
        categories=categories,
        ground_truths=ground_truths,
    )
    dataset.validate()
    return dataset


def load_split_file(document: bytes | str) -> list[SplitSpec]:
    """Read custom splits from JSON: {"splits": [{"name", "member_keys"}]}."""
    try:
        doc = json.loads(document)
        return [
            SplitSpec(str(s["name"]), tuple(str(k) for k in s["member_keys"]))
            for s in doc["splits"]
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"bad split file: {exc}") from exc


def default_manga109_splits(volumes: Optional[Sequence[str]] = None) -> list[SplitSpec]:
    """Built-in splits; with no corpus given, the training split is implicit.

    When `volumes` is None the returned 68train spec is a placeholder
    wildcard ("*"): `convert_manga109` treats every book outside 4val/15test
    as a training member.
    """
    if volumes is not None:
        return manga109_split_specs(volumes)
    return [
        SplitSpec("68train", ("*",)),
        SplitSpec("4val", MANGA109_4VAL_VOLUMES),
        SplitSpec("15test", MANGA109_15TEST_VOLUMES),
    ]
