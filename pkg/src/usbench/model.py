"""Shared domain types and object-scale arithmetic.

Everything here is immutable after construction and safe to share across
worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import GeometryError, IntegrityError

Id = Union[int, str]

# Basis on which a scale partition bins objects.
ABSOLUTE_SCALE = "absolute-scale"
RELATIVE_SCALE = "relative-scale"
ABSOLUTE_AREA = "absolute-area"
_BASES = (ABSOLUTE_SCALE, RELATIVE_SCALE, ABSOLUTE_AREA)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates: (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise GeometryError(f"bbox field {name!r} is not finite: {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise GeometryError(
                f"bbox has non-positive size w={self.w}, h={self.h}"
            )

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class ImageInfo:
    id: Id
    width: float
    height: float
    file_name: Optional[str] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError(
                f"image {self.id!r} has invalid size "
                f"{self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Category:
    id: Id
    name: str


@dataclass(frozen=True)
class GroundTruth:
    """One annotated object.

    `area` overrides the box area when present (e.g. mask-derived areas);
    otherwise the effective area is w*h. `ignore` marks annotations that
    never count as positives (the evaluator also derives per-bin ignores,
    which are not persisted here).
    """

    id: Id
    image_id: Id
    category_id: Id
    bbox: BBox
    area: Optional[float] = None
    iscrowd: bool = False
    ignore: bool = False

    @property
    def effective_area(self) -> float:
        return self.bbox.area if self.area is None else self.area


@dataclass(frozen=True)
class Detection:
    image_id: Id
    category_id: Id
    bbox: BBox
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"detection score is not finite: {self.score!r}")


@dataclass
class DatasetAnnotations:
    """Images, categories and ground truths for one dataset split."""

    dataset_id: str
    images: list[ImageInfo]
    categories: list[Category]
    ground_truths: list[GroundTruth]
    _images_by_id: dict = field(init=False, repr=False, default_factory=dict)
    _categories_by_id: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self._images_by_id = {img.id: img for img in self.images}
        self._categories_by_id = {cat.id: cat for cat in self.categories}

    def image(self, image_id: Id) -> ImageInfo:
        return self._images_by_id[image_id]

    def category(self, category_id: Id) -> Category:
        return self._categories_by_id[category_id]

    def has_image(self, image_id: Id) -> bool:
        return image_id in self._images_by_id

    def has_category(self, category_id: Id) -> bool:
        return category_id in self._categories_by_id

    def validate(self) -> None:
        """Check referential integrity and id uniqueness."""
        if len(self._images_by_id) != len(self.images):
            seen: set = set()
            for img in self.images:
                if img.id in seen:
                    raise IntegrityError(f"duplicate image id {img.id!r}")
                seen.add(img.id)
        if len(self._categories_by_id) != len(self.categories):
            seen = set()
            for cat in self.categories:
                if cat.id in seen:
                    raise IntegrityError(f"duplicate category id {cat.id!r}")
                seen.add(cat.id)
        if not self.categories:
            raise IntegrityError("dataset has no categories")
        ann_ids: set = set()
        for gt in self.ground_truths:
            if gt.id in ann_ids:
                raise IntegrityError(f"duplicate annotation id {gt.id!r}")
            ann_ids.add(gt.id)
            if gt.image_id not in self._images_by_id:
                raise IntegrityError(
                    f"annotation {gt.id!r} references unknown image "
                    f"{gt.image_id!r}"
                )
            if gt.category_id not in self._categories_by_id:
                raise IntegrityError(
                    f"annotation {gt.id!r} references unknown category "
                    f"{gt.category_id!r}"
                )


@dataclass(frozen=True)
class ScalePartition:
    """Named list of contiguous half-open (lower, upper] bins.

    The first lower bound is 0. The last upper bound is +inf for the
    absolute bases and 1 for the relative basis, so every positive value
    falls in exactly one bin.
    """

    name: str
    bins: tuple[tuple[float, float], ...]
    basis: str

    def __post_init__(self):
        if self.basis not in _BASES:
            raise ValueError(f"unknown partition basis {self.basis!r}")
        if not self.bins:
            raise ValueError("partition has no bins")
        if self.bins[0][0] != 0:
            raise ValueError("first bin must start at 0")
        expected_top = 1.0 if self.basis == RELATIVE_SCALE else math.inf
        if self.bins[-1][1] != expected_top:
            raise ValueError(
                f"last bin of a {self.basis} partition must end at "
                f"{expected_top}"
            )
        for (lo_a, hi_a), (lo_b, hi_b) in zip(self.bins, self.bins[1:]):
            if hi_a != lo_b:
                raise ValueError("bins must be contiguous and non-overlapping")
            if hi_a <= lo_a or hi_b <= lo_b:
                raise ValueError("bins must be non-empty intervals")

    def __len__(self) -> int:
        return len(self.bins)


def absolute_scale(bbox: BBox) -> float:
    """Object scale in pixels: sqrt(w*h)."""
    return math.sqrt(bbox.w * bbox.h)


def relative_scale(bbox: BBox, img: ImageInfo) -> float:
    """Object scale as a fraction of its image: sqrt(w*h / (W*H)), capped at 1."""
    return min(1.0, math.sqrt(bbox.w * bbox.h / (img.width * img.height)))


def assign_bin(scale: float, partition: ScalePartition) -> int:
    """Index of the unique bin with lower < scale <= upper.

    Raises ValueError for non-positive scales and for values above the
    partition's top bound (only possible on the relative basis).
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale!r}")
    for i, (lo, hi) in enumerate(partition.bins):
        if lo < scale <= hi:
            return i
    raise ValueError(
        f"scale {scale!r} above the top bound of partition {partition.name!r}"
    )


def _octave_bins(edges: list[float], top: float) -> tuple[tuple[float, float], ...]:
    bounds = [0.0] + list(edges) + [top]
    return tuple(zip(bounds[:-1], bounds[1:]))


def absolute_octaves() -> ScalePartition:
    """Nine absolute-scale bins with doubling edges 8, 16, ..., 1024."""
    edges = [8.0 * 2**i for i in range(8)]
    return ScalePartition("asap", _octave_bins(edges, math.inf), ABSOLUTE_SCALE)


def relative_octaves() -> ScalePartition:
    """Nine relative-scale bins with doubling edges 1/256, 1/128, ..., 1/2."""
    edges = [1.0 / 256 * 2**i for i in range(8)]
    return ScalePartition("rsap", _octave_bins(edges, 1.0), RELATIVE_SCALE)


def coco_area_partition() -> ScalePartition:
    """Small/medium/large bins on effective area: (0,32^2], (32^2,96^2], (96^2,inf)."""
    bins = ((0.0, 32.0**2), (32.0**2, 96.0**2), (96.0**2, math.inf))
    return ScalePartition("coco-area", bins, ABSOLUTE_AREA)


def all_scales() -> ScalePartition:
    """Single bin covering every effective area."""
    return ScalePartition("all", ((0.0, math.inf),), ABSOLUTE_AREA)
