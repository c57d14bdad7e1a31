"""Training/evaluation protocol divisions and compatibility checking.

Training divisions by maximum epochs: USB 1.0 up to 24, 2.0 up to 73,
3.0/3.1 up to 300, Freestyle beyond. Aggressive hyperparameter optimization
(AHPO) turns 3.0 into 3.1 and adds 0.1 to lower divisions; training with
annotation types beyond 2D boxes adds 0.5. Evaluation classes bound the
test-image area: Micro 50,176 / Mini 262,144 / Standard 1,066,667 /
Large 2,457,600 / Huge 7,526,400, else Freestyle.

Two documented tolerances: a fractional epoch overshoot of at most 1.0
(rounding between epoch- and iteration-based schedules) is ignored, and a
resolution at most 8 pixels per side over a class bound still falls in that
class.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ParseError

EPOCH_TOLERANCE = 1.0
PIXEL_TOLERANCE = 8

TRAINING_DIVISIONS = (("1.0", 24.0), ("2.0", 73.0), ("3.0", 300.0))
FREESTYLE = "Freestyle"

EVALUATION_CLASSES = (
    ("Micro", 50_176),
    ("Mini", 262_144),
    ("Standard", 1_066_667),
    ("Large", 2_457_600),
    ("Huge", 7_526_400),
)

EXTRA_ANNOTATION_MODIFIER = 0.5
AHPO_MODIFIER = 0.1

# Pre-training on these needs no paired ablation; anything else does.
ALLOWED_PRETRAIN_DATASETS = frozenset(
    {"coco", "wod", "m109s", "manga109s", "imagenet1k", "in1k"}
)

EXPONENTIAL = "exponential"
LINEAR = "linear"
MIN_EXPONENTIAL_RATIO = 2.0
MAX_LINEAR_CHOICES = 11
MAX_AUGMENTATION_TIME_FACTOR = 2.0
_RATIO_EPS = 1e-9


@dataclass(frozen=True)
class HyperparameterGrid:
    name: str
    kind: str  # "exponential" or "linear"
    choices: tuple[float, ...]


@dataclass(frozen=True)
class TtaConfig:
    n_scales: Optional[int] = None
    flip: bool = False


@dataclass(frozen=True)
class ReportedResult:
    training_label: str
    has_tta: bool = False
    has_ahpo: bool = False
    has_extra_annotations: bool = False


@dataclass(frozen=True)
class SubmissionMeta:
    """Training and evaluation configuration of one submission."""

    max_epochs: float
    test_width: int
    test_height: int
    uses_extra_annotation_types: bool = False
    ahpo: bool = False
    hyperparameter_grids: tuple[HyperparameterGrid, ...] = ()
    augmentation_epoch_time_factor: float = 1.0
    tta: Optional[TtaConfig] = None
    pretrain_datasets: tuple[str, ...] = ()
    reported_results: tuple[ReportedResult, ...] = ()

    def __post_init__(self):
        if self.max_epochs <= 0:
            raise ValueError("max_epochs must be positive")
        if self.test_width < 1 or self.test_height < 1:
            raise ValueError("test dimensions must be >= 1")
        if self.augmentation_epoch_time_factor < 1:
            raise ValueError("augmentation_epoch_time_factor must be >= 1")


@dataclass(frozen=True)
class ProtocolLabel:
    """Classified division: training base, composed modifier, evaluation class."""

    training_base: str  # "1.0", "2.0", "3.0", "3.1" or "Freestyle"
    modifier_sum: Optional[float]  # e.g. 2.5; None for Freestyle
    evaluation: str

    @property
    def training_text(self) -> str:
        if self.training_base == FREESTYLE:
            return FREESTYLE
        return f"USB {self.modifier_sum:.1f}"

    @property
    def text(self) -> str:
        """Combined label, e.g. "Standard USB 1.0" or "Freestyle"."""
        if self.training_base == FREESTYLE:
            return FREESTYLE
        return f"{self.evaluation} USB {self.modifier_sum:.1f}"


@dataclass(frozen=True)
class GridValidation:
    compliant: bool
    violations: tuple[str, ...] = ()


@dataclass(frozen=True)
class Obligation:
    kind: str  # "required" or "advisory"
    code: str
    message: str


def validate_hyperparameter_grids(
    grids: Sequence[HyperparameterGrid],
) -> GridValidation:
    """Check search grids against the allowed coarseness.

    Exponential grids need every adjacent ratio >= 2; linear grids may hold
    at most 11 choices. Any violation implies aggressive hyperparameter
    optimization.
    """
    violations = []
    for grid in grids:
        if grid.kind == EXPONENTIAL:
            if any(c <= 0 for c in grid.choices):
                raise ValueError(
                    f"grid {grid.name!r}: exponential choices must be positive"
                )
            if any(b <= a for a, b in zip(grid.choices, grid.choices[1:])):
                raise ValueError(
                    f"grid {grid.name!r}: choices must be sorted ascending"
                )
            for a, b in zip(grid.choices, grid.choices[1:]):
                ratio = b / a
                if ratio < MIN_EXPONENTIAL_RATIO - _RATIO_EPS:
                    violations.append(
                        f"grid {grid.name!r}: ratio {b}/{a} = {ratio:.4g} < 2"
                    )
        elif grid.kind == LINEAR:
            if len(grid.choices) > MAX_LINEAR_CHOICES:
                violations.append(
                    f"grid {grid.name!r}: {len(grid.choices)} linear choices > "
                    f"{MAX_LINEAR_CHOICES}"
                )
        else:
            raise ValueError(f"grid {grid.name!r}: unknown kind {grid.kind!r}")
    return GridValidation(not violations, tuple(violations))


def effective_ahpo(meta: SubmissionMeta) -> bool:
    """AHPO flag after folding in the implied cases.

    Augmentation that more than doubles the time per epoch counts as AHPO,
    as does any grid violation.
    """
    if meta.ahpo:
        return True
    if meta.augmentation_epoch_time_factor > MAX_AUGMENTATION_TIME_FACTOR:
        return True
    return not validate_hyperparameter_grids(meta.hyperparameter_grids).compliant


def classify_training(meta: SubmissionMeta) -> tuple[str, Optional[float]]:
    """Training division for a submission: (base, composed number).

    The base is picked by maximum epochs with inclusive bounds (plus the
    1-epoch rounding tolerance); beyond 300 epochs is Freestyle and carries
    no number. AHPO makes a 3.0 base 3.1 and adds 0.1 elsewhere; extra
    annotation types add 0.5.
    """
    ahpo = effective_ahpo(meta)
    base = None
    for name, bound in TRAINING_DIVISIONS:
        if meta.max_epochs <= bound + EPOCH_TOLERANCE:
            base = name
            break
    if base is None:
        return FREESTYLE, None
    number = float(base)
    if ahpo:
        if base == "3.0":
            base = "3.1"
            number = 3.1
        else:
            number += AHPO_MODIFIER
    if meta.uses_extra_annotation_types:
        number += EXTRA_ANNOTATION_MODIFIER
    return base, round(number, 1)


def classify_evaluation(
    test_width: int, test_height: int, tta: Optional[TtaConfig] = None
) -> str:
    """Evaluation class for a maximum test resolution.

    The smallest class whose area bound admits width*height wins; when a
    resolution exceeds a bound, it is retried with 8 pixels shaved off each
    side before falling through to the next class. TTA does not change the
    class (the caller reports the largest augmented scale); it only affects
    reporting obligations.
    """
    del tta
    area = test_width * test_height
    shaved = max(test_width - PIXEL_TOLERANCE, 0) * max(
        test_height - PIXEL_TOLERANCE, 0
    )
    for name, bound in EVALUATION_CLASSES:
        if area <= bound or shaved <= bound:
            return name
    return FREESTYLE


def classify_submission(meta: SubmissionMeta) -> ProtocolLabel:
    base, number = classify_training(meta)
    evaluation = classify_evaluation(meta.test_width, meta.test_height, meta.tta)
    return ProtocolLabel(base, number, evaluation)


def _normalize_dataset_name(name: str) -> str:
    return re.sub(r"[^0-9a-z]+", "", name.lower())


def _reported_bases(meta: SubmissionMeta) -> set:
    out = set()
    for result in meta.reported_results:
        label = result.training_label.strip()
        label = re.sub(r"(?i)^usb\s*", "", label)
        out.add(label)
    return out


def check_compatibility(meta: SubmissionMeta) -> list[Obligation]:
    """Reporting obligations a submission has not (visibly) met.

    Higher training divisions owe results at every lower one; AHPO, extra
    annotations, TTA and non-standard pre-training each owe an ablated
    counterpart. TTA additionally owes disclosure of its scale count.
    """
    base, _number = classify_training(meta)
    obligations: list[Obligation] = []
    reported = _reported_bases(meta)

    if base == FREESTYLE:
        lower = [name for name, _bound in TRAINING_DIVISIONS]
        kind = "advisory"  # no defined obligation set beyond the divisions
    else:
        all_bases = [name for name, _bound in TRAINING_DIVISIONS]
        lower = all_bases[: all_bases.index("3.0" if base == "3.1" else base)]
        kind = "required"
    for division in lower:
        if division not in reported:
            obligations.append(
                Obligation(
                    kind,
                    f"missing-division-{division}",
                    f"report a result trained within the USB {division} "
                    f"division ({dict(TRAINING_DIVISIONS)[division]:.0f} epochs)",
                )
            )

    if effective_ahpo(meta) and not any(
        not r.has_ahpo for r in meta.reported_results
    ):
        obligations.append(
            Obligation(
                "required",
                "missing-non-ahpo",
                "report a result without aggressive hyperparameter optimization",
            )
        )
    if meta.uses_extra_annotation_types and not any(
        not r.has_extra_annotations for r in meta.reported_results
    ):
        obligations.append(
            Obligation(
                "advisory",
                "missing-boxes-only",
                "report a result trained with 2D boxes only, if the "
                "algorithm allows it",
            )
        )
    if meta.tta is not None:
        if not any(not r.has_tta for r in meta.reported_results):
            obligations.append(
                Obligation(
                    "required",
                    "missing-non-tta",
                    "report a result without test-time augmentation",
                )
            )
        if meta.tta.n_scales is None:
            obligations.append(
                Obligation(
                    "required",
                    "missing-tta-scales",
                    "disclose the number of scales used by test-time "
                    "augmentation",
                )
            )
    for dataset in meta.pretrain_datasets:
        if _normalize_dataset_name(dataset) not in ALLOWED_PRETRAIN_DATASETS:
            obligations.append(
                Obligation(
                    "required",
                    f"paired-pretrain-{_normalize_dataset_name(dataset)}",
                    f"report results both with and without pre-training on "
                    f"{dataset!r}",
                )
            )
    return obligations


def parse_submission_meta(document: bytes | str | dict) -> SubmissionMeta:
    """Read a submission metadata document (JSON)."""
    if isinstance(document, (bytes, str)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ParseError("submission meta must be a JSON object")
    try:
        grids = tuple(
            HyperparameterGrid(
                name=str(g.get("name", f"grid{i}")),
                kind=str(g["kind"]),
                choices=tuple(float(c) for c in g["choices"]),
            )
            for i, g in enumerate(document.get("hyperparameter_grids", []))
        )
        tta_doc = document.get("tta")
        tta = None
        if tta_doc is not None:
            tta = TtaConfig(
                n_scales=tta_doc.get("n_scales"),
                flip=bool(tta_doc.get("flip", False)),
            )
        reported = tuple(
            ReportedResult(
                training_label=str(r["training_label"]),
                has_tta=bool(r.get("has_tta", False)),
                has_ahpo=bool(r.get("has_ahpo", False)),
                has_extra_annotations=bool(r.get("has_extra_annotations", False)),
            )
            for r in document.get("reported_results", [])
        )
        meta = SubmissionMeta(
            max_epochs=float(document["max_epochs"]),
            test_width=int(document["test_width"]),
            test_height=int(document["test_height"]),
            uses_extra_annotation_types=bool(
                document.get("uses_extra_annotation_types", False)
            ),
            ahpo=bool(document.get("ahpo", False)),
            hyperparameter_grids=grids,
            augmentation_epoch_time_factor=float(
                document.get("augmentation_epoch_time_factor", 1.0)
            ),
            tta=tta,
            pretrain_datasets=tuple(
                str(d) for d in document.get("pretrain_datasets", [])
            ),
            reported_results=reported,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad submission meta: {exc}") from exc
    if not math.isfinite(meta.max_epochs):
        raise ParseError("max_epochs must be finite")
    return meta
