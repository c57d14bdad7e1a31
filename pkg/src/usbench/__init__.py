"""Universal-scale object detection benchmark toolkit.

Scale-wise average-precision metrics (CAP/mCAP, AP50/75, AP_S/M/L, ASAP,
RSAP, KITTI-style AP), benchmark protocol classification (training
divisions, evaluation size classes, compatibility obligations) and
annotation converters, behind a CLI and a FastAPI service.
"""

__version__ = "0.1.0"

from .convert import (
    SplitSpec,
    WodFrameRecord,
    convert_manga109,
    extract_wod_f0_subset,
    manga109_split_specs,
)
from .errors import (
    BenchmarkError,
    ConfigurationError,
    GeometryError,
    IntegrityError,
    ParseError,
)
from .ingest import cap_detections_per_image, parse_dataset, parse_detections
from .matching import MatchResult, iou, iou_crowd, match_image_category
from .metrics import (
    EvalParams,
    EvalResult,
    aggregate_mcap,
    average_precision,
    evaluate_dataset,
    fill_undefined,
    kitti_style_ap,
    pr_curve,
)
from .model import (
    BBox,
    Category,
    DatasetAnnotations,
    Detection,
    GroundTruth,
    ImageInfo,
    ScalePartition,
    absolute_octaves,
    absolute_scale,
    assign_bin,
    relative_octaves,
    relative_scale,
)
from .protocol import (
    Obligation,
    ProtocolLabel,
    SubmissionMeta,
    check_compatibility,
    classify_evaluation,
    classify_submission,
    classify_training,
    validate_hyperparameter_grids,
)

__all__ = [
    "__version__",
    "BBox",
    "BenchmarkError",
    "Category",
    "ConfigurationError",
    "DatasetAnnotations",
    "Detection",
    "EvalParams",
    "EvalResult",
    "GeometryError",
    "GroundTruth",
    "ImageInfo",
    "IntegrityError",
    "MatchResult",
    "Obligation",
    "ParseError",
    "ProtocolLabel",
    "ScalePartition",
    "SplitSpec",
    "SubmissionMeta",
    "WodFrameRecord",
    "absolute_octaves",
    "absolute_scale",
    "aggregate_mcap",
    "assign_bin",
    "average_precision",
    "cap_detections_per_image",
    "check_compatibility",
    "classify_evaluation",
    "classify_submission",
    "classify_training",
    "convert_manga109",
    "evaluate_dataset",
    "extract_wod_f0_subset",
    "fill_undefined",
    "iou",
    "iou_crowd",
    "kitti_style_ap",
    "manga109_split_specs",
    "match_image_category",
    "parse_dataset",
    "parse_detections",
    "pr_curve",
    "relative_octaves",
    "relative_scale",
    "validate_hyperparameter_grids",
]
