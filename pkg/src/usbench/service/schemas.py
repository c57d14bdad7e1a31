"""Pydantic request/response models for the evaluation service.

The wire schemas mirror the file formats: COCO-style annotation documents,
flat detection lists, submission metadata, and the nested result document
written by the CLI.
"""

from __future__ import annotations

from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, Field

IdValue = Union[int, str]


class ImageInfoIn(BaseModel):
    id: IdValue
    width: float
    height: float
    file_name: Optional[str] = None


class CategoryIn(BaseModel):
    id: IdValue
    name: str


class AnnotationIn(BaseModel):
    id: IdValue
    image_id: IdValue
    category_id: IdValue
    bbox: list[float] = Field(min_length=4, max_length=4)
    area: Optional[float] = None
    iscrowd: int = 0
    ignore: int = 0


class AnnotationsDocument(BaseModel):
    dataset_id: str = ""
    images: list[ImageInfoIn]
    categories: list[CategoryIn]
    annotations: list[AnnotationIn]


class DetectionIn(BaseModel):
    image_id: IdValue
    category_id: IdValue
    bbox: list[float] = Field(min_length=4, max_length=4)
    score: float


class EvalOptions(BaseModel):
    max_dets: int = 100
    kitti: bool = False
    undefined_policy: Literal["exclude", "zero-fill"] = "exclude"
    method: Optional[str] = None
    workers: Optional[int] = None


class EvaluateRequest(BaseModel):
    annotations: AnnotationsDocument
    detections: list[DetectionIn]
    options: EvalOptions = EvalOptions()


class MetricsOut(BaseModel):
    cap: Optional[float]
    ap50: Optional[float]
    ap75: Optional[float]
    ap_small: Optional[float]
    ap_medium: Optional[float]
    ap_large: Optional[float]
    kap: Optional[float] = None


class ScaleBinOut(BaseModel):
    lower: float
    upper: Optional[float]
    ap: Optional[float]


class ScaleCurveOut(BaseModel):
    basis: str
    bins: list[ScaleBinOut]


class EvaluateResponse(BaseModel):
    schema_version: int
    dataset_id: str
    method: Optional[str]
    params: dict[str, Any]
    categories: list[CategoryIn]
    metrics: MetricsOut
    per_category_cap: dict[str, Optional[float]]
    scale_ap: dict[str, ScaleCurveOut]
    ap_tensor: dict[str, Any]
    counts: dict[str, int]


class McapRequest(BaseModel):
    caps: list[float] = Field(min_length=1)


class McapResponse(BaseModel):
    mcap: float


class GridIn(BaseModel):
    name: str = "grid"
    kind: Literal["exponential", "linear"]
    choices: list[float]


class TtaIn(BaseModel):
    n_scales: Optional[int] = None
    flip: bool = False


class ReportedResultIn(BaseModel):
    training_label: str
    has_tta: bool = False
    has_ahpo: bool = False
    has_extra_annotations: bool = False


class ClassifyRequest(BaseModel):
    max_epochs: float
    test_width: int
    test_height: int
    uses_extra_annotation_types: bool = False
    ahpo: bool = False
    hyperparameter_grids: list[GridIn] = []
    augmentation_epoch_time_factor: float = 1.0
    tta: Optional[TtaIn] = None
    pretrain_datasets: list[str] = []
    reported_results: list[ReportedResultIn] = []


class ObligationOut(BaseModel):
    kind: Literal["required", "advisory"]
    code: str
    message: str


class ClassifyResponse(BaseModel):
    label: str
    training: str
    training_base: str
    evaluation: str
    obligations: list[ObligationOut]


class GridValidationResponse(BaseModel):
    compliant: bool
    violations: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str
