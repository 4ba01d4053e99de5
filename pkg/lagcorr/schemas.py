"""
Pydantic schemas for datasets, correlation curves, model specs and reports.
"""
from datetime import date, datetime
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from .models import (
    Activation,
    CorrelationMethod,
    CurveStatus,
    DATASET_COLUMNS,
    ENVIRONMENT_COLUMNS,
    Link,
    ModelFamily,
    StrengthClass,
    VariableKind,
)


# Dataset schemas
class SourceDescriptor(BaseModel):
    kind: str  # "file", "url" or "synthetic"
    location: str
    sha256: Optional[str] = None
    retrieved_at: Optional[datetime] = None


class DailyRecord(BaseModel):
    date: date
    env: Dict[VariableKind, float] = Field(default_factory=dict)
    total_cases: Optional[int] = Field(default=None, ge=0)
    new_cases: Optional[int] = None


class DistrictDataset(BaseModel):
    """Date-indexed rows for one district.

    ``frame`` has a ``DatetimeIndex`` named ``date`` and exactly the Table 1 columns:
    the seven environmental medians (float, NaN = missing) followed by ``total_cases``
    and ``new_cases`` (nullable ``Int64``). ``variables`` is the declared schema that
    cleaning treats as required.
    """

    district_id: str
    variables: List[VariableKind]
    frame: Any
    provenance: List[SourceDescriptor] = Field(default_factory=list)

    model_config = {"arbitrary_types_allowed": True}

    @field_validator("frame")
    @classmethod
    def _check_frame(cls, frame: Any) -> pd.DataFrame:
        if not isinstance(frame, pd.DataFrame):
            raise TypeError("frame must be a pandas DataFrame")
        if not isinstance(frame.index, pd.DatetimeIndex):
            raise ValueError("frame must be indexed by date")
        if list(frame.columns) != DATASET_COLUMNS[1:]:
            raise ValueError(f"frame columns must be {DATASET_COLUMNS[1:]}, got {list(frame.columns)}")
        if len(frame) > 1 and not frame.index.is_monotonic_increasing:
            raise ValueError("dates must be sorted ascending")
        if frame.index.has_duplicates:
            raise ValueError("dates must be unique")
        return frame

    @property
    def dates(self) -> List[date]:
        return [ts.date() for ts in self.frame.index]

    @property
    def records(self) -> List[DailyRecord]:
        """Row-wise view; missing values are omitted from ``env`` and become None."""
        rows = []
        for ts, row in self.frame.iterrows():
            env = {
                VariableKind(col): float(row[col])
                for col in ENVIRONMENT_COLUMNS
                if pd.notna(row[col])
            }
            rows.append(DailyRecord(
                date=ts.date(),
                env=env,
                total_cases=None if pd.isna(row["total_cases"]) else int(row["total_cases"]),
                new_cases=None if pd.isna(row["new_cases"]) else int(row["new_cases"]),
            ))
        return rows

    def __len__(self) -> int:
        return len(self.frame)

    def with_frame(self, frame: pd.DataFrame) -> "DistrictDataset":
        return DistrictDataset(
            district_id=self.district_id,
            variables=list(self.variables),
            frame=frame,
            provenance=list(self.provenance),
        )


class CleanAudit(BaseModel):
    district_id: str
    rows_before: int
    rows_after: int
    removed: Dict[str, int]
    required_variables: List[VariableKind]
    provenance: List[SourceDescriptor] = Field(default_factory=list)


# Correlation schemas
class CorrelationResult(BaseModel):
    lag: int = Field(ge=0)
    r: float = Field(ge=-1.0, le=1.0)
    p_value: float = Field(ge=0.0, le=1.0)
    n: int = Field(ge=3)
    degenerate: bool = False


class LagCorrelationCurve(BaseModel):
    district_id: str
    variable: VariableKind
    method: CorrelationMethod = CorrelationMethod.SPEARMAN
    max_lag: int
    min_overlap: int
    points: List[CorrelationResult]
    absent_lags: List[int] = Field(default_factory=list)
    peak_lag: int
    peak_r: float
    peak_p: float
    strength: StrengthClass

    @property
    def lags(self) -> List[int]:
        return list(range(self.max_lag + 1))

    @property
    def peak(self) -> CorrelationResult:
        return next(point for point in self.points if point.lag == self.peak_lag)


class CurveSummary(BaseModel):
    district_id: str
    variable: VariableKind
    status: CurveStatus
    peak_lag: Optional[int] = None
    peak_r: Optional[float] = None
    p_value: Optional[float] = None
    strength: Optional[StrengthClass] = None
    message: Optional[str] = None


# Model specs
class TreeSpec(BaseModel):
    max_depth: Optional[int] = Field(default=6, ge=0)
    min_samples_leaf: int = Field(default=1, ge=1)

    model_config = {"extra": "forbid"}


class ForestSpec(BaseModel):
    n_estimators: int = Field(default=100, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=0)
    min_samples_leaf: int = Field(default=1, ge=1)
    max_features: Optional[int] = Field(default=None, ge=1)
    bootstrap: bool = True
    seed: int = 0

    model_config = {"extra": "forbid"}


class BoostSpec(BaseModel):
    n_estimators: int = Field(default=100, ge=0)
    learning_rate: float = Field(default=0.3, ge=0.0)
    max_depth: Optional[int] = Field(default=6, ge=0)
    l2_lambda: float = Field(default=1.0, ge=0.0)
    min_samples_leaf: int = Field(default=1, ge=1)
    subsample: float = Field(default=1.0, gt=0.0, le=1.0)
    seed: int = 0

    model_config = {"extra": "forbid"}


class MlpSpec(BaseModel):
    layer_widths: List[int] = Field(default_factory=lambda: [100, 50, 10, 1])
    activations: List[Activation] = Field(
        default_factory=lambda: [Activation.RELU, Activation.RELU, Activation.RELU, Activation.LINEAR]
    )
    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)
    standardize_target: bool = True
    seed: int = 0

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def _check_layers(self) -> "MlpSpec":
        if not self.layer_widths or any(width < 1 for width in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if len(self.layer_widths) != len(self.activations):
            raise ValueError("one activation per layer is required")
        if self.layer_widths[-1] != 1 or self.activations[-1] != Activation.LINEAR:
            raise ValueError("the output layer must be a single linear unit")
        return self


# Evaluation schemas
class SplitPlan(BaseModel):
    train_indices: List[int]
    test_indices: List[int]
    seed: int

    @model_validator(mode="after")
    def _check_partition(self) -> "SplitPlan":
        if set(self.train_indices) & set(self.test_indices):
            raise ValueError("train and test indices overlap")
        return self


class GridSpec(BaseModel):
    max_depth_values: List[int] = Field(default_factory=lambda: [3, 4, 5, 6], min_length=1)
    n_estimators_values: List[int] = Field(default_factory=lambda: [10, 50, 100, 1000], min_length=1)

    def cells(self) -> List[tuple]:
        """(n_estimators, max_depth) pairs in a fixed order."""
        return [
            (n_estimators, max_depth)
            for n_estimators in self.n_estimators_values
            for max_depth in self.max_depth_values
        ]


class CrossValidationScore(BaseModel):
    mean: float
    std: float = Field(ge=0.0)
    fold_scores: List[float]
    skipped_folds: List[int] = Field(default_factory=list)


class GridCell(BaseModel):
    n_estimators: int
    max_depth: int
    cv_mean: Optional[float] = None  # None when no fold had a defined r2
    cv_std: Optional[float] = None


class PredictionPoint(BaseModel):
    date: date
    split: str  # "train" or "test"
    observed: float
    predicted: float


class EvaluationReport(BaseModel):
    district_id: str
    model_id: ModelFamily
    lag_days: int
    seed: int
    spec: Dict[str, Any]
    feature_names: List[str]
    n_train: int
    n_test: int
    rmse: float = Field(ge=0.0)
    mae: float = Field(ge=0.0)
    r2: float = Field(le=1.0)
    cv_mean: float
    cv_std: float = Field(ge=0.0)
    cv_folds: List[float] = Field(default_factory=list)
    grid: Optional[List[GridCell]] = None
    per_sample: List[PredictionPoint] = Field(default_factory=list)


# Synthetic data
class PlantedVariable(BaseModel):
    kind: VariableKind
    planted_lag: int = Field(ge=0, le=60)
    link: Link = Link.DECREASING
    effect_weight: float = Field(default=3.0, ge=0.0)


class SyntheticSpec(BaseModel):
    district_id: str = "synthetic"
    n_days: int = Field(default=400, ge=1)
    start_date: date = date(2020, 2, 24)
    variables: List[PlantedVariable] = Field(min_length=1)
    noise_sd: float = Field(default=1.0, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_length(self) -> "SyntheticSpec":
        longest = max(variable.planted_lag for variable in self.variables)
        if self.n_days < longest + 90:
            raise ValueError(
                f"n_days={self.n_days} is too short for planted lag {longest}; "
                f"need at least {longest + 90}"
            )
        kinds = [variable.kind for variable in self.variables]
        if len(set(kinds)) != len(kinds):
            raise ValueError("each variable may be planted once")
        return self


# Run manifest
class RunManifest(BaseModel):
    command: str
    exit_code: int
    config: Dict[str, Any]
    outputs: List[str] = Field(default_factory=list)
    failures: List[Dict[str, Any]] = Field(default_factory=list)
