"""
Regression metrics, holdout and k-fold splitting, forest grid search and the
per-district experiment that trains one model at one lag.
"""
import logging
import math
from pathlib import Path
from typing import Any, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel

from .config import settings
from .errors import ConstantTarget, DimensionMismatch, InsufficientOverlap, LengthMismatch, TooFewSamples
from .models import ENVIRONMENT_COLUMNS, ModelFamily, VariableKind
from .regressors import SPEC_TYPES, TrainedModel, fit_model
from .schemas import (
    CrossValidationScore,
    DistrictDataset,
    EvaluationReport,
    ForestSpec,
    GridCell,
    GridSpec,
    PredictionPoint,
    SplitPlan,
)
from .utils import derive_seed, write_json

logger = logging.getLogger(__name__)


# Metrics

def _pair(y: Sequence[float], y_hat: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size != y_hat.size:
        raise LengthMismatch(f"y has {y.size} values, predictions have {y_hat.size}")
    if y.size == 0:
        raise LengthMismatch("metrics need at least one sample")
    return y, y_hat


def rmse(y: Sequence[float], y_hat: Sequence[float]) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def mae(y: Sequence[float], y_hat: Sequence[float]) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def r2(y: Sequence[float], y_hat: Sequence[float]) -> float:
    """Coefficient of determination; negative when worse than predicting the mean."""
    y, y_hat = _pair(y, y_hat)
    if np.all(y == y[0]):
        raise ConstantTarget("r2 is undefined for a constant target")
    residual = y - y_hat
    centered = y - y.mean()
    return float(1.0 - np.dot(residual, residual) / np.dot(centered, centered))


# Splitting

def holdout_split(n_samples: int, seed: int, train_fraction: Optional[float] = None) -> SplitPlan:
    """Random train/test partition; the train part has round(train_fraction * M) rows."""
    train_fraction = settings.train_fraction if train_fraction is None else train_fraction
    if n_samples < settings.min_holdout_samples:
        raise TooFewSamples(
            f"holdout split needs at least {settings.min_holdout_samples} samples, got {n_samples}",
            details={"samples": n_samples},
        )
    order = np.random.default_rng(seed).permutation(n_samples)
    n_train = int(math.floor(train_fraction * n_samples + 0.5))
    return SplitPlan(
        train_indices=sorted(order[:n_train].tolist()),
        test_indices=sorted(order[n_train:].tolist()),
        seed=seed,
    )


def kfold_indices(n_samples: int, k: int, seed: int) -> List[np.ndarray]:
    """k near-equal folds of a seeded permutation; together they cover every index once."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if n_samples < k:
        raise TooFewSamples(f"{k}-fold cross-validation needs at least {k} samples, got {n_samples}")
    order = np.random.default_rng(seed).permutation(n_samples)
    return [np.sort(fold) for fold in np.array_split(order, k)]


def _family_of(spec: BaseModel) -> ModelFamily:
    for family, spec_type in SPEC_TYPES.items():
        if isinstance(spec, spec_type):
            return family
    raise TypeError(f"not a model spec: {type(spec).__name__}")


def _fold_score(X: np.ndarray, y: np.ndarray, test: np.ndarray, spec: BaseModel) -> Optional[float]:
    train = np.setdiff1d(np.arange(y.size), test)
    model = fit_model(_family_of(spec), X[train], y[train], spec)
    try:
        return r2(y[test], model.predict(X[test]))
    except ConstantTarget:
        return None


def kfold_cv(
    X: Any,
    y: Any,
    spec: BaseModel,
    k: Optional[int] = None,
    seed: int = 0,
    jobs: int = 1,
) -> CrossValidationScore:
    """Mean and population deviation of held-out r2 over k folds.

    Folds whose held-out targets are constant have no r2 and are skipped.
    """
    k = settings.cv_folds if k is None else k
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    folds = kfold_indices(y.size, k, seed)
    scores = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_fold_score)(X, y, fold, spec) for fold in folds
    )
    skipped = [i for i, score in enumerate(scores) if score is None]
    kept = [score for score in scores if score is not None]
    if not kept:
        raise ConstantTarget(f"r2 is undefined on all {k} folds")
    if skipped:
        logger.warning(f"Skipped folds with constant held-out targets: {skipped}")
    return CrossValidationScore(
        mean=float(np.mean(kept)),
        std=float(np.std(kept)),
        fold_scores=kept,
        skipped_folds=skipped,
    )


def _grid_cell(
    X: np.ndarray,
    y: np.ndarray,
    base: ForestSpec,
    n_estimators: int,
    max_depth: int,
    k: int,
    seed: int,
) -> GridCell:
    spec = base.model_copy(update={"n_estimators": n_estimators, "max_depth": max_depth})
    try:
        score = kfold_cv(X, y, spec, k=k, seed=seed)
    except ConstantTarget:
        return GridCell(n_estimators=n_estimators, max_depth=max_depth)
    return GridCell(n_estimators=n_estimators, max_depth=max_depth, cv_mean=score.mean, cv_std=score.std)


def grid_search(
    X: Any,
    y: Any,
    grid: Optional[GridSpec] = None,
    k: Optional[int] = None,
    seed: int = 0,
    base: Optional[ForestSpec] = None,
    jobs: int = 1,
) -> Tuple[ForestSpec, List[GridCell]]:
    """Score every (n_estimators, max_depth) forest by k-fold r2 and pick the best.

    All cells share the same folds. Ties go to fewer trees, then to the shallower
    depth; cells without a defined score rank last.
    """
    grid = grid or GridSpec()
    base = base or ForestSpec()
    k = settings.cv_folds if k is None else k
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    cells = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_grid_cell)(X, y, base, n_estimators, max_depth, k, seed)
        for n_estimators, max_depth in grid.cells()
    )

    def rank_key(cell: GridCell) -> tuple:
        score = cell.cv_mean if cell.cv_mean is not None else -math.inf
        return (-score, cell.n_estimators, cell.max_depth)

    best = min(cells, key=rank_key)
    logger.info(
        f"Grid search over {len(cells)} cells: best n_estimators={best.n_estimators}, "
        f"max_depth={best.max_depth}, cv_mean={best.cv_mean}"
    )
    return base.model_copy(update={"n_estimators": best.n_estimators, "max_depth": best.max_depth}), cells


# Experiments

class DesignMatrix(NamedTuple):
    X: np.ndarray
    y: np.ndarray
    dates: List[Any]
    feature_names: List[str]


def build_design_matrix(
    ds: DistrictDataset,
    lag_days: int,
    min_overlap: Optional[int] = None,
    variables: Optional[Sequence[VariableKind]] = None,
) -> DesignMatrix:
    """Environmental medians at day d against new cases at day d + lag_days."""
    if lag_days < 0:
        raise ValueError("lag_days must be non-negative")
    min_overlap = settings.min_overlap if min_overlap is None else min_overlap
    chosen = set(variables if variables is not None else ds.variables)
    features = [column for column in ENVIRONMENT_COLUMNS if VariableKind(column) in chosen]
    if not features:
        raise DimensionMismatch(f"{ds.district_id}: no environmental variables to train on")

    env = ds.frame[features].dropna()
    cases = ds.frame["new_cases"].dropna()
    shifted = pd.Series(cases.to_numpy(dtype=float), index=cases.index - pd.Timedelta(days=lag_days), name="target")
    joined = env.join(shifted, how="inner").sort_index()
    if len(joined) < min_overlap:
        raise InsufficientOverlap(
            f"{ds.district_id} at lag {lag_days}: {len(joined)} rows < {min_overlap}",
            details={"rows": len(joined), "lag": lag_days},
        )
    return DesignMatrix(
        X=joined[features].to_numpy(dtype=float),
        y=joined["target"].to_numpy(dtype=float),
        dates=[ts.date() for ts in joined.index],
        feature_names=features,
    )


def run_experiment(
    ds: DistrictDataset,
    lag_days: int,
    family: ModelFamily,
    spec: Optional[BaseModel] = None,
    seed: int = 0,
    k: Optional[int] = None,
    tune: bool = False,
    grid: Optional[GridSpec] = None,
    min_overlap: Optional[int] = None,
    jobs: int = 1,
) -> Tuple[EvaluationReport, TrainedModel]:
    """Holdout-train one model at one lag and score it on the test split and by k-fold CV.

    With ``tune`` the forest is first grid-searched by cross-validation over the whole
    design matrix, and the selected spec is used for the holdout fit.
    """
    family = ModelFamily(family)
    spec = spec if spec is not None else SPEC_TYPES[family]()
    k = settings.cv_folds if k is None else k
    dm = build_design_matrix(ds, lag_days, min_overlap=min_overlap)
    cv_seed = derive_seed(seed, "cv")

    cells: Optional[List[GridCell]] = None
    if tune:
        if family == ModelFamily.FOREST:
            spec, cells = grid_search(dm.X, dm.y, grid=grid, k=k, seed=cv_seed, base=spec, jobs=jobs)
        else:
            logger.warning(f"Grid search is only defined for forests; training {family.value} with its spec as given")

    plan = holdout_split(len(dm.y), derive_seed(seed, "holdout"))
    train, test = np.asarray(plan.train_indices), np.asarray(plan.test_indices)
    model = fit_model(family, dm.X[train], dm.y[train], spec, feature_names=dm.feature_names, jobs=jobs)
    predicted = model.predict(dm.X)
    cv = kfold_cv(dm.X, dm.y, spec, k=k, seed=cv_seed, jobs=jobs)

    split = np.full(len(dm.y), "train", dtype=object)
    split[test] = "test"
    per_sample = [
        PredictionPoint(date=day, split=part, observed=float(obs), predicted=float(pred))
        for day, part, obs, pred in zip(dm.dates, split, dm.y, predicted)
    ]
    report = EvaluationReport(
        district_id=ds.district_id,
        model_id=family,
        lag_days=lag_days,
        seed=seed,
        spec=spec.model_dump(mode="json"),
        feature_names=dm.feature_names,
        n_train=len(train),
        n_test=len(test),
        rmse=rmse(dm.y[test], predicted[test]),
        mae=mae(dm.y[test], predicted[test]),
        r2=r2(dm.y[test], predicted[test]),
        cv_mean=cv.mean,
        cv_std=cv.std,
        cv_folds=cv.fold_scores,
        grid=cells,
        per_sample=per_sample,
    )
    logger.info(
        f"{ds.district_id} {family.value} lag {lag_days}: r2={report.r2:.3f} rmse={report.rmse:.2f} "
        f"mae={report.mae:.2f} cv={report.cv_mean:.3f}±{report.cv_std:.3f}"
    )
    return report, model


def write_report_json(report: EvaluationReport, path: Union[str, Path]) -> Path:
    return write_json(path, report.model_dump(mode="json"))


def write_predictions_csv(report: EvaluationReport, path: Union[str, Path]) -> Path:
    """Per-sample observed and predicted cases for a predicted-vs-observed chart."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [point.model_dump(mode="json") for point in report.per_sample],
        columns=["date", "split", "observed", "predicted"],
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    return path
