"""
Pearson and Spearman coefficients, lagged correlation sweeps, peak detection and
strength classification.

Lags are calendar based: the environmental value of day ``d`` is paired with the new
cases of day ``d + lag``. Rows removed by cleaning therefore never shift other days.
"""
import logging
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from .config import settings
from .errors import (
    ConfigError,
    ConstantInput,
    DegenerateSample,
    InsufficientOverlap,
    LengthMismatch,
    NoValidLag,
)
from .models import CorrelationMethod, CurveStatus, StrengthClass, VariableKind
from .schemas import CorrelationResult, CurveSummary, DistrictDataset, LagCorrelationCurve
from .utils import write_json

logger = logging.getLogger(__name__)

# Fewest aligned pairs a correlation is computed from.
MIN_PAIRS = 3


def _as_vector(values: Sequence[float], name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    if array.ndim != 1:
        raise ValueError(f"{name} must be a one-dimensional vector")
    if np.isnan(array).any():
        raise ValueError(f"{name} contains missing values")
    return array


def _pair(x: Sequence[float], y: Sequence[float], min_n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, y = _as_vector(x, "x"), _as_vector(y, "y")
    if x.size != y.size:
        raise LengthMismatch(f"x has {x.size} values, y has {y.size}")
    if x.size < min_n:
        raise LengthMismatch(f"at least {min_n} paired values are required, got {x.size}")
    for name, vector in (("x", x), ("y", y)):
        if np.all(vector == vector[0]):
            raise ConstantInput(f"{name} is constant")
    return x, y


def rank(values: Sequence[float]) -> np.ndarray:
    """Ranks in [1, n]; ties receive the average of the ranks they span."""
    array = _as_vector(values, "values")
    if array.size == 0:
        raise ValueError("cannot rank an empty vector")
    return stats.rankdata(array, method="average")


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation coefficient."""
    x, y = _pair(x, y, min_n=2)
    dx = x - x.mean()
    dy = y - y.mean()
    r = np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    return float(np.clip(r, -1.0, 1.0))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's coefficient: Pearson on average ranks."""
    x, y = _pair(x, y, min_n=3)
    return pearson(rank(x), rank(y))


def spearman_p(r: float, n: int) -> float:
    """Two-sided p-value from the t approximation with n - 2 degrees of freedom."""
    if n < 4 or abs(r) >= 1.0:
        raise DegenerateSample(f"p-value undefined for r={r}, n={n}", details={"r": r, "n": n})
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), df=n - 2)))


def classify_strength(r: float) -> StrengthClass:
    magnitude = abs(r)
    if magnitude > 1.0 + 1e-12:
        raise ValueError(f"|r| must not exceed 1, got {r}")
    if magnitude < settings.weak_threshold:
        return StrengthClass.VERY_WEAK
    if magnitude < settings.moderate_threshold:
        return StrengthClass.WEAK
    if magnitude < settings.strong_threshold:
        return StrengthClass.MODERATE
    return StrengthClass.STRONG


def _resolve_min_overlap(min_overlap: Optional[int]) -> int:
    min_overlap = settings.min_overlap if min_overlap is None else min_overlap
    if min_overlap < MIN_PAIRS:
        raise ConfigError(
            f"min_overlap must be at least {MIN_PAIRS}, got {min_overlap}",
            details={"min_overlap": min_overlap},
        )
    return min_overlap


def _series(ds: DistrictDataset, v: VariableKind) -> Tuple[pd.Series, pd.Series]:
    return ds.frame[v.value].dropna(), ds.frame["new_cases"].dropna().astype(float)


def _align(env: pd.Series, cases: pd.Series, lag_days: int) -> pd.DataFrame:
    shifted = pd.Series(cases.to_numpy(dtype=float), index=cases.index - pd.Timedelta(days=lag_days))
    joined = pd.concat([env.rename("x"), shifted.rename("y")], axis=1, join="inner")
    return joined.sort_index()


def lag_align(
    ds: DistrictDataset,
    v: VariableKind,
    lag_days: int,
    min_overlap: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Pair env(d) with new_cases(d + lag_days) over every date where both exist."""
    if lag_days < 0:
        raise ValueError("lag_days must be non-negative")
    min_overlap = settings.min_overlap if min_overlap is None else min_overlap
    env, cases = _series(ds, v)
    joined = _align(env, cases, lag_days)
    if len(joined) < min_overlap:
        raise InsufficientOverlap(
            f"{ds.district_id}/{v.value} at lag {lag_days}: {len(joined)} pairs < {min_overlap}",
            details={"pairs": len(joined), "lag": lag_days},
        )
    return joined["x"].to_numpy(dtype=float), joined["y"].to_numpy(dtype=float)


def correlate(
    x: Sequence[float],
    y: Sequence[float],
    lag: int = 0,
    method: CorrelationMethod = CorrelationMethod.SPEARMAN,
) -> CorrelationResult:
    """Coefficient and p-value for one aligned pair of vectors."""
    n = len(x)
    if n < MIN_PAIRS:
        raise LengthMismatch(f"at least {MIN_PAIRS} paired values are required, got {n}")
    r = spearman(x, y) if method == CorrelationMethod.SPEARMAN else pearson(x, y)
    try:
        p_value, degenerate = spearman_p(r, n), False
    except DegenerateSample as e:
        p_value, degenerate = e.p_value, True
    return CorrelationResult(lag=lag, r=r, p_value=p_value, n=n, degenerate=degenerate)


def lag_sweep(
    ds: DistrictDataset,
    v: VariableKind,
    max_lag: Optional[int] = None,
    min_overlap: Optional[int] = None,
    method: CorrelationMethod = CorrelationMethod.SPEARMAN,
) -> LagCorrelationCurve:
    """Correlate ``v`` against new cases for every lag in 0..max_lag and locate the peak."""
    max_lag = settings.max_lag if max_lag is None else max_lag
    min_overlap = _resolve_min_overlap(min_overlap)
    method = CorrelationMethod(method)
    env, cases = _series(ds, v)

    points: List[CorrelationResult] = []
    absent: List[int] = []
    for lag in range(max_lag + 1):
        joined = _align(env, cases, lag)
        if len(joined) < min_overlap:
            absent.append(lag)
            continue
        try:
            points.append(correlate(joined["x"].to_numpy(), joined["y"].to_numpy(), lag=lag, method=method))
        except ConstantInput:
            absent.append(lag)

    if not points:
        raise NoValidLag(f"{ds.district_id}/{v.value}: no lag in 0..{max_lag} could be scored")

    # First maximum wins, so ties resolve to the shortest lag.
    peak = points[int(np.argmax([abs(point.r) for point in points]))]
    logger.info(f"{ds.district_id}/{v.value}: peak at lag {peak.lag} with r={peak.r:.4f}")
    return LagCorrelationCurve(
        district_id=ds.district_id,
        variable=v,
        method=method,
        max_lag=max_lag,
        min_overlap=min_overlap,
        points=points,
        absent_lags=absent,
        peak_lag=peak.lag,
        peak_r=peak.r,
        peak_p=peak.p_value,
        strength=classify_strength(peak.r),
    )


class SweepOutcome(NamedTuple):
    summary: CurveSummary
    curve: Optional[LagCorrelationCurve]


def _sweep_one(
    ds: DistrictDataset,
    v: VariableKind,
    max_lag: Optional[int],
    min_overlap: Optional[int],
    method: CorrelationMethod,
) -> SweepOutcome:
    if v not in ds.variables:
        return SweepOutcome(
            CurveSummary(district_id=ds.district_id, variable=v, status=CurveStatus.ABSENT,
                         message="variable not in dataset schema"),
            None,
        )
    try:
        curve = lag_sweep(ds, v, max_lag=max_lag, min_overlap=min_overlap, method=method)
    except NoValidLag as e:
        logger.warning(str(e))
        return SweepOutcome(
            CurveSummary(district_id=ds.district_id, variable=v, status=CurveStatus.NO_VALID_LAG, message=e.message),
            None,
        )
    return SweepOutcome(
        CurveSummary(
            district_id=ds.district_id,
            variable=v,
            status=CurveStatus.OK,
            peak_lag=curve.peak_lag,
            peak_r=curve.peak_r,
            p_value=curve.peak_p,
            strength=curve.strength,
        ),
        curve,
    )


def sweep_variables(
    ds: DistrictDataset,
    variables: Optional[Iterable[VariableKind]] = None,
    max_lag: Optional[int] = None,
    min_overlap: Optional[int] = None,
    method: CorrelationMethod = CorrelationMethod.SPEARMAN,
    jobs: int = 1,
) -> List[SweepOutcome]:
    """Sweep several variables; results keep the order of ``variables``."""
    variables = list(variables) if variables is not None else list(VariableKind)
    return Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_sweep_one)(ds, v, max_lag, min_overlap, CorrelationMethod(method)) for v in variables
    )


def select_training_lags(curves: Iterable[Union[LagCorrelationCurve, CurveSummary]]) -> List[int]:
    """The temperature peak lag and the strongest pollutant peak lag.

    Accepts curves or summary rows; rows without a peak are ignored.
    """
    curves = [curve for curve in curves if curve.peak_lag is not None]
    lags = set()
    for curve in curves:
        if curve.variable == VariableKind.TEMP_MEDIAN:
            lags.add(curve.peak_lag)
    pollutants = [curve for curve in curves if curve.variable.is_pollutant]
    if pollutants:
        strongest = max(pollutants, key=lambda curve: (abs(curve.peak_r), -curve.peak_lag))
        lags.add(strongest.peak_lag)
    return sorted(lags)


def curve_frame(curve: LagCorrelationCurve) -> pd.DataFrame:
    """One row per lag in 0..max_lag; unscored lags have empty r, p and n."""
    by_lag = {point.lag: point for point in curve.points}
    rows = []
    for lag in curve.lags:
        point = by_lag.get(lag)
        rows.append({
            "variable": curve.variable.value,
            "lag": lag,
            "r": point.r if point else None,
            "p": point.p_value if point else None,
            "n": point.n if point else None,
        })
    frame = pd.DataFrame(rows, columns=["variable", "lag", "r", "p", "n"])
    frame["n"] = frame["n"].astype("Int64")
    return frame


def write_curve_csv(curve: LagCorrelationCurve, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    curve_frame(curve).to_csv(path, index=False, lineterminator="\n")
    return path


def write_curve_json(curve: LagCorrelationCurve, path: Union[str, Path]) -> Path:
    payload = curve.model_dump(mode="json")
    payload["unit"] = curve.variable.unit
    payload["peak"] = {
        "lag": curve.peak_lag,
        "r": curve.peak_r,
        "p_value": curve.peak_p,
        "n": curve.peak.n,
        "strength": curve.strength.value,
    }
    return write_json(path, payload)


def write_summary_csv(summaries: Iterable[CurveSummary], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [summary.model_dump(mode="json") for summary in summaries],
        columns=["district_id", "variable", "status", "peak_lag", "peak_r", "p_value", "strength", "message"],
    )
    frame["peak_lag"] = frame["peak_lag"].astype("Int64")
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def read_summary_csv(path: Union[str, Path]) -> List[CurveSummary]:
    frame = pd.read_csv(path, dtype={"peak_lag": "Int64"}, float_precision="round_trip", keep_default_na=True)
    summaries = []
    for record in frame.to_dict(orient="records"):
        values = {}
        for key, value in record.items():
            if pd.isna(value):
                values[key] = None
            else:
                values[key] = value.item() if isinstance(value, np.generic) else value
        summaries.append(CurveSummary(**values))
    return summaries
