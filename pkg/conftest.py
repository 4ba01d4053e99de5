"""
Shared fixtures: small hand-built datasets and synthetic districts.
"""
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import pytest

from lagcorr.models import ENVIRONMENT_COLUMNS, Link, VariableKind
from lagcorr.schemas import DistrictDataset, PlantedVariable, SyntheticSpec
from lagcorr.synth import generate


def build_dataset(
    env: Dict[str, Sequence[float]],
    new_cases: Sequence[Optional[int]],
    dates: Optional[Sequence[str]] = None,
    district_id: str = "testville",
    variables: Optional[List[VariableKind]] = None,
) -> DistrictDataset:
    """Dataset from column lists; absent environmental columns are all missing."""
    n = len(new_cases)
    index = pd.DatetimeIndex(
        pd.to_datetime(list(dates)) if dates is not None else pd.date_range("2020-03-01", periods=n).to_numpy(),
        name="date",
    )
    frame = pd.DataFrame(index=index)
    for column in ENVIRONMENT_COLUMNS:
        frame[column] = np.asarray(env[column], dtype=float) if column in env else np.nan
    cases = pd.array(list(new_cases), dtype="Int64")
    frame["total_cases"] = pd.array(np.cumsum([c or 0 for c in new_cases]), dtype="Int64")
    frame["new_cases"] = cases
    if variables is None:
        variables = [VariableKind(column) for column in ENVIRONMENT_COLUMNS if column in env]
    return DistrictDataset(district_id=district_id, variables=variables, frame=frame)


@pytest.fixture
def make_dataset():
    return build_dataset


def planted_district(
    lag: int = 10,
    kind: VariableKind = VariableKind.TEMP_MEDIAN,
    link: Link = Link.DECREASING,
    weight: float = 3.0,
    seed: int = 0,
    n_days: int = 400,
) -> DistrictDataset:
    return generate(SyntheticSpec(
        n_days=n_days,
        variables=[PlantedVariable(kind=kind, planted_lag=lag, link=link, effect_weight=weight)],
        noise_sd=1.0,
        seed=seed,
    ))


@pytest.fixture
def synthetic_district() -> DistrictDataset:
    return planted_district()
