"""
Synthetic districts with planted environment-to-case delays, plus brute-force
oracles used to cross-check the correlation and tree code.
"""
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConstantInput, LengthMismatch
from .models import ENVIRONMENT_COLUMNS, VariableKind
from .schemas import DistrictDataset, SourceDescriptor, SyntheticSpec

logger = logging.getLogger(__name__)

# (level, scale) of each variable in its own unit.
_VARIABLE_SCALES: Dict[VariableKind, Tuple[float, float]] = {
    VariableKind.HUMIDITY_MEDIAN: (65.0, 8.0),
    VariableKind.NO2_MEDIAN: (25.0, 5.0),
    VariableKind.O3_MEDIAN: (30.0, 6.0),
    VariableKind.PM10_MEDIAN: (35.0, 7.0),
    VariableKind.PM25_MEDIAN: (30.0, 6.0),
    VariableKind.SO2_MEDIAN: (4.0, 0.8),
    VariableKind.TEMP_MEDIAN: (14.0, 6.0),
}

_CASE_LEVEL = 300.0
_CASE_SCALE = 80.0


def _latent_series(n: int, rng: np.random.Generator) -> np.ndarray:
    """Yearly sinusoid plus a weekly ripple plus white noise, starting at a random phase."""
    t = np.arange(n)
    yearly, weekly = rng.uniform(0.0, 2.0 * np.pi, size=2)
    return (
        np.sin(2.0 * np.pi * t / 365.0 + yearly)
        + 0.25 * np.sin(2.0 * np.pi * t / 7.0 + weekly)
        + rng.standard_normal(n)
    )


def generate(spec: SyntheticSpec) -> DistrictDataset:
    """Build a complete district whose new cases follow the planted variables.

    Day ``d`` cases are ``300 + 80 * s(d) / sd(s)``, rounded and floored at 0, where
    ``s(d) = sum(sign * weight * z_v(d - lag_v)) + noise``. The latent series start
    ``max(lag)`` days early so that every day has its lagged driver. The result has
    no missing or negative values and so passes ``clean`` unchanged.
    """
    rng = np.random.default_rng(spec.seed)
    burn_in = max(variable.planted_lag for variable in spec.variables)
    total_days = spec.n_days + burn_in

    latent = {kind: _latent_series(total_days, rng) for kind in VariableKind}
    signal = spec.noise_sd * rng.standard_normal(spec.n_days)
    for variable in spec.variables:
        start = burn_in - variable.planted_lag
        driver = latent[variable.kind][start:start + spec.n_days]
        signal = signal + variable.link.sign * variable.effect_weight * driver

    scale = float(np.std(signal))
    normalized = (signal - signal.mean()) / scale if scale > 0 else np.zeros(spec.n_days)
    new_cases = np.maximum(0, np.rint(_CASE_LEVEL + _CASE_SCALE * normalized)).astype(np.int64)

    dates = pd.date_range(spec.start_date, periods=spec.n_days, freq="D")
    frame = pd.DataFrame(index=pd.DatetimeIndex(dates.to_numpy(), name="date"))
    for kind in VariableKind:
        level, spread = _VARIABLE_SCALES[kind]
        values = np.round(level + spread * latent[kind][burn_in:], 2)
        if kind != VariableKind.TEMP_MEDIAN:
            values = np.maximum(values, 0.0)
        frame[kind.value] = values
    frame["total_cases"] = pd.array(np.cumsum(new_cases), dtype="Int64")
    frame["new_cases"] = pd.array(new_cases, dtype="Int64")

    planted = ", ".join(f"{v.kind.value}@{v.planted_lag}" for v in spec.variables)
    logger.info(f"Generated synthetic district {spec.district_id}: {spec.n_days} days, planted {planted}")
    return DistrictDataset(
        district_id=spec.district_id,
        variables=list(VariableKind),
        frame=frame[ENVIRONMENT_COLUMNS + ["total_cases", "new_cases"]],
        provenance=[SourceDescriptor(kind="synthetic", location=f"synthetic:seed={spec.seed}")],
    )


# Oracles

def _oracle_ranks(values: np.ndarray) -> np.ndarray:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = np.empty(len(values))
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        # Positions i..j are tied and share the mean of ranks i+1..j+1.
        for position in range(i, j + 1):
            ranks[order[position]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def oracle_spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's coefficient from sort-based ranks.

    Without ties the closed form ``1 - 6 * sum(d^2) / (n * (n^2 - 1))`` is used;
    with ties, the Pearson coefficient of the ranks.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise LengthMismatch(f"x has {x.size} values, y has {y.size}")
    if x.size < 3:
        raise LengthMismatch(f"at least 3 paired values are required, got {x.size}")
    for name, values in (("x", x), ("y", y)):
        if len(set(values.tolist())) == 1:
            raise ConstantInput(f"{name} is constant")

    rx, ry = _oracle_ranks(x), _oracle_ranks(y)
    n = x.size
    tie_free = len(set(x.tolist())) == n and len(set(y.tolist())) == n
    if tie_free:
        d = rx - ry
        return float(1.0 - 6.0 * np.sum(d * d) / (n * (n * n - 1.0)))
    dx, dy = rx - rx.mean(), ry - ry.mean()
    return float(np.sum(dx * dy) / np.sqrt(np.sum(dx * dx) * np.sum(dy * dy)))


def oracle_best_split(x: Sequence[float], y: Sequence[float]) -> Tuple[Optional[float], float]:
    """Exhaustive single split of one feature.

    Tries every midpoint between consecutive distinct values and returns the
    threshold with the smallest total squared error (the lowest such threshold on
    ties). Returns ``(None, root_sse)`` when no split lowers the error.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size > 64:
        raise ValueError("oracle_best_split is limited to 64 samples")

    def sse(values: np.ndarray) -> float:
        return float(np.sum((values - values.mean()) ** 2)) if values.size else 0.0

    root = sse(y)
    best_threshold, best_sse = None, root
    distinct = sorted(set(x.tolist()))
    for lo, hi in zip(distinct, distinct[1:]):
        threshold = (lo + hi) / 2.0
        if not lo <= threshold < hi:
            threshold = lo
        total = sse(y[x <= threshold]) + sse(y[x > threshold])
        if total < best_sse and root - total > 1e-12 * root:
            best_threshold, best_sse = threshold, total
    return best_threshold, best_sse


def oracle_permutation_p(
    x: Sequence[float],
    y: Sequence[float],
    n_permutations: int = 2000,
    seed: int = 0,
) -> float:
    """Two-sided Monte-Carlo p-value of Spearman's coefficient under random pairing."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    observed = abs(oracle_spearman(x, y))
    rx, ry = _oracle_ranks(x), _oracle_ranks(y)
    dx = rx - rx.mean()
    norm = np.sqrt(np.sum(dx * dx) * np.sum((ry - ry.mean()) ** 2))

    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(n_permutations):
        permuted = rng.permutation(ry)
        r = np.sum(dx * (permuted - permuted.mean())) / norm
        if abs(r) >= observed - 1e-12:
            exceed += 1
    return (exceed + 1) / (n_permutations + 1)
