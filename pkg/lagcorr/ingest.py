"""
Parse, merge and clean the environmental and case-count sources into per-district
daily datasets.
"""
import io
import json
import logging
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import BinaryIO, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import httpx
import numpy as np
import pandas as pd

from .config import settings
from .errors import (
    DistrictNotFound,
    EmptyAfterClean,
    EmptyInput,
    HttpStatusError,
    MalformedCsv,
    NetworkError,
    SourceNotFound,
)
from .models import DATASET_COLUMNS, ENVIRONMENT_COLUMNS, VariableKind
from .schemas import CleanAudit, DistrictDataset, SourceDescriptor
from .utils import is_url, parse_date, sha256_bytes, write_json

logger = logging.getLogger(__name__)

ByteSource = Union[bytes, BinaryIO]

# Removal reasons, in the order a row is attributed to them.
REMOVAL_REASONS = ("missing_new_cases", "negative_new_cases", "missing_environment")


@lru_cache(maxsize=1)
def load_aliases() -> Dict[str, object]:
    """Header normalization table shipped in ``lagcorr/data``."""
    text = resources.files("lagcorr").joinpath("data/column_aliases.json").read_text(encoding="utf-8")
    return json.loads(text)


def _normalize_header(name: str) -> str:
    return str(name).strip().lower().replace(" ", "_").replace("-", "_")


def _find_column(columns: Iterable[str], role: str) -> Optional[str]:
    aliases = load_aliases()[role]
    for column in columns:
        if _normalize_header(column) in aliases:
            return column
    return None


def district_names(district_id: str) -> FrozenSet[str]:
    """Casefolded names a district may carry in a source file.

    Air-quality exports use English city names ("Milan") while the Civil Protection
    file uses Italian names and province abbreviations ("Milano", "MI").
    """
    wanted = district_id.strip().casefold()
    for group in load_aliases()["districts"]:
        if wanted in group:
            return frozenset(group)
    return frozenset([wanted])


def environment_kind(name: str) -> Optional[VariableKind]:
    """Map a header or species name onto a VariableKind, or None if unknown."""
    normalized = _normalize_header(name)
    for kind, aliases in load_aliases()["environment"].items():
        if normalized in aliases:
            return VariableKind(kind)
    return None


def _read_bytes(stream: ByteSource) -> bytes:
    return stream if isinstance(stream, (bytes, bytearray)) else stream.read()


def _read_csv(stream: ByteSource) -> pd.DataFrame:
    data = _read_bytes(stream)
    if not data or not data.strip():
        raise EmptyInput("CSV input is empty")
    # The air-quality platform prefixes its exports with "#" comment lines.
    lines = data.splitlines(keepends=True)
    while lines and lines[0].lstrip().startswith(b"#"):
        lines.pop(0)
    try:
        frame = pd.read_csv(
            io.BytesIO(b"".join(lines)),
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            encoding="utf-8-sig",
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyInput("CSV input has no header") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise MalformedCsv(f"CSV could not be parsed: {e}") from e
    if frame.empty:
        raise EmptyInput("CSV input has a header but no data rows")
    frame.columns = [str(column).strip() for column in frame.columns]
    return frame


def _parse_dates(values: pd.Series) -> pd.DatetimeIndex:
    parsed = []
    for row_number, value in enumerate(values, start=2):
        try:
            parsed.append(parse_date(value))
        except (ValueError, OverflowError) as e:
            raise MalformedCsv(f"Unparseable date {value!r} on line {row_number}") from e
    return pd.DatetimeIndex(pd.to_datetime(parsed), name="date")


def _check_unique(index: pd.DatetimeIndex, what: str) -> None:
    duplicated = index[index.duplicated()]
    if len(duplicated):
        raise MalformedCsv(
            f"Duplicate dates in {what}: {', '.join(d.date().isoformat() for d in duplicated[:5])}"
        )


def parse_environment_csv(stream: ByteSource, district_id: str) -> pd.DataFrame:
    """Parse an environmental CSV into a date-indexed table of Table 1 medians.

    Both the wide layout (one column per variable) and the long layout of the
    air-quality platform (``Date, City, Specie, ..., median``) are accepted.
    Unparseable numeric cells become NaN.
    """
    frame = _read_csv(stream)
    date_column = _find_column(frame.columns, "date")
    if date_column is None:
        raise MalformedCsv(f"No date column in environmental CSV for {district_id}")

    specie_column = _find_column(frame.columns, "specie")
    median_column = _find_column(frame.columns, "median")
    if specie_column and median_column:
        table = _pivot_long_environment(frame, district_id, date_column, specie_column, median_column)
    else:
        table = _wide_environment(frame, date_column)

    table = table.sort_index()
    logger.info(
        f"Parsed environmental data for {district_id}: {len(table)} days, "
        f"variables {list(table.columns)}"
    )
    return table


def _wide_environment(frame: pd.DataFrame, date_column: str) -> pd.DataFrame:
    index = _parse_dates(frame[date_column])
    _check_unique(index, "environmental CSV")
    columns = {}
    for column in frame.columns:
        kind = environment_kind(column)
        if kind is not None and kind.value not in columns:
            columns[kind.value] = pd.to_numeric(frame[column].str.strip(), errors="coerce").to_numpy(dtype=float)
    ordered = [name for name in ENVIRONMENT_COLUMNS if name in columns]
    return pd.DataFrame({name: columns[name] for name in ordered}, index=index)


def _pivot_long_environment(
    frame: pd.DataFrame,
    district_id: str,
    date_column: str,
    specie_column: str,
    median_column: str,
) -> pd.DataFrame:
    city_column = next((c for c in frame.columns if _normalize_header(c) == "city"), None)
    if city_column is not None:
        frame = frame[frame[city_column].str.strip().str.casefold().isin(district_names(district_id))]
        if frame.empty:
            raise DistrictNotFound(f"District {district_id!r} not found in environmental CSV")

    kinds = frame[specie_column].map(environment_kind)
    frame = frame[kinds.notna()].assign(kind=kinds[kinds.notna()].map(lambda kind: kind.value))
    index = _parse_dates(frame[date_column])
    long = pd.DataFrame({
        "date": index,
        "kind": frame["kind"].to_numpy(),
        "value": pd.to_numeric(frame[median_column].str.strip(), errors="coerce").to_numpy(dtype=float),
    })
    if long.duplicated(["date", "kind"]).any():
        raise MalformedCsv(f"Duplicate (date, species) rows in environmental CSV for {district_id}")
    table = long.pivot(index="date", columns="kind", values="value")
    ordered = [name for name in ENVIRONMENT_COLUMNS if name in table.columns]
    table = table[ordered]
    table.columns.name = None
    table.index.name = "date"
    return table


def parse_cases_csv(stream: ByteSource, district_id: str) -> pd.Series:
    """Extract the cumulative case series of one district from a (national) CSV."""
    frame = _read_csv(stream)
    date_column = _find_column(frame.columns, "date")
    total_column = _find_column(frame.columns, "total_cases")
    if date_column is None or total_column is None:
        raise MalformedCsv("Cases CSV needs a date and a cumulative total-cases column")

    district_columns = [
        column
        for role in ("district_name", "district_abbreviation", "district_code")
        if (column := _find_column(frame.columns, role)) is not None
    ]
    if not district_columns:
        raise MalformedCsv("Cases CSV has no district identifier column")

    wanted = district_names(district_id)
    mask = np.zeros(len(frame), dtype=bool)
    for column in district_columns:
        mask |= frame[column].str.strip().str.casefold().isin(wanted).to_numpy()
    rows = frame[mask]
    if rows.empty:
        raise DistrictNotFound(f"District {district_id!r} not found in cases CSV")

    totals = pd.to_numeric(rows[total_column].str.strip(), errors="coerce")
    if totals.isna().any():
        raise MalformedCsv(f"Unparseable cumulative counts for {district_id}")
    if (totals < 0).any():
        raise MalformedCsv(f"Negative cumulative counts for {district_id}")
    if (totals != np.floor(totals)).any():
        raise MalformedCsv(f"Non-integer cumulative counts for {district_id}")

    index = _parse_dates(rows[date_column])
    _check_unique(index, f"cases CSV for {district_id}")
    series = pd.Series(totals.to_numpy(dtype="int64"), index=index, name="total_cases").sort_index()
    logger.info(f"Parsed {len(series)} cumulative case counts for {district_id}")
    return series.astype("Int64")


def fetch_remote_csv(
    url: str,
    client: Optional[httpx.Client] = None,
    timeout: Optional[float] = None,
) -> bytes:
    """Download a CSV over HTTP(S) and return the body bytes."""
    if not is_url(url):
        raise NetworkError(f"Only http(s) URLs can be fetched: {url}")
    owns_client = client is None
    if owns_client:
        client = httpx.Client(timeout=timeout or settings.http_timeout_seconds, follow_redirects=True)
    try:
        response = client.get(url)
    except httpx.HTTPError as e:
        raise NetworkError(f"Failed to fetch {url}: {e}", details={"url": url}) from e
    finally:
        if owns_client:
            client.close()
    if response.status_code != 200:
        raise HttpStatusError(response.status_code, url)
    logger.info(f"Fetched {len(response.content)} bytes from {url}")
    return response.content


def load_source(location: str, client: Optional[httpx.Client] = None) -> Tuple[bytes, SourceDescriptor]:
    """Read a local file or URL and describe where the bytes came from."""
    if is_url(location):
        data = fetch_remote_csv(location, client=client)
        return data, SourceDescriptor(
            kind="url",
            location=location,
            sha256=sha256_bytes(data),
            retrieved_at=datetime.now(timezone.utc),
        )
    path = Path(location)
    if not path.is_file():
        raise SourceNotFound(f"Input file not found: {path}", details={"path": str(path)})
    data = path.read_bytes()
    return data, SourceDescriptor(kind="file", location=str(path), sha256=sha256_bytes(data))


def derive_new_cases(total: pd.Series) -> pd.Series:
    """Daily new cases as the first difference of the cumulative series.

    The first available date has no predecessor and stays missing; negative
    differences (retroactive corrections) are kept for ``clean`` to remove.
    """
    total = total.sort_index()
    present = total.dropna().astype("int64")
    differences = present.diff()
    return differences.reindex(total.index).astype("Int64").rename("new_cases")


def _as_date_index(series: pd.Series) -> pd.Series:
    if not isinstance(series.index, pd.DatetimeIndex):
        series = series.copy()
        series.index = pd.DatetimeIndex(pd.to_datetime(list(series.index)), name="date")
    return series


def merge_sources(
    env: pd.DataFrame,
    cases: pd.Series,
    district_id: str,
    total: Optional[pd.Series] = None,
    variables: Optional[Sequence[VariableKind]] = None,
    provenance: Optional[List[SourceDescriptor]] = None,
) -> DistrictDataset:
    """Outer-join environmental rows and case series on date."""
    cases = _as_date_index(cases)
    index = env.index.union(cases.index)
    if total is not None:
        total = _as_date_index(total)
        index = index.union(total.index)
    index = pd.DatetimeIndex(index, name="date").sort_values()

    frame = pd.DataFrame(index=index)
    for column in ENVIRONMENT_COLUMNS:
        if column in env.columns:
            frame[column] = env[column].reindex(index).astype(float)
        else:
            frame[column] = np.nan
    if total is not None:
        frame["total_cases"] = total.reindex(index).astype("Int64")
    else:
        frame["total_cases"] = pd.array([pd.NA] * len(index), dtype="Int64")
    frame["new_cases"] = cases.reindex(index).astype("Int64")
    frame.index.name = "date"

    if variables is None:
        variables = [VariableKind(column) for column in ENVIRONMENT_COLUMNS if column in env.columns]
    return DistrictDataset(
        district_id=district_id,
        variables=list(variables),
        frame=frame,
        provenance=list(provenance or []),
    )


def infer_schema(ds: DistrictDataset, max_missing_fraction: float = 0.2) -> List[VariableKind]:
    """Variables missing on at most ``max_missing_fraction`` of the case-bearing days."""
    frame = ds.frame
    rows = frame[frame["new_cases"].notna()]
    if rows.empty:
        rows = frame
    if rows.empty:
        return []
    missing = rows[ENVIRONMENT_COLUMNS].isna().mean()
    selected = [VariableKind(column) for column in ENVIRONMENT_COLUMNS if missing[column] <= max_missing_fraction]
    dropped = [column for column in ENVIRONMENT_COLUMNS if missing[column] > max_missing_fraction]
    if dropped:
        logger.info(f"{ds.district_id}: excluding variables over the missing threshold: {dropped}")
    return selected


def clean(
    ds: DistrictDataset,
    required: Optional[Sequence[VariableKind]] = None,
) -> Tuple[DistrictDataset, CleanAudit]:
    """Remove rows with missing or negative new cases or missing required variables."""
    required = list(required) if required is not None else list(ds.variables)
    frame = ds.frame
    new_cases = frame["new_cases"]

    missing_new = new_cases.isna().to_numpy()
    negative = (~missing_new) & (new_cases.fillna(0) < 0).to_numpy(dtype=bool)
    env_columns = [kind.value for kind in required]
    missing_env = frame[env_columns].isna().any(axis=1).to_numpy() if env_columns else np.zeros(len(frame), bool)
    missing_env = missing_env & ~missing_new & ~negative

    keep = ~(missing_new | negative | missing_env)
    removed = dict(zip(REMOVAL_REASONS, (int(mask.sum()) for mask in (missing_new, negative, missing_env))))
    audit = CleanAudit(
        district_id=ds.district_id,
        rows_before=len(frame),
        rows_after=int(keep.sum()),
        removed=removed,
        required_variables=required,
        provenance=list(ds.provenance),
    )
    if not keep.any():
        raise EmptyAfterClean(
            f"No rows of {ds.district_id} survive cleaning",
            details=audit.model_dump(mode="json"),
        )

    logger.info(f"Cleaned {ds.district_id}: kept {audit.rows_after}/{audit.rows_before} rows, removed {removed}")
    cleaned = DistrictDataset(
        district_id=ds.district_id,
        variables=required,
        frame=frame[keep].copy(),
        provenance=list(ds.provenance),
    )
    return cleaned, audit


def write_dataset_csv(ds: DistrictDataset, target: Union[str, Path, io.TextIOBase]) -> None:
    """Write the canonical dataset CSV (Table 1 columns, ISO dates, empty = missing)."""
    frame = ds.frame.reset_index()
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame = frame[DATASET_COLUMNS]
    if isinstance(target, (str, Path)):
        Path(target).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, lineterminator="\n")


def read_dataset_csv(
    stream: Union[ByteSource, str, Path],
    district_id: str,
    variables: Optional[Sequence[VariableKind]] = None,
) -> DistrictDataset:
    """Read a canonical dataset CSV.

    Without an explicit schema, the declared variables are the columns with no
    missing values, which reproduces the schema of a cleaned dataset.
    """
    if isinstance(stream, (str, Path)):
        path = Path(stream)
        if not path.is_file():
            raise SourceNotFound(f"Dataset file not found: {path}", details={"path": str(path)})
        stream = path.read_bytes()
    data = _read_bytes(stream)
    if not data or not data.strip():
        raise EmptyInput(f"Dataset CSV for {district_id} is empty")
    frame = pd.read_csv(io.BytesIO(data), float_precision="round_trip", dtype={
        **{column: float for column in ENVIRONMENT_COLUMNS},
        "total_cases": "Int64",
        "new_cases": "Int64",
    })
    if list(frame.columns) != DATASET_COLUMNS:
        raise MalformedCsv(f"Dataset CSV columns must be {DATASET_COLUMNS}, got {list(frame.columns)}")
    index = _parse_dates(frame["date"])
    _check_unique(index, f"dataset {district_id}")
    frame = frame.drop(columns="date").set_index(index)
    if variables is None:
        variables = [
            VariableKind(column)
            for column in ENVIRONMENT_COLUMNS
            if len(frame) and frame[column].notna().all()
        ]
    return DistrictDataset(district_id=district_id, variables=list(variables), frame=frame)


def write_audit_json(audit: CleanAudit, path: Union[str, Path]) -> Path:
    return write_json(path, audit.model_dump(mode="json"))
