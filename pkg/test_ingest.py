"""
Tests for parsing, fetching, merging and cleaning the district sources.
"""
import io
import textwrap

import httpx
import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from conftest import planted_district
from lagcorr.errors import (
    DistrictNotFound,
    EmptyAfterClean,
    EmptyInput,
    HttpStatusError,
    MalformedCsv,
    NetworkError,
    SourceNotFound,
)
from lagcorr.ingest import (
    clean,
    derive_new_cases,
    district_names,
    environment_kind,
    fetch_remote_csv,
    infer_schema,
    load_source,
    merge_sources,
    parse_cases_csv,
    parse_environment_csv,
    read_dataset_csv,
    write_dataset_csv,
)
from lagcorr.models import DATASET_COLUMNS, VariableKind
from lagcorr.schemas import DailyRecord


def csv_bytes(text: str) -> bytes:
    return textwrap.dedent(text).lstrip().encode()


WIDE_ENV = csv_bytes("""
    # Generated by the air-quality export
    date,temp,humidity,pm2.5,NO2
    2020-03-02,11.5,70,30.2,21
    2020-03-01,10.0,72,,19.5
    2020-03-03,12.25,n/a,28,23
""")

LONG_ENV = csv_bytes("""
    Date,Country,City,Specie,count,min,max,median,variance
    2020-03-01,IT,Milan,temperature,24,5,12,9.5,3.1
    2020-03-01,IT,Milan,no2,24,10,40,22,40
    2020-03-01,IT,Milan,wind-speed,24,1,4,2.2,0.5
    2020-03-01,IT,Rome,temperature,24,8,16,13,2.0
    2020-03-02,IT,Milan,temperature,24,6,13,10.5,2.9
    2020-03-02,IT,Milan,no2,24,12,44,25,38
""")

PCM_CASES = csv_bytes("""
    data,stato,codice_regione,denominazione_regione,codice_provincia,denominazione_provincia,sigla_provincia,lat,long,totale_casi
    2020-03-01T17:00:00,ITA,3,Lombardia,15,Milano,MI,45.46,9.19,46
    2020-03-01T17:00:00,ITA,3,Lombardia,16,Bergamo,BG,45.69,9.66,243
    2020-03-02T17:00:00,ITA,3,Lombardia,15,Milano,MI,45.46,9.19,58
    2020-03-03T17:00:00,ITA,3,Lombardia,15,Milano,MI,45.46,9.19,93
""")


# Environmental data

def test_wide_environment_layout():
    table = parse_environment_csv(WIDE_ENV, "milano")
    assert list(table.columns) == ["humidity_median", "no2_median", "pm25_median", "temp_median"]
    assert [d.date().isoformat() for d in table.index] == ["2020-03-01", "2020-03-02", "2020-03-03"]
    assert table["temp_median"].tolist() == [10.0, 11.5, 12.25]
    assert np.isnan(table.loc["2020-03-01", "pm25_median"])
    assert np.isnan(table.loc["2020-03-03", "humidity_median"])


def test_long_environment_layout_filters_city():
    table = parse_environment_csv(LONG_ENV, "milan")
    assert list(table.columns) == ["no2_median", "temp_median"]
    assert table["temp_median"].tolist() == [9.5, 10.5]
    assert table["no2_median"].tolist() == [22.0, 25.0]

    with pytest.raises(DistrictNotFound):
        parse_environment_csv(LONG_ENV, "Turin")


@pytest.mark.parametrize("district", ["Milano", "Milan", "MI", " milano "])
def test_long_layout_matches_italian_and_english_city_names(district):
    table = parse_environment_csv(LONG_ENV, district)
    assert table["temp_median"].tolist() == [9.5, 10.5]


def test_district_names():
    assert district_names("Milan") == district_names("MI") == {"milano", "milan", "mi"}
    assert district_names("Naples") == {"napoli", "naples", "na"}
    assert district_names(" Reggio Emilia ") == {"reggio emilia"}


def test_environment_aliases():
    assert environment_kind("Temperature") == VariableKind.TEMP_MEDIAN
    assert environment_kind("PM2.5") == VariableKind.PM25_MEDIAN
    assert environment_kind("wind-speed") is None


def test_environment_errors():
    with pytest.raises(EmptyInput):
        parse_environment_csv(b"", "x")
    with pytest.raises(EmptyInput):
        parse_environment_csv(b"date,temp\n", "x")
    with pytest.raises(MalformedCsv):
        parse_environment_csv(b"when,temp\n2020-03-01,4\n", "x")
    with pytest.raises(MalformedCsv):
        parse_environment_csv(b"date,temp\n2020-03-01,4\n2020-03-01,5\n", "x")
    with pytest.raises(MalformedCsv):
        parse_environment_csv(b"date,temp\nyesterday,4\n", "x")


# Case counts

@pytest.mark.parametrize("district", ["Milano", "MI", "15", " milano "])
def test_cases_match_name_abbreviation_or_code(district):
    totals = parse_cases_csv(PCM_CASES, district)
    assert totals.tolist() == [46, 58, 93]
    assert str(totals.dtype) == "Int64"
    assert [d.date().isoformat() for d in totals.index] == ["2020-03-01", "2020-03-02", "2020-03-03"]


def test_cases_match_english_city_name():
    assert parse_cases_csv(PCM_CASES, "Milan").tolist() == [46, 58, 93]


def test_cases_for_unknown_district():
    with pytest.raises(DistrictNotFound):
        parse_cases_csv(PCM_CASES, "Torino")


@pytest.mark.parametrize("value", ["abc", "-4", "3.5"])
def test_bad_cumulative_counts(value):
    data = csv_bytes(f"""
        data,denominazione_provincia,totale_casi
        2020-03-01,Milano,10
        2020-03-02,Milano,{value}
    """)
    with pytest.raises(MalformedCsv):
        parse_cases_csv(data, "Milano")


def test_duplicate_case_dates():
    data = csv_bytes("""
        data,denominazione_provincia,totale_casi
        2020-03-01,Milano,10
        2020-03-01,Milano,12
    """)
    with pytest.raises(MalformedCsv):
        parse_cases_csv(data, "Milano")


def test_derive_new_cases_keeps_corrections():
    index = pd.DatetimeIndex(pd.date_range("2020-03-01", periods=4).to_numpy(), name="date")
    total = pd.Series([10, 15, 12, 20], index=index, dtype="Int64")
    new = derive_new_cases(total)
    assert new.name == "new_cases"
    assert pd.isna(new.iloc[0])
    assert new.iloc[1:].tolist() == [5, -3, 8]


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=60))
@hypothesis_settings(max_examples=200, deadline=None)
def test_new_cases_sum_back_to_cumulative_totals(totals):
    index = pd.DatetimeIndex(pd.date_range("2020-03-01", periods=len(totals)).to_numpy(), name="date")
    total = pd.Series(totals, index=index, dtype="Int64")
    new = derive_new_cases(total)
    rebuilt = totals[0] + np.cumsum(new.iloc[1:].to_numpy(dtype="int64"))
    assert rebuilt.tolist() == totals[1:]


# Sources

def test_fetch_remote_csv_with_mock_transport():
    def handler(request: httpx.Request) -> httpx.Response:
        if request.url.path.endswith("missing.csv"):
            return httpx.Response(404)
        return httpx.Response(200, content=PCM_CASES)

    client = httpx.Client(transport=httpx.MockTransport(handler))
    assert fetch_remote_csv("https://example.org/cases.csv", client=client) == PCM_CASES

    with pytest.raises(HttpStatusError) as excinfo:
        fetch_remote_csv("https://example.org/missing.csv", client=client)
    assert excinfo.value.status_code == 404

    data, source = load_source("https://example.org/cases.csv", client=client)
    assert data == PCM_CASES
    assert source.kind == "url"
    assert source.retrieved_at is not None


def test_fetch_remote_csv_network_failure():
    def handler(request: httpx.Request) -> httpx.Response:
        raise httpx.ConnectError("connection refused", request=request)

    client = httpx.Client(transport=httpx.MockTransport(handler))
    with pytest.raises(NetworkError):
        fetch_remote_csv("https://example.org/cases.csv", client=client)
    with pytest.raises(NetworkError):
        fetch_remote_csv("ftp://example.org/cases.csv", client=client)


def test_load_source_from_file(tmp_path):
    path = tmp_path / "env.csv"
    path.write_bytes(WIDE_ENV)
    data, source = load_source(str(path))
    assert data == WIDE_ENV
    assert source.kind == "file"
    assert len(source.sha256) == 64

    with pytest.raises(SourceNotFound) as excinfo:
        load_source(str(tmp_path / "nope.csv"))
    assert excinfo.value.exit_code == 2


# Merge and clean

def _merged():
    dates = pd.DatetimeIndex(pd.date_range("2020-03-01", periods=5).to_numpy(), name="date")
    env = pd.DataFrame({"temp_median": [1.0, 2.0, 3.0, np.nan, 5.0]}, index=dates)
    total = pd.Series([10, 15, 12, 20, 26], index=dates, dtype="Int64")
    return merge_sources(env, derive_new_cases(total), "testville", total=total)


def test_merge_sources_outer_joins_on_date():
    dates = pd.DatetimeIndex(pd.to_datetime(["2020-03-01", "2020-03-02"]), name="date")
    env = pd.DataFrame({"o3_median": [30.0, 31.0]}, index=dates)
    cases = pd.Series([4, 6], index=pd.DatetimeIndex(pd.to_datetime(["2020-03-02", "2020-03-03"])), dtype="Int64")
    ds = merge_sources(env, cases, "testville")
    assert len(ds) == 3
    assert list(ds.frame.columns) == DATASET_COLUMNS[1:]
    assert ds.variables == [VariableKind.O3_MEDIAN]
    assert ds.frame["new_cases"].isna().tolist() == [True, False, False]
    assert ds.frame["o3_median"].isna().tolist() == [False, False, True]
    assert ds.frame["temp_median"].isna().all()


def test_clean_counts_each_removal_reason():
    cleaned, audit = clean(_merged(), [VariableKind.TEMP_MEDIAN])
    assert [d.isoformat() for d in cleaned.dates] == ["2020-03-02", "2020-03-05"]
    assert cleaned.frame["new_cases"].tolist() == [5, 6]
    assert audit.rows_before == 5
    assert audit.rows_after == 2
    assert audit.removed == {"missing_new_cases": 1, "negative_new_cases": 1, "missing_environment": 1}


def test_clean_without_required_variables_keeps_missing_environment():
    cleaned, audit = clean(_merged(), [])
    assert audit.rows_after == 3
    assert audit.removed["missing_environment"] == 0
    assert cleaned.variables == []


def test_clean_can_empty_a_district():
    ds = _merged()
    frame = ds.frame.copy()
    frame["new_cases"] = pd.array([pd.NA] * len(frame), dtype="Int64")
    with pytest.raises(EmptyAfterClean) as excinfo:
        clean(ds.with_frame(frame))
    assert excinfo.value.exit_code == 3
    assert excinfo.value.details["removed"]["missing_new_cases"] == 5


def test_clean_is_idempotent_on_dirty_data():
    cleaned, _ = clean(_merged(), [VariableKind.TEMP_MEDIAN])
    again, audit = clean(cleaned)
    assert audit.removed == {"missing_new_cases": 0, "negative_new_cases": 0, "missing_environment": 0}
    pd.testing.assert_frame_equal(again.frame, cleaned.frame)
    assert again.variables == cleaned.variables


def test_merge_sources_with_no_case_rows():
    dates = pd.DatetimeIndex(pd.date_range("2020-03-01", periods=3).to_numpy(), name="date")
    env = pd.DataFrame({"temp_median": [1.0, 2.0, 3.0]}, index=dates)
    cases = pd.Series([], index=pd.DatetimeIndex([], name="date"), dtype="Int64")
    ds = merge_sources(env, cases, "testville")
    assert len(ds) == 3
    assert ds.frame["new_cases"].isna().all()
    with pytest.raises(EmptyAfterClean):
        clean(ds)


def test_records_view_of_a_dataset():
    records = _merged().records
    assert len(records) == 5
    assert all(isinstance(record, DailyRecord) for record in records)
    first, fourth = records[0], records[3]
    assert first.date.isoformat() == "2020-03-01"
    assert first.env == {VariableKind.TEMP_MEDIAN: 1.0}
    assert first.total_cases == 10
    assert first.new_cases is None
    assert fourth.env == {}
    assert fourth.new_cases == 8


def test_synthetic_district_is_already_clean(synthetic_district):
    cleaned, audit = clean(synthetic_district)
    assert audit.rows_after == audit.rows_before == len(synthetic_district)
    pd.testing.assert_frame_equal(cleaned.frame, synthetic_district.frame)


def test_infer_schema_drops_sparse_variables(make_dataset):
    ds = make_dataset(
        {"temp_median": [1.0] * 10, "no2_median": [np.nan] * 3 + [2.0] * 7, "o3_median": [np.nan] + [3.0] * 9},
        [1] * 10,
    )
    assert infer_schema(ds) == [VariableKind.O3_MEDIAN, VariableKind.TEMP_MEDIAN]
    assert infer_schema(ds, max_missing_fraction=0.5) == [
        VariableKind.NO2_MEDIAN, VariableKind.O3_MEDIAN, VariableKind.TEMP_MEDIAN,
    ]


# Canonical dataset files

def test_dataset_csv_round_trip(tmp_path):
    ds = planted_district(seed=4, n_days=150)
    path = tmp_path / "datasets" / "synthetic.csv"
    write_dataset_csv(ds, path)
    assert path.read_text().splitlines()[0] == ",".join(DATASET_COLUMNS)

    reread = read_dataset_csv(path, "synthetic")
    pd.testing.assert_frame_equal(reread.frame, ds.frame)
    assert reread.variables == list(VariableKind)


def test_dataset_csv_keeps_missing_values():
    ds = _merged()
    buffer = io.StringIO()
    write_dataset_csv(ds, buffer)
    reread = read_dataset_csv(buffer.getvalue().encode(), "testville")
    assert reread.frame["new_cases"].isna().tolist() == ds.frame["new_cases"].isna().tolist()
    assert reread.frame["temp_median"].isna().sum() == 1
    assert reread.variables == []


def test_dataset_csv_errors(tmp_path):
    with pytest.raises(SourceNotFound):
        read_dataset_csv(tmp_path / "missing.csv", "x")
    with pytest.raises(MalformedCsv):
        read_dataset_csv(b"date,temp_median\n2020-03-01,4\n", "x")
