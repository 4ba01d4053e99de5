"""
Enumerations shared across the pipeline: environmental variables, correlation strength
classes and model families.
"""
from enum import Enum


class VariableKind(str, Enum):
    HUMIDITY_MEDIAN = "humidity_median"
    NO2_MEDIAN = "no2_median"
    O3_MEDIAN = "o3_median"
    PM10_MEDIAN = "pm10_median"
    PM25_MEDIAN = "pm25_median"
    SO2_MEDIAN = "so2_median"
    TEMP_MEDIAN = "temp_median"

    @property
    def unit(self) -> str:
        return VARIABLE_UNITS[self]

    @property
    def is_pollutant(self) -> bool:
        return self not in (VariableKind.HUMIDITY_MEDIAN, VariableKind.TEMP_MEDIAN)


VARIABLE_UNITS = {
    VariableKind.HUMIDITY_MEDIAN: "percentage",
    VariableKind.NO2_MEDIAN: "µg/m³",
    VariableKind.O3_MEDIAN: "µg/m³",
    VariableKind.PM10_MEDIAN: "µg/m³",
    VariableKind.PM25_MEDIAN: "µg/m³",
    VariableKind.SO2_MEDIAN: "µg/m³",
    VariableKind.TEMP_MEDIAN: "Celsius",
}

# Canonical dataset column order: date, the seven medians, then the case columns.
ENVIRONMENT_COLUMNS = [kind.value for kind in VariableKind]
CASE_COLUMNS = ["total_cases", "new_cases"]
DATASET_COLUMNS = ["date", *ENVIRONMENT_COLUMNS, *CASE_COLUMNS]


class StrengthClass(str, Enum):
    VERY_WEAK = "very_weak"
    WEAK = "weak"
    MODERATE = "moderate"
    STRONG = "strong"


class CorrelationMethod(str, Enum):
    SPEARMAN = "spearman"
    PEARSON = "pearson"


class CurveStatus(str, Enum):
    OK = "ok"
    ABSENT = "absent"  # variable not in the dataset schema
    NO_VALID_LAG = "no_valid_lag"


class ModelFamily(str, Enum):
    TREE = "tree"
    FOREST = "forest"
    BOOST = "boost"
    MLP = "mlp"


class Link(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"

    @property
    def sign(self) -> float:
        return 1.0 if self is Link.INCREASING else -1.0


class Activation(str, Enum):
    RELU = "relu"
    LINEAR = "linear"
