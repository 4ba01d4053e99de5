"""
Exception hierarchy for the lag-correlation pipeline.

Every error carries a stable ``error_code`` for programmatic handling (run manifests,
logs) and the process ``exit_code`` the CLI reports when the error ends a command.
"""
from typing import Optional


class PipelineError(Exception):
    error_code = "PIPELINE_ERROR"
    exit_code = 1

    def __init__(self, message: str, *, details: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict:
        """Machine-readable form used in run manifests."""
        payload = {"error_code": self.error_code, "message": self.message}
        if self.details:
            payload["details"] = self.details
        return payload


# Configuration

class ConfigError(PipelineError):
    error_code = "CONFIG_INVALID"
    exit_code = 2


class SourceNotFound(PipelineError):
    error_code = "SOURCE_NOT_FOUND"
    exit_code = 2


# Ingest

class MalformedCsv(PipelineError):
    error_code = "MALFORMED_CSV"


class EmptyInput(PipelineError):
    error_code = "EMPTY_INPUT"


class DistrictNotFound(PipelineError):
    error_code = "DISTRICT_NOT_FOUND"


class NetworkError(PipelineError):
    error_code = "NETWORK_ERROR"


class HttpStatusError(PipelineError):
    error_code = "HTTP_STATUS"

    def __init__(self, status_code: int, url: str):
        super().__init__(
            f"GET {url} returned HTTP {status_code}",
            details={"status_code": status_code, "url": url},
        )
        self.status_code = status_code


class EmptyAfterClean(PipelineError):
    error_code = "EMPTY_AFTER_CLEAN"
    exit_code = 3


# Correlation

class LengthMismatch(PipelineError):
    error_code = "LENGTH_MISMATCH"


class ConstantInput(PipelineError):
    error_code = "CONSTANT_INPUT"


class DegenerateSample(PipelineError):
    """Raised by the p-value routine; the p-value is reported as 0 and flagged."""

    error_code = "DEGENERATE_SAMPLE"
    p_value = 0.0


class InsufficientOverlap(PipelineError):
    error_code = "INSUFFICIENT_OVERLAP"


class NoValidLag(PipelineError):
    error_code = "NO_VALID_LAG"


# Regressors

class DimensionMismatch(PipelineError):
    error_code = "DIMENSION_MISMATCH"


class NonFiniteLoss(PipelineError):
    error_code = "NON_FINITE_LOSS"


class ModelFormatError(PipelineError):
    error_code = "MODEL_FORMAT"


# Evaluation

class ConstantTarget(PipelineError):
    error_code = "CONSTANT_TARGET"


class TooFewSamples(PipelineError):
    error_code = "TOO_FEW_SAMPLES"
