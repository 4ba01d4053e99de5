"""
Pipeline service for per-district ingest, correlation and training runs.
"""
import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

import httpx

from ..config import RunConfig
from ..correlation import (
    read_summary_csv,
    select_training_lags,
    sweep_variables,
    write_curve_csv,
    write_curve_json,
    write_summary_csv,
)
from ..errors import ConfigError, NoValidLag, PipelineError, SourceNotFound
from ..evaluation import run_experiment, write_predictions_csv, write_report_json
from ..ingest import (
    clean,
    derive_new_cases,
    infer_schema,
    load_source,
    merge_sources,
    parse_cases_csv,
    parse_environment_csv,
    read_dataset_csv,
    write_audit_json,
    write_dataset_csv,
)
from ..models import CurveStatus, ModelFamily, VariableKind
from ..regressors import save_model
from ..schemas import CleanAudit, CurveSummary, DistrictDataset, EvaluationReport, SourceDescriptor
from ..utils import derive_seed, slugify

logger = logging.getLogger(__name__)


class DistrictResult(NamedTuple):
    outputs: List[Path]
    failures: List[dict]


class PipelineService:
    def __init__(self, config: RunConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self.client = client
        self.out_dir = Path(config.out_dir)
        self._sources: Dict[str, Tuple[bytes, SourceDescriptor]] = {}

    # Paths

    def dataset_path(self, district: str) -> Path:
        return self.config.datasets_path() / f"{slugify(district)}.csv"

    def audit_path(self, district: str) -> Path:
        return self.config.datasets_path() / f"{slugify(district)}_audit.json"

    def summary_path(self, district: str) -> Path:
        return self.out_dir / "curves" / f"{slugify(district)}_summary.csv"

    def discover_districts(self) -> List[str]:
        """Districts listed in the config, or every canonical dataset already on disk."""
        if self.config.districts:
            return list(self.config.districts)
        directory = self.config.datasets_path()
        return sorted(path.stem for path in directory.glob("*.csv")) if directory.is_dir() else []

    # Ingest

    def _load(self, location: str) -> Tuple[bytes, SourceDescriptor]:
        # The national cases file is shared by every district of a run.
        if location not in self._sources:
            self._sources[location] = load_source(location, client=self.client)
        return self._sources[location]

    def ingest_district(self, district: str) -> Tuple[DistrictDataset, CleanAudit, List[Path]]:
        """Parse, merge and clean one district and write its canonical CSV and audit."""
        env_location = self.config.env_location(district)
        if env_location is None:
            raise ConfigError("env_source is required for ingest")
        env_bytes, env_source = self._load(env_location)
        cases_bytes, cases_source = self._load(self.config.cases_location(district))

        env = parse_environment_csv(env_bytes, district)
        total = parse_cases_csv(cases_bytes, district)
        merged = merge_sources(
            env,
            derive_new_cases(total),
            slugify(district),
            total=total,
            provenance=[env_source, cases_source],
        )

        if self.config.required_columns == "auto":
            required = infer_schema(merged, self.config.max_missing_fraction)
        else:
            required = list(self.config.required_columns)
        dataset, audit = clean(merged, required)

        dataset_path = self.dataset_path(district)
        write_dataset_csv(dataset, dataset_path)
        audit_path = write_audit_json(audit, self.audit_path(district))
        logger.info(f"Wrote canonical dataset for {district} to {dataset_path}")
        return dataset, audit, [dataset_path, audit_path]

    def load_dataset(self, district: str) -> DistrictDataset:
        return read_dataset_csv(self.dataset_path(district), slugify(district))

    # Correlation

    def correlate_district(self, district: str) -> Tuple[List[CurveSummary], List[Path]]:
        """Sweep every Table 1 variable and write curves plus a peak summary."""
        dataset = self.load_dataset(district)
        outcomes = sweep_variables(
            dataset,
            list(VariableKind),
            max_lag=self.config.max_lag,
            min_overlap=self.config.min_overlap,
            method=self.config.method,
            jobs=self.config.jobs,
        )
        outputs: List[Path] = []
        slug = slugify(district)
        for outcome in outcomes:
            if outcome.curve is None:
                continue
            stem = self.out_dir / "curves" / f"{slug}_{outcome.curve.variable.value}_curve"
            outputs.append(write_curve_csv(outcome.curve, stem.with_suffix(".csv")))
            outputs.append(write_curve_json(outcome.curve, stem.with_suffix(".json")))
        summaries = [outcome.summary for outcome in outcomes]
        outputs.append(write_summary_csv(summaries, self.summary_path(district)))
        return summaries, outputs

    # Training

    def training_lags(self, district: str) -> List[int]:
        if isinstance(self.config.lags, list):
            return list(self.config.lags)
        path = self.summary_path(district)
        if not path.is_file():
            raise SourceNotFound(
                f"No correlation summary for {district}; run 'correlate' first or pass --lags",
                details={"path": str(path)},
            )
        summaries = [row for row in read_summary_csv(path) if row.status == CurveStatus.OK]
        lags = select_training_lags(summaries)
        if not lags:
            raise NoValidLag(f"{district}: the correlation summary has no peak to train at")
        logger.info(f"{district}: training at peak lags {lags}")
        return lags

    def _spec_for(self, family: ModelFamily, district: str, lag: int):
        spec = getattr(self.config, family.value)
        if "seed" in type(spec).model_fields:
            spec = spec.model_copy(update={"seed": derive_seed(self.config.seed, district, family.value, lag)})
        return spec

    def train_district(self, district: str) -> Tuple[List[EvaluationReport], DistrictResult]:
        """Train every configured model at every training lag; failed cells are recorded."""
        dataset = self.load_dataset(district)
        slug = slugify(district)
        reports: List[EvaluationReport] = []
        outputs: List[Path] = []
        failures: List[dict] = []

        for lag in self.training_lags(district):
            for family in self.config.models:
                cell = f"{slug}_{family.value}_lag{lag}"
                try:
                    report, model = run_experiment(
                        dataset,
                        lag,
                        family,
                        self._spec_for(family, slug, lag),
                        seed=derive_seed(self.config.seed, slug, lag),
                        k=self.config.cv_folds,
                        tune=self.config.grid_search,
                        grid=self.config.grid,
                        min_overlap=self.config.min_overlap,
                        jobs=self.config.jobs,
                    )
                except PipelineError as e:
                    logger.error(f"Training {cell} failed: {e.message}")
                    failures.append({"item": cell, "exit_code": e.exit_code, **e.to_dict()})
                    continue
                reports.append(report)
                outputs.append(write_report_json(report, self.out_dir / "reports" / f"{cell}.json"))
                outputs.append(write_predictions_csv(report, self.out_dir / "reports" / f"{cell}_predictions.csv"))
                outputs.append(save_model(model, self.out_dir / "models" / f"{cell}.json"))
        return reports, DistrictResult(outputs, failures)
