"""
Batch commands over districts: each district runs independently, failures are
logged and recorded, and every run ends with a manifest.
"""
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import httpx
from joblib import Parallel, delayed

from .config import RunConfig
from .errors import ConfigError, PipelineError
from .ingest import write_dataset_csv
from .schemas import RunManifest, SyntheticSpec
from .services.pipeline_service import PipelineService
from .synth import generate
from .utils import write_json

logger = logging.getLogger(__name__)

Outcome = Tuple[List[Path], List[Dict[str, Any]]]


def _failure(item: str, error: Exception) -> Dict[str, Any]:
    if isinstance(error, PipelineError):
        return {"item": item, "exit_code": error.exit_code, **error.to_dict()}
    return {"item": item, "exit_code": 1, "error_code": "UNEXPECTED", "message": str(error)}


def _guarded(item: str, work: Callable[[str], Outcome]) -> Outcome:
    try:
        return work(item)
    except PipelineError as e:
        logger.error(f"{item}: {e.error_code}: {e.message}")
        return [], [_failure(item, e)]
    except Exception as e:
        logger.exception(f"{item}: unexpected error")
        return [], [_failure(item, e)]


def exit_code_for(failures: List[Dict[str, Any]]) -> int:
    """0 when nothing failed, otherwise the most severe failure's exit code."""
    return max((failure["exit_code"] for failure in failures), default=0)


def write_manifest(manifest: RunManifest, out_dir: str) -> Path:
    return write_json(Path(out_dir) / f"manifest_{manifest.command}.json", manifest.model_dump(mode="json"))


def _run(command: str, config: RunConfig, items: List[str], work: Callable[[str], Outcome]) -> RunManifest:
    results = Parallel(n_jobs=config.jobs, prefer="threads")(delayed(_guarded)(item, work) for item in items)
    outputs = [str(path) for paths, _ in results for path in paths]
    failures = [failure for _, item_failures in results for failure in item_failures]
    manifest = RunManifest(
        command=command,
        exit_code=exit_code_for(failures),
        config=config.model_dump(mode="json"),
        outputs=outputs,
        failures=failures,
    )
    write_manifest(manifest, config.out_dir)
    clean_items = sum(1 for _, item_failures in results if not item_failures)
    logger.info(f"{command}: {clean_items}/{len(items)} districts without failures, {len(outputs)} files written")
    return manifest


def run_ingest(config: RunConfig, client: Optional[httpx.Client] = None) -> RunManifest:
    if not config.districts:
        raise ConfigError("ingest needs at least one district")
    if not config.env_source:
        raise ConfigError("ingest needs env_source")
    service = PipelineService(config, client=client)

    def work(district: str) -> Outcome:
        _, _, paths = service.ingest_district(district)
        return paths, []

    return _run("ingest", config, list(config.districts), work)


def run_correlate(config: RunConfig) -> RunManifest:
    service = PipelineService(config)
    districts = service.discover_districts()
    if not districts:
        raise ConfigError(f"No districts configured and no datasets found in {config.datasets_path()}")

    def work(district: str) -> Outcome:
        _, paths = service.correlate_district(district)
        return paths, []

    return _run("correlate", config, districts, work)


def run_train(config: RunConfig) -> RunManifest:
    service = PipelineService(config)
    districts = service.discover_districts()
    if not districts:
        raise ConfigError(f"No districts configured and no datasets found in {config.datasets_path()}")

    def work(district: str) -> Outcome:
        _, result = service.train_district(district)
        return result.outputs, result.failures

    return _run("train", config, districts, work)


def run_synth(spec: SyntheticSpec, config: RunConfig, output: Optional[Path] = None) -> RunManifest:
    """Write one synthetic district as a canonical dataset CSV."""
    dataset = generate(spec)
    target = Path(output) if output else config.datasets_path() / f"{dataset.district_id}.csv"
    write_dataset_csv(dataset, target)
    logger.info(f"Wrote synthetic district {dataset.district_id} to {target}")
    config_payload = config.model_dump(mode="json")
    config_payload["synthetic"] = spec.model_dump(mode="json")
    manifest = RunManifest(command="synth", exit_code=0, config=config_payload, outputs=[str(target)])
    write_manifest(manifest, config.out_dir)
    return manifest
