"""
Command-line entry point: ``lagcorr {ingest,correlate,train,synth}``.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from .config import RunConfig, load_run_config, settings
from .errors import ConfigError, PipelineError
from .models import Link, VariableKind
from .schemas import PlantedVariable, RunManifest, SyntheticSpec
from .tasks import run_correlate, run_ingest, run_synth, run_train, write_manifest

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value run configuration file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--jobs", type=int, help="parallel workers")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--max-lag", type=int, help="largest lag in days")
    common.add_argument("--min-overlap", type=int, help="minimum aligned pairs per lag")
    common.add_argument("--districts", help="comma-separated district names")
    common.add_argument("--dataset-dir", help="directory of canonical dataset CSVs")

    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="Lagged correlation between environmental variables and daily case counts",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", parents=[common], help="build canonical district datasets")
    ingest.add_argument("--env-source", help="environmental CSV path or URL ({district} is expanded)")
    ingest.add_argument("--cases-source", help="cases CSV path or URL ({district} is expanded)")
    ingest.add_argument("--required-columns", help="comma-separated variables, or 'auto'")

    correlate = commands.add_parser("correlate", parents=[common], help="lagged correlation sweeps")
    correlate.add_argument("--method", choices=["spearman", "pearson"])

    train = commands.add_parser("train", parents=[common], help="train and evaluate models")
    train.add_argument("--models", help="comma-separated families: tree, forest, boost, mlp")
    train.add_argument("--lags", help="comma-separated lags, or 'peaks' to use the correlation peaks")
    train.add_argument("--grid-search", action="store_true", default=None, help="tune the forest first")
    train.add_argument("--cv-folds", type=int)

    synth = commands.add_parser("synth", parents=[common], help="write a synthetic district")
    synth.add_argument("--variable", action="append", choices=[kind.value for kind in VariableKind],
                       help="planted variable (repeatable, paired with --lag)")
    synth.add_argument("--lag", action="append", type=int, help="planted lag in days (repeatable)")
    synth.add_argument("--link", choices=[link.value for link in Link], default=Link.DECREASING.value)
    synth.add_argument("--weight", type=float, default=3.0)
    synth.add_argument("--noise", type=float, default=1.0)
    synth.add_argument("--days", type=int, default=400)
    synth.add_argument("--district", default="synthetic")
    synth.add_argument("--output", help="CSV path (default: <dataset_dir>/<district>.csv)")
    return parser


_OVERRIDE_FLAGS = (
    "seed", "jobs", "out_dir", "max_lag", "min_overlap", "districts", "dataset_dir",
    "env_source", "cases_source", "required_columns", "method",
    "models", "lags", "grid_search", "cv_folds",
)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {flag: getattr(args, flag) for flag in _OVERRIDE_FLAGS if getattr(args, flag, None) is not None}


def _synthetic_spec(args: argparse.Namespace, config: RunConfig) -> SyntheticSpec:
    lags: List[int] = args.lag or [10]
    variables: List[str] = args.variable or [VariableKind.TEMP_MEDIAN.value]
    if len(variables) != len(lags):
        raise ConfigError("--variable and --lag must be given the same number of times")
    try:
        return SyntheticSpec(
            district_id=args.district,
            n_days=args.days,
            variables=[
                PlantedVariable(kind=kind, planted_lag=lag, link=args.link, effect_weight=args.weight)
                for kind, lag in zip(variables, lags)
            ],
            noise_sd=args.noise,
            seed=config.seed,
        )
    except ValidationError as e:
        errors = [{"loc": list(err["loc"]), "msg": err["msg"]} for err in e.errors()]
        raise ConfigError(f"Invalid synthetic spec: {e}", details={"errors": errors}) from e


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out_dir or "out"
    try:
        config = load_run_config(args.config, _overrides(args))
        out_dir = config.out_dir
        if args.command == "ingest":
            manifest = run_ingest(config)
        elif args.command == "correlate":
            manifest = run_correlate(config)
        elif args.command == "train":
            manifest = run_train(config)
        else:
            manifest = run_synth(_synthetic_spec(args, config), config, Path(args.output) if args.output else None)
    except PipelineError as e:
        logger.error(f"{args.command} failed: {e.error_code}: {e.message}")
        write_manifest(
            RunManifest(
                command=args.command,
                exit_code=e.exit_code,
                config={},
                failures=[{"item": args.command, "exit_code": e.exit_code, **e.to_dict()}],
            ),
            out_dir,
        )
        return e.exit_code
    return manifest.exit_code


def main() -> None:
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    sys.exit(run())


if __name__ == "__main__":
    main()
