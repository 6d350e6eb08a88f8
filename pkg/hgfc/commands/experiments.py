"""
Experiment commands: run, sweep
"""
import argparse
import json
from pathlib import Path
from typing import Any, Dict

import pydantic
import structlog

from hgfc.core.engine import run_experiment, run_sweep
from hgfc.exceptions import BadConfigError
from hgfc.models.schemas import ExperimentConfig, StandardResponse

logger = structlog.get_logger()

# CLI flag -> config field
OVERRIDES = {
    "delta": "delta",
    "epsilon": "epsilon",
    "seed": "seed",
    "algorithm": "algorithm",
    "benchmark": "benchmark",
    "trials": "trials",
    "instance": "instance_path",
}


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Config file (if any) with CLI flags layered on top

    Raises:
        BadConfigError: Unreadable file or invalid fields
    """
    data: Dict[str, Any] = {}
    path = getattr(args, "config", None)
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise BadConfigError(f"Config file {path} does not exist", field="config")
        except json.JSONDecodeError as e:
            raise BadConfigError(f"Config file {path} is not JSON: {e.msg}", field="config")

    for flag, name in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value

    try:
        config = ExperimentConfig.model_validate(data)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise BadConfigError(f"Invalid config at {location}: {first['msg']}", field=location)
    logger.debug("config_loaded", name=config.name, algorithm=config.algorithm, trials=config.trials)
    return config


def run_command(args: argparse.Namespace, run_id: str) -> StandardResponse:
    """
    Run one experiment
    """
    config = load_config(args)
    result = run_experiment(config, out_dir=args.out, workers=args.workers)

    return StandardResponse(
        ok=result.invariants_ok,
        result=result.to_dict(),
        meta={"run_id": run_id}
    )


def sweep_command(args: argparse.Namespace, run_id: str) -> StandardResponse:
    """
    Run every point of the config's sweep grid
    """
    config = load_config(args)
    results = run_sweep(config, out_dir=args.out, workers=args.workers)

    return StandardResponse(
        ok=all(r.invariants_ok for r in results),
        result={
            "points": [r.to_dict() for r in results],
            "trials": sum(len(r.outcomes) for r in results),
            "passed": sum(1 for r in results for row in r.rows if row.passed),
        },
        meta={"run_id": run_id}
    )
