"""
Instance generation command
"""
import argparse
from pathlib import Path

import structlog

from hgfc.commands.experiments import load_config
from hgfc.config import settings
from hgfc.models.schemas import StandardResponse
from hgfc.services.cost_normalizer import cost_normalizer
from hgfc.services.generator import gen_instances

logger = structlog.get_logger()


def gen_command(args: argparse.Namespace, run_id: str) -> StandardResponse:
    """
    Write one instance file per trial
    """
    config = load_config(args)
    out = Path(args.out or settings.output_dir) / "instances"

    written = []
    for data in gen_instances(config):
        cost_normalizer.to_instance(data)
        path = out / f"{data['name']}.json"
        fingerprint = cost_normalizer.dump_instance(data, path)
        written.append({"instance_id": data["name"], "path": str(path), "fingerprint": fingerprint})

    logger.info("instances_generated", count=len(written), out=str(out))
    return StandardResponse(
        ok=True,
        result={"instances": written},
        meta={"run_id": run_id}
    )
