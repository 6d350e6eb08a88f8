"""
Verification command
Re-derives summary rows from ledger files alone
"""
import argparse
import csv
import math
from pathlib import Path
from typing import Dict, List

import structlog

from hgfc.config import settings
from hgfc.exceptions import ValidationError
from hgfc.models.schemas import StandardResponse
from hgfc.services.ledger import LedgerReplay, ledger_service

logger = structlog.get_logger()


def _ledger_paths(args: argparse.Namespace) -> List[Path]:
    if args.ledgers:
        return [Path(p) for p in args.ledgers]
    root = Path(args.out or settings.output_dir)
    paths = sorted(root.rglob("ledgers/*.jsonl"))
    if not paths:
        raise ValidationError(f"No ledgers under {root}", field="out")
    return paths


def _summary_rows(root: Path) -> Dict[str, Dict[str, str]]:
    """Rows of every summary.csv under root, by instance id"""
    rows: Dict[str, Dict[str, str]] = {}
    for path in sorted(root.rglob("summary.csv")):
        with path.open(newline="") as f:
            for row in csv.DictReader(f):
                rows[row["instance_id"]] = row
    return rows


def _compare(replay: LedgerReplay, row: Dict[str, str]) -> List[str]:
    mismatches = []
    for name in ("alg_cost", "benchmark", "ratio", "bound"):
        stored = float(row[name])
        derived = getattr(replay.row, name)
        same = stored == derived if math.isinf(stored) or math.isinf(derived) else math.isclose(
            stored, derived, rel_tol=1e-12, abs_tol=1e-12
        )
        if not same:
            mismatches.append(f"summary {name} {stored} != ledger {derived}")
    if (row["pass"] == "PASS") != replay.row.passed:
        mismatches.append("summary verdict differs from ledger")
    return mismatches


def verify_command(args: argparse.Namespace, run_id: str) -> StandardResponse:
    """
    Replay ledgers and cross-check any summary tables next to them
    """
    paths = _ledger_paths(args)
    summary = _summary_rows(Path(args.out or settings.output_dir)) if not args.ledgers else {}

    checked = []
    failed = 0
    for path in paths:
        replay = ledger_service.replay(path)
        failures = list(replay.failures)
        stored = summary.get(replay.row.instance_id)
        if stored is not None:
            failures.extend(_compare(replay, stored))
        if failures:
            failed += 1
        checked.append({
            "ledger": str(path),
            "instance_id": replay.row.instance_id,
            "ratio": replay.row.ratio,
            "bound": replay.row.bound,
            "pass": replay.row.passed,
            "failures": failures,
        })

    logger.info("ledgers_verified", ledgers=len(checked), failed=failed)
    return StandardResponse(
        ok=failed == 0,
        result={"ledgers": checked, "failed": failed},
        meta={"run_id": run_id}
    )
