"""
Experiment engine - one trial is load or generate, run, verify, write
"""
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import structlog

from hgfc.config import settings
from hgfc.core.costfn import curvature_report
from hgfc.core.model import DiscreteInstance, ensure_discrete
from hgfc.core.single_machine import (
    convert_duals,
    hdf_schedule,
    online_single_run,
    split_duals,
    split_instance,
)
from hgfc.core.unrelated import online_unrelated_run
from hgfc.core.verify import RunOutput, competitive_report, hrdf_run_and_fit
from hgfc.exceptions import EXIT_DOMAIN_ERROR, EXIT_INTERNAL_ERROR, BadConfigError, HGFCException, ValidationError
from hgfc.jobs.trial_pool import TrialPool
from hgfc.models.schemas import ExperimentConfig, LedgerTotals, SummaryRow
from hgfc.services.cost_normalizer import cost_normalizer
from hgfc.services.generator import gen_instance, instance_id
from hgfc.services.ledger import ledger_service
from hgfc.services.plot_data import plot_data

logger = structlog.get_logger()

PathLike = Union[str, Path]


@dataclass
class TrialOutcome:
    """What a trial hands back to the experiment; plain enough to pickle"""

    index: int
    instance_id: str
    row: SummaryRow
    invariants_ok: bool
    ledger_path: str
    report_path: str


@dataclass
class ExperimentResult:
    name: str
    out_dir: str
    outcomes: List[TrialOutcome] = field(default_factory=list)
    summary_path: Optional[str] = None

    @property
    def rows(self) -> List[SummaryRow]:
        return [o.row for o in self.outcomes]

    @property
    def invariants_ok(self) -> bool:
        return all(o.invariants_ok for o in self.outcomes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "out_dir": self.out_dir,
            "trials": len(self.outcomes),
            "passed": sum(1 for o in self.outcomes if o.row.passed),
            "invariants_ok": self.invariants_ok,
            "summary": self.summary_path,
        }


# ========== ALGORITHMS ==========

def _run_hdf(dinst: DiscreteInstance, config: ExperimentConfig, plots_dir: Path, ident: str) -> Tuple[RunOutput, List[Dict], Dict]:
    if dinst.machines != 1:
        raise ValidationError("HDF runs on one machine", field="machines")
    schedule = hdf_schedule(dinst)
    split = split_duals(split_instance(schedule, dinst))
    converted = convert_duals(split)
    plot_data.write_alpha_beta(plots_dir, ident, split, converted)
    run = RunOutput(
        algorithm="hdf",
        instance=dinst,
        schedule=schedule,
        duals=converted.to_dual_solution(dinst.delta, config.epsilon)
    )
    extra = {
        "split_objective": split.objective(),
        "converted_objective": converted.objective(),
        "heights": list(converted.heights),
        "plot_violations": len(converted.violations({j.id: j.release_slot * dinst.delta for j in dinst.jobs})),
    }
    return run, [], extra


def _run_alg2(dinst: DiscreteInstance, config: ExperimentConfig, plots_dir: Path, ident: str) -> Tuple[RunOutput, List[Dict], Dict]:
    result = online_single_run(dinst, warm=config.warm_start, epsilon=config.epsilon)
    plot_data.write_envelopes(plots_dir, ident, result.envelopes)
    run = RunOutput(
        algorithm="alg2",
        instance=dinst,
        schedule=result.schedule,
        duals=result.duals,
        ledger=result.ledger
    )
    return run, [rec.to_dict() for rec in result.ledger], {}


def _run_alg3(dinst: DiscreteInstance, config: ExperimentConfig, plots_dir: Path, ident: str) -> Tuple[RunOutput, List[Dict], Dict]:
    result = online_unrelated_run(dinst, theta=config.theta, K=config.K, epsilon=config.epsilon)
    rows = [
        {"machine": state.machine, "t": slot * dinst.delta, "beta_hat": value}
        for state in result.machines
        for slot, value in sorted(state.beta_hat_curve(0, state.end_slot).items())
    ]
    plot_data.write_beta_hat(plots_dir, ident, rows)
    run = RunOutput(
        algorithm="alg3",
        instance=dinst,
        schedule=result.schedule,
        duals=result.duals,
        ledger=result.ledger,
        theta=config.theta if config.theta is not None else result.theta
    )
    extra = {"theta_binding": result.theta, "theta_conservative": result.theta_conservative}
    return run, [rec.to_dict() for rec in result.ledger], extra


def _run_hrdf(dinst: DiscreteInstance, config: ExperimentConfig, plots_dir: Path, ident: str) -> Tuple[RunOutput, List[Dict], Dict]:
    k = config.family.k if config.family.name == "power" else None
    result = hrdf_run_and_fit(dinst, k=k, fractional=config.fractional_alpha)
    rows = [
        {"machine": i, "t": t, "accrual": accrual, "remaining": remaining}
        for i in range(dinst.machines)
        for t, accrual, remaining in result.beta_curve(i)
    ]
    plot_data.write_hrdf_curve(plots_dir, ident, rows)
    run = RunOutput(algorithm="hrdf", instance=dinst, schedule=result.schedule)
    arrivals = [
        {"job": j, "machine": result.machine_of[j], "alpha_hat": value}
        for j, value in sorted(result.alpha_hat.items())
    ]
    return run, arrivals, {"identity": result.report.to_dict()}


RUNNERS = {
    "hdf": _run_hdf,
    "alg2": _run_alg2,
    "alg3": _run_alg3,
    "hrdf": _run_hrdf,
}


# ========== TRIALS ==========

def run_trial(index: int, config: Dict[str, Any], data: Dict[str, Any], out_dir: str) -> TrialOutcome:
    """
    Run one trial end to end

    Args:
        index: Trial index within the experiment
        config: ExperimentConfig as a plain dict
        data: Instance file data
        out_dir: Experiment output directory

    Returns:
        TrialOutcome with the summary row and the paths written
    """
    cfg = ExperimentConfig.model_validate(config)
    ident = data.get("name") or instance_id(cfg, index)
    out = Path(out_dir)
    try:
        instance = cost_normalizer.to_instance(data)
        dinst = ensure_discrete(instance)
        run, arrivals, extra = RUNNERS[cfg.algorithm](dinst, cfg, out / "plots", ident)
        report = competitive_report(run, cfg.epsilon, benchmark=cfg.benchmark, K=cfg.K, theta=run.theta)
    except HGFCException as e:
        e.details.setdefault("instance_id", ident)
        raise

    identity = extra.pop("identity", None)
    totals = LedgerTotals(
        instance_id=ident,
        family=data.get("family", cfg.family.name),
        algorithm=cfg.algorithm,
        benchmark_kind=report.benchmark_kind,
        n=len(dinst.jobs),
        m=dinst.machines,
        epsilon=cfg.epsilon,
        K=report.K,
        theta=report.theta,
        speed=report.speed_factor,
        alg_cost=report.alg_cost,
        benchmark=report.benchmark_cost,
        dual_objective=report.dual_objective,
        dual_violations=report.dual_violations,
        weak_duality_ok=report.weak_duality_ok,
        ratio=report.ratio,
        bound=report.bound,
        passed=report.passed
    )
    ledger_path = ledger_service.write(out / "ledgers" / f"{ident}.jsonl", arrivals, totals, identity)

    costs = [g for j in dinst.jobs for g in j.costs]
    body = {
        "instance_id": ident,
        "report": report.to_dict(),
        "curvature": curvature_report(costs, max(dinst.horizon * dinst.delta, 1.0)),
        **extra,
    }
    if identity is not None:
        body["identity"] = identity
    report_path = out / "reports" / f"{ident}.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")

    invariants_ok = report.invariants_ok and (identity is None or bool(identity["identity_ok"]))
    return TrialOutcome(
        index=index,
        instance_id=ident,
        row=ledger_service.summary_row(totals),
        invariants_ok=invariants_ok,
        ledger_path=str(ledger_path),
        report_path=str(report_path)
    )


# ========== EXPERIMENTS ==========

class ExperimentEngine:
    """
    Runs experiments: instances, trials through the pool, merged outputs
    """

    def __init__(self, config: ExperimentConfig, out_dir: Optional[PathLike] = None, workers: Optional[int] = None):
        """
        Args:
            config: Validated experiment configuration
            out_dir: Output directory, settings.output_dir by default
            workers: Worker processes, settings.workers by default
        """
        self.config = config
        self.out_dir = Path(out_dir or settings.output_dir)
        self.workers = workers

    def instances(self) -> List[Tuple[str, Dict[str, Any]]]:
        """
        Instance data per trial; a given instance file counts as the only trial
        """
        cfg = self.config
        if cfg.instance_path is not None:
            path = Path(cfg.instance_path)
            try:
                data = json.loads(path.read_text())
            except FileNotFoundError:
                raise BadConfigError(f"Instance file {path} does not exist", field="instance_path")
            except json.JSONDecodeError as e:
                raise BadConfigError(f"Instance file {path} is not JSON: {e.msg}", field="instance_path")
            data["name"] = data.get("name") or path.stem
            if "delta" in cfg.model_fields_set:
                data["delta"] = cfg.delta
            return [(data["name"], data)]
        return [(instance_id(cfg, t), gen_instance(cfg, t)) for t in range(cfg.trials)]

    def write_instances(self, items: List[Tuple[str, Dict[str, Any]]]) -> List[Path]:
        paths = []
        for ident, data in items:
            path = self.out_dir / "instances" / f"{ident}.json"
            cost_normalizer.dump_instance(data, path)
            paths.append(path)
        return paths

    def run(self) -> ExperimentResult:
        """
        Run every trial and write the summary table

        Raises:
            HGFCException: First failed trial, with its instance id in details
        """
        items = self.instances()
        self.write_instances(items)
        config = self.config.model_dump()

        pool = TrialPool(workers=self.workers)
        pool.register_handler("trial", run_trial)
        trials = pool.run_sync("trial", [
            (ident, {"index": i, "config": config, "data": data, "out_dir": str(self.out_dir)})
            for i, (ident, data) in enumerate(items)
        ])

        failed = [t for t in trials if t.status == "failed"]
        if failed:
            first = failed[0]
            code = first.error_code or "internal_error"
            raise HGFCException(
                message=f"Trial {first.index} ({first.instance_id}) failed: {first.error}",
                code=code,
                exit_code=EXIT_INTERNAL_ERROR if code == "internal_error" else EXIT_DOMAIN_ERROR,
                details={"instance_id": first.instance_id, "trial": first.index, "failed": len(failed)}
            )

        result = ExperimentResult(
            name=self.config.name,
            out_dir=str(self.out_dir),
            outcomes=[t.output for t in trials]
        )
        summary = plot_data.write_summary(self.out_dir / "summary.csv", result.rows)
        result.summary_path = str(summary)
        logger.info(
            "experiment_completed",
            name=self.config.name,
            trials=len(trials),
            passed=sum(1 for row in result.rows if row.passed),
            invariants_ok=result.invariants_ok
        )
        return result


def sweep_points(config: ExperimentConfig) -> List[ExperimentConfig]:
    """
    One config per combination of the sweep grid, named after its values

    Raises:
        BadConfigError: A grid field is unknown or a value list is empty
    """
    grid = config.sweep
    if not grid:
        return [config]
    names = sorted(grid)
    known = set(ExperimentConfig.model_fields)
    for name in names:
        if name not in known or name == "sweep":
            raise BadConfigError(f"Cannot sweep over {name}", field="sweep")
        if not grid[name]:
            raise BadConfigError(f"Sweep over {name} has no values", field="sweep")

    base = config.model_dump()
    points = []
    for values in itertools.product(*(grid[name] for name in names)):
        update = dict(zip(names, values))
        label = "-".join(f"{name}{value}" for name, value in update.items())
        data = {**base, **update, "sweep": {}, "name": f"{config.name}-{label}"}
        points.append(ExperimentConfig.model_validate(data))
    return points


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[PathLike] = None,
    workers: Optional[int] = None
) -> ExperimentResult:
    """Run one experiment configuration"""
    return ExperimentEngine(config, out_dir, workers).run()


def run_sweep(
    config: ExperimentConfig,
    out_dir: Optional[PathLike] = None,
    workers: Optional[int] = None
) -> List[ExperimentResult]:
    """
    Run every sweep point into its own subdirectory and merge the summaries
    """
    root = Path(out_dir or settings.output_dir)
    results = [run_experiment(point, root / point.name, workers) for point in sweep_points(config)]
    rows = [row for result in results for row in result.rows]
    plot_data.write_summary(root / "summary.csv", rows)
    logger.info("sweep_completed", points=len(results), trials=len(rows))
    return results
