"""
Pydantic schemas for instance files, experiment configs, ledgers and reports
"""
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

CostFamily = Literal["linear", "power", "poly", "log", "pwl"]
GeneratorFamily = Literal["linear", "power", "poly", "log", "pwl", "quadratic"]
Algorithm = Literal["hdf", "alg2", "alg3", "hrdf"]
Benchmark = Literal["oracle", "lp", "brute"]


class StandardResponse(BaseModel):
    """Standard CLI output envelope"""
    ok: bool
    result: Optional[Any] = None
    error: Optional[Dict[str, Any]] = None
    meta: Dict[str, str] = Field(default_factory=dict)


class ErrorResponse(BaseModel):
    """Error details"""
    code: str
    message: str
    details: Dict[str, Any] = Field(default_factory=dict)


# Instance files
class CostSpec(BaseModel):
    """One scaled cost g(t); parameters depend on the family"""
    family: CostFamily
    rho: Optional[float] = None
    k: Optional[float] = None
    coeffs: Optional[List[float]] = None
    breakpoints: Optional[List[Tuple[float, float]]] = None
    shift: float = 0.0

    @model_validator(mode="after")
    def check_parameters(self) -> "CostSpec":
        required = {
            "linear": ("rho",),
            "power": ("rho", "k"),
            "log": ("rho",),
            "poly": ("coeffs",),
            "pwl": ("breakpoints",),
        }[self.family]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.family} cost needs {', '.join(missing)}")
        return self


class JobSpec(BaseModel):
    """Job with one length and one cost per machine"""
    id: int
    release: float = Field(ge=0)
    lengths: List[float] = Field(min_length=1)
    costs: List[CostSpec] = Field(min_length=1)

    @model_validator(mode="after")
    def check_machines(self) -> "JobSpec":
        if len(self.lengths) != len(self.costs):
            raise ValueError(f"job {self.id} has {len(self.lengths)} lengths and {len(self.costs)} costs")
        return self


class InstanceFile(BaseModel):
    name: str = ""
    family: str = "custom"
    delta: float = Field(default=1.0, gt=0)
    machines: int = Field(default=1, ge=1)
    seed: Optional[int] = None
    trial: Optional[int] = None
    jobs: List[JobSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_job_machines(self) -> "InstanceFile":
        for job in self.jobs:
            if len(job.lengths) != self.machines:
                raise ValueError(f"job {job.id} has {len(job.lengths)} lengths for {self.machines} machines")
        return self


# Experiment configuration
class FamilySpec(BaseModel):
    """Cost family plus the ranges its parameters are drawn from"""
    name: GeneratorFamily = "linear"
    density_range: Tuple[float, float] = (1.0, 5.0)
    k: float = 2.0
    degree: int = Field(default=2, ge=1)
    coeff_range: Tuple[float, float] = (0.0, 1.0)
    pwl_pieces: int = Field(default=3, ge=1)
    slope_range: Tuple[float, float] = (0.5, 3.0)
    shift_to_release: bool = False


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    family: FamilySpec = Field(default_factory=FamilySpec)
    n_jobs: int = Field(default=5, ge=0)
    n_machines: int = Field(default=1, ge=1)
    length_range: Tuple[int, int] = (1, 4)
    arrival_rate: float = Field(default=1.0, gt=0)
    time_unit: float = Field(default=1.0, gt=0)
    delta: float = Field(default=1.0, gt=0)
    epsilon: float = Field(default=0.0, ge=0)
    seed: int = 0
    trials: int = Field(default=1, ge=1)
    algorithm: Algorithm = "alg2"
    benchmark: Optional[Benchmark] = None
    theta: Optional[float] = Field(default=None, ge=1)
    K: Optional[float] = Field(default=None, ge=1)
    warm_start: Optional[bool] = None
    fractional_alpha: bool = False
    jobs: Optional[List[JobSpec]] = None
    instance_path: Optional[str] = None
    # field -> values; `sweep` runs every combination
    sweep: Dict[str, List[Any]] = Field(default_factory=dict)


# Ledger records
class LedgerTotals(BaseModel):
    """Closing record of a ledger file; enough to re-derive its summary row"""
    kind: Literal["totals"] = "totals"
    instance_id: str
    family: str
    algorithm: Algorithm
    benchmark_kind: str
    n: int
    m: int
    epsilon: float
    K: float
    theta: Optional[float] = None
    speed: float
    alg_cost: float
    benchmark: float
    dual_objective: Optional[float] = None
    dual_violations: int = 0
    weak_duality_ok: bool = True
    ratio: float
    bound: float
    passed: bool


class SummaryRow(BaseModel):
    instance_id: str
    family: str
    n: int
    m: int
    K: float
    theta: Optional[float] = None
    speed: float
    alg_cost: float
    benchmark: float
    ratio: float
    bound: float
    passed: bool = Field(alias="pass")

    model_config = {"populate_by_name": True}

    def to_csv_row(self) -> Dict[str, Any]:
        row = self.model_dump(by_alias=True)
        row["theta"] = "" if self.theta is None else self.theta
        row["pass"] = "PASS" if self.passed else "FAIL"
        return row


SUMMARY_COLUMNS = [
    "instance_id", "family", "n", "m", "K", "theta", "speed",
    "alg_cost", "benchmark", "ratio", "bound", "pass",
]
