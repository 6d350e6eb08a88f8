"""
Cost normalizer
Converts cost specs and instance files to and from the core types
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Union

import pydantic
import structlog

from hgfc.core.costfn import (
    CostFunction,
    PiecewiseLinear,
    Polynomial,
    ScaledLinear,
    ScaledLog,
    ScaledPower,
)
from hgfc.core.model import AnyInstance, Instance, Job, UnrelatedInstance, UnrelatedJob
from hgfc.exceptions import ValidationError
from hgfc.models.schemas import CostSpec, InstanceFile

logger = structlog.get_logger()

PathLike = Union[str, Path]


class CostNormalizer:
    """
    Normalizes cost specs and instance files between JSON and core types
    """

    @staticmethod
    def to_cost_function(spec: Union[CostSpec, Dict[str, Any]]) -> CostFunction:
        """
        Build a cost function from its spec

        Args:
            spec: CostSpec or plain dict with family, parameters and shift

        Returns:
            CostFunction of the named family
        """
        if not isinstance(spec, CostSpec):
            try:
                spec = CostSpec.model_validate(spec)
            except pydantic.ValidationError as e:
                raise ValidationError(f"Invalid cost spec: {e.errors()[0]['msg']}", field="cost")

        if spec.family == "linear":
            return ScaledLinear(rho=spec.rho, shift=spec.shift)
        if spec.family == "power":
            return ScaledPower(rho=spec.rho, k=spec.k, shift=spec.shift)
        if spec.family == "log":
            return ScaledLog(rho=spec.rho, shift=spec.shift)
        if spec.family == "poly":
            return Polynomial(coeffs=tuple(spec.coeffs), shift=spec.shift)
        return PiecewiseLinear(breakpoints=tuple(tuple(p) for p in spec.breakpoints), shift=spec.shift)

    @staticmethod
    def from_cost_function(g: CostFunction) -> Dict[str, Any]:
        """
        Convert a cost function to its plain spec
        """
        spec: Dict[str, Any] = {"family": g.family, "shift": g.shift}
        if isinstance(g, (ScaledLinear, ScaledLog)):
            spec["rho"] = g.rho
        elif isinstance(g, ScaledPower):
            spec["rho"] = g.rho
            spec["k"] = g.k
        elif isinstance(g, Polynomial):
            spec["coeffs"] = list(g.coeffs)
        elif isinstance(g, PiecewiseLinear):
            spec["breakpoints"] = [list(p) for p in g.breakpoints]
        else:
            raise ValidationError(f"Cost family {g.family} has no file form", field="cost")
        return spec

    @staticmethod
    def to_instance(data: Union[InstanceFile, Dict[str, Any]]) -> AnyInstance:
        """
        Build an instance from file data

        One-machine files become an Instance, anything wider an
        UnrelatedInstance.
        """
        if not isinstance(data, InstanceFile):
            try:
                data = InstanceFile.model_validate(data)
            except pydantic.ValidationError as e:
                first = e.errors()[0]
                location = ".".join(str(part) for part in first["loc"])
                raise ValidationError(f"Invalid instance file at {location}: {first['msg']}", field=location)

        if data.machines == 1:
            jobs = [
                Job(
                    id=spec.id,
                    release=spec.release,
                    length=spec.lengths[0],
                    cost=CostNormalizer.to_cost_function(spec.costs[0])
                )
                for spec in data.jobs
            ]
            return Instance(jobs=tuple(jobs), delta=data.delta, name=data.name)

        unrelated = [
            UnrelatedJob(
                id=spec.id,
                release=spec.release,
                lengths=tuple(spec.lengths),
                costs=tuple(CostNormalizer.to_cost_function(c) for c in spec.costs)
            )
            for spec in data.jobs
        ]
        return UnrelatedInstance(jobs=tuple(unrelated), machines=data.machines, delta=data.delta, name=data.name)

    @staticmethod
    def from_instance(instance: AnyInstance, **meta: Any) -> Dict[str, Any]:
        """
        Convert an instance to file data

        Args:
            instance: Single-machine or unrelated instance
            **meta: Extra top-level fields (family, seed, trial)

        Returns:
            Dict that validates as an InstanceFile
        """
        unrelated = instance.as_unrelated() if isinstance(instance, Instance) else instance
        data: Dict[str, Any] = {
            "name": unrelated.name,
            "delta": unrelated.delta,
            "machines": unrelated.machines,
            "jobs": [
                {
                    "id": j.id,
                    "release": j.release,
                    "lengths": list(j.lengths),
                    "costs": [CostNormalizer.from_cost_function(g) for g in j.costs],
                }
                for j in unrelated.jobs
            ],
        }
        data.update(meta)
        return data

    @staticmethod
    def load_instance(path: PathLike) -> AnyInstance:
        """Read an instance file"""
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ValidationError(f"Instance file {path} does not exist", field="instance")
        except json.JSONDecodeError as e:
            raise ValidationError(f"Instance file {path} is not JSON: {e.msg}", field="instance")
        instance = CostNormalizer.to_instance(data)
        logger.debug("instance_loaded", path=str(path), jobs=len(instance.jobs))
        return instance

    @staticmethod
    def dump_instance(data: Dict[str, Any], path: PathLike) -> str:
        """
        Write file data with sorted keys so equal instances give equal bytes

        Returns:
            Fingerprint of the written data
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")
        fingerprint = CostNormalizer.fingerprint(data)
        logger.debug("instance_written", path=str(path), fingerprint=fingerprint)
        return fingerprint

    @staticmethod
    def fingerprint(data: Dict[str, Any]) -> str:
        """
        sha256 of the canonical JSON form
        """
        data_str = json.dumps(data, sort_keys=True)
        return hashlib.sha256(data_str.encode()).hexdigest()


# Global instance
cost_normalizer = CostNormalizer()
