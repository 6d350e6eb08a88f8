"""Cost specs and instance files"""
import json

import pytest

from hgfc.core.costfn import PiecewiseLinear, Polynomial, ScaledLinear, ScaledPower
from hgfc.core.model import Instance, UnrelatedInstance
from hgfc.exceptions import ValidationError
from hgfc.services.cost_normalizer import cost_normalizer


def test_cost_spec_families():
    assert cost_normalizer.to_cost_function({"family": "linear", "rho": 2.0}) == ScaledLinear(2.0)
    power = cost_normalizer.to_cost_function({"family": "power", "rho": 1.0, "k": 3.0, "shift": 2.0})
    assert power == ScaledPower(1.0, 3.0, shift=2.0)
    poly = cost_normalizer.to_cost_function({"family": "poly", "coeffs": [1.0, 0.5]})
    assert poly == Polynomial((1.0, 0.5))
    pwl = cost_normalizer.to_cost_function({"family": "pwl", "breakpoints": [[0, 0], [1, 2]]})
    assert isinstance(pwl, PiecewiseLinear)
    assert pwl(1.0) == 2.0


def test_cost_spec_needs_family_parameters():
    with pytest.raises(ValidationError) as exc:
        cost_normalizer.to_cost_function({"family": "power", "rho": 1.0})
    assert exc.value.code == "validation_error"
    with pytest.raises(ValidationError):
        cost_normalizer.to_cost_function({"family": "cubic", "rho": 1.0})


def test_cost_function_spec_is_stable():
    g = ScaledPower(2.0, 2.0, shift=1.0)
    spec = cost_normalizer.from_cost_function(g)
    assert spec == {"family": "power", "shift": 1.0, "rho": 2.0, "k": 2.0}
    assert cost_normalizer.to_cost_function(spec) == g


def test_instance_file_machines(example1):
    data = cost_normalizer.from_instance(example1, family="linear")
    assert data["machines"] == 1
    assert data["family"] == "linear"
    single = cost_normalizer.to_instance(data)
    assert isinstance(single, Instance)
    assert single == example1

    data["machines"] = 2
    for job in data["jobs"]:
        job["lengths"] = job["lengths"] * 2
        job["costs"] = job["costs"] * 2
    wide = cost_normalizer.to_instance(data)
    assert isinstance(wide, UnrelatedInstance)
    assert wide.job(3).lengths == (2.0, 2.0)


def test_instance_file_errors_name_the_location():
    data = {"machines": 1, "jobs": [{"id": 1, "release": -1, "lengths": [1], "costs": [{"family": "linear", "rho": 1}]}]}
    with pytest.raises(ValidationError) as exc:
        cost_normalizer.to_instance(data)
    assert "jobs.0.release" in exc.value.message


def test_dump_and_load(tmp_path, example1):
    data = cost_normalizer.from_instance(example1)
    path = tmp_path / "instances" / "example1.json"
    fingerprint = cost_normalizer.dump_instance(data, path)
    assert fingerprint == cost_normalizer.fingerprint(json.loads(path.read_text()))
    assert cost_normalizer.load_instance(path) == example1


def test_load_missing_or_broken(tmp_path):
    with pytest.raises(ValidationError):
        cost_normalizer.load_instance(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ValidationError):
        cost_normalizer.load_instance(broken)
