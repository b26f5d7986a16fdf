import copy
import math

import jsonschema
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CONFIG_DIR, load_raw_config
from yfs import io
from yfs.config import DEFAULTS, load_config, validate_config, validate_report
from yfs.errors import DomainError


@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trip(x):
    assert float(io.fmt(x)) == x


def test_fmt_examples():
    assert io.fmt(0.1) == "0.10000000000000001"
    assert io.fmt(2) == "2"


@given(cols=st.lists(st.tuples(st.floats(allow_nan=False, allow_infinity=False),
                               st.floats(allow_nan=False, allow_infinity=False)), min_size=1, max_size=20))
def test_csv_round_trip(tmp_path_factory, cols):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    a = np.array([c[0] for c in cols])
    b = np.array([c[1] for c in cols])
    io.write_csv(path, {"a": a, "b": b}, header=["x=1", "y=2"])
    data, header = io.read_csv(path)
    assert header == ["x=1", "y=2"]
    np.testing.assert_array_equal(data["a"], a)
    np.testing.assert_array_equal(data["b"], b)


def test_csv_rejects_ragged(tmp_path):
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "x.csv", {"a": [1, 2], "b": [1]})


def test_json_non_finite_becomes_null(tmp_path):
    obj = {"a": float("nan"), "b": [np.inf, np.float64(1.5)], "c": np.int64(3), "d": np.bool_(True),
           "e": np.array([1.0, 2.0])}
    path = io.write_json(tmp_path / "x.json", obj)
    assert io.read_json(path) == {"a": None, "b": [None, 1.5], "c": 3, "d": True, "e": [1.0, 2.0]}


@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_json_float_round_trip(x):
    import json

    assert json.loads(io.to_json({"x": x}))["x"] == x


def test_json_is_deterministic():
    assert io.to_json({"b": 1, "a": 2}) == io.to_json({"a": 2, "b": 1})


# ---------------------------------------------------------------- configs


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = load_config(io.read_json(path))
    assert cfg.name == path.stem


def test_defaults_filled():
    cfg = load_config({"experiment": "oracle", "dim": 3, "T": 1.0, "base_profile": "barenblatt"})
    assert cfg.name == "oracle_N3"
    assert cfg.solver == DEFAULTS["solver"]
    assert cfg.data.points == DEFAULTS["grid"]["points"]
    assert cfg.checks["tolerance"] == 1e-3


def test_controller_and_grid_override():
    cfg = load_config(load_raw_config("shrinker_N3"))
    ctl = cfg.controller([0.5, 0.25])
    assert list(ctl.snapshot_times) == [0.25, 0.5] and ctl.stop_sup == 0.0 and ctl.T_hat == 1.0
    small = cfg.with_grid(points=100)
    assert small.data.points == 100 and cfg.data.points == 4800


@pytest.mark.parametrize("patch, where", [
    ({"dim": 2}, "dim"),
    ({"experiment": "bogus"}, "experiment"),
    ({"T": -1.0}, "T"),
    ({"extra": 1}, "<root>"),
    ({"grid": {"points": 2}}, "grid/points"),
    ({"solver": {"scheme": "rk4"}}, "solver/scheme"),
    ({"perturbation": {"kind": "bump", "width": 0}}, "perturbation"),
])
def test_invalid_configs(patch, where):
    raw = load_raw_config("shrinker_N3")
    raw.update(patch)
    with pytest.raises(DomainError, match=f"invalid config at {where}"):
        validate_config(raw)


def test_beta_required_for_shrinkers():
    raw = load_raw_config("shrinker_N3")
    del raw["beta"]
    with pytest.raises(DomainError, match="need beta"):
        load_config(raw)


def test_report_schema():
    rep = {"config": load_raw_config("oracle_cylinder"), "versions": {"yfs": "0"},
           "checks": [{"name": "x", "measured": 1.0, "expected": 1.0, "tolerance": 0.1, "pass": True,
                       "source": "closed form"}],
           "files": ["report.json"], "passed": True, "info": {}}
    validate_report(rep)
    bad = copy.deepcopy(rep)
    del bad["checks"][0]["pass"]
    with pytest.raises(jsonschema.ValidationError):
        validate_report(bad)
    nulls = copy.deepcopy(rep)
    nulls["checks"][0]["measured"] = None
    validate_report(nulls)
    assert math.isfinite(rep["checks"][0]["measured"])
