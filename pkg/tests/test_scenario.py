import json
from pathlib import Path

import numpy as np
import pytest

from obsv.scenario import ScenarioError, build, load_scenario, parse_scenario

ROOT = Path(__file__).resolve().parents[1] / "scenarios"


def _base():
    return json.loads((ROOT / "sys2d.json").read_text())


@pytest.mark.parametrize("name", ["sys2d.json", "b0.json", "nilpotent.json", "flagship.json"])
def test_shipped_scenarios_parse(name):
    exp = build(load_scenario(ROOT / name))
    assert exp.n == 2 and exp.grid


def test_malformed_fixture_rejected():
    with pytest.raises(ScenarioError):
        load_scenario(ROOT / "malformed.json")


def _reject(mutate):
    d = _base()
    mutate(d)
    with pytest.raises(ScenarioError):
        parse_scenario(json.dumps(d))


def test_unknown_keys_rejected():
    _reject(lambda d: d.update(horizon=3))
    _reject(lambda d: d["system"].update(D=[[0]]))
    _reject(lambda d: d["grids"]["initial"][0].update(u=1))


def test_dimension_mismatches_rejected():
    _reject(lambda d: d["system"].update(B=[[1, 0, 0], [0, 1, 0], [0, 0, 1]]))
    _reject(lambda d: d["system"].update(b=[1, 2, 3]))
    _reject(lambda d: d["feedback"]["terms"].append({"exponent": [1], "coef": 1}))
    _reject(lambda d: d["grids"]["initial"][0].update(xhat=[1, 2, 3]))
    _reject(lambda d: d["sets"].update(K1={"type": "box", "lo": [0], "hi": [1]}))


def test_positivity_rejected():
    _reject(lambda d: d.update(T=0))
    _reject(lambda d: d.update(R=-1))
    _reject(lambda d: d["observer"].update(Q=[[1, 0], [0, -1]]))
    _reject(lambda d: d["observer"].update(xi0=[[1, 2], [2, 1]]))
    _reject(lambda d: d["sets"].update(K1={"type": "box", "lo": [1, 1], "hi": [0, 0]}))


def test_constant_feedback_rejected():
    _reject(lambda d: d["feedback"]["terms"].append({"exponent": [0, 0], "coef": 0.5}))


def test_kalman_needs_weight():
    _reject(lambda d: d["observer"].pop("Q"))


def test_invalid_json():
    with pytest.raises(ScenarioError):
        parse_scenario("{not json")


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario(ROOT / "does-not-exist.json")


def test_random_grid_is_seeded():
    d = _base()
    d["grids"]["random"] = 4
    d["sets"]["K2"] = {"type": "annulus", "center": [0, 0], "inner": 0.0, "outer": 0.5}
    sc = parse_scenario(json.dumps(d))
    a, b, c = build(sc), build(sc), build(sc, seed=99)
    pack = lambda e: np.array([s.pack() for s in e.grid])
    np.testing.assert_array_equal(pack(a), pack(b))
    assert not np.array_equal(pack(a), pack(c))
    assert len(a.grid) == 3 + 4


def test_default_order_is_twice_dimension():
    assert build(load_scenario(ROOT / "sys2d.json")).k == 4
    assert build(load_scenario(ROOT / "flagship.json")).k == 2
