import json
import math
import os

import numpy as np
import pytest

import twozone

SCENARIOS = os.environ.get(
    "TWOZONE_SCENARIO_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "scenarios")
)
BASE = os.path.join(SCENARIOS, "base.json")


@pytest.fixture(scope="module")
def base():
    return twozone.load(BASE)


def test_load_and_round_trip(base):
    assert base.fuel_count == 4
    assert base.fuel_names == ["A1", "A2", "B1", "B2"]
    assert base.flow_max == pytest.approx(4000.0)
    again = twozone.Scenario.from_json(base.to_json())
    assert again == base
    with open(BASE) as f:
        assert twozone.load(json.load(f)) == base


def test_spot_at_expected_state(base):
    out = twozone.spot(base)
    assert out["flow"] == pytest.approx(-2000.0)
    assert out["regime"] == "CoupledDiscA"
    assert out["price_a"] == out["price_b"]
    assert out["price_a"] == pytest.approx(35.0 * math.exp(0.47), rel=1e-12)
    state = base.initial_state()
    grid = twozone.brute_force_flow(base, state, 1.0, 1.0)
    assert abs(grid - out["flow"]) <= 1.0


def test_pricer_matches_monte_carlo(base):
    s = base.with_capacity(4000.0)
    p = twozone.Pricer(s)
    fa = p.forward("A")
    assert isinstance(fa, twozone.Price)
    assert float(fa) == fa.total
    assert sum(e["contribution"] for e in fa.events) == pytest.approx(fa.total)
    assert p.call("A", 0.0).total == fa.total
    ptr = p.transmission_right()
    assert ptr.total == pytest.approx(
        p.transmission_right("AtoB").total + p.transmission_right("BtoA").total
    )
    assert abs(p.event_probabilities().total - 1.0) < 1e-3
    mc = twozone.monte_carlo(s, 50000)
    for name, analytic in [("forward_a", fa), ("forward_b", p.forward("B")), ("call_a", p.call("A", 50.0))]:
        value, se = mc[name]
        assert abs(value - analytic.total) <= 4.0 * se + analytic.quadrature_error + 1e-9


def test_sampling(base):
    x = twozone.sample_terminal(base, 2000, seed=3)
    assert x.shape == (2000, 6)
    np.testing.assert_array_equal(x, twozone.sample_terminal(base, 2000, seed=3))
    assert abs(x[:, 4].mean() - 50000.0) < 5.0 * math.sqrt(0.5e6 / 2000)


def test_gaussian_and_margrabe():
    value, err = twozone.rectangle_probability(
        np.zeros(2), np.array([[1.0, 0.5], [0.5, 1.0]]), np.zeros(2), np.full(2, np.inf)
    )
    assert abs(value - 1.0 / 3.0) < 1e-4
    assert err >= 0.0
    m = twozone.margrabe(50.0, 50.0, 0.2, 0.2, 0.0, 1.0)
    assert m == pytest.approx(11.246, rel=1e-4)


def test_errors(base):
    with pytest.raises(twozone.ValidationError) as info:
        base.with_capacity(4000.0, 10.0)
    assert info.value.field == "coupling.flow_min"
    with pytest.raises(ValueError):
        twozone.Pricer(base).forward("C")
    with pytest.raises(twozone.ParseError):
        twozone.Scenario.from_json("{not json")
    code, out, err = twozone.run_cli(["forward", "-s", BASE, "-m", "B"])
    assert code == 0
    assert out.startswith("market,maturity,value")
    assert twozone.run_cli(["forward", "-s", "/missing.json"])[0] == 2
