import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroflow.errors import ValidationError
from entroflow.grid import PERIODIC, WALL, Grid1D
from entroflow.mobility import MobilitySpec
from entroflow.scenario import (
    ELECTRIFIED,
    LUBRICATION,
    SHALLOW_WATER,
    SHALLOW_WATER_NONLOCAL,
    SYSTEMS,
    apply_overrides,
    dumps,
    load_scenario,
    parse_scenario,
    scenario_hash,
)

MINIMAL = {"system": "lubrication", "grid": {"n_cells": 128}, "params": {"n": 3, "m": 1.5}, "t_end": 1}


def errors_of(data):
    with pytest.raises(ValidationError) as info:
        parse_scenario(data)
    return info.value.errors


def test_minimal_lubrication_defaults():
    sc = parse_scenario(json.dumps(MINIMAL))
    assert sc.system == LUBRICATION
    assert sc.grid.n_cells == 128 and sc.grid.length == 1.0 and sc.grid.topology == PERIODIC
    p = sc.params
    assert p.mobility == MobilitySpec.power_law(3.0) and p.m == 1.5
    assert (p.alpha, p.we, p.fr) == (1.0, 1.0, 1.0)
    assert sc.initial_h.preset == "droplet"
    # droplet peaks at 1.2, so cap_A = ceil(2.4)
    assert p.cap_A == 3.0
    assert sc.t_end == 1.0
    assert sc.initial_momentum is None
    assert sc.output.cadence == 1 and sc.output.ledger and not sc.output.plots
    assert sc.initial_h.floor == pytest.approx(1e-6 * np.mean(sc.initial_h.raw(sc.grid)))


def test_negative_we():
    data = dict(MINIMAL, params={"we": -2.0})
    assert ("params.we", "we must be positive") in errors_of(data)


def test_coupling_violation_message():
    data = {
        "system": "shallow_water",
        "grid": {"n_cells": 32},
        "params": {"beta": 1.0, "n": 2.0, "check_coupling": True},
        "t_end": 1,
    }
    msgs = [m for _, m in errors_of(data)]
    assert any(m.startswith("coupling constraint violated: beta + n must lie in (1, 2)") for m in msgs)


def test_all_errors_reported():
    data = {
        "system": "lubrication",
        "grid": {"n_cells": 4, "colour": "red"},
        "params": {"we": 0, "alpha": "x"},
        "t_end": -1,
        "bogus": 1,
    }
    paths = {p for p, _ in errors_of(data)}
    assert {"grid.n_cells", "grid.colour", "params.we", "params.alpha", "t_end", "bogus"} <= paths


def test_missing_required_fields():
    paths = {p for p, _ in errors_of({})}
    assert {"system", "grid.n_cells", "t_end"} <= paths


@pytest.mark.parametrize("text", ["", "{", "[1, 2]", "null", b"\xff\xfe", '"lubrication"'])
def test_malformed_input(text):
    with pytest.raises(ValidationError):
        parse_scenario(text)


def test_grid_topology_rules():
    assert any(p == "grid.topology" for p, _ in errors_of(dict(MINIMAL, grid={"n_cells": 32, "topology": "wall"})))
    bad = {"system": "electrified", "grid": {"n_cells": 32, "topology": "periodic", "length": 2}, "t_end": 1}
    paths = {p for p, _ in errors_of(bad)}
    assert {"grid.topology", "grid.length"} <= paths
    sc = parse_scenario({"system": "electrified", "grid": {"n_cells": 32}, "t_end": 1})
    assert sc.grid.topology == WALL and sc.grid.length == 1.0


def test_momentum_only_for_shallow_water():
    data = dict(MINIMAL, initial_momentum={"preset": "zero"})
    assert any(p == "initial_momentum" for p, _ in errors_of(data))
    sw = parse_scenario({"system": "shallow_water", "grid": {"n_cells": 16}, "t_end": 1})
    assert sw.initial_momentum.preset == "zero"


def test_momentum_table_length():
    data = {
        "system": "shallow_water",
        "grid": {"n_cells": 16},
        "initial_momentum": {"preset": "table", "values": [0.0] * 15},
        "t_end": 1,
    }
    assert any(p == "initial_momentum.values" for p, _ in errors_of(data))
    data["initial_momentum"]["values"] = [0.0] * 16
    assert parse_scenario(data).initial_momentum.values == (0.0,) * 16


def test_electrified_mobility_fixed():
    data = {"system": "shallow_water_nonlocal", "grid": {"n_cells": 16}, "params": {"n": 2}, "t_end": 1}
    assert any(p == "params.mobility" for p, _ in errors_of(data))


def test_shallow_water_derived_coefficients():
    sc = parse_scenario({"system": "shallow_water", "grid": {"n_cells": 16}, "params": {"re": 2, "we": 5}, "t_end": 1})
    assert sc.params.viscous_coeff == 2.0 and sc.params.capillary_coeff == 0.2
    nl = parse_scenario({"system": "shallow_water_nonlocal", "grid": {"n_cells": 16}, "t_end": 1})
    assert nl.params.viscous_coeff == 1.0 and nl.params.capillary_coeff == 1.0


def test_cap_A_must_dominate():
    data = dict(MINIMAL, params={"cap_A": 1.0})
    assert any(p == "params.cap_A" for p, _ in errors_of(data))


# -- presets ------------------------------------------------------------------------------


def preset_h(preset, n=64, **opts):
    return parse_scenario(dict(MINIMAL, grid={"n_cells": n}, initial_h={"preset": preset, **opts})).h0()


def test_presets():
    x = Grid1D(64).x
    np.testing.assert_allclose(preset_h("constant", value=2.5), 2.5)
    np.testing.assert_allclose(preset_h("cosine_bump", mean=1, amplitude=0.2), 1 + 0.2 * np.cos(2 * np.pi * x))
    np.testing.assert_allclose(preset_h("droplet"), 0.2 + np.cos(np.pi * x) ** 2)
    h = preset_h("touchdown", floor=1e-3)
    assert h.min() == 1e-3
    np.testing.assert_allclose(h, np.maximum(np.cos(np.pi * x) ** 2 - 0.5, 1e-3))
    tab = preset_h("table", x=[0.0, 0.5], h=[1.0, 2.0])
    assert tab.min() >= 1.0 and tab.max() <= 2.0


def test_random_smooth_seeded():
    a = preset_h("random_smooth", seed=3)
    b = preset_h("random_smooth", seed=3)
    c = preset_h("random_smooth", seed=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.max(np.abs(a - 1.0)) == pytest.approx(0.1)


def test_default_floor_keeps_touchdown_positive():
    h = preset_h("touchdown")
    assert h.min() > 0 and h.min() == pytest.approx(1e-6 * np.mean(np.maximum(0, h - h.min())), rel=1e-2)


def test_table_must_increase():
    data = dict(MINIMAL, initial_h={"preset": "table", "x": [0.0, 0.0], "h": [1.0, 1.0]})
    assert any(p == "initial_h.x" for p, _ in errors_of(data))


# -- canonical form -----------------------------------------------------------------------


@pytest.mark.parametrize("system", SYSTEMS)
def test_round_trip_each_system(system):
    sc = parse_scenario({"system": system, "grid": {"n_cells": 16}, "t_end": 0.5})
    again = parse_scenario(dumps(sc))
    assert again == sc
    assert dumps(again) == dumps(sc)
    assert scenario_hash(again) == scenario_hash(sc)


scenario_inputs = st.fixed_dictionaries(
    {
        "system": st.sampled_from([LUBRICATION, SHALLOW_WATER]),
        "grid": st.fixed_dictionaries({"n_cells": st.integers(8, 512)}),
        "t_end": st.floats(1e-6, 1e3),
        "initial_h": st.one_of(
            st.fixed_dictionaries({"preset": st.just("droplet"), "base": st.floats(0.01, 2), "height": st.floats(0, 3)}),
            st.fixed_dictionaries(
                {"preset": st.just("random_smooth"), "seed": st.integers(0, 10**6), "modes": st.integers(1, 8),
                 "amplitude": st.floats(0, 0.5)}
            ),
        ),
        "params": st.fixed_dictionaries({"alpha": st.floats(0.1, 10), "fr": st.floats(0.1, 10)}),
    }
)


@settings(max_examples=60, deadline=None)
@given(scenario_inputs)
def test_round_trip_property(data):
    sc = parse_scenario(data)
    assert parse_scenario(dumps(sc)) == sc


json_values = st.recursive(
    st.none() | st.booleans() | st.floats(allow_nan=False) | st.integers() | st.text(max_size=5),
    lambda inner: st.lists(inner, max_size=3) | st.dictionaries(st.text(max_size=8), inner, max_size=4),
    max_leaves=12,
)


@settings(max_examples=150, deadline=None)
@given(st.dictionaries(st.sampled_from(["system", "grid", "params", "t_end", "initial_h", "output", "x"]), json_values))
def test_parse_is_total(data):
    try:
        parse_scenario(data)
    except ValidationError as exc:
        assert exc.errors


def test_hash_depends_on_content():
    a = parse_scenario(MINIMAL)
    b = parse_scenario(dict(MINIMAL, t_end=2))
    assert scenario_hash(a) != scenario_hash(b) and len(scenario_hash(a)) == 12


def test_hash_ignores_default_spelling():
    a = parse_scenario(MINIMAL)
    b = parse_scenario(dict(MINIMAL, params={"n": 3, "m": 1.5, "alpha": 1.0}))
    assert scenario_hash(a) == scenario_hash(b)


# -- overrides ------------------------------------------------------------------------------


def test_overrides_dotted_paths():
    out = apply_overrides(MINIMAL, ["params.we=2.5", "output.plots=true", "grid.n_cells=64", "initial_h.preset=constant"])
    sc = parse_scenario(out)
    assert sc.params.we == 2.5 and sc.output.plots and sc.grid.n_cells == 64 and sc.initial_h.preset == "constant"
    assert MINIMAL["grid"]["n_cells"] == 128


@pytest.mark.parametrize("bad", ["params.we", "=3", "grid.n_cells.x=1"])
def test_bad_overrides(bad):
    with pytest.raises(ValidationError):
        apply_overrides(MINIMAL, [bad])


def test_load_scenario(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(MINIMAL))
    sc = load_scenario(path, ["t_end=0.25"])
    assert sc.t_end == 0.25
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_scenario(path)
