import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroflow.errors import ConfigurationError
from entroflow.grid import Grid1D, ScalarField
from entroflow.harness import ConvergenceReport
from entroflow.io import (
    read_ledger,
    read_report_rows,
    read_snapshot,
    snapshot_fields,
    write_json,
    write_ledger,
    write_matrix,
    write_report,
    write_snapshot,
)
from entroflow.ledger import COLUMNS, BalanceLedger
from entroflow.lubrication import LubricationState
from entroflow.plots import HEIGHT, Series, convergence_plot, ledger_plot, line_plot, polyline_points
from entroflow.shallow_water import ShallowWaterState, velocity_field


def test_empty_ledger_writes_header_only(tmp_path):
    path = tmp_path / "l.csv"
    write_ledger(BalanceLedger(), path)
    assert path.read_text() == ",".join(COLUMNS) + "\n"
    assert len(read_ledger(path)) == 0


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(finite, min_size=len(COLUMNS), max_size=len(COLUMNS)), min_size=1, max_size=5))
def test_ledger_round_trip_bit_exact(tmp_path_factory, rows):
    ledger = BalanceLedger()
    for r in rows:
        ledger.append(dict(zip(COLUMNS, r)))
    path = tmp_path_factory.mktemp("ledger") / "l.csv"
    write_ledger(ledger, path)
    back = read_ledger(path)
    for c in COLUMNS:
        np.testing.assert_array_equal(back.column(c), ledger.column(c))
    lines = path.read_text().splitlines()
    assert all(line.count(",") == len(COLUMNS) - 1 for line in lines)


def test_ledger_nan_round_trip(tmp_path):
    ledger = BalanceLedger()
    ledger.append({"time": 0.0, "mass": 1.0})
    write_ledger(ledger, tmp_path / "l.csv")
    back = read_ledger(tmp_path / "l.csv")
    assert back.first()["mass"] == 1.0 and math.isnan(back.first()["bd_raw"])


def test_read_rejects_ragged(tmp_path):
    path = tmp_path / "l.csv"
    path.write_text(",".join(COLUMNS) + "\n1,2\n")
    with pytest.raises(ConfigurationError):
        read_ledger(path)
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigurationError):
        read_ledger(path)


def test_snapshot_round_trip(tmp_path, rng):
    g = Grid1D(16)
    h = ScalarField(g, 1 + rng.random(16))
    write_snapshot(LubricationState(0.0, h), tmp_path / "a.csv")
    back_h, back_u = snapshot_fields(read_snapshot(tmp_path / "a.csv"), g)
    np.testing.assert_array_equal(back_h.values, h.values)
    assert back_u is None

    u = velocity_field(g, rng.standard_normal(16))
    write_snapshot(ShallowWaterState(0.0, h, u), tmp_path / "b.csv")
    back_h, back_u = snapshot_fields(read_snapshot(tmp_path / "b.csv"), g)
    np.testing.assert_array_equal(back_u.values, u.values)
    with pytest.raises(ConfigurationError):
        snapshot_fields(read_snapshot(tmp_path / "b.csv"), Grid1D(32))


def test_report_files(tmp_path):
    report = ConvergenceReport(
        rows=[{"eps": 0.1, "status": "ok", "error_L2": 1e-2}, {"eps": 0.01, "status": "failed: a, b", "error_L2": math.nan}],
        fitted_rate=1.0,
        metadata={"note": "x", "vals": np.array([1.0, math.inf])},
    )
    write_report(report, tmp_path / "r.csv", tmp_path / "r.json")
    rows = read_report_rows(tmp_path / "r.csv")
    assert rows[0] == {"eps": 0.1, "status": "ok", "error_L2": 1e-2}
    assert rows[1]["status"] == "failed: a, b" and math.isnan(rows[1]["error_L2"])
    assert '"vals": [\n      1.0,\n      null\n    ]' in (tmp_path / "r.json").read_text()


def test_json_and_matrix_deterministic(tmp_path):
    write_json({"b": 1, "a": [0.5]}, tmp_path / "a.json")
    write_json({"a": [0.5], "b": 1}, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    write_matrix(np.eye(2), tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "c0,c1\n1,0\n0,1\n"


# -- plots -------------------------------------------------------------------------------


def test_single_row_draws_one_marker():
    svg = line_plot([Series("s", np.array([1.0]), np.array([2.0]))], "t", "x", "y")
    assert svg.count('class="marker"') == 1
    assert polyline_points(svg) == []
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_monotone_series_monotone_polyline():
    x = np.linspace(0, 1, 20)
    svg = line_plot([Series("s", x, x**2)], "t", "x", "y")
    (pts,) = polyline_points(svg)
    assert np.all(np.diff(pts[:, 0]) > 0)
    assert np.all(np.diff(pts[:, 1]) < 0)  # page y grows downwards


def test_loglog_slope_on_page():
    eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    report = ConvergenceReport(rows=[{"eps": e, "error_L2": 3 * e} for e in eps], fitted_rate=1.0, metadata={})
    svg = convergence_plot(report, "eps", ["error_L2"], "abc123")
    (pts,) = polyline_points(svg)
    slope = -np.diff(pts[:, 1]) / np.diff(pts[:, 0])
    np.testing.assert_allclose(slope, 1.0, atol=1e-6)
    assert "abc123" in svg
    assert pts[:, 1].max() <= HEIGHT


def test_loglog_drops_nonpositive():
    report = ConvergenceReport(rows=[{"eps": 1.0, "e": 0.0}, {"eps": 0.1, "e": 0.1}], fitted_rate=math.nan, metadata={})
    svg = convergence_plot(report, "eps", ["e"], "h")
    assert svg.count('class="marker"') == 1
    with pytest.raises(ConfigurationError):
        convergence_plot(ConvergenceReport(rows=[{"eps": 1.0, "e": 0.0}], fitted_rate=math.nan, metadata={}), "eps", ["e"], "h")


def test_ledger_plot_skips_empty_columns():
    ledger = BalanceLedger()
    for t in range(3):
        ledger.append({"time": float(t), "energy": 1.0 / (1 + t), "bf": 2.0})
    svg = ledger_plot(ledger, "hash1")
    assert len(polyline_points(svg)) == 2 and "[hash1]" in svg


def test_labels_escaped():
    svg = line_plot([Series("a<b", np.arange(2.0), np.arange(2.0))], "x & y", "x", "y")
    assert "a&lt;b" in svg and "x &amp; y" in svg
