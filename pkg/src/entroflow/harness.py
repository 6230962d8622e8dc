"""Experiment orchestration: single runs, relaxation sweeps, refinement ladders
and positivity-floor sweeps.

Every study returns a :class:`ConvergenceReport` whose rows are flat dicts
(one per run) carrying the final ledger values, so each balance audit can be
reproduced from the report alone.  Independent runs may execute in a process
pool; rows are assembled afterwards in a fixed order, so the report does not
depend on the worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .electrified import electrified_run, kernel, swnl_run
from .errors import ConfigurationError, EntroflowError
from .functionals import ENERGY_COMBINED, bd_entropy, bf_entropy
from .grid import Grid1D, ScalarField
from .ledger import COLUMNS, BalanceLedger
from .lubrication import LubricationState, TimeStepper, manufactured_solution
from .lubrication import run as lubrication_run
from .mobility import POWER_LAW
from .params import LubricationParams, ShallowWaterParams
from .scenario import (
    ELECTRIFIED,
    LUBRICATION,
    SHALLOW_WATER,
    SHALLOW_WATER_NONLOCAL,
    Scenario,
    scenario_hash,
)
from .shallow_water import ShallowWaterState, prepared_momentum, sw_run

log = logging.getLogger(__name__)

NORMS = ("L2", "H1", "Linf")
RESIDUALS = ("residual_energy", "residual_bf", "residual_bd", "residual_termX")


# -- single runs ---------------------------------------------------------------


@dataclass
class RunResult:
    scenario: Scenario
    state: LubricationState | ShallowWaterState
    ledger: BalanceLedger

    @property
    def h(self) -> ScalarField:
        return self.state.h


def initial_momentum(scenario: Scenario, h0: ScalarField) -> np.ndarray | None:
    spec = scenario.initial_momentum
    if spec is None or spec.preset == "zero":
        return None
    if spec.preset == "table":
        return np.asarray(spec.values, dtype=float)
    k = kernel(h0.grid) if scenario.system == SHALLOW_WATER_NONLOCAL else None
    return prepared_momentum(h0, scenario.params, k)


def run_scenario(
    scenario: Scenario,
    t_end: float | None = None,
    on_step: Callable | None = None,
    h0: ScalarField | None = None,
) -> RunResult:
    """Run one scenario to ``t_end`` (default: the scenario's own)."""
    t_end = scenario.t_end if t_end is None else t_end
    if h0 is None:
        h0 = ScalarField(scenario.grid, scenario.h0())
    ts = scenario.time_stepper
    cadence = scenario.output.cadence
    if scenario.system == LUBRICATION:
        state, ledger = lubrication_run(h0, scenario.params, ts, t_end, cadence=cadence, on_step=on_step)
    elif scenario.system == SHALLOW_WATER:
        m0 = initial_momentum(scenario, h0)
        state, ledger = sw_run(h0, scenario.params, ts, t_end, m0=m0, cadence=cadence, on_step=on_step)
    elif scenario.system == ELECTRIFIED:
        state, ledger = electrified_run(
            h0, ts, t_end, cap_A=scenario.params.cap_A, cadence=cadence, on_step=on_step
        )
    elif scenario.system == SHALLOW_WATER_NONLOCAL:
        m0 = initial_momentum(scenario, h0)
        state, ledger = swnl_run(h0, scenario.params, ts, t_end, m0=m0, cadence=cadence, on_step=on_step)
    else:
        raise ConfigurationError(f"unknown system {scenario.system!r}")
    return RunResult(scenario, state, ledger)


# -- reports -------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    """Rows of per-run records plus fitted log-log slopes.

    ``rows`` are flat dicts with float values (NaN where a quantity does not
    apply or a run failed); ``status`` is ``"ok"`` or the failure message.
    """

    rows: list[dict]
    fitted_rate: dict[str, float]
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, math.nan) for r in self.rows], dtype=float)

    @property
    def ok(self) -> bool:
        return all(r.get("status") == "ok" for r in self.rows)


def fitted_rate(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``.

    Non-finite or non-positive points are dropped; fewer than two remaining
    points give NaN.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if keep.sum() < 2:
        return math.nan
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def observed_orders(values: Sequence[float], factor: float = 2.0) -> list[float]:
    """``log_factor(e_k / e_{k+1})`` for consecutive levels."""
    v = np.abs(np.asarray(values, dtype=float))
    out = []
    for a, b in zip(v[:-1], v[1:]):
        out.append(math.log(a / b, factor) if a > 0 and b > 0 else math.nan)
    return out


def error_norms(e: np.ndarray, grid: Grid1D, norms: Sequence[str] = NORMS) -> dict[str, float]:
    """Discrete L2, H1 seminorm (face differences) and max norms of ``e``."""
    dx = grid.spacing
    out = {}
    for name in norms:
        if name == "L2":
            out[name] = float(math.sqrt(dx * np.sum(e * e)))
        elif name == "H1":
            d = np.diff(e, append=e[:1]) if grid.periodic else np.diff(e)
            out[name] = float(math.sqrt(dx * np.sum((d / dx) ** 2)))
        elif name == "Linf":
            out[name] = float(np.max(np.abs(e)))
        else:
            raise ConfigurationError(f"unknown norm {name!r}")
    return out


def _ledger_endpoint(ledger: BalanceLedger) -> dict:
    last = ledger.last()
    first = ledger.first()
    out = {f"final_{c}": last[c] for c in COLUMNS}
    out["mass_drift"] = abs(last["mass"] - first["mass"]) / abs(first["mass"])
    return out


def _nan_endpoint() -> dict:
    out = {f"final_{c}": math.nan for c in COLUMNS}
    out["mass_drift"] = math.nan
    return out


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# -- relaxation study ------------------------------------------------------------


DEFAULT_REFERENCE_STEPPER = TimeStepper(dt_init=1e-6, dt_min=1e-12, dt_max=1e-3, ramp_time=1e-4)


@dataclass(frozen=True)
class SweepSpec:
    """Relaxation sweep: the base shallow-water scenario rerun for each ``eps``.

    ``eps_values`` must be distinct; they are stored in decreasing order so
    that a reversed input gives the same report.  ``compare_time`` defaults
    to the scenario's ``t_end``.  ``reference_stepper`` drives the
    lubrication reference run.
    """

    base_scenario: Scenario
    eps_values: tuple[float, ...]
    norms: tuple[str, ...] = NORMS
    compare_time: float | None = None
    reference_stepper: TimeStepper = DEFAULT_REFERENCE_STEPPER
    workers: int = 1

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_values)
        if not eps or any(not (e > 0 and math.isfinite(e)) for e in eps):
            raise ConfigurationError("eps_values must be positive")
        if len(set(eps)) != len(eps):
            raise ConfigurationError("eps_values must be distinct")
        object.__setattr__(self, "eps_values", tuple(sorted(eps, reverse=True)))
        if self.base_scenario.system != SHALLOW_WATER:
            raise ConfigurationError("relaxation studies start from a shallow_water scenario")
        bad = [n for n in self.norms if n not in NORMS]
        if bad:
            raise ConfigurationError(f"unknown norms {bad}")
        T = self.time
        if not (0 < T <= self.base_scenario.t_end):
            raise ConfigurationError("compare_time must lie in (0, t_end]")

    @property
    def time(self) -> float:
        return self.base_scenario.t_end if self.compare_time is None else float(self.compare_time)


def lubrication_limit_params(p: ShallowWaterParams) -> LubricationParams:
    """Lubrication coefficients reached as ``eps -> 0``.

    Requires ``m = beta + n`` in (1, 2) with the drag weight ``F = h^n``
    also serving as the lubrication mobility.
    """
    if p.mobility.kind != POWER_LAW:
        raise ConfigurationError("the relaxation limit needs a power-law mobility F = h^n")
    m = p.beta + p.mobility.n
    if not 1.0 < m < 2.0:
        raise ConfigurationError(f"coupling constraint violated: beta + n must lie in (1, 2), got {m:g}")
    if p.capillary_coeff <= 0:
        raise ConfigurationError("the relaxation limit needs a positive capillary coefficient")
    return LubricationParams(
        alpha=p.alpha,
        we=1.0 / p.capillary_coeff,
        fr=p.fr,
        mobility=p.mobility,
        m=m,
        cap_A=p.cap_A,
        check_regime=True,
    )


def _relaxation_job(job) -> dict:
    scenario, eps, T = job
    p = replace(scenario.params, eps=eps)
    sc = replace(scenario, params=p)
    try:
        res = run_scenario(sc, t_end=T)
    except EntroflowError as exc:
        return {"status": f"failed: {exc}"}
    return {
        "status": "ok",
        "h": res.state.h.values,
        "bd_combined": bd_entropy(res.state.h, res.state.u, p, ENERGY_COMBINED),
        "endpoint": _ledger_endpoint(res.ledger),
    }


def relaxation_study(spec: SweepSpec) -> ConvergenceReport:
    """Compare shallow-water runs at each ``eps`` with the lubrication limit.

    Per row: the error ``h_eps(T) - h(T)`` in each norm, the BD entropy
    (``energy_combined`` mode, divided by ``viscous_coeff * alpha``), the BF
    entropy of the limit run and their gap, plus the final ledger values.
    """
    sc = spec.base_scenario
    p = sc.params
    lp = lubrication_limit_params(p)
    grid = sc.grid
    if not grid.periodic:
        raise ConfigurationError("relaxation studies run on periodic grids")
    T = spec.time
    h0 = ScalarField(grid, sc.h0())
    ref_state, ref_ledger = lubrication_run(h0, lp, spec.reference_stepper, T, cadence=10**9)
    bf_ref = bf_entropy(ref_state.h, lp)
    scale = p.viscous_coeff * p.alpha

    results = _map(_relaxation_job, [(sc, eps, T) for eps in spec.eps_values], spec.workers)
    rows = []
    for eps, r in zip(spec.eps_values, results):
        row = {"eps": eps, "status": r["status"]}
        if r["status"] == "ok":
            row.update({f"error_{n}": v for n, v in error_norms(r["h"] - ref_state.h.values, grid, spec.norms).items()})
            row["bd_combined"] = r["bd_combined"]
            row["bd_scaled"] = r["bd_combined"] / scale if scale > 0 else math.nan
            row["bf_limit"] = bf_ref
            row["gap"] = abs(row["bd_scaled"] - bf_ref)
            row.update(r["endpoint"])
        else:
            row.update({f"error_{n}": math.nan for n in spec.norms})
            row.update(bd_combined=math.nan, bd_scaled=math.nan, bf_limit=bf_ref, gap=math.nan)
            row.update(_nan_endpoint())
        rows.append(row)

    rates = {n: fitted_rate(spec.eps_values, [r[f"error_{n}"] for r in rows]) for n in spec.norms}
    rates["gap"] = fitted_rate(spec.eps_values, [r["gap"] for r in rows])
    meta = {
        "study": "relaxation",
        "scenario_hash": scenario_hash(sc),
        "compare_time": T,
        "norms": list(spec.norms),
        "limit_m": lp.m,
        "limit_we": lp.we,
        "reference_mass_drift": _ledger_endpoint(ref_ledger)["mass_drift"],
        "errors_monotone": {n: _strictly_decreasing([r[f"error_{n}"] for r in rows]) for n in spec.norms},
        "gap_monotone": _strictly_decreasing([r["gap"] for r in rows]),
    }
    return ConvergenceReport(rows, rates, meta)


def _strictly_decreasing(v: Sequence[float]) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))


# -- refinement study ------------------------------------------------------------


def restrict(fine: np.ndarray, fine_grid: Grid1D, coarse_grid: Grid1D) -> np.ndarray:
    """Transfer cell values to a coarser dyadic grid.

    Periodic grids store values at ``x_i = i dx``, shared by all levels, so
    restriction is injection; wall grids are cell-centred and use block
    averages.
    """
    r = fine_grid.n_cells // coarse_grid.n_cells
    if r * coarse_grid.n_cells != fine_grid.n_cells:
        raise ConfigurationError("grids are not dyadically nested")
    if fine_grid.periodic:
        return fine[::r].copy()
    return fine.reshape(coarse_grid.n_cells, r).mean(axis=1)


def _refinement_job(job) -> dict:
    scenario, manufactured = job
    try:
        if manufactured:
            p = scenario.params
            exact, source = manufactured_solution(p, length=scenario.grid.length)
            h0 = ScalarField(scenario.grid, exact(scenario.grid.x, 0.0))
            state, ledger = lubrication_run(
                h0, p, scenario.time_stepper, scenario.t_end, cadence=scenario.output.cadence, source=source
            )
            err = state.h.values - exact(scenario.grid.x, state.time)
            return {"status": "ok", "h": state.h.values, "err": err, "endpoint": _ledger_endpoint(ledger)}
        res = run_scenario(scenario)
    except EntroflowError as exc:
        return {"status": f"failed: {exc}"}
    return {"status": "ok", "h": res.state.h.values, "err": None, "endpoint": _ledger_endpoint(res.ledger)}


def refinement_levels(scenario: Scenario, levels: int, dt_power: float = 1.0) -> list[Scenario]:
    """``levels`` dyadic refinements starting at the scenario's grid.

    Step sizes shrink by ``2**-dt_power`` per level (``dt_power=2`` keeps
    ``dt / dx^2`` fixed, which isolates the spatial error of a first-order
    time integrator).
    """
    if int(levels) != levels or levels < 3:
        raise ConfigurationError("refinement studies need levels >= 3")
    out = []
    for k in range(int(levels)):
        grid = Grid1D(scenario.grid.n_cells * 2**k, scenario.grid.length, scenario.grid.topology)
        ts = scenario.time_stepper.scaled(2.0 ** (-dt_power * k))
        out.append(replace(scenario, grid=grid, time_stepper=ts))
    return out


def refinement_study(
    scenario: Scenario,
    levels: int,
    manufactured: bool = False,
    dt_power: float | None = None,
    norms: Sequence[str] = NORMS,
    workers: int = 1,
) -> ConvergenceReport:
    """Dyadic spacing refinement at fixed final time.

    With ``manufactured=True`` (lubrication only) the solution
    ``1 + 0.1 e^{-t} cos(2 pi x / L)`` is forced by its source term and errors
    are exact; otherwise errors are measured against the finest level, which
    therefore gets NaN errors.  Balance residuals are reported for every
    level; fitted rates are slopes against ``dx``.
    """
    if manufactured and scenario.system != LUBRICATION:
        raise ConfigurationError("manufactured solutions are available for the lubrication system only")
    if dt_power is None:
        dt_power = 2.0 if manufactured else 1.0
    ladder = refinement_levels(scenario, levels, dt_power)
    results = _map(_refinement_job, [(s, manufactured) for s in ladder], workers)

    finest = results[-1]
    rows = []
    for s, r in zip(ladder, results):
        row = {"n_cells": float(s.grid.n_cells), "dx": s.grid.spacing, "status": r["status"]}
        if r["status"] != "ok":
            row.update({f"error_{n}": math.nan for n in norms})
            row.update(_nan_endpoint())
        else:
            if manufactured:
                row.update({f"error_{n}": v for n, v in error_norms(r["err"], s.grid, norms).items()})
            elif s is ladder[-1] or finest["status"] != "ok":
                row.update({f"error_{n}": math.nan for n in norms})
            else:
                e = r["h"] - restrict(finest["h"], ladder[-1].grid, s.grid)
                row.update({f"error_{n}": v for n, v in error_norms(e, s.grid, norms).items()})
            row.update(r["endpoint"])
        rows.append(row)

    dxs = [r["dx"] for r in rows]
    rates = {n: fitted_rate(dxs, [r[f"error_{n}"] for r in rows]) for n in norms}
    for c in RESIDUALS:
        rates[c] = fitted_rate(dxs, [abs(r[f"final_{c}"]) for r in rows])
    meta = {
        "study": "refinement",
        "scenario_hash": scenario_hash(scenario),
        "levels": int(levels),
        "manufactured": bool(manufactured),
        "dt_power": float(dt_power),
        "observed_orders": {n: observed_orders([r[f"error_{n}"] for r in rows]) for n in norms},
        "residual_orders": {c: observed_orders([r[f"final_{c}"] for r in rows]) for c in RESIDUALS},
    }
    return ConvergenceReport(rows, rates, meta)


# -- floor sweep -------------------------------------------------------------------


def _floor_job(scenario: Scenario) -> dict:
    try:
        res = run_scenario(scenario)
    except EntroflowError as exc:
        return {"status": f"failed: {exc}"}
    led = res.ledger
    return {
        "status": "ok",
        "min_h_trajectory": led.column("min_h"),
        "times": led.times,
        "bf": led.column("bf"),
        "endpoint": _ledger_endpoint(led),
    }


def floor_sweep(scenario: Scenario, floors: Sequence[float], workers: int = 1) -> ConvergenceReport:
    """Rerun ``scenario`` with each positivity floor applied to its initial data.

    Failures are recorded per row and do not stop the sweep.  Rows report
    the smallest height seen, its ratio to the floor, the BF entropy growth
    and the mass drift; ``metadata['min_h_trajectories']`` keeps the full
    ``(time, min_h)`` series.
    """
    floors = [float(f) for f in floors]
    if not floors or any(not (f > 0) for f in floors):
        raise ConfigurationError("floors must be positive")
    if any(b >= a for a, b in zip(floors[:-1], floors[1:])):
        raise ConfigurationError("floors must be strictly decreasing")
    ladder = [replace(scenario, initial_h=replace(scenario.initial_h, floor=f)) for f in floors]
    results = _map(_floor_job, ladder, workers)
    rows = []
    trajectories = []
    for f, r in zip(floors, results):
        row = {"floor": f, "status": r["status"]}
        if r["status"] == "ok":
            mh = r["min_h_trajectory"]
            bf = r["bf"]
            row.update(
                min_h=float(np.min(mh)),
                min_h_over_floor=float(np.min(mh)) / f,
                bf_initial=float(bf[0]),
                bf_growth=float(bf[-1] - bf[0]),
                bf_max=float(np.max(bf)),
                bounded=float(np.all(np.isfinite(bf)) and np.all(np.isfinite(mh))),
            )
            row.update(r["endpoint"])
            trajectories.append({"floor": f, "time": r["times"].tolist(), "min_h": mh.tolist()})
        else:
            row.update(min_h=math.nan, min_h_over_floor=math.nan, bf_initial=math.nan,
                       bf_growth=math.nan, bf_max=math.nan, bounded=0.0)
            row.update(_nan_endpoint())
        rows.append(row)
    rates = {"min_h": fitted_rate(floors, [r["min_h"] for r in rows])}
    meta = {
        "study": "floor",
        "scenario_hash": scenario_hash(scenario),
        "floors": floors,
        "min_h_trajectories": trajectories,
    }
    return ConvergenceReport(rows, rates, meta)


__all__ = [
    "ConvergenceReport",
    "RunResult",
    "SweepSpec",
    "error_norms",
    "fitted_rate",
    "floor_sweep",
    "lubrication_limit_params",
    "observed_orders",
    "refinement_study",
    "relaxation_study",
    "restrict",
    "run_scenario",
]
