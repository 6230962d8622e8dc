"""Scenario files: JSON schema, validation, presets and canonical form.

A scenario is a JSON object::

    {
      "system": "lubrication" | "shallow_water" | "electrified" | "shallow_water_nonlocal",
      "grid": {"n_cells": 128, "length": 1.0, "topology": "periodic" | "wall"},
      "params": {...},                       # per system, see PARAM_DEFAULTS
      "initial_h": {"preset": "droplet", ...},
      "initial_momentum": {"preset": "zero" | "prepared" | "table", ...},
      "t_end": 1.0,
      "time_stepper": {"dt_init": 1e-4, ...},
      "output": {"cadence": 1, "directory": null, "snapshots": true, "ledger": true, "plots": false}
    }

Only ``system``, ``grid.n_cells`` and ``t_end`` are required.  Parsing
either returns a :class:`Scenario` with every default filled in or raises
:class:`~entroflow.errors.ValidationError` listing all problems found.
``dumps`` writes the canonical form; ``parse_scenario(dumps(s)) == s``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

from .errors import ConfigurationError, ValidationError
from .grid import PERIODIC, WALL, Grid1D
from .lubrication import TimeStepper
from .mobility import POWER_LAW, QUADRATIC_CUBIC, MobilitySpec
from .params import NONLOCAL_PRESSURE, ElectrifiedParams, LubricationParams, ShallowWaterParams

LUBRICATION = "lubrication"
SHALLOW_WATER = "shallow_water"
ELECTRIFIED = "electrified"
SHALLOW_WATER_NONLOCAL = "shallow_water_nonlocal"
SYSTEMS = (LUBRICATION, SHALLOW_WATER, ELECTRIFIED, SHALLOW_WATER_NONLOCAL)
SHALLOW_SYSTEMS = (SHALLOW_WATER, SHALLOW_WATER_NONLOCAL)

# value None means "derived": cap_A from the initial data, viscous/capillary
# coefficients from re/we
PARAM_DEFAULTS: dict[str, dict[str, Any]] = {
    LUBRICATION: {
        "alpha": 1.0,
        "we": 1.0,
        "fr": 1.0,
        "mobility": {"kind": POWER_LAW, "n": 3.0},
        "m": 1.5,
        "cap_A": None,
        "check_regime": False,
        "alpha_in_dissipation": True,
    },
    SHALLOW_WATER: {
        "alpha": 1.0,
        "re": 1.0,
        "we": 1.0,
        "fr": 1.0,
        "eps": 1e-2,
        "mobility": {"kind": POWER_LAW, "n": 2.0},
        "beta": 1.0,
        "viscous_coeff": None,
        "capillary_coeff": None,
        "cap_A": None,
        "check_coupling": False,
    },
    ELECTRIFIED: {"cap_A": None},
    SHALLOW_WATER_NONLOCAL: {
        "alpha": 1.0,
        "eps": 1e-2,
        "viscous_coeff": 1.0,
        "capillary_coeff": 1.0,
        "cap_A": None,
    },
}

PRESETS = {
    "constant": {"value": 1.0},
    "cosine_bump": {"mean": 1.0, "amplitude": 0.2, "mode": 1.0},
    "droplet": {"base": 0.2, "height": 1.0},
    "touchdown": {"cut": 0.5},
    "random_smooth": {"mean": 1.0, "amplitude": 0.1, "modes": 4, "seed": 0},
    "table": {"x": None, "h": None},
}
MOMENTUM_PRESETS = ("zero", "prepared", "table")

STEPPER_FIELDS = {f.name: f.default for f in fields(TimeStepper)}
OUTPUT_DEFAULTS = {"cadence": 1, "directory": None, "snapshots": True, "ledger": True, "plots": False}


@dataclass(frozen=True)
class InitialProfile:
    """Named initial height profile; ``floor`` is applied as ``max(h, floor)``."""

    preset: str
    options: tuple[tuple[str, Any], ...]
    floor: float

    def option(self, name: str):
        return dict(self.options)[name]

    def raw(self, grid: Grid1D) -> np.ndarray:
        return _evaluate_preset(self.preset, dict(self.options), grid)

    def evaluate(self, grid: Grid1D) -> np.ndarray:
        return np.maximum(self.raw(grid), self.floor)

    def to_dict(self) -> dict:
        d = {"preset": self.preset, "floor": self.floor}
        d.update({k: _plain(v) for k, v in self.options})
        return d


@dataclass(frozen=True)
class MomentumSpec:
    preset: str = "zero"
    values: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"preset": self.preset}
        if self.values is not None:
            d["values"] = list(self.values)
        return d


@dataclass(frozen=True)
class OutputSpec:
    cadence: int = 1
    directory: str | None = None
    snapshots: bool = True
    ledger: bool = True
    plots: bool = False

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Scenario:
    system: str
    grid: Grid1D
    params: Any
    initial_h: InitialProfile
    t_end: float
    time_stepper: TimeStepper = field(default_factory=TimeStepper)
    initial_momentum: MomentumSpec | None = None
    output: OutputSpec = field(default_factory=OutputSpec)

    def to_dict(self) -> dict:
        d = {
            "system": self.system,
            "grid": {
                "n_cells": self.grid.n_cells,
                "length": self.grid.length,
                "topology": self.grid.topology,
            },
            "params": _params_to_dict(self.system, self.params),
            "initial_h": self.initial_h.to_dict(),
            "t_end": self.t_end,
            "time_stepper": {k: getattr(self.time_stepper, k) for k in STEPPER_FIELDS},
            "output": self.output.to_dict(),
        }
        if self.initial_momentum is not None:
            d["initial_momentum"] = self.initial_momentum.to_dict()
        return d

    def with_overrides(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def h0(self) -> np.ndarray:
        return self.initial_h.evaluate(self.grid)


# -- presets -------------------------------------------------------------------


def _evaluate_preset(preset: str, o: dict, grid: Grid1D) -> np.ndarray:
    x = grid.x
    L = grid.length
    if preset == "constant":
        return np.full(grid.n_cells, float(o["value"]))
    if preset == "cosine_bump":
        return o["mean"] + o["amplitude"] * np.cos(2 * math.pi * o["mode"] * x / L)
    if preset == "droplet":
        return o["base"] + o["height"] * np.cos(math.pi * x / L) ** 2
    if preset == "touchdown":
        return np.maximum(0.0, np.cos(math.pi * x / L) ** 2 - o["cut"])
    if preset == "random_smooth":
        rng = np.random.default_rng(int(o["seed"]))
        k = np.arange(1, int(o["modes"]) + 1)
        a = rng.standard_normal(k.size) / k**2
        b = rng.standard_normal(k.size) / k**2
        if grid.topology == WALL:
            b = np.zeros_like(b)  # cosines keep the Neumann condition
        phase = 2 * math.pi * np.outer(x / L, k)
        wave = np.cos(phase) @ a + np.sin(phase) @ b
        scale = np.max(np.abs(wave)) or 1.0
        return o["mean"] + o["amplitude"] * wave / scale
    if preset == "table":
        xs = np.asarray(o["x"], dtype=float)
        hs = np.asarray(o["h"], dtype=float)
        if grid.periodic:
            return np.interp(x, xs, hs, period=L)
        return np.interp(x, xs, hs)
    raise ConfigurationError(f"unknown preset {preset!r}")


# -- parsing -------------------------------------------------------------------


class _Reader:
    """Reads one JSON object, collecting errors under a dotted path."""

    def __init__(self, data, path: str, errors: list[tuple[str, str]]):
        self.path = path
        self.errors = errors
        self.seen: set[str] = set()
        if data is None:
            data = {}
        if not isinstance(data, dict):
            self.fail("", "must be a JSON object")
            data = {}
        self.data = data

    def at(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def fail(self, key: str, msg: str):
        path = self.at(key) if key else self.path
        self.errors.append((path, msg))

    def has(self, key: str) -> bool:
        return key in self.data

    def get(self, key: str, default=None):
        self.seen.add(key)
        return self.data.get(key, default)

    def number(self, key, default=None, *, positive=False, nonneg=False, integer=False, required=False,
               allow_none=False):
        if key not in self.data:
            if required:
                self.fail(key, "is required")
            self.seen.add(key)
            return default
        v = self.get(key)
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(key, "must be a number")
            return default
        if not math.isfinite(v):
            self.fail(key, "must be finite")
            return default
        if integer:
            if float(v) != int(v):
                self.fail(key, "must be an integer")
                return default
            v = int(v)
        else:
            v = float(v)
        if positive and not v > 0:
            self.fail(key, f"{key} must be positive")
            return default
        if nonneg and v < 0:
            self.fail(key, f"{key} must be non-negative")
            return default
        return v

    def boolean(self, key, default):
        v = self.get(key, default)
        if not isinstance(v, bool):
            self.fail(key, "must be true or false")
            return default
        return v

    def choice(self, key, options, default=None, required=False):
        if key not in self.data:
            if required:
                self.fail(key, f"is required (one of {', '.join(options)})")
            self.seen.add(key)
            return default
        v = self.get(key)
        if v not in options:
            self.fail(key, f"must be one of {', '.join(options)}, got {v!r}")
            return default
        return v

    def string(self, key, default=None, allow_none=True):
        v = self.get(key, default)
        if v is None and allow_none:
            return None
        if not isinstance(v, str):
            self.fail(key, "must be a string")
            return default
        return v

    def number_list(self, key, required=False):
        if key not in self.data:
            if required:
                self.fail(key, "is required")
            self.seen.add(key)
            return None
        v = self.get(key)
        if not isinstance(v, list) or not v or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) and math.isfinite(t) for t in v
        ):
            self.fail(key, "must be a non-empty list of finite numbers")
            return None
        return [float(t) for t in v]

    def finish(self):
        for key in self.data:
            if key not in self.seen:
                self.fail(key, "unknown field")


def parse_scenario(text: str | bytes | dict) -> Scenario:
    """Validate scenario JSON text (or an already decoded object)."""
    errors: list[tuple[str, str]] = []
    if isinstance(text, dict):
        data = text
    else:
        try:
            if isinstance(text, bytes):
                text = text.decode("utf-8")
            data = json.loads(text)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValidationError([("", f"not valid JSON: {exc}")]) from None
    top = _Reader(data, "", errors)
    if not top.data and not isinstance(data, dict):
        raise ValidationError(errors)

    system = top.choice("system", SYSTEMS, required=True)
    grid = _parse_grid(_Reader(top.get("grid"), "grid", errors), system)
    t_end = top.number("t_end", required=True, positive=True)
    profile_raw = top.get("initial_h")
    params_raw = top.get("params")
    stepper = _parse_stepper(_Reader(top.get("time_stepper"), "time_stepper", errors))
    output = _parse_output(_Reader(top.get("output"), "output", errors))

    momentum = None
    if top.has("initial_momentum"):
        if system not in SHALLOW_SYSTEMS:
            top.fail("initial_momentum", "only shallow-water systems take an initial momentum")
            top.get("initial_momentum")
        else:
            momentum = _parse_momentum(_Reader(top.get("initial_momentum"), "initial_momentum", errors), grid)
    elif system in SHALLOW_SYSTEMS:
        momentum = MomentumSpec()
    top.finish()

    profile = None
    if grid is not None:
        profile = _parse_profile(_Reader(profile_raw, "initial_h", errors), grid)
    params = None
    if system is not None:
        h0 = profile.evaluate(grid) if (profile is not None and grid is not None) else None
        params = _parse_params(_Reader(params_raw, "params", errors), system, h0)

    if errors:
        raise ValidationError(errors)
    return Scenario(system, grid, params, profile, t_end, stepper, momentum, output)


def _parse_grid(r: _Reader, system) -> Grid1D | None:
    n = r.number("n_cells", required=True, integer=True)
    length = r.number("length", 1.0, positive=True)
    default_topology = WALL if system in (ELECTRIFIED, SHALLOW_WATER_NONLOCAL) else PERIODIC
    topology = r.choice("topology", (PERIODIC, WALL), default_topology)
    r.finish()
    if n is not None and n < 8:
        r.fail("n_cells", "n_cells must be an integer >= 8")
        return None
    if system in (ELECTRIFIED, SHALLOW_WATER_NONLOCAL):
        if topology != WALL:
            r.fail("topology", f"the {system} system needs a wall grid")
        if length != 1.0:
            r.fail("length", f"the {system} system lives on the unit interval")
    if system == LUBRICATION and topology != PERIODIC:
        r.fail("topology", "the lubrication solver runs on periodic grids")
    if n is None or length is None or topology is None:
        return None
    try:
        return Grid1D(n, length, topology)
    except ConfigurationError as exc:
        r.fail("", str(exc))
        return None


def _parse_stepper(r: _Reader) -> TimeStepper:
    vals = {}
    for name, default in STEPPER_FIELDS.items():
        if name == "newton_max_iter":
            vals[name] = r.number(name, default, integer=True, positive=True)
        elif name == "ramp_time":
            vals[name] = r.number(name, default, positive=True, allow_none=True)
        else:
            vals[name] = r.number(name, default, positive=True)
    r.finish()
    try:
        return TimeStepper(**vals)
    except (ConfigurationError, TypeError) as exc:
        r.fail("", str(exc))
        return TimeStepper()


def _parse_output(r: _Reader) -> OutputSpec:
    spec = OutputSpec(
        cadence=r.number("cadence", 1, integer=True, positive=True),
        directory=r.string("directory"),
        snapshots=r.boolean("snapshots", True),
        ledger=r.boolean("ledger", True),
        plots=r.boolean("plots", False),
    )
    r.finish()
    return spec


def _parse_momentum(r: _Reader, grid: Grid1D | None) -> MomentumSpec:
    preset = r.choice("preset", MOMENTUM_PRESETS, "zero")
    values = None
    if preset == "table":
        values = r.number_list("values", required=True)
        if values is not None and grid is not None and len(values) != grid.n_faces:
            r.fail("values", f"needs {grid.n_faces} face values, got {len(values)}")
    r.finish()
    return MomentumSpec(preset or "zero", tuple(values) if values is not None else None)


def _parse_profile(r: _Reader, grid: Grid1D) -> InitialProfile | None:
    preset = r.choice("preset", tuple(PRESETS), "droplet")
    if preset is None:
        r.finish()
        return None
    opts: dict[str, Any] = {}
    for name, default in PRESETS[preset].items():
        if preset == "table":
            opts[name] = r.number_list(name, required=True)
        elif name in ("modes", "seed"):
            opts[name] = r.number(name, default, integer=True, nonneg=True)
        elif name == "cut":
            opts[name] = r.number(name, default, nonneg=True)
        else:
            opts[name] = r.number(name, default)
    floor = r.number("floor", None, positive=True, allow_none=True)
    r.finish()
    if preset == "table" and opts["x"] is not None and opts["h"] is not None:
        if len(opts["x"]) != len(opts["h"]):
            r.fail("h", "table x and h must have the same length")
            return None
        if np.any(np.diff(opts["x"]) <= 0):
            r.fail("x", "table x must be strictly increasing")
            return None
    if any(v is None for v in opts.values()):
        return None
    options = tuple((k, tuple(v) if isinstance(v, list) else v) for k, v in opts.items())
    raw = _evaluate_preset(preset, dict(options), grid)
    if not np.all(np.isfinite(raw)):
        r.fail("", "initial height is not finite")
        return None
    if floor is None:
        mean = float(np.mean(raw))
        if not mean > 0:
            r.fail("", "initial height must have positive mean")
            return None
        floor = 1e-6 * mean
    h = np.maximum(raw, floor)
    if not np.all(h > 0):
        r.fail("", "initial height must be strictly positive after the floor")
        return None
    return InitialProfile(preset, options, float(floor))


def _parse_mobility(r: _Reader, default: dict) -> MobilitySpec | None:
    raw = r.get("mobility")
    n_short = r.number("n", None, positive=True)
    if raw is None:
        raw = {"kind": POWER_LAW, "n": n_short} if n_short is not None else default
    elif n_short is not None:
        r.fail("n", "give either n or mobility, not both")
    m = _Reader(raw, r.at("mobility"), r.errors)
    kind = m.choice("kind", (POWER_LAW, QUADRATIC_CUBIC), POWER_LAW)
    n = None
    if kind == POWER_LAW:
        n = m.number("n", 3.0, positive=True)
    m.finish()
    if kind is None or (kind == POWER_LAW and n is None):
        return None
    return MobilitySpec.power_law(n) if kind == POWER_LAW else MobilitySpec.quadratic_cubic()


def default_cap_A(h0: np.ndarray | None) -> float:
    """``ceil(2 max h0)``: a comfortable bound above the film height."""
    if h0 is None:
        return 2.0
    return float(max(1, math.ceil(2.0 * float(np.max(h0)))))


def _parse_params(r: _Reader, system: str, h0: np.ndarray | None):
    defaults = PARAM_DEFAULTS[system]
    vals: dict[str, Any] = {}
    mobility = None
    for name, default in defaults.items():
        if name == "mobility":
            mobility = _parse_mobility(r, default)
        elif name in ("check_regime", "alpha_in_dissipation", "check_coupling"):
            vals[name] = r.boolean(name, default)
        elif name == "m":
            vals[name] = r.number(name, default, allow_none=True)
        elif name in ("viscous_coeff", "capillary_coeff"):
            vals[name] = r.number(name, default, nonneg=True, allow_none=True)
        else:
            vals[name] = r.number(name, default, positive=True, allow_none=(default is None))
    if system in (ELECTRIFIED, SHALLOW_WATER_NONLOCAL):
        mob = _parse_mobility(r, {"kind": POWER_LAW, "n": 3.0})
        if mob is not None and mob != MobilitySpec.power_law(3.0):
            r.fail("mobility", f"the {system} system fixes the mobility to n=3")
    r.finish()
    if vals.get("cap_A") is None:
        vals["cap_A"] = default_cap_A(h0)
    if any(v is None for k, v in vals.items() if k not in ("m", "viscous_coeff", "capillary_coeff")):
        return None
    if h0 is not None and float(np.max(h0)) > vals["cap_A"]:
        r.fail("cap_A", f"cap_A={vals['cap_A']:g} must dominate the initial height (max {np.max(h0):.6g})")
    try:
        if system == LUBRICATION:
            if mobility is None:
                return None
            return LubricationParams(mobility=mobility, **vals)
        if system == SHALLOW_WATER:
            if mobility is None:
                return None
            return ShallowWaterParams(mobility=mobility, **vals)
        if system == ELECTRIFIED:
            return ElectrifiedParams(**vals)
        return ShallowWaterParams(
            mobility=MobilitySpec.power_law(3.0), pressure=NONLOCAL_PRESSURE, **vals
        )
    except ConfigurationError as exc:
        msg = str(exc)
        key = msg.split(" ")[0] if msg.split(" ")[0] in vals else ""
        if "beta + n" in msg:
            msg = msg.replace("beta + n must lie in (1, 2)", "coupling constraint violated: beta + n must lie in (1, 2)")
        r.fail(key, msg)
        return None


def _params_to_dict(system: str, params) -> dict:
    d = params.to_dict()
    if system == SHALLOW_WATER_NONLOCAL:
        return {k: d[k] for k in PARAM_DEFAULTS[SHALLOW_WATER_NONLOCAL]}
    if system == SHALLOW_WATER:
        d.pop("pressure", None)
    return d


def _plain(v):
    if isinstance(v, tuple):
        return list(v)
    return v


# -- serialisation -------------------------------------------------------------


def dumps(scenario: Scenario) -> str:
    """Canonical JSON (sorted keys, every default explicit)."""
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n"


def scenario_hash(scenario: Scenario) -> str:
    """First 12 hex digits of the SHA-256 of the compact canonical form."""
    blob = json.dumps(scenario.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.path=value`` overrides to decoded scenario JSON.

    Values are read as JSON when possible (numbers, booleans, null, lists)
    and as plain strings otherwise.
    """
    out = copy.deepcopy(data)
    errors = []
    for item in overrides:
        if "=" not in item:
            errors.append(("--override", f"expected key=value, got {item!r}"))
            continue
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            errors.append(("--override", f"empty key in {item!r}"))
            continue
        node = out
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                errors.append(("--override", f"{key}: {p} is not an object"))
                break
            node = nxt
        else:
            node[parts[-1]] = value
    if errors:
        raise ValidationError(errors)
    return out


def load_scenario(path, overrides: list[str] | None = None) -> Scenario:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError([("", f"not valid JSON: {exc}")]) from None
    if overrides:
        if not isinstance(data, dict):
            raise ValidationError([("", "must be a JSON object")])
        data = apply_overrides(data, overrides)
    return parse_scenario(data)
