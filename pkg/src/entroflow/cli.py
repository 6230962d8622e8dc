"""Command-line driver.

Subcommands: ``run``, ``relax-study``, ``refine-study``, ``floor-sweep``,
``entropy-check`` and ``kernel-dump``.  Exit codes: 0 success, 2 validation
error, 3 run failure, 4 acceptance-check failure.

Outputs go to ``--out``, else the scenario's ``output.directory``, else
``$ENTROFLOW_OUT_DIR/<system>-<hash>``, else ``./entroflow-out/<system>-<hash>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .electrified import electrified_sample, kernel, kernel_audit, nonlocal_energy
from .errors import ConfigurationError, DomainError, EntroflowError, ValidationError
from .grid import WALL, Grid1D
from .harness import SweepSpec, floor_sweep, refinement_study, relaxation_study, run_scenario
from .io import read_snapshot, snapshot_fields, write_json, write_ledger, write_matrix, write_report, write_snapshot
from .lubrication import LubricationState, lubrication_sample
from .plots import convergence_plot, ledger_plot, write_svg
from .scenario import ELECTRIFIED, LUBRICATION, SHALLOW_WATER_NONLOCAL, Scenario, dumps, load_scenario, scenario_hash
from .shallow_water import ShallowWaterState, sw_sample, velocity_field

log = logging.getLogger("entroflow")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUN = 3
EXIT_CHECK = 4
OUT_ENV = "ENTROFLOW_OUT_DIR"


class CheckFailed(Exception):
    """An acceptance check computed by a subcommand did not hold."""


def output_dir(args, scenario: Scenario | None, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    if scenario is not None and scenario.output.directory:
        return Path(scenario.output.directory)
    name = default_name if scenario is None else f"{scenario.system}-{scenario_hash(scenario)}"
    root = os.environ.get(OUT_ENV) or "entroflow-out"
    return Path(root) / name


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError([("", f"expected a comma-separated list of numbers, got {text!r}")]) from None


def _load(args) -> Scenario:
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"initial_h.seed={int(args.seed)}")
    try:
        return load_scenario(args.scenario, overrides)
    except OSError as exc:
        raise ValidationError([("--scenario", str(exc))]) from None


def _seed_applies(args) -> bool:
    """``--seed`` only touches scenarios using the random_smooth preset."""
    if args.seed is None:
        return False
    with open(args.scenario, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError:
            return False
    ih = data.get("initial_h") if isinstance(data, dict) else None
    return isinstance(ih, dict) and ih.get("preset") == "random_smooth"


def _load_scenario_arg(args) -> Scenario:
    if args.seed is not None and not _seed_applies(args):
        log.warning("--seed ignored: the scenario's initial profile is not random_smooth")
        args = argparse.Namespace(**{**vars(args), "seed": None})
    return _load(args)


# -- subcommands -------------------------------------------------------------------


def cmd_run(args) -> int:
    sc = _load_scenario_arg(args)
    out = output_dir(args, sc, "run")
    h_hash = scenario_hash(sc)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.json").write_text(dumps(sc), encoding="utf-8")
    result = run_scenario(sc)
    if sc.output.ledger:
        write_ledger(result.ledger, out / "ledger.csv")
    if sc.output.snapshots:
        write_snapshot(result.state, out / "snapshot_final.csv")
    if sc.output.plots:
        write_svg(ledger_plot(result.ledger, h_hash), out / "functionals.svg")
    last = result.ledger.last()
    print(f"{sc.system} {h_hash}: t={last['time']:.6g} mass={last['mass']:.17g} min_h={last['min_h']:.6g} -> {out}")
    return EXIT_OK


def cmd_relax(args) -> int:
    sc = _load_scenario_arg(args)
    out = output_dir(args, sc, "relax")
    spec = SweepSpec(
        sc,
        tuple(_floats(args.eps)),
        compare_time=args.compare_time,
        workers=args.workers,
    )
    report = relaxation_study(spec)
    write_report(report, out / "relaxation.csv", out / "relaxation.json")
    try:
        write_svg(convergence_plot(report, "eps", ["error_L2", "error_H1", "error_Linf", "gap"], scenario_hash(sc)),
                  out / "relaxation.svg")
    except ConfigurationError as exc:
        log.warning("no relaxation plot: %s", exc)
    for r in report.rows:
        print(f"eps={r['eps']:.3g} L2={r['error_L2']:.6e} gap={r['gap']:.6e} {r['status']}")
    if not report.ok:
        return EXIT_RUN
    m = report.metadata
    if not (m["errors_monotone"].get("L2", True) and m["gap_monotone"]):
        raise CheckFailed("relaxation errors or entropy gap are not strictly decreasing in eps")
    return EXIT_OK


def cmd_refine(args) -> int:
    sc = _load_scenario_arg(args)
    out = output_dir(args, sc, "refine")
    report = refinement_study(sc, args.levels, manufactured=args.manufactured, dt_power=args.dt_power,
                              workers=args.workers)
    write_report(report, out / "refinement.csv", out / "refinement.json")
    keys = ["error_L2"] + [f"final_{c}" for c in ("residual_energy", "residual_bf")]
    try:
        write_svg(convergence_plot(report, "dx", keys, scenario_hash(sc)), out / "refinement.svg")
    except ConfigurationError as exc:
        log.warning("no refinement plot: %s", exc)
    for name, rate in sorted(report.fitted_rate.items()):
        print(f"{name}: fitted order {rate:.4f}")
    if not report.ok:
        return EXIT_RUN
    min_order = args.min_order
    if min_order is None and args.manufactured:
        min_order = 1.8
    if min_order is not None:
        rate = report.fitted_rate["L2"]
        if not rate >= min_order:
            raise CheckFailed(f"observed L2 order {rate:.4f} below {min_order:g}")
    return EXIT_OK


def cmd_floor(args) -> int:
    sc = _load_scenario_arg(args)
    out = output_dir(args, sc, "floor")
    report = floor_sweep(sc, _floats(args.floors), workers=args.workers)
    write_report(report, out / "floor.csv", out / "floor.json")
    try:
        write_svg(convergence_plot(report, "floor", ["min_h"], scenario_hash(sc)), out / "floor.svg")
    except ConfigurationError as exc:
        log.warning("no floor plot: %s", exc)
    for r in report.rows:
        print(f"floor={r['floor']:.3g} min_h={r['min_h']:.6e} bf_growth={r['bf_growth']:.6e} {r['status']}")
    if all(r["status"] != "ok" for r in report.rows):
        return EXIT_RUN
    drift = [r["mass_drift"] for r in report.rows if r["status"] == "ok"]
    if max(drift) > 1e-12:
        raise CheckFailed(f"mass drift {max(drift):.3e} exceeds 1e-12")
    return EXIT_OK


def entropy_values(sc: Scenario, snap: dict) -> dict:
    """Every functional of the scenario's system evaluated on a snapshot."""
    h, u = snapshot_fields(snap, sc.grid)
    if sc.system == LUBRICATION:
        s = lubrication_sample(sc.params)(h)
    elif sc.system == ELECTRIFIED:
        k = kernel(sc.grid)
        s = electrified_sample(k, sc.params.cap_A)(h)
    else:
        if u is None:
            u = velocity_field(sc.grid, [0.0] * sc.grid.n_faces)
        k = kernel(sc.grid) if sc.system == SHALLOW_WATER_NONLOCAL else None
        s = sw_sample(sc.params, k)(ShallowWaterState(0.0, h, u))
    out = {name: float(getattr(s, name)) for name in
           ("mass", "energy", "bf", "min_h", "rate_energy", "rate_bf", "bd_raw", "bd_combined", "rate_bd", "rate_x")}
    if sc.system == ELECTRIFIED:
        out["nonlocal_energy"] = nonlocal_energy(h)
    return out


def cmd_entropy(args) -> int:
    sc = _load_scenario_arg(args)
    try:
        snap = read_snapshot(args.snapshot)
    except OSError as exc:
        raise ValidationError([("--snapshot", str(exc))]) from None
    values = entropy_values(sc, snap)
    values["scenario_hash"] = scenario_hash(sc)
    if args.out:
        write_json(values, Path(args.out) / "entropy.json")
    print(json.dumps({k: (v if not isinstance(v, float) or math.isfinite(v) else None) for k, v in values.items()},
                     indent=2, sort_keys=True))
    return EXIT_OK


def cmd_kernel(args) -> int:
    if args.scenario:
        sc = _load_scenario_arg(args)
        grid = sc.grid
        if grid.topology != WALL or grid.length != 1.0:
            raise ValidationError([("grid", "the kernel lives on the unit wall grid")])
    else:
        try:
            grid = Grid1D(args.n_cells, 1.0, WALL)
        except ConfigurationError as exc:
            raise ValidationError([("--n-cells", str(exc))]) from None
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV) or "entroflow-out") / f"kernel-{grid.n_cells}"
    k = kernel(grid)
    write_matrix(k.weights, out / "kernel_weights.csv")
    write_matrix(k.matrix, out / "kernel_matrix.csv")
    audit = kernel_audit(k)
    write_json(audit, out / "kernel_audit.json")
    print(json.dumps(audit, indent=2, sort_keys=True))
    if not audit["passed"]:
        raise CheckFailed("kernel audit failed")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entroflow", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--scenario", required=scenario_required, help="scenario JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel runs for sweeps")
        p.add_argument("--seed", type=int, help="seed for random_smooth initial data")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="dotted-path scenario override, value parsed as JSON (repeatable)")
        return p

    common(sub.add_parser("run", help="run one scenario")).set_defaults(fn=cmd_run)
    p = common(sub.add_parser("relax-study", help="shallow-water to lubrication relaxation sweep"))
    p.add_argument("--eps", default="1e-1,1e-2,1e-3,1e-4", help="comma-separated eps values")
    p.add_argument("--compare-time", type=float, help="comparison time (default t_end)")
    p.set_defaults(fn=cmd_relax)
    p = common(sub.add_parser("refine-study", help="dyadic grid refinement"))
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--manufactured", action="store_true", help="forced manufactured solution (lubrication)")
    p.add_argument("--dt-power", type=float, help="dt shrinks by 2**-p per level (default 2 manufactured, else 1)")
    p.add_argument("--min-order", type=float, help="fail (exit 4) below this fitted L2 order")
    p.set_defaults(fn=cmd_refine)
    p = common(sub.add_parser("floor-sweep", help="positivity floor sweep"))
    p.add_argument("--floors", default="1e-2,1e-3,1e-4,1e-5", help="comma-separated decreasing floors")
    p.set_defaults(fn=cmd_floor)
    p = common(sub.add_parser("entropy-check", help="evaluate all functionals on a snapshot"))
    p.add_argument("--snapshot", required=True, help="snapshot CSV (x,h,u_face)")
    p.set_defaults(fn=cmd_entropy)
    p = common(sub.add_parser("kernel-dump", help="write the nonlocal kernel and its audit"), scenario_required=False)
    p.add_argument("--n-cells", type=int, default=128)
    p.set_defaults(fn=cmd_kernel)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigurationError, DomainError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (EntroflowError, ArithmeticError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
