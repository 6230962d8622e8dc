"""On-disk formats: CSV ledgers, snapshots and reports, JSON report metadata.

Numbers are written with 17 significant digits so every double survives a
write/read round trip bit for bit; NaN marks quantities that do not apply.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import Grid1D, ScalarField
from .ledger import COLUMNS, BalanceLedger

SNAPSHOT_COLUMNS = ("x", "h", "u_face")


def fmt(value: float) -> str:
    return "%.17g" % float(value)


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    for k, r in enumerate(rows):
        if len(r) != len(header):
            raise ConfigurationError(f"{path}: row {k + 1} has {len(r)} fields, header has {len(header)}")
    return header, rows


# -- ledger --------------------------------------------------------------------


def write_ledger(ledger: BalanceLedger, path) -> None:
    _write_rows(path, COLUMNS, ([fmt(row[c]) for c in COLUMNS] for row in ledger.rows()))


def read_ledger(path) -> BalanceLedger:
    header, rows = _read_rows(path)
    if tuple(header) != COLUMNS:
        raise ConfigurationError(f"{path}: not a ledger file (header {header})")
    ledger = BalanceLedger()
    for r in rows:
        ledger.append(dict(zip(header, map(float, r))))
    return ledger


# -- snapshots -------------------------------------------------------------------


def write_snapshot(state, path) -> None:
    """Cell positions and heights, plus the velocity on the face right of
    each cell for shallow-water states (NaN otherwise)."""
    h = state.h
    u = getattr(state, "u", None)
    uv = u.values if u is not None else np.full(h.grid.n_cells, math.nan)
    rows = ([fmt(a), fmt(b), fmt(c)] for a, b, c in zip(h.grid.x, h.values, uv))
    _write_rows(path, SNAPSHOT_COLUMNS, rows)


def read_snapshot(path) -> dict[str, np.ndarray]:
    header, rows = _read_rows(path)
    if tuple(header) != SNAPSHOT_COLUMNS:
        raise ConfigurationError(f"{path}: not a snapshot file (header {header})")
    data = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(-1, 3)
    return {c: data[:, k] for k, c in enumerate(SNAPSHOT_COLUMNS)}


def snapshot_fields(snap: dict[str, np.ndarray], grid: Grid1D) -> tuple[ScalarField, ScalarField | None]:
    """Rebuild ``(h, u)`` on ``grid``; ``u`` is None when the file has no velocity."""
    h = snap["h"]
    if h.size != grid.n_cells:
        raise ConfigurationError(f"snapshot has {h.size} cells, scenario grid has {grid.n_cells}")
    if not np.allclose(snap["x"], grid.x, rtol=0, atol=1e-9 * grid.length):
        raise ConfigurationError("snapshot positions do not match the scenario grid")
    hf = ScalarField(grid, h)
    u = snap["u_face"]
    if np.all(np.isnan(u)):
        return hf, None
    return hf, ScalarField(grid, np.nan_to_num(u), staggered=True)


# -- reports -------------------------------------------------------------------


def report_columns(rows: list[dict]) -> list[str]:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def write_report(report, csv_path, json_path) -> None:
    """Rows as CSV (``status`` kept as text) and metadata plus fitted rates as JSON."""
    cols = report_columns(report.rows)

    def cell(v):
        if isinstance(v, str):
            return '"' + v.replace('"', "'").replace("\n", " ") + '"' if ("," in v or "\n" in v) else v
        return fmt(v)

    _write_rows(csv_path, cols, ([cell(r.get(c, math.nan)) for c in cols] for r in report.rows))
    meta = {"fitted_rate": report.fitted_rate, "metadata": report.metadata}
    write_json(meta, json_path)


def read_report_rows(path) -> list[dict]:
    header, rows = _read_rows(path)
    out = []
    for r in rows:
        d = {}
        for k, v in zip(header, r):
            try:
                d[k] = float(v)
            except ValueError:
                d[k] = v
        out.append(d)
    return out


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def write_json(obj, path) -> None:
    """Sorted, indented JSON; non-finite floats become null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_matrix(matrix: np.ndarray, path) -> None:
    rows = ([fmt(v) for v in row] for row in np.asarray(matrix))
    n = np.asarray(matrix).shape[1]
    _write_rows(path, [f"c{j}" for j in range(n)], rows)


__all__ = [
    "read_ledger",
    "read_report_rows",
    "read_snapshot",
    "snapshot_fields",
    "write_json",
    "write_ledger",
    "write_matrix",
    "write_report",
    "write_snapshot",
]
