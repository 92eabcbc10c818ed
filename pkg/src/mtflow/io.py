"""CSV/JSON persistence: ledgers, field snapshots, branch tables."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .energy import EnergyLedgerRow
from .errors import GridMismatch
from .grid import RADIAL, Field, grid_from_header


def _num(x):
    """Round-trip text for a number (shortest repr; integers stay integers)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _num(v) for v in row])


def read_rows(path):
    """Read a CSV table into ``(header, rows)``; numeric cells become floats."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for raw in reader:
            row = []
            for cell in raw:
                try:
                    row.append(float(cell))
                except ValueError:
                    row.append(cell)
            rows.append(row)
    return header, rows


def write_ledger(path, rows):
    write_rows(path, EnergyLedgerRow.FIELDS, (r.as_tuple() for r in rows))


def read_ledger(path):
    header, rows = read_rows(path)
    if tuple(header) != EnergyLedgerRow.FIELDS:
        raise ValueError(f"{path}: not a ledger (header {header})")
    return [EnergyLedgerRow(*r) for r in rows]


def write_branch(path, rows):
    from .stationary import BranchRow
    write_rows(path, BranchRow.FIELDS, (r.as_tuple() for r in rows))


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(path, u: Field):
    """Header ``grid-kind,n-or-h,domain-params`` then ``index,coord(s),value`` rows."""
    g = u.grid
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kind, n_or_h, params = g.describe()
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{kind},{n_or_h},{params}\n")
        v = u.values.tolist()  # python floats: repr is the shortest round-trip form
        if g.kind == RADIAL:
            for i, (r, val) in enumerate(zip(g.coords.tolist(), v)):
                fh.write(f"{i},{r!r},{val!r}\n")
        else:
            for i, ((x, y), val) in enumerate(zip(g.coords.tolist(), v)):
                fh.write(f"{i},{x!r},{y!r},{val!r}\n")


def read_snapshot(path, grid=None) -> Field:
    """Load a snapshot; the grid is rebuilt from the header unless supplied.

    Node coordinates in the file must agree with the grid's.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        kind, n_or_h, params = header.split(",", 2)
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if grid is None:
        grid = grid_from_header(kind, n_or_h, params)
    if grid.kind != kind or data.shape[0] != grid.size:
        raise GridMismatch(f"{path}: snapshot does not match the grid")
    coords = data[:, 1] if kind == RADIAL else data[:, 1:3]
    scale = max(1.0, float(np.max(np.abs(grid.coords))))
    if not np.allclose(coords, grid.coords, rtol=0, atol=1e-12 * scale):
        raise GridMismatch(f"{path}: node coordinates differ from the grid")
    values = data[:, -1].copy()
    h10 = bool(np.all(values[grid.boundary] == 0.0))
    return Field(grid, values, h10=h10)


def dump_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n", encoding="utf-8")


def _jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj
