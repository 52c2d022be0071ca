"""File writers and readers for run artefacts (CSV, JSON, legacy VTK)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from lsfield.tensor import SYM_LABELS, sym6

SCHEMA_VERSION = 1
FLOAT_FMT = "%.9g"

_F_LABELS = [f"F{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
FIELD_COLUMNS = (
    ["id", "X1", "X2", "X3", "x1", "x2", "x3", "N_p", "interior", "status"]
    + _F_LABELS
    + [f"E{c}" for c in SYM_LABELS]
    + [f"sigma_raw{c}" for c in SYM_LABELS]
    + [f"sigma_avg{c}" for c in SYM_LABELS]
    + ["vm_raw", "vm_avg"]
)
TRACE_COLUMNS = ["step", "iteration", "energy", "residual"]
CURVE_COLUMNS = ["E33", "sigma33_recovered", "sigma33_ref", "sigma33_qc"]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FMT % value


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_fields_csv(path, sys, fields):
    """One row per atom; undefined entries are written as ``nan``."""
    n = sys.n_atoms
    F = fields.F.reshape(n, 9)
    cols = [
        np.arange(n), sys.X, sys.x, fields.n_p, fields.interior.astype(int), fields.status,
        F, sym6(fields.E), sym6(fields.sigma_raw), sym6(fields.sigma_avg), fields.vm_raw, fields.vm_avg,
    ]
    table = np.column_stack([np.asarray(c, dtype=float).reshape(n, -1) for c in cols])
    ints = {0, 7, 8, 9}
    rows = ([int(v) if k in ints else float(v) for k, v in enumerate(r)] for r in table)
    _write_rows(path, FIELD_COLUMNS, rows)


def read_csv_columns(path) -> dict:
    """Read a numeric CSV into ``{column: float array}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    if data.size == 0:
        data = np.empty((0, len(header)))
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return {h: data[:, k] for k, h in enumerate(header)}


def write_trace_csv(path, trace):
    _write_rows(path, TRACE_COLUMNS, ((int(s), int(i), float(e), float(r)) for s, i, e, r in trace))


def write_curve_csv(path, curve):
    _write_rows(path, CURVE_COLUMNS, ([row[c] for c in CURVE_COLUMNS] for row in curve))


def clean_json(obj):
    """Round floats to 9 significant digits and map non-finite values to null."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(FLOAT_FMT % v) if math.isfinite(v) else None
    return obj


def write_json(path, doc):
    Path(path).write_text(json.dumps(clean_json(doc), indent=2) + "\n")


def read_summary(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ValueError(f"{path}: not a run summary")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {doc['schema_version']}")
    return doc


def write_vtk(path, sys, fields, title="lsfield atoms"):
    """Legacy ASCII VTK polydata at current positions.

    Point data: ``vm`` (averaged von Mises), ``sigma`` (averaged stress tensor)
    and ``status``. Undefined values are written as zero so every reader
    accepts the file; ``status`` marks them.
    """
    n = sys.n_atoms
    vm = np.nan_to_num(fields.vm_avg, nan=0.0)
    sig = np.nan_to_num(0.5 * (fields.sigma_avg + np.swapaxes(fields.sigma_avg, 1, 2)), nan=0.0)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA", f"POINTS {n} double"]
    lines += [" ".join(FLOAT_FMT % v for v in p) for p in sys.x]
    lines.append(f"VERTICES {n} {2 * n}")
    lines += [f"1 {i}" for i in range(n)]
    lines += [f"POINT_DATA {n}", "SCALARS vm double 1", "LOOKUP_TABLE default"]
    lines += [FLOAT_FMT % v for v in vm]
    lines.append("TENSORS sigma double")
    for s in sig:
        lines += [" ".join(FLOAT_FMT % v for v in row) for row in s]
    lines += ["SCALARS status int 1", "LOOKUP_TABLE default"]
    lines += [str(int(v)) for v in fields.status]
    Path(path).write_text("\n".join(lines) + "\n")
