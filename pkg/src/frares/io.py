"""JSON and CSV formats for systems, measurements, reports and plot data.

System files are JSON objects with row-major ``"A"`` (n x n), ``"C"`` (p x n)
and ``"alpha"`` (length n).  Measurement files are CSV with header
``t,ch1,...,chp`` and one row per time step.  Floats are written so that
reading them back gives the identical double.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import FracSystem, MeasurementBlock
from .estimators import EstimationResult
from .exceptions import ConfigurationError, DataError


def _fmt(x):
    return format(float(x), ".17g")


def _clean_json(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean_json(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean_json(obj.item())
    return obj


def dumps(obj):
    """Deterministic JSON text (sorted keys, non-finite floats as null)."""
    return json.dumps(_clean_json(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path):
    Path(path).write_text(dumps(obj))


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def system_from_dict(doc, source="system"):
    if not isinstance(doc, dict):
        raise DataError(f"{source}: expected a JSON object with keys A, C, alpha")
    missing = [key for key in ("A", "C", "alpha") if key not in doc]
    if missing:
        raise DataError(f"{source}: missing key(s) {missing}")
    A = doc["A"]
    n = len(A) if isinstance(A, list) else None
    C, alpha = doc["C"], doc["alpha"]
    # name the offending key before FracSystem's generic checks run
    if n is not None:
        if isinstance(alpha, list) and len(alpha) != n:
            raise ConfigurationError(f"alpha: expected length {n}, got {len(alpha)}")
        if isinstance(C, list) and any(not isinstance(r, list) or len(r) != n for r in C):
            raise ConfigurationError(f"C: every row must have length n = {n}")
    return FracSystem(A, C, alpha)


def system_to_dict(system):
    return {"A": system.A.tolist(), "C": system.C.tolist(), "alpha": system.alpha.tolist()}


def load_system(path):
    """Read a :class:`FracSystem` from a JSON file."""
    return system_from_dict(read_json(path), str(path))


def save_system(system, path):
    write_json(system_to_dict(system), path)


def load_measurements(path):
    """Read a ``p x k`` :class:`MeasurementBlock` from ``t,ch1,...,chp`` CSV.

    Missing cells, ragged rows, non-numeric values and repeated or
    decreasing timestamps are rejected.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from None
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "t":
        raise DataError(f"{path}: header must be 't,ch1,...,chp', got {','.join(header)!r}")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        for col, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                raise DataError(f"{path}: line {lineno}: missing value in column {header[col]!r}")
            try:
                values[lineno - 2, col] = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric value {cell!r} "
                                f"in column {header[col]!r}") from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite values")
    t = values[:, 0]
    steps = np.diff(t)
    if np.any(steps == 0):
        line = int(np.flatnonzero(steps == 0)[0]) + 3
        raise DataError(f"{path}: line {line}: duplicate timestamp {t[line - 2]!r}")
    if np.any(steps < 0):
        line = int(np.flatnonzero(steps < 0)[0]) + 3
        raise DataError(f"{path}: line {line}: timestamps out of order")
    return MeasurementBlock(values[:, 1:].T, tuple(header[1:]), t)


def save_measurements(block, path):
    p, k = block.Y.shape
    labels = block.channel_labels or tuple(f"ch{i + 1}" for i in range(p))
    times = block.times if block.times is not None else np.arange(k, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *labels])
        for m in range(k):
            w.writerow([_fmt(times[m]), *(_fmt(v) for v in block.Y[:, m])])


def result_from_dict(doc):
    diagnostics = dict(doc.get("diagnostics") or {})
    if "dual" in diagnostics and diagnostics["dual"] is not None:
        diagnostics["dual"] = np.array(diagnostics["dual"], dtype=float)
    objective = doc["objective"]
    return EstimationResult(
        x0_hat=np.array(doc["x0_hat"], dtype=float),
        support_hat=frozenset(doc["support_hat"]),
        residual_rows=np.array(doc["residual_rows"], dtype=float),
        objective=float("nan") if objective is None else float(objective),
        status=doc["status"],
        iterations=int(doc["iterations"]),
        method=doc.get("method", ""),
        diagnostics=diagnostics,
    )


def save_result(result, path):
    write_json(result.to_dict(), path)


def load_result(path):
    return result_from_dict(read_json(path))


def write_trajectory_csv(path, times, true_states, est_states):
    """Plot data with columns ``t, state_1_true, state_1_est, ...``."""
    k, n = est_states.shape
    header = ["t"]
    for i in range(n):
        header += [f"state_{i + 1}_true", f"state_{i + 1}_est"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for m in range(k):
            row = [_fmt(times[m])]
            for i in range(n):
                row += [_fmt(true_states[m, i]), _fmt(est_states[m, i])]
            w.writerow(row)
