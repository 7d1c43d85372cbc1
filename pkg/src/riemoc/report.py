"""Machine-readable reports (JSON) and per-node tables (CSV)."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__

__all__ = ["SCHEMA", "to_jsonable", "content_hash", "make_report", "write_report", "write_csv", "from_jsonable"]

SCHEMA = "riemoc-report/1"
_VOLATILE = ("timing", "content_hash")


def to_jsonable(obj: Any) -> Any:
    """Convert numpy data to JSON types; non-finite floats become "inf", "-inf" or "nan"."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def from_jsonable(x: Any) -> Any:
    """Inverse of the float encoding in :func:`to_jsonable` (for reading reports back)."""
    if isinstance(x, dict):
        return {k: from_jsonable(v) for k, v in x.items()}
    if isinstance(x, list):
        return [from_jsonable(v) for v in x]
    if x in ("inf", "-inf", "nan"):
        return float(x)
    return x


def content_hash(report: dict) -> str:
    body = {k: v for k, v in report.items() if k not in _VOLATILE}
    blob = json.dumps(to_jsonable(body), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(blob.encode()).hexdigest()


def make_report(command: str, scenario_name: str, scenario: dict, results: dict,
                verdict: str | None = None, seconds: float | None = None) -> dict:
    """Assemble a report with a fixed top-level key order."""
    rep = {
        "schema": SCHEMA,
        "version": __version__,
        "command": command,
        "scenario_name": scenario_name,
        "scenario": to_jsonable(scenario),
        "verdict": verdict,
        "results": to_jsonable(results),
    }
    rep["content_hash"] = content_hash(rep)
    rep["timing"] = {"seconds": seconds}
    return rep


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")


def write_csv(path: str | Path, columns: dict[str, Sequence[float]]) -> None:
    """Write equal-length columns; the first column is normally ``t``."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], float) for k in names])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in data:
            w.writerow([repr(float(x)) for x in row])
