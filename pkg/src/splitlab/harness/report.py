"""Error records and the CSV/JSON experiment report."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path

import jsonschema
import numpy as np

METRICS = ("w2_classical", "l2_quantum", "w2_husimi", "dist1_husimi")
CSV_COLUMNS = ("scheme", "metric", "dt", "hbar", "n_steps", "value", "mc_stderr",
               "bound_value", "bound_satisfied")


@dataclass(frozen=True)
class ErrorRecord:
    scheme: str
    metric: str
    dt: float
    n_steps: int
    value: float
    hbar: float | None = None
    bound_value: float | None = None
    mc_stderr: float | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not self.value >= 0:
            raise ValueError(f"error value must be >= 0, got {self.value}")

    @property
    def bound_satisfied(self) -> bool | None:
        if self.bound_value is None:
            return None
        return bool(self.value <= self.bound_value)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


_NUM = {"type": ["number", "null"]}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "bounds", "fits", "environment", "records_summary", "all_bounds_satisfied"],
    "properties": {
        "config": {"type": "object", "required": ["name", "experiment", "scheme", "seed"]},
        "bounds": {
            "type": "object",
            "required": ["lambda", "e_const", "mu0", "nu0", "c_T", "eligibility"],
            "properties": {k: _NUM for k in ("lambda", "e_const", "m_const", "mv_const", "mu0",
                                               "nu0", "c_T", "d_T", "c_uniform", "d_uniform",
                                               "m_prime")},
        },
        "fits": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["metric", "slope", "intercept", "r_squared", "points_used"],
                "properties": {
                    "slope": {"type": "number"},
                    "r_squared": {"type": "number", "minimum": 0, "maximum": 1},
                    "points_used": {"type": "integer", "minimum": 3},
                },
            },
        },
        "environment": {
            "type": "object",
            "required": ["seed", "version"],
            "properties": {"seed": {"type": "integer"}, "version": {"type": "string"}},
        },
        "records_summary": {
            "type": "object",
            "required": ["count", "with_bound", "violations"],
            "properties": {k: {"type": "integer", "minimum": 0}
                           for k in ("count", "with_bound", "violations")},
        },
        "all_bounds_satisfied": {"type": "boolean"},
        "summary": {"type": "object"},
        "diagnostics": {"type": "object"},
    },
}


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, REPORT_SCHEMA)


def build_report(records, fits, bound_report, config: dict, seed: int,
                 summary: dict | None = None, diagnostics: dict | None = None) -> dict:
    from .. import __version__

    checked = [r for r in records if r.bound_value is not None]
    bad = [r for r in checked if not r.bound_satisfied]
    doc = {
        "config": jsonable(config),
        "bounds": jsonable(bound_report),
        "fits": [jsonable(f) for f in fits],
        "environment": {"seed": int(seed), "version": __version__},
        "records_summary": {"count": len(records), "with_bound": len(checked), "violations": len(bad)},
        "all_bounds_satisfied": not bad,
        "summary": jsonable(summary or {}),
        "diagnostics": jsonable(diagnostics or {}),
    }
    validate_report(doc)
    return doc


def emit_report(records, fits, bound_report, path, config: dict | None = None, seed: int = 0,
                summary=None, diagnostics=None) -> dict:
    """Write ``errors.csv`` and ``report.json`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    doc = build_report(records, fits, bound_report, config or {"name": "", "experiment": "",
                                                               "scheme": "", "seed": seed},
                       seed, summary, diagnostics)
    write_csv(records, out / "errors.csv")
    with open(out / "report.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return doc
