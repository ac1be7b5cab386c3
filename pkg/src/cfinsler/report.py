"""Machine-readable run reports: JSON with a shipped schema, CSV field dumps."""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

SCHEMA_VERSION = "1"


def load_schema():
    """The JSON schema every report validates against."""
    return json.loads(resources.files("cfinsler").joinpath("report_schema.json").read_text())


def to_json(value):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_json(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_json(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [to_json(value.real), to_json(value.imag)]
    return value


@dataclass
class Check:
    name: str
    value: object
    tolerance: float
    passed: bool

    def as_dict(self):
        return {"name": self.name, "value": to_json(self.value), "tolerance": to_json(self.tolerance),
                "passed": bool(self.passed)}


def check_le(name, value, tolerance):
    """Check ``value <= tolerance`` (a NaN value fails)."""
    v = float(value)
    return Check(name, v, tolerance, bool(v <= tolerance))


def check_true(name, value):
    return Check(name, bool(value), None, bool(value))


@dataclass
class FieldDump:
    """A real field on a torus grid; values are flattened in C order."""

    name: str
    values: np.ndarray
    periods: tuple = None

    def as_dict(self):
        vals = np.asarray(self.values, float)
        return {"name": self.name, "shape": list(vals.shape),
                "axes": [f"i{a}" for a in range(vals.ndim)],
                "periods": None if self.periods is None else list(self.periods),
                "values": to_json(vals.ravel())}


@dataclass
class Report:
    command: str
    config: dict
    payload: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    error: dict = None
    status: str = None
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.error is None and all(c.passed for c in self.checks)

    def finalize(self, status=None):
        if status is not None:
            self.status = status
        elif self.status is None:
            self.status = "pass" if self.passed else "fail"
        return self

    def as_dict(self):
        return {
            "schema_version": SCHEMA_VERSION, "command": self.command, "status": self.status,
            "config": to_json(self.config), "payload": to_json(self.payload),
            "checks": [c.as_dict() for c in self.checks], "fields": [f.as_dict() for f in self.fields],
            "error": to_json(self.error), "provenance": to_json(self.provenance),
        }

    def validate(self):
        jsonschema.validate(self.as_dict(), load_schema())

    def write_json(self, path):
        doc = self.as_dict()
        jsonschema.validate(doc, load_schema())
        Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")

    def write_csv(self, directory):
        """One CSV per grid shape (index columns, then one column per field) and one per table."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        groups = {}
        for f in self.fields:
            groups.setdefault(np.shape(f.values), []).append(f)
        for k, (shape, members) in enumerate(sorted(groups.items(), key=lambda kv: kv[1][0].name)):
            name = f"{self.command}_fields.csv" if len(groups) == 1 else f"{self.command}_fields_{k}.csv"
            path = out / name
            cols = [np.asarray(f.values, float).ravel() for f in members]
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([f"i{a}" for a in range(len(shape))] + [f.name for f in members])
                for flat, idx in enumerate(np.ndindex(*shape)):
                    w.writerow(list(idx) + [repr(float(c[flat])) for c in cols])
            written.append(str(path))
        for tname, rows in self.tables.items():
            if not rows:
                continue
            path = out / f"{self.command}_{tname}.csv"
            keys = list(rows[0])
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["index"] + keys)
                for i, row in enumerate(rows):
                    w.writerow([i] + [repr(float(row[k])) if isinstance(row[k], (float, np.floating)) else row[k]
                                      for k in keys])
            written.append(str(path))
        return written


def provenance(version, seed, wall_time, threads=1):
    return {"tool": "cfinsler", "version": version, "seed": seed, "wall_time_seconds": float(wall_time),
            "threads": int(threads), "python": platform.python_version(), "numpy": np.__version__}
