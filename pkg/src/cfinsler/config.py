"""Run configuration: a single JSON document parsed into :class:`RunConfig`.

Layout::

    {
      "command": "yamabe",
      "metric": {"family": "z_twisted", "a": "exp(0.1*sin(2*pi*x1))", "lambda": 0.05},
      "grid": {"resolution": 16, "periods": [1, 1, 1, 1]},
      "fiber": {"radial_order": 16, "angular_order": 32, "normalization": "none"},
      "jets": {"order": 5},
      "tolerances": {"yamabe": 1e-10},
      "seed": 0,
      "output": {"path": "report.json", "format": "json"},
      "options": {"verify": true}
    }

Only ``command`` and ``metric`` are required.  Field expressions are strings
in the grammar of :mod:`cfinsler.expressions`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .fiber import NORMALIZATIONS
from .metrics import MetricError, metric_from_config

COMMANDS = ("validate", "geometry", "curvature", "fiber", "kahler", "conformal-test", "functionals",
            "variation-check", "stability", "yamabe", "invariants", "bubble-test")

DEFAULT_TOLERANCES = {
    "homogeneity": 1e-12,
    "geometry": 1e-9,
    "conformal": 1e-8,
    "kahler": 1e-8,
    "closedness": 1e-5,
    "round_trip": 1e-6,
    "fiber_spread": 1e-6,
    "stokes": 1e-5,
    "first_variation": 1e-4,
    "second_variation": 1e-3,
    "yamabe": 1e-10,
    "rho_hat": 1e-3,
    "invariant_Y": 1e-4,
    "invariant_C": 1e-6,
    "sigma": 1e-10,
    "bound": 1e-3,
}

TOP_LEVEL = {"command", "metric", "grid", "fiber", "jets", "tolerances", "seed", "output", "options"}


class ConfigError(ValueError):
    """Invalid configuration; ``location`` is a JSON-pointer-like path."""

    def __init__(self, message, location=""):
        super().__init__(f"{location or '/'}: {message}")
        self.location = location or "/"
        self.detail = message


@dataclass
class RunConfig:
    command: str
    metric: dict
    resolution: int = 16
    periods: tuple = None
    radial_order: int = 16
    angular_order: int = 32
    jet_order: int = 5
    normalization: str = "none"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    output_path: str = None
    output_format: str = "json"
    options: dict = field(default_factory=dict)

    def tol(self, name):
        return self.tolerances[name]

    def build_metric(self):
        spec = dict(self.metric)
        if self.periods is not None:
            spec.setdefault("periods", list(self.periods))
        try:
            return metric_from_config(spec)
        except MetricError as exc:
            raise ConfigError(str(exc), "/metric") from None

    def echo(self):
        return {
            "command": self.command, "metric": self.metric,
            "grid": {"resolution": self.resolution, "periods": None if self.periods is None else list(self.periods)},
            "fiber": {"radial_order": self.radial_order, "angular_order": self.angular_order,
                      "normalization": self.normalization},
            "jets": {"order": self.jet_order}, "tolerances": dict(self.tolerances), "seed": self.seed,
            "output": {"path": self.output_path, "format": self.output_format}, "options": self.options,
        }


def _section(doc, key):
    val = doc.get(key, {})
    if val is None:
        return {}
    if not isinstance(val, dict):
        raise ConfigError("must be an object", f"/{key}")
    return val


def _integer(value, location, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("must be an integer", location)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}", location)
    return value


def parse_config(doc: dict) -> RunConfig:
    """Validate a decoded JSON document and build a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}", f"/{sorted(unknown)[0]}")
    command = doc.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}", "/command")
    metric = doc.get("metric")
    if not isinstance(metric, dict):
        raise ConfigError("a metric declaration object is required", "/metric")
    grid = _section(doc, "grid")
    fiber = _section(doc, "fiber")
    jets = _section(doc, "jets")
    output = _section(doc, "output")
    options = _section(doc, "options")
    tolerances = dict(DEFAULT_TOLERANCES)
    for name, value in _section(doc, "tolerances").items():
        loc = f"/tolerances/{name}"
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError("unknown tolerance", loc)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
            raise ConfigError("tolerances must be positive numbers", loc)
        tolerances[name] = float(value)
    periods = grid.get("periods")
    if periods is not None:
        if not isinstance(periods, list) or not all(isinstance(p, (int, float)) and p > 0 for p in periods):
            raise ConfigError("periods must be a list of positive numbers", "/grid/periods")
        periods = tuple(float(p) for p in periods)
    normalization = fiber.get("normalization", "none")
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"must be one of {', '.join(NORMALIZATIONS)}", "/fiber/normalization")
    fmt = output.get("format", "json")
    if fmt != "json":
        raise ConfigError("only the 'json' report format is supported", "/output/format")
    path = output.get("path")
    if path is not None and not isinstance(path, str):
        raise ConfigError("must be a string", "/output/path")
    cfg = RunConfig(
        command=command, metric=metric,
        resolution=_integer(grid.get("resolution", 16), "/grid/resolution", 2),
        periods=periods,
        radial_order=_integer(fiber.get("radial_order", 16), "/fiber/radial_order", 2),
        angular_order=_integer(fiber.get("angular_order", 32), "/fiber/angular_order", 2),
        jet_order=_integer(jets.get("order", 5), "/jets/order", 2), normalization=normalization,
        tolerances=tolerances,
        seed=_integer(doc.get("seed", 0), "/seed", 0),
        output_path=path, output_format=fmt, options=options,
    )
    n = metric.get("n", 2)
    if periods is not None and isinstance(n, int) and len(periods) != 2 * n:
        raise ConfigError(f"periods must have {2 * n} entries", "/grid/periods")
    cfg.build_metric()
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(doc)
