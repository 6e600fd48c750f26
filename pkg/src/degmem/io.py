"""Run configuration files and delimited-text output.

Configuration files hold one ``section.key = value`` per line; values are
Python literals (bare words are read as strings) and ``#`` starts a comment.
"""

import ast
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DEFAULTS = {
    "coefficient": {"kind": "prototype", "alpha_left": 0.5, "alpha_right": 0.0,
                    "side": "left", "path": None},
    "grid": {"N": 100, "M": 200, "T": 1.0},
    "weights": {"L": 1.2, "p": 4, "gamma": None, "d": None, "mode": "fixed_point",
                "s": None, "k": 0.0},
    "control": {"omega": (0.3, 0.6), "epsilons": [1e-2, 1e-4, 1e-6, 1e-8],
                "log_clamp": 8.0, "include_state_term": True, "cg_tol": 1e-10,
                "cg_max_iters": 2000},
    "kernel": {"kind": "zero", "c": 1.0, "M": None, "M_factor": 2.0},
    "fixed_point": {"R": float("inf"), "max_iters": 20, "picard_tol": 1e-8, "relax": 1.0},
    "initial": {"kind": "parabola", "seed": 0},
    "monitor": {"n_samples": 50, "s_factors": [1.0, 2.0], "N": 40, "M": 80},
    "sweep": {"s_factors": [1.0, 2.0, 4.0]},
    "run": {"seed": 0},
}


@dataclass
class RunConfig:
    """Parsed configuration; ``values[section][key]`` with defaults filled in.

    ``explicit`` records which keys the file set, e.g. ``"kernel.kind"``.
    """

    values: dict
    explicit: set = field(default_factory=set)
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.values[section]

    def echo(self):
        return {sec: dict(vals) for sec, vals in self.values.items()}


def _literal(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if text.replace("_", "").replace("-", "").isalnum():
            return text
        raise


def parse_config_text(text, source="<string>"):
    """Parse config text; errors name the line number and the offending key."""
    values = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    explicit = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'section.key = value'")
        path, val = (part.strip() for part in line.split("=", 1))
        if path.count(".") != 1:
            raise ConfigurationError(f"{source}:{lineno}: key {path!r} must be section.key")
        sec, key = path.split(".")
        if sec not in values or key not in values[sec]:
            raise ConfigurationError(f"{source}:{lineno}: unknown field {path!r}")
        try:
            values[sec][key] = _literal(val)
        except (ValueError, SyntaxError):
            raise ConfigurationError(f"{source}:{lineno}: cannot parse value for {path!r}: {val!r}")
        explicit.add(path)
    return RunConfig(values, explicit, source)


def load_config(path):
    if path is None:
        return RunConfig({sec: dict(keys) for sec, keys in DEFAULTS.items()})
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}")
    return parse_config_text(text, source=str(path))


def format_value(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path, columns, rows, meta=None):
    """Delimited table with '#'-prefixed ``key = value`` metadata lines and a header row."""
    lines = [f"# {k} = {format_value(v)}" for k, v in (meta or {}).items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(f"{v:.12e}" if isinstance(v, (float, np.floating))
                              else format_value(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_keyvalue(path, items):
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {format_value(v)}\n")


def write_json_atomic(path, obj):
    """Write JSON through a temporary file and an atomic rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".manifest-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
