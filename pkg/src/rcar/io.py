"""Model files, JSON reports and CSV tables.

Model files are validated against a JSON Schema (unknown keys rejected) and
every problem is reported with a JSON-pointer path.  Reports are written with
sorted keys and a ``schema_version`` field; non-finite numbers become the
strings ``"inf"``, ``"-inf"`` and ``"nan"``.  CSV numbers use 12 significant
digits and ``\\n`` line endings.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import asdict, is_dataclass

import jsonschema
import numpy as np

from .dist import ParameterError, ScalarDist, dist_from_dict
from .model import FiniteIndependent, FiniteSingleFactor, GeometricFactor, ModelSpec, ModelValidationError, NoiseSpec

SCHEMA_VERSION = 1

SWEEP_HEADER = ["theta", "beta_phi1", "beta_phi1_tilde", "beta_phi2", "beta_phi2_tilde", "beta_exact"]
REGION_HEADER = ["alpha1", "beta1", "phi1_ok", "phi2_ok"]


class InputError(ValueError):
    """Unreadable, malformed or invalid input; ``path`` is the first offending JSON pointer."""

    def __init__(self, msg, path=""):
        super().__init__(msg)
        self.path = path


# --------------------------------------------------------------------------
# Schema
# --------------------------------------------------------------------------

_NUM = {"type": "number"}
_DIST_PARAMS = {
    "constant": {"c": _NUM},
    "scaled_bernoulli": {"q": _NUM, "c": _NUM},
    "exponential": {"rate": _NUM},
    "lognormal": {"mu": _NUM, "sigma": _NUM},
    "chisquare1": {},
    "uniform": {"lo": _NUM, "hi": _NUM},
    "scaled": {"scale": _NUM, "dist": {"$ref": "#/$defs/dist"}},
}


def _kind_branch(kind, props):
    return {
        "if": {"properties": {"kind": {"const": kind}}, "required": ["kind"]},
        "then": {
            "properties": {"kind": True, **props},
            "required": sorted(props),
            "additionalProperties": False,
        },
    }


_COEFFS = {
    "finite_independent": {
        "dists": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/dist"}},
    },
    "finite_single_factor": {
        "weights": {"type": "array", "minItems": 1, "items": _NUM},
        "factor": {"$ref": "#/$defs/dist"},
    },
    "geometric_factor": {"beta": _NUM, "factor": {"$ref": "#/$defs/dist"}},
}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "assumption": {"enum": ["A1", "A2"]},
        "coeffs": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": sorted(_COEFFS)}},
            "allOf": [_kind_branch(k, v) for k, v in _COEFFS.items()],
        },
        "noise": {
            "type": "object",
            "required": ["dist"],
            "properties": {
                "dist": {"$ref": "#/$defs/dist"},
                "dependence": {"enum": ["independent", "joint_row"]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["assumption", "coeffs"],
    "additionalProperties": False,
    "$defs": {
        "dist": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": sorted(_DIST_PARAMS)}},
            "allOf": [_kind_branch(k, v) for k, v in _DIST_PARAMS.items()],
        }
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(MODEL_SCHEMA)


def _pointer(parts):
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in parts) if parts else "/"


def schema_errors(obj) -> list:
    """``(pointer, message)`` for every schema violation, sorted by path."""
    out = []
    for e in _VALIDATOR.iter_errors(obj):
        out.append((_pointer(list(e.absolute_path)), e.message))
    return sorted(set(out))


# --------------------------------------------------------------------------
# Model files
# --------------------------------------------------------------------------

def _dist(obj, path) -> ScalarDist:
    try:
        return dist_from_dict(obj)
    except ParameterError as exc:
        raise InputError(f"{path}: {exc}", path) from None


def model_from_dict(obj) -> ModelSpec:
    """Validate a decoded model object and build the :class:`ModelSpec`."""
    errs = schema_errors(obj)
    if errs:
        raise InputError("; ".join(f"{p}: {m}" for p, m in errs), errs[0][0])
    c = obj["coeffs"]
    kind = c["kind"]
    if kind == "finite_independent":
        coeffs = FiniteIndependent(tuple(_dist(d, f"/coeffs/dists/{i}") for i, d in enumerate(c["dists"])))
    elif kind == "finite_single_factor":
        coeffs = FiniteSingleFactor(tuple(float(w) for w in c["weights"]), _dist(c["factor"], "/coeffs/factor"))
    else:
        coeffs = GeometricFactor(float(c["beta"]), _dist(c["factor"], "/coeffs/factor"))
    noise = None
    if "noise" in obj:
        n = obj["noise"]
        noise = NoiseSpec(_dist(n["dist"], "/noise/dist"), n.get("dependence", "independent"))
    try:
        return ModelSpec(obj["assumption"], coeffs, noise)
    except ModelValidationError as exc:
        errs = exc.errors
        raise InputError("; ".join(f"{p}: {m}" for p, m in errs), errs[0][0]) from None


def parse_json(text: str, source: str = "<input>"):
    """``json.loads`` with the error position reported as a byte offset."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise InputError(f"{source}: malformed JSON at byte offset {offset}: {exc.msg}") from None


def load_model(path) -> ModelSpec:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not UTF-8 at byte offset {exc.start}") from None
    return model_from_dict(parse_json(text, str(path)))


def parse_dist(text: str) -> ScalarDist:
    """A distribution given as a JSON object or as a bare parameterless kind."""
    s = text.strip()
    obj = parse_json(s, "--z") if s.startswith("{") else {"kind": s}
    errs = [(p, m) for p, m in schema_errors({"assumption": "A1", "coeffs": {"kind": "geometric_factor",
                                                                           "beta": 0.5, "factor": obj}})]
    if errs:
        path = errs[0][0].replace("/coeffs/factor", "") or "/"
        raise InputError(f"{path}: " + "; ".join(m for _, m in errs), path)
    return _dist(obj, "/")


# --------------------------------------------------------------------------
# JSON reports
# --------------------------------------------------------------------------

def to_jsonable(x):
    """Recursively convert dataclasses, numpy values and non-finite floats."""
    if is_dataclass(x) and not isinstance(x, type):
        return to_jsonable(asdict(x))
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return x


def dump_report(obj) -> str:
    d = to_jsonable(obj)
    if isinstance(d, dict):
        d = {"schema_version": SCHEMA_VERSION, **d}
    return json.dumps(d, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _from_json_num(v):
    if v in ("inf", "-inf", "nan"):
        return float(v)
    if isinstance(v, dict):
        return {k: _from_json_num(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_from_json_num(x) for x in v]
    return v


def read_report(text: str) -> dict:
    """Parse a report written by :func:`dump_report`, restoring non-finite numbers."""
    d = parse_json(text, "report")
    if not isinstance(d, dict) or d.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"report lacks schema_version {SCHEMA_VERSION}")
    return _from_json_num(d)


# --------------------------------------------------------------------------
# CSV tables
# --------------------------------------------------------------------------

def fmt_num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    v = float(x)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = f"{v:.12g}"
    return "0" if s == "-0" else s


def _write_csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def sweep_csv(rows) -> str:
    """Sweep table; a ``flags`` column is appended only when some row is flagged."""
    flagged = any(r.flags for r in rows)
    header = SWEEP_HEADER + (["flags"] if flagged else [])
    out = []
    for r in rows:
        line = [fmt_num(r.theta)] + [fmt_num(r.value(c)) for c in
                                     ("phi1", "phi1_tilde", "phi2", "phi2_tilde", "exact")]
        if flagged:
            line.append(";".join(r.flags))
        out.append(line)
    return _write_csv(header, out)


def region_csv(rows) -> str:
    return _write_csv(REGION_HEADER, [[fmt_num(r.alpha1), fmt_num(r.beta1), fmt_num(r.phi1_ok), fmt_num(r.phi2_ok)]
                                      for r in rows])


def _parse_cell(s):
    if s in ("true", "false"):
        return s == "true"
    return float(s)


def read_csv(text: str, header=None) -> list:
    """Rows of a table written here, as dicts; ``flags`` stays a list of strings."""
    rd = csv.reader(_io.StringIO(text))
    head = next(rd)
    if header is not None and head[: len(header)] != header:
        raise InputError(f"unexpected CSV header {head}")
    out = []
    for line in rd:
        row = {}
        for k, v in zip(head, line):
            row[k] = [f for f in v.split(";") if f] if k == "flags" else _parse_cell(v)
        out.append(row)
    return out
