"""JSON run configuration: schema validation, defaults and ``ProblemSpec`` construction."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import jsonschema

from .errors import ConfigError
from .model import FAMILIES_1D, FAMILIES_2D, RESPONSES, Field1D, Field2D, MortalityField, ProblemSpec

_NUMBER_ARRAY = {"type": "array", "items": {"type": "number"}}
_NUMBER_TABLE = {"type": "array", "items": {"anyOf": [{"type": "number"}, _NUMBER_ARRAY]}}

FIELD_1D = {
    "type": "object",
    "properties": {
        "family": {"enum": list(FAMILIES_1D)},
        "params": _NUMBER_ARRAY,
        "nodes": _NUMBER_ARRAY,
        "values": _NUMBER_ARRAY,
    },
    "required": ["family"],
    "additionalProperties": False,
}

FIELD_2D = {
    "type": "object",
    "properties": {
        "family": {"enum": list(FAMILIES_2D)},
        "params": _NUMBER_TABLE,
        "x_factor": FIELD_1D,
        "t_factor": FIELD_1D,
        "x_nodes": _NUMBER_ARRAY,
        "t_nodes": _NUMBER_ARRAY,
        "values": {"type": "array", "items": _NUMBER_ARRAY},
    },
    "required": ["family"],
    "additionalProperties": False,
}

MORTALITY = {
    "type": "object",
    "properties": {
        "base": FIELD_2D,
        "weight": FIELD_2D,
        "response": {
            "type": "object",
            "properties": {"family": {"enum": list(RESPONSES)}, "params": _NUMBER_ARRAY},
            "required": ["family"],
            "additionalProperties": False,
        },
    },
    "required": ["base"],
    "additionalProperties": False,
}

CSV_KINDS = ("boundary", "field", "measure", "convergence")

SCHEMA = {
    "type": "object",
    "properties": {
        "problem": {
            "type": "object",
            "properties": {
                "V": FIELD_2D,
                "m": MORTALITY,
                "beta": FIELD_2D,
                "eta": FIELD_1D,
                "C": FIELD_1D,
                "u0": FIELD_1D,
                "b": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "M": {"type": "number", "minimum": 0},
                "L_cap": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["V", "m", "beta", "eta", "C", "u0", "b", "T", "L_cap"],
            "additionalProperties": False,
        },
        "numerics": {
            "type": "object",
            "properties": {
                "N_xi": {"type": "integer", "minimum": 8},
                "N_t": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "k_max": {"type": "integer", "minimum": 1},
                "dt_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "samples": {"type": "integer", "minimum": 8},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "csv": {"type": "array", "items": {"enum": list(CSV_KINDS)}, "uniqueItems": True},
                "snapshot_times": _NUMBER_ARRAY,
            },
            "additionalProperties": False,
        },
    },
    "required": ["problem"],
    "additionalProperties": False,
}

NUMERICS_DEFAULTS = {"N_xi": 256, "N_t": 256, "tol": 1e-8, "k_max": 64, "dt_max": None, "rtol": 1e-8, "samples": 256}


@dataclass(frozen=True)
class Numerics:
    N_xi: int = 256
    N_t: int = 256
    tol: float = 1e-8
    k_max: int = 64
    dt_max: float | None = None
    rtol: float = 1e-8
    samples: int = 256


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    csv: tuple = CSV_KINDS
    snapshot_times: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration; ``document`` is the effective JSON with defaults filled in."""

    spec: ProblemSpec
    numerics: Numerics
    output: OutputConfig
    document: dict

    def to_dict(self):
        return copy.deepcopy(self.document)

    def to_json(self):
        return json.dumps(self.document, indent=2, sort_keys=True)

    def with_M(self, M):
        doc = self.to_dict()
        doc["problem"]["M"] = float(M)
        return build_config(doc)


def _path(parts):
    return ".".join(str(p) for p in parts) or "<root>"


def _schema_message(err):
    path = list(err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return "; ".join(f"unknown key '{_path(path + [k])}'" for k in extra)
    if err.validator == "required":
        return f"{_path(path)}: {err.message}"
    return f"{_path(path)}: {err.message}"


def _field_1d(doc, name, domain, where):
    try:
        return Field1D(doc["family"], tuple(doc.get("params", ())), tuple(domain), name,
                       tuple(doc["nodes"]) if "nodes" in doc else None,
                       tuple(doc["values"]) if "values" in doc else None)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _field_2d(doc, name, x_domain, t_domain, where):
    family = doc["family"]
    extra = None
    params = doc.get("params", ())
    if family == "separable-product":
        if "x_factor" not in doc or "t_factor" not in doc:
            raise ConfigError(f"{where}: separable-product needs x_factor and t_factor")
        extra = {
            "x_factor": _field_1d(doc["x_factor"], f"{name}.x_factor", x_domain, f"{where}.x_factor"),
            "t_factor": _field_1d(doc["t_factor"], f"{name}.t_factor", t_domain, f"{where}.t_factor"),
        }
    elif family == "tabulated-grid":
        missing = [k for k in ("x_nodes", "t_nodes", "values") if k not in doc]
        if missing:
            raise ConfigError(f"{where}: tabulated-grid needs {', '.join(missing)}")
        extra = {k: doc[k] for k in ("x_nodes", "t_nodes", "values")}
    elif family == "polynomial":
        params = tuple(tuple(r) if isinstance(r, list) else r for r in params)
    try:
        if family != "polynomial" and any(isinstance(p, list) for p in params):
            raise ValueError("nested params are only allowed for the polynomial family")
        return Field2D(family, tuple(params), tuple(x_domain), tuple(t_domain), name, extra)
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _probe(field, where, *point):
    # surfaces wrong parameter counts (unpacking errors) at parse time
    try:
        field(*point)
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def build_spec(problem):
    """Turn a schema-valid ``problem`` block into a :class:`ProblemSpec`."""
    b, T, L = float(problem["b"]), float(problem["T"]), float(problem["L_cap"])
    if not L > b:
        raise ConfigError(f"problem.L_cap: must exceed problem.b ({L} <= {b})")
    xd, td = (0.0, L), (0.0, T)
    V = _field_2d(problem["V"], "V", xd, td, "problem.V")
    beta = _field_2d(problem["beta"], "beta", xd, td, "problem.beta")
    eta = _field_1d(problem["eta"], "eta", xd, "problem.eta")
    C = _field_1d(problem["C"], "C", td, "problem.C")
    u0 = _field_1d(problem["u0"], "u0", (0.0, b), "problem.u0")
    mdoc = problem["m"]
    base = _field_2d(mdoc["base"], "m.base", xd, td, "problem.m.base")
    weight = _field_2d(mdoc["weight"], "m.weight", xd, td, "problem.m.weight") if "weight" in mdoc else None
    response = mdoc.get("response", {"family": "linear"})
    try:
        m = MortalityField(base, weight, response["family"], tuple(response.get("params", ())),
                           float(problem.get("M", 0.0)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"problem.m: {exc}") from None
    for f, where in ((V, "problem.V"), (beta, "problem.beta"), (base, "problem.m.base")):
        _probe(f, where, 0.0, 0.0)
    if weight is not None:
        _probe(weight, "problem.m.weight", 0.0, 0.0)
    _probe(lambda: m(0.0, 0.0, 0.0), "problem.m.response")
    _probe(eta, "problem.eta", 0.0)
    _probe(C, "problem.C", 0.0)
    _probe(u0, "problem.u0", 0.0)
    return ProblemSpec(V, m, beta, eta, C, u0, b, T, L)


def build_config(doc):
    """Validate a decoded JSON document and return the effective :class:`RunConfig`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        raise ConfigError("; ".join(_schema_message(e) for e in errors))
    doc = copy.deepcopy(doc)
    problem = doc["problem"]
    problem.setdefault("M", 0.0)
    spec = build_spec(problem)
    numerics = {**NUMERICS_DEFAULTS, **doc.get("numerics", {})}
    if numerics["dt_max"] is None:
        numerics["dt_max"] = spec.T / 512.0
    out = {"directory": "out", "csv": list(CSV_KINDS), "snapshot_times": [0.0, spec.T]}
    out.update(doc.get("output", {}))
    for i, ts in enumerate(out["snapshot_times"]):
        if not 0.0 <= ts <= spec.T:
            raise ConfigError(f"output.snapshot_times.{i}: {ts} is outside [0, {spec.T}]")
    effective = {"problem": problem, "numerics": numerics, "output": out}
    return RunConfig(
        spec,
        Numerics(**numerics),
        OutputConfig(out["directory"], tuple(out["csv"]), tuple(float(v) for v in out["snapshot_times"])),
        effective,
    )


def parse_config(text):
    """Parse UTF-8 JSON (``bytes`` or ``str``) into a :class:`RunConfig`.

    Raises :class:`~sizewave.errors.ConfigError` with a path-qualified
    message on malformed JSON, schema violations or unusable parameters.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config is not UTF-8: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return build_config(doc)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(data)
