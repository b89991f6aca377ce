"""Scenario files: JSON schema, validation and construction of library objects."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .containment import ContainmentSpec, custom_containment, standard_containment
from .errors import ConfigurationError
from .grid import DomainGrid, build_grid
from .hamiltonian import HamiltonianSpec, from_config
from .isaacs import IsaacsSpec, as_hamiltonian, spec_from_config
from .testfunc import BOUNDED, LOWER, UPPER, SmoothTestFunction
from .value import interpolate, velocity_set
from .viscosity import DEFAULT_KAPPA, default_family, default_radius

_NUM = {"type": "number"}
_VEC = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}
_POS = {"type": "number", "exclusiveMinimum": 0}

FIELD_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["constant", "sin", "quadratic", "table"]},
        "value": _NUM,
        "amplitude": _NUM,
        "frequency": _VEC,
        "phase": _NUM,
        "coeff": _NUM,
        "center": _VEC,
        "offset": _NUM,
        "path": {"type": "string"},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "constant"}}}, "then": {"required": ["value"]}},
        {"if": {"properties": {"kind": {"const": "quadratic"}}}, "then": {"required": ["coeff"]}},
        {"if": {"properties": {"kind": {"const": "table"}}}, "then": {"required": ["path"]}},
    ],
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["domain", "hamiltonian", "problem"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "domain": {
            "type": "object",
            "required": ["kind", "lower", "upper", "nodes"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["box", "torus"]},
                "lower": _VEC,
                "upper": _VEC,
                "nodes": {"oneOf": [{"type": "integer", "minimum": 3},
                                    {"type": "array", "minItems": 1,
                                     "items": {"type": "integer", "minimum": 3}}]},
            },
        },
        "hamiltonian": {
            "type": "object",
            "required": ["variant"],
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["quadratic", "transport-plus-quadratic", "norm-type",
                                     "isaacs"]},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"scale": _NUM, "weight": _NUM, "drift": _VEC,
                                   "drift_matrix": {"type": "array"}},
                },
                "p_max": _VEC,
                "theta1": {"type": "array", "minItems": 1},
                "theta2": {"type": "array", "minItems": 1},
                "inner": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"scale": _POS, "drift": {"type": "boolean"}},
                },
                "cost": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {"kind": {"enum": ["separable", "matrix", "product"]},
                                   "c1": {"type": "array", "items": _NUM},
                                   "c2": {"type": "array", "items": _NUM},
                                   "table": {"type": "array"}},
                },
            },
            "if": {"properties": {"variant": {"const": "isaacs"}}},
            "then": {"required": ["theta1", "theta2"]},
        },
        "containment": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {"kind": {"enum": ["auto", "custom"]}, "center": _VEC,
                           "scale": _POS, "c_upsilon": _NUM},
            "if": {"properties": {"kind": {"const": "custom"}}},
            "then": {"required": ["center"]},
        },
        "problem": {
            "type": "object",
            "required": ["kind", "lambda"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["stationary", "evolutionary"]},
                "lambda": {"type": "number", "minimum": 0},
                "h": FIELD_SCHEMA,
                "u0": FIELD_SCHEMA,
                "T": _POS,
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "stationary"}}},
                 "then": {"required": ["h"], "properties": {"lambda": _POS}}},
                {"if": {"properties": {"kind": {"const": "evolutionary"}}},
                 "then": {"required": ["u0", "T"]}},
            ],
        },
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau": _POS,
                "V": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {"kind": {"enum": ["stencil", "uniform"]}, "v_ref": _POS,
                                   "scales": {"type": "array", "items": _POS},
                                   "v_max": _POS, "n": {"type": "integer", "minimum": 3}},
                },
                "tol": _POS,
                "max_iters": {"type": "integer", "minimum": 1},
                "conjugate": {"enum": ["auto", "grid"]},
            },
        },
        "certify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_centres": {"type": "integer", "minimum": 1},
                "curvatures": {"type": "array", "items": _POS, "minItems": 1},
                "epsilons": {"type": "array", "minItems": 1,
                             "items": {"type": "number", "exclusiveMinimum": 0,
                                       "exclusiveMaximum": 1}},
                "radius": _POS,
                "kappa": {"type": "number", "minimum": 1},
                "reg_radius": {"type": "integer", "minimum": 0},
                "time_tests": {"type": "array",
                               "items": {"type": "array", "items": _NUM,
                                         "minItems": 2, "maxItems": 2}},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


class SchemaError(ConfigurationError):
    """Scenario does not match the schema; ``pointer`` locates the offending value."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


def _pointer(error: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in error.absolute_path]
    if error.validator == "required":
        missing = [k for k in error.validator_value if k not in error.instance]
        if missing:
            parts.append(missing[0])
    elif error.validator == "additionalProperties":
        extra = [k for k in error.instance if k not in error.schema.get("properties", {})]
        if extra:
            parts.append(extra[0])
    return "/" + "/".join(parts)


def _leaf_errors(error):
    if error.context:
        for sub in error.context:
            yield from _leaf_errors(sub)
    else:
        yield error


def validate(config: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: (len(e.absolute_path),
                                                                  list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        leaves = [e for e in _leaf_errors(err) if e.validator == "required"]
        err = leaves[0] if leaves else err
        raise SchemaError(_pointer(err), err.message)


# fields ----------------------------------------------------------------------------

def _vec(value, dim: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), (dim,)).copy()


def field_from_config(block: dict, grid: DomainGrid, base_dir: Optional[Path] = None
                      ) -> SmoothTestFunction:
    """Scalar field with its differential (tables have no differential)."""
    kind = block["kind"]
    d = grid.dim
    if kind == "constant":
        c = float(block["value"])
        return SmoothTestFunction(lambda x: np.full(x.shape[:-1], c), lambda x: np.zeros_like(x),
                                  BOUNDED, "constant", offset=c)
    if kind == "sin":
        a = float(block.get("amplitude", 1.0))
        k = _vec(block.get("frequency", 1.0), d)
        phi = float(block.get("phase", 0.0))

        def f(x):
            return a * np.sin(2 * np.pi * (x @ k) + phi)

        def df(x):
            return (2 * np.pi * a * np.cos(2 * np.pi * (x @ k) + phi))[..., None] * k
        return SmoothTestFunction(f, df, BOUNDED, "sin", offset=0.0)
    if kind == "quadratic":
        c = float(block["coeff"])
        x0 = _vec(block.get("center", 0.0), d)
        off = float(block.get("offset", 0.0))

        def f(x):
            r = x - x0
            return off + c * np.sum(r * r, axis=-1)

        def df(x):
            return 2 * c * (x - x0)
        tag = BOUNDED if c == 0 else (LOWER if c > 0 else UPPER)
        return SmoothTestFunction(f, df, tag, "quadratic", x0, 2 * c, off)
    if kind == "table":
        path = Path(block["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        vals = data[:, d]
        if vals.size != grid.size or np.max(np.abs(data[:, :d] - grid.points)) > 1e-9:
            raise ConfigurationError(f"table {path} does not match the scenario grid")

        def f(x):
            return interpolate(grid, vals, x)

        def no_grad(x):
            raise ConfigurationError("a tabulated field has no differential")
        return SmoothTestFunction(f, no_grad, BOUNDED, "table")
    raise ConfigurationError(f"unknown field kind {kind!r}")


# scenario ------------------------------------------------------------------------

@dataclass(eq=False)
class Scenario:
    config: dict
    base_dir: Path

    @classmethod
    def from_dict(cls, config: dict, base_dir=".") -> "Scenario":
        validate(config)
        return cls(config, Path(base_dir))

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            config = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"invalid JSON: {exc}") from None
        return cls.from_dict(config, path.parent)

    # blocks
    @property
    def problem(self) -> dict:
        return self.config["problem"]

    @property
    def kind(self) -> str:
        return self.problem["kind"]

    @property
    def lam(self) -> float:
        return float(self.problem["lambda"])

    @property
    def scheme(self) -> dict:
        return self.config.get("scheme", {})

    @property
    def certify_block(self) -> dict:
        return self.config.get("certify", {})

    @property
    def seed(self) -> int:
        return int(self.config.get("seed", 0))

    # builders (cached per instance)
    def _cached(self, key, make):
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            cache[key] = make()
        return cache[key]

    @property
    def grid(self) -> DomainGrid:
        return self._cached("grid", lambda: build_grid(self.config["domain"]))

    @property
    def is_isaacs(self) -> bool:
        return self.config["hamiltonian"]["variant"] == "isaacs"

    @property
    def game(self) -> Optional[IsaacsSpec]:
        if not self.is_isaacs:
            return None
        return self._cached("game", lambda: spec_from_config(self.config["hamiltonian"],
                                                             self.grid.dim))

    @property
    def hamiltonian(self) -> HamiltonianSpec:
        def make():
            if self.is_isaacs:
                return as_hamiltonian(self.game)
            return from_config(self.config["hamiltonian"], self.grid.dim)
        return self._cached("H", make)

    @property
    def containment(self) -> ContainmentSpec:
        def make():
            block = self.config.get("containment", {"kind": "auto"})
            bound = self.game.containment_bound if self.is_isaacs else None
            if block["kind"] == "auto":
                return standard_containment(self.grid, self.hamiltonian, bound=bound)
            return custom_containment(self.grid, self.hamiltonian, block["center"],
                                      block.get("scale", 1.0), block.get("c_upsilon"),
                                      bound=bound)
        return self._cached("ups", make)

    @property
    def data(self) -> SmoothTestFunction:
        """h for stationary problems, u0 for evolutionary ones."""
        key = "h" if self.kind == "stationary" else "u0"
        return self._cached("data", lambda: field_from_config(self.problem[key], self.grid,
                                                               self.base_dir))

    @property
    def tau(self) -> float:
        return float(self.scheme.get("tau", float(np.min(self.grid.spacing))))

    @property
    def velocities(self) -> np.ndarray:
        return self._cached("V", lambda: velocity_set(self.grid.dim, self.scheme.get("V")))

    @property
    def tol(self) -> float:
        return float(self.scheme.get("tol", 1e-8))

    @property
    def max_iters(self) -> Optional[int]:
        return self.scheme.get("max_iters")

    @property
    def conjugate_method(self) -> str:
        return self.scheme.get("conjugate", "auto")

    @property
    def kappa(self) -> float:
        return float(self.certify_block.get("kappa", DEFAULT_KAPPA))

    @property
    def reg_radius(self) -> int:
        return int(self.certify_block.get("reg_radius", 1))

    @property
    def cert_tol(self) -> float:
        return self.kappa * (float(np.max(self.grid.spacing)) + self.tau)

    @property
    def time_tests(self) -> list:
        tests = self.certify_block.get("time_tests", [[0, 0], [1, 0], [-1, 0]])
        return [(float(a), float(b)) for a, b in tests]

    def family(self):
        c = self.certify_block
        return self._cached("family", lambda: default_family(
            self.grid, self.hamiltonian, self.containment, c.get("n_centres", 5),
            tuple(c.get("curvatures", (0.5, 2.0))), tuple(c.get("epsilons", (0.05, 0.2))),
            c.get("radius")))

    def parameters(self) -> dict:
        """Every numeric knob the pipelines consume, resolved to its effective value."""
        c = self.certify_block
        out = {
            "grid": self.grid.describe(),
            "spacing": self.grid.spacing.tolist(),
            "hamiltonian": self.hamiltonian.describe(),
            "containment": self.containment.describe(),
            "problem": {"kind": self.kind, "lambda": self.lam},
            "scheme": {"tau": self.tau, "tol": self.tol, "max_iters": self.max_iters,
                       "conjugate": self.conjugate_method,
                       "velocity_set": self.scheme.get("V", {"kind": "stencil"}),
                       "n_velocities": int(len(self.velocities)),
                       "p_grid_step": (self.hamiltonian.p_max / 200.0).tolist()},
            "certify": {"kappa": self.kappa, "tol": self.cert_tol,
                        "reg_radius": self.reg_radius,
                        "n_centres": c.get("n_centres", 5),
                        "curvatures": list(c.get("curvatures", (0.5, 2.0))),
                        "epsilons": list(c.get("epsilons", (0.05, 0.2))),
                        "radius": c.get("radius", default_radius(self.grid)),
                        "time_tests": self.time_tests},
            "seed": self.seed,
        }
        if self.kind == "evolutionary":
            out["problem"]["T"] = float(self.problem["T"])
        return out
