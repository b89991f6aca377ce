"""Hamiltonians H(x, p) and their structural metadata.

Evaluators are vectorised: ``x`` and ``p`` are arrays of shape ``(..., d)``
that broadcast against each other, and the result has the broadcast leading
shape. Conjugates return ``np.inf`` where the Lagrangian is infinite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import AssumptionError, ConfigurationError
from .grid import DomainGrid

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

QUADRATIC = "quadratic"
TRANSPORT = "transport-plus-quadratic"
NORM = "norm-type"
ISAACS = "isaacs-composite"
CUSTOM = "custom"
VARIANTS = (QUADRATIC, TRANSPORT, NORM, ISAACS, CUSTOM)


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    evaluate: Evaluator
    dim: int
    p_max: np.ndarray
    convex_in_p: bool = True
    conjugate: Optional[Evaluator] = None
    grad_p: Optional[Evaluator] = None
    variant: str = CUSTOM
    params: dict = field(default_factory=dict)
    dual_map: Optional[Evaluator] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown Hamiltonian variant {self.variant!r}")
        p_max = np.broadcast_to(np.asarray(self.p_max, dtype=float), (self.dim,)).copy()
        if np.any(p_max <= 0):
            raise ConfigurationError("p_max must be positive")
        p_max.setflags(write=False)
        object.__setattr__(self, "p_max", p_max)

    def __call__(self, x, p) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float), np.asarray(p, dtype=float))

    @property
    def has_conjugate(self) -> bool:
        return self.conjugate is not None

    def without_conjugate(self) -> "HamiltonianSpec":
        """Same Hamiltonian, forcing numerical conjugation downstream."""
        from dataclasses import replace
        return replace(self, conjugate=None, dual_map=None)

    def validate_on(self, grid: DomainGrid, atol: float = 1e-12) -> None:
        """Check H(x, 0) = 0 at every node; raise AssumptionError otherwise."""
        x = grid.points
        vals = self.evaluate(x, np.zeros_like(x))
        err = np.max(np.abs(vals))
        if not np.isfinite(err) or err > atol:
            raise AssumptionError(f"H(x,0) deviates from 0 by {err:.3e} on the grid")

    def describe(self) -> dict:
        return {"variant": self.variant, "params": _jsonable(self.params),
                "p_max": self.p_max.tolist(), "convex_in_p": self.convex_in_p,
                "analytic_conjugate": self.has_conjugate}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if callable(obj):
        return getattr(obj, "__name__", "callable")
    return obj


def _sq(p):
    return np.sum(p * p, axis=-1)


def quadratic(dim: int = 1, scale: float = 1.0, p_max=4.0) -> HamiltonianSpec:
    """H(x,p) = scale/2 |p|^2, conjugate |v|^2/(2 scale)."""
    if scale <= 0:
        raise ConfigurationError("quadratic scale must be positive")

    def H(x, p):
        return 0.5 * scale * _sq(p) + 0.0 * x[..., 0]

    def L(x, v):
        return 0.5 / scale * _sq(v) + 0.0 * x[..., 0]

    def dH(x, p):
        return scale * p + 0.0 * x

    def pstar(x, v):
        return v / scale + 0.0 * x

    return HamiltonianSpec(H, dim, p_max, True, L, dH, QUADRATIC, {"scale": scale}, pstar)


def transport_quadratic(dim: int = 1, drift=0.0, drift_matrix=None, scale: float = 1.0,
                        p_max=4.0) -> HamiltonianSpec:
    """H(x,p) = scale/2 |p|^2 + <b(x), p> with affine drift b(x) = drift + A x."""
    if scale <= 0:
        raise ConfigurationError("quadratic scale must be positive")
    b0 = np.broadcast_to(np.asarray(drift, dtype=float), (dim,)).copy()
    A = None if drift_matrix is None else np.asarray(drift_matrix, dtype=float).reshape(dim, dim)

    def b(x):
        out = b0 + 0.0 * x
        if A is not None:
            out = out + x @ A.T
        return out

    def H(x, p):
        return 0.5 * scale * _sq(p) + np.sum(b(x) * p, axis=-1)

    def L(x, v):
        return 0.5 / scale * _sq(v - b(x))

    def dH(x, p):
        return scale * p + b(x)

    params = {"scale": scale, "drift": b0.tolist(),
              "drift_matrix": None if A is None else A.tolist()}

    def pstar(x, v):
        return (v - b(x)) / scale

    spec = HamiltonianSpec(H, dim, p_max, True, L, dH, TRANSPORT, params, pstar)
    object.__setattr__(spec, "drift_field", b)
    return spec


def norm_type(dim: int = 1, weight: float = 1.0, scale: float = 0.0,
              p_max=4.0) -> HamiltonianSpec:
    """H(x,p) = weight |p| + scale/2 |p|^2.

    For scale = 0 the conjugate is the indicator of {|v| <= weight}; no
    p-gradient is provided because |p| is not differentiable at 0.
    """
    if weight < 0 or scale < 0 or (weight == 0 and scale == 0):
        raise ConfigurationError("norm-type needs weight >= 0, scale >= 0, not both zero")

    def H(x, p):
        return weight * np.sqrt(_sq(p)) + 0.5 * scale * _sq(p) + 0.0 * x[..., 0]

    def L(x, v):
        r = np.sqrt(_sq(v)) + 0.0 * x[..., 0]
        if scale > 0:
            return 0.5 / scale * np.maximum(r - weight, 0.0) ** 2
        return np.where(r <= weight * (1 + 1e-12), 0.0, np.inf)

    def pstar(x, v):
        r = np.sqrt(_sq(v))[..., None] + 0.0 * x[..., :1]
        unit = np.divide(v, r, out=np.zeros(np.broadcast_shapes(v.shape, r.shape)), where=r > 0)
        if scale > 0:
            return unit * np.maximum(r - weight, 0.0) / scale
        return np.where(r <= weight, 0.0, np.nan) * unit

    grad = None
    if weight == 0:
        def grad(x, p):
            return scale * p + 0.0 * x

    return HamiltonianSpec(H, dim, p_max, True, L, grad, NORM,
                           {"weight": weight, "scale": scale}, pstar)


def custom(evaluate: Evaluator, dim: int, p_max=4.0, convex_in_p: bool = True,
           conjugate: Optional[Evaluator] = None, grad_p: Optional[Evaluator] = None,
           params: Optional[dict] = None) -> HamiltonianSpec:
    return HamiltonianSpec(evaluate, dim, p_max, convex_in_p, conjugate, grad_p,
                           CUSTOM, params or {})


def from_config(block: dict, dim: int) -> HamiltonianSpec:
    """Build a convex Hamiltonian from a scenario ``hamiltonian`` block.

    Isaacs blocks are handled by :func:`hjvisc.isaacs.spec_from_config`.
    """
    variant = block["variant"]
    params = dict(block.get("params", {}))
    p_max = block.get("p_max", 4.0)
    if variant == QUADRATIC:
        return quadratic(dim, params.get("scale", 1.0), p_max)
    if variant == TRANSPORT:
        return transport_quadratic(dim, params.get("drift", 0.0), params.get("drift_matrix"),
                                   params.get("scale", 1.0), p_max)
    if variant == NORM:
        return norm_type(dim, params.get("weight", 1.0), params.get("scale", 0.0), p_max)
    raise ConfigurationError(f"variant {variant!r} cannot be built from a scenario here")
