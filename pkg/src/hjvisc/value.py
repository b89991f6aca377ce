"""Semi-Lagrangian value functions, regularisations and DPP diagnostics.

Stationary problem: R(x) = max_v (1-beta)(h(x) - lam L(x,v)) + beta R(x + tau v),
beta = exp(-tau/lam). Evolutionary problem:
v_{k+1}(x) = max_v -tau L(x,v) + exp(-lam tau) v_k(x + tau v).
Feet x + tau v are read by multilinear interpolation, clamped on boxes and
wrapped on tori.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import ConfigurationError, ConvergenceError, SchemeError
from .grid import DomainGrid
from .hamiltonian import HamiltonianSpec
from .legendre import lagrangian

FieldLike = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, float]

DEFAULT_TOL = 1e-8
STENCIL_SCALES = (0.25, 0.5, 1.0, 2.0)


# velocity sets ------------------------------------------------------------------

def stencil_velocities(dim: int, v_ref: float = 1.0, scales=STENCIL_SCALES) -> np.ndarray:
    """0, +-s v_ref e_a for every axis and, in 2D, the diagonals of length s v_ref."""
    vs = [np.zeros(dim)]
    for s in scales:
        for a in range(dim):
            for sign in (1.0, -1.0):
                e = np.zeros(dim)
                e[a] = sign * s * v_ref
                vs.append(e)
        if dim == 2:
            for sx in (1.0, -1.0):
                for sy in (1.0, -1.0):
                    vs.append(s * v_ref * np.array([sx, sy]) / np.sqrt(2.0))
    return np.array(vs)


def uniform_velocities(dim: int, v_max: float, n: int) -> np.ndarray:
    """Tensor grid of n points per axis on [-v_max, v_max]^d (n odd so 0 is included)."""
    if n < 3 or n % 2 == 0:
        raise ConfigurationError("uniform velocity sets need an odd count >= 3")
    ax = np.linspace(-v_max, v_max, n)
    ax[n // 2] = 0.0
    return np.stack(np.meshgrid(*[ax] * dim, indexing="ij"), axis=-1).reshape(-1, dim)


def velocity_set(dim: int, config: Optional[dict] = None) -> np.ndarray:
    """Velocity set from ``{"kind": "stencil", "v_ref"}`` or ``{"kind": "uniform", "v_max", "n"}``."""
    config = config or {"kind": "stencil"}
    kind = config.get("kind", "stencil")
    if kind == "stencil":
        return stencil_velocities(dim, float(config.get("v_ref", 1.0)),
                                  tuple(config.get("scales", STENCIL_SCALES)))
    if kind == "uniform":
        return uniform_velocities(dim, float(config["v_max"]), int(config["n"]))
    raise ConfigurationError(f"unknown velocity set kind {kind!r}")


def _check_velocities(V: np.ndarray, dim: int) -> np.ndarray:
    V = np.asarray(V, dtype=float).reshape(-1, dim)
    if not np.any(np.all(V == 0, axis=1)):
        raise ConfigurationError("the velocity set must contain 0")
    return V


# fields ---------------------------------------------------------------------------

def sample(fld: FieldLike, grid: DomainGrid) -> np.ndarray:
    """Node values of a callable, a constant or an array of node values."""
    if callable(fld):
        vals = np.asarray(fld(grid.points), dtype=float)
        return np.broadcast_to(vals, (grid.size,)).copy()
    arr = np.asarray(fld, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.size, float(arr))
    return arr.reshape(grid.size).copy()


def interpolate(grid: DomainGrid, values: np.ndarray, x) -> np.ndarray:
    """Multilinear interpolation of node values at arbitrary points (..., d)."""
    x = np.asarray(x, dtype=float)
    lead = x.shape[:-1]
    pts = np.ascontiguousarray(x.reshape(-1, grid.dim))
    out = _kernels.interpolate(np.asarray(values, dtype=float), pts, grid.lower, grid.spacing,
                               np.asarray(grid.shape), grid.periodic)
    return out.reshape(lead)


@dataclass(frozen=True, eq=False)
class ValueField:
    grid: DomainGrid
    values: np.ndarray
    lam: float
    iterations: int = 0
    last_update: float = np.nan
    velocities: Optional[np.ndarray] = None
    tau: Optional[float] = None
    tol: float = DEFAULT_TOL
    policy: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        return interpolate(self.grid, self.values, x)

    def with_values(self, values) -> "ValueField":
        from dataclasses import replace
        return replace(self, values=np.asarray(values, dtype=float).reshape(self.grid.size))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def describe(self) -> dict:
        return {"lambda": self.lam, "iterations": self.iterations,
                "last_update": self.last_update, "tau": self.tau, "tol": self.tol,
                "n_velocities": None if self.velocities is None else int(len(self.velocities))}


@dataclass(frozen=True, eq=False)
class TimeValueField:
    grid: DomainGrid
    times: np.ndarray
    values: np.ndarray          # (n_layers, grid.size)
    lam: float
    velocities: Optional[np.ndarray] = None
    tau: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def layer(self, k: int) -> np.ndarray:
        return self.values[k]

    def layer_at(self, t: float) -> np.ndarray:
        k = int(np.rint(t / self.tau)) if self.tau else int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"t={t} is not a layer time")
        return self.values[k]

    def with_values(self, values) -> "TimeValueField":
        from dataclasses import replace
        return replace(self, values=np.asarray(values, dtype=float).reshape(self.values.shape))

    def describe(self) -> dict:
        return {"lambda": self.lam, "tau": self.tau, "T": float(self.times[-1]),
                "layers": int(self.times.size),
                "n_velocities": None if self.velocities is None else int(len(self.velocities))}


# scheme ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SemiLagrangianOperator:
    """One Jacobi sweep new = max_k reward[:, k] + beta * interp(old, x + disp_k)."""

    grid: DomainGrid
    displacements: np.ndarray
    reward: np.ndarray
    beta: float

    def apply(self, values: np.ndarray):
        return _kernels.sweep(np.asarray(values, dtype=float), self.grid.points,
                              self.displacements, self.grid.lower, self.grid.spacing,
                              np.asarray(self.grid.shape), self.grid.periodic,
                              self.reward, self.beta)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return self.apply(values)[0]


def running_costs(H: HamiltonianSpec, grid: DomainGrid, V: np.ndarray,
                  method: str = "auto") -> np.ndarray:
    """L(x_n, v_k) on nodes x velocities; +inf marks an inadmissible velocity."""
    L = lagrangian(H, grid.points[:, None, :], V[None, :, :], method=method)
    L = np.broadcast_to(L, (grid.size, V.shape[0]))
    bad = ~np.any(np.isfinite(L), axis=1)
    if np.any(bad):
        x = grid.points[int(np.flatnonzero(bad)[0])]
        raise SchemeError(f"every velocity is inadmissible at x = {x.tolist()}")
    return L


def stationary_operator(H: HamiltonianSpec, grid: DomainGrid, lam: float, h: FieldLike,
                        tau: float, V=None, method: str = "auto",
                        costs: Optional[np.ndarray] = None) -> SemiLagrangianOperator:
    if lam <= 0 or tau <= 0:
        raise ConfigurationError("need lambda > 0 and tau > 0")
    V = _check_velocities(stencil_velocities(grid.dim) if V is None else V, grid.dim)
    hv = sample(h, grid)
    L = running_costs(H, grid, V, method) if costs is None else costs
    beta = float(np.exp(-tau / lam))
    with np.errstate(invalid="ignore"):
        reward = (1.0 - beta) * (hv[:, None] - lam * L)
    reward = np.where(np.isfinite(L), reward, -np.inf)
    return SemiLagrangianOperator(grid, tau * V, np.ascontiguousarray(reward), beta)


def default_max_iters(beta: float, tol: float, scale: float) -> int:
    """10 ceil(1/(1-beta)), raised to the count the contraction actually needs."""
    base = 10 * int(np.ceil(1.0 / (1.0 - beta)))
    if scale <= tol:
        return base
    need = int(np.ceil(np.log(tol / scale) / np.log(beta))) + 10
    return max(base, need)


def solve_stationary(H: HamiltonianSpec, grid: DomainGrid, lam: float, h: FieldLike,
                     tau: float, V=None, tol: float = DEFAULT_TOL,
                     max_iters: Optional[int] = None, init: Optional[FieldLike] = None,
                     method: str = "auto", raise_on_fail: bool = True) -> ValueField:
    """Value iteration for R_{lam,h} until the sup-norm update is <= tol."""
    op = stationary_operator(H, grid, lam, h, tau, V, method)
    hv = sample(h, grid)
    R = hv.copy() if init is None else sample(init, grid)
    if max_iters is None:
        max_iters = default_max_iters(op.beta, tol, 2.0 * float(np.max(np.abs(hv))) + 1.0)
    update, it, arg = np.inf, 0, None
    history = []
    while it < max_iters:
        new, arg = op.apply(R)
        update = float(np.max(np.abs(new - R)))
        R = new
        it += 1
        history.append(update)
        if update <= tol:
            break
    if update > tol and raise_on_fail:
        raise ConvergenceError(update, it)
    return ValueField(grid, R, float(lam), it, update, op.displacements / tau, float(tau), tol,
                      arg, {"beta": op.beta, "max_iters": max_iters, "updates": history})


def solve_evolutionary(H: HamiltonianSpec, grid: DomainGrid, lam: float, u0: FieldLike,
                       T: float, tau: float, V=None, method: str = "auto") -> TimeValueField:
    """Layers v(., k tau), k = 0..N with N tau = T."""
    if lam < 0 or tau <= 0 or T <= 0:
        raise ConfigurationError("need lambda >= 0, tau > 0, T > 0")
    n = int(np.rint(T / tau))
    if n < 1 or abs(n * tau - T) > 1e-9 * max(1.0, T):
        raise ConfigurationError("T must be an integer multiple of tau")
    V = _check_velocities(stencil_velocities(grid.dim) if V is None else V, grid.dim)
    L = running_costs(H, grid, V, method)
    reward = np.ascontiguousarray(np.where(np.isfinite(L), -tau * L, -np.inf))
    op = SemiLagrangianOperator(grid, tau * V, reward, float(np.exp(-lam * tau)))
    layers = np.empty((n + 1, grid.size))
    layers[0] = sample(u0, grid)
    for k in range(n):
        layers[k + 1] = op(layers[k])
    return TimeValueField(grid, tau * np.arange(n + 1), layers, float(lam), V, float(tau))


# oracle ---------------------------------------------------------------------------

def hopf_lax(u0: Callable[[np.ndarray], np.ndarray], conj: Callable[[np.ndarray], np.ndarray],
             x, t: float, nodes: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
    """max over the nodes y of u0(y) - t L((y - x)/t) for a state-independent L."""
    if t <= 0:
        raise ConfigurationError("Hopf-Lax needs t > 0")
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    d = nodes.shape[1]
    if x.ndim == 0 or x.shape[-1] != d:
        x = x[..., None]
    lead = x.shape[:-1]
    xs = x.reshape(-1, d)
    uy = np.asarray(u0(nodes), dtype=float)
    out = np.empty(xs.shape[0])
    step = max(1, chunk // nodes.shape[0])
    for s in range(0, xs.shape[0], step):
        v = (nodes[None, :, :] - xs[s:s + step, None, :]) / t
        out[s:s + step] = np.max(uy[None, :] - t * conj(v), axis=1)
    return out.reshape(lead)


# regularisation -------------------------------------------------------------------

def _filter(values: np.ndarray, grid: DomainGrid, radius: int, op, time_axis: bool):
    shape = ((values.shape[0],) if time_axis else ()) + grid.shape
    arr = np.asarray(values, dtype=float).reshape(shape)
    mode = ["nearest"] * arr.ndim
    if grid.periodic:
        for a in range(int(time_axis), arr.ndim):
            mode[a] = "wrap"
    out = op(arr, size=2 * radius + 1, mode=mode)
    return out.reshape(np.shape(values))


def usc_regularize(values: np.ndarray, grid: DomainGrid, radius: int = 1,
                   time_axis: bool = False) -> np.ndarray:
    """Max over the (2r+1)^d block of each node (and of neighbouring layers if time_axis)."""
    return _filter(values, grid, radius, ndimage.maximum_filter, time_axis)


def lsc_regularize(values: np.ndarray, grid: DomainGrid, radius: int = 1,
                   time_axis: bool = False) -> np.ndarray:
    """Min over the same neighbourhood as :func:`usc_regularize`."""
    return _filter(values, grid, radius, ndimage.minimum_filter, time_axis)


def regularize(fld, kind: str, radius: int = 1):
    """usc/lsc of a ValueField or TimeValueField, returning the same type."""
    op = usc_regularize if kind == "usc" else lsc_regularize
    if isinstance(fld, TimeValueField):
        return fld.with_values(op(fld.values, fld.grid, radius, time_axis=True))
    return fld.with_values(op(fld.values, fld.grid, radius))


# DPP diagnostic -------------------------------------------------------------------

def dpp_residual(H: HamiltonianSpec, R: ValueField, h: FieldLike, lam: Optional[float] = None,
                 T_test: Optional[float] = None, V=None, n_sub: int = 8,
                 method: str = "auto") -> np.ndarray:
    """RHS - R(x) of the dynamic programming identity over straight curves x + t v.

    RHS = max_v int_0^T e^{-t/lam}/lam h - int_0^T e^{-t/lam} L + e^{-T/lam} R(x + T v),
    the form obtained after integrating the nested running cost by parts.
    """
    grid = R.grid
    lam = R.lam if lam is None else float(lam)
    T = (R.tau if R.tau is not None else grid.spacing.min()) if T_test is None else float(T_test)
    V = _check_velocities(R.velocities if V is None else V, grid.dim)
    hv = sample(h, grid)
    edges = np.linspace(0.0, T, n_sub + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    mass = np.exp(-edges[:-1] / lam) - np.exp(-edges[1:] / lam)
    x = grid.points
    best = np.full(grid.size, -np.inf)
    for v in V:
        total = np.zeros(grid.size)
        for m, w in zip(mids, mass):
            y = grid.project(x + m * v)
            hy = interpolate(grid, hv, y) if not callable(h) else np.asarray(h(y), dtype=float)
            Ly = lagrangian(H, y, np.broadcast_to(v, y.shape), method=method)
            total += w * (hy - lam * Ly)
        total += np.exp(-T / lam) * R(grid.project(x + T * v))
        best = np.maximum(best, np.where(np.isfinite(total), total, -np.inf))
    return best - R.values
