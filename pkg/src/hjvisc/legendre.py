"""Numerical convex conjugation, Fenchel-Young gaps, H-bar and psi tables."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ConstructionError, EvaluationError
from .hamiltonian import HamiltonianSpec
from .testfunc import SmoothTestFunction

GRID_TOL = 1e-3
ANALYTIC_TOL = 1e-9
_CHUNK_ELEMS = 4_000_000
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LagrangianValue:
    """Conjugate value(s) L(x, v) with the maximising covector.

    ``saturated`` marks grid maxima found on the boundary of the p-search box:
    the value is then only a lower bound of L (possibly +inf).
    """

    value: np.ndarray
    argmax_p: np.ndarray
    saturated: np.ndarray

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.value) & ~self.saturated


def _p_axes(H: HamiltonianSpec, dp, p_max) -> list[np.ndarray]:
    p_max = H.p_max if p_max is None else np.broadcast_to(np.asarray(p_max, float), (H.dim,))
    dp = p_max / 200.0 if dp is None else np.broadcast_to(np.asarray(dp, float), (H.dim,))
    axes = []
    for a in range(H.dim):
        n = int(np.ceil(p_max[a] / dp[a] - 1e-9))
        axes.append(np.arange(-n, n + 1) * dp[a])
    return axes


def _golden_max(fun, lo, hi, iters=48):
    """Vectorised golden-section maximisation of concave 1D slices."""
    a, b = lo.copy(), hi.copy()
    for _ in range(iters):
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        left = fun(c) >= fun(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    x = 0.5 * (a + b)
    return x, fun(x)


def _grid_conjugate(H: HamiltonianSpec, x: np.ndarray, v: np.ndarray, dp=None, p_max=None,
                    refine: bool = True):
    axes = _p_axes(H, dp, p_max)
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, H.dim)
    step = np.array([ax[1] - ax[0] for ax in axes])
    hi = np.array([ax[-1] for ax in axes])
    n = x.shape[0]
    value = np.empty(n)
    arg = np.empty((n, H.dim))
    sat = np.empty(n, dtype=bool)
    chunk = max(1, _CHUNK_ELEMS // max(P.shape[0] * H.dim, 1))
    for s in range(0, n, chunk):
        xs, vs = x[s:s + chunk], v[s:s + chunk]
        hv = H.evaluate(xs[:, None, :], P[None, :, :])
        if not np.all(np.isfinite(hv)):
            raise EvaluationError("H is not finite on the p-search box")
        obj = P[None, :, :] @ vs[:, :, None]
        obj = obj[..., 0] - hv
        k = np.argmax(obj, axis=1)
        value[s:s + chunk] = obj[np.arange(len(k)), k]
        arg[s:s + chunk] = P[k]
        sat[s:s + chunk] = np.any(np.abs(P[k]) >= hi - 0.5 * step, axis=1)
    if refine:
        p = arg.copy()
        for a in range(H.dim):
            def slice_obj(t, a=a):
                q = p.copy()
                q[:, a] = t
                return np.sum(q * v, axis=-1) - H.evaluate(x, q)
            lo = np.maximum(p[:, a] - step[a], -hi[a])
            up = np.minimum(p[:, a] + step[a], hi[a])
            t, val = _golden_max(slice_obj, lo, up)
            better = np.isfinite(val) & (val > value)
            p[better, a] = t[better]
            value = np.where(better, val, value)
        arg = p
    return value, arg, sat


def conjugate(H: HamiltonianSpec, x, v, method: str = "auto", dp=None, p_max=None,
              refine: bool = True) -> LagrangianValue:
    """L(x, v) = sup_p <p, v> - H(x, p).

    ``method`` is "auto" (analytic when available), "analytic" or "grid".
    The grid search uses spacing ``dp`` (default p_max/200 per axis) and one
    golden-section coordinate pass around the grid maximiser.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if H.dim == 1:
        if x.ndim == 0 or x.shape[-1] != 1:
            x = x[..., None]
        if v.ndim == 0 or v.shape[-1] != 1:
            v = v[..., None]
    shape = np.broadcast_shapes(x.shape, v.shape)
    lead = shape[:-1]
    xb = np.broadcast_to(x, shape).reshape(-1, H.dim)
    vb = np.broadcast_to(v, shape).reshape(-1, H.dim)
    if not np.all(np.isfinite(vb)):
        raise ConfigurationError("velocity must be finite")
    use_analytic = H.has_conjugate and method in ("auto", "analytic")
    if method == "analytic" and not H.has_conjugate:
        raise ConfigurationError("no analytic conjugate available")
    if use_analytic:
        val = np.broadcast_to(H.conjugate(xb, vb), (xb.shape[0],)).astype(float)
        if H.dual_map is not None:
            arg = np.broadcast_to(H.dual_map(xb, vb), xb.shape).astype(float)
        else:
            arg = np.full(xb.shape, np.nan)
        arg = np.where(np.isfinite(val)[:, None], arg, np.nan)
        sat = np.zeros(xb.shape[0], dtype=bool)
    else:
        val, arg, sat = _grid_conjugate(H, xb, vb, dp, p_max, refine)
    return LagrangianValue(val.reshape(lead), arg.reshape(lead + (H.dim,)), sat.reshape(lead))


def lagrangian(H: HamiltonianSpec, x, v, method: str = "auto", dp=None) -> np.ndarray:
    """Conjugate values with saturated grid maxima mapped to +inf."""
    res = conjugate(H, x, v, method=method, dp=dp)
    return np.where(res.saturated, np.inf, res.value)


def fenchel_young_gap(H: HamiltonianSpec, x, v, p, method: str = "auto", dp=None) -> np.ndarray:
    """L(x,v) + H(x,p) - <p,v>; +inf where L is infinite."""
    lv = conjugate(H, x, v, method=method, dp=dp)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if H.dim == 1:
        x, p, v = (a[..., None] if (a.ndim == 0 or a.shape[-1] != 1) else a for a in (x, p, v))
    gap = lv.value + H.evaluate(x, p) - np.sum(p * v, axis=-1)
    return np.where(np.isinf(lv.value), np.inf, gap)


def _ball_covectors(dim: int, c: float, n: int = 41, n_dirs: int = 256) -> np.ndarray:
    ax = np.linspace(-c, c, n)
    P = np.stack(np.meshgrid(*[ax] * dim, indexing="ij"), axis=-1).reshape(-1, dim)
    P = P[np.linalg.norm(P, axis=1) <= c * (1 + 1e-12)]
    if dim == 1:
        return P
    if dim == 2:
        th = np.linspace(0, 2 * np.pi, n_dirs, endpoint=False)
        S = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        S = np.random.default_rng(0).normal(size=(n_dirs * dim, dim))
        S /= np.linalg.norm(S, axis=1, keepdims=True)
    return np.vstack([P, c * S])


def h_bar(H: HamiltonianSpec, K, c: float, n: int = 41) -> float:
    """max over x in K and |p| <= c of H(x, p), on a p-grid of the ball."""
    K = np.asarray(K, dtype=float)
    if H.dim == 1 and (K.ndim < 2 or K.shape[-1] != 1):
        K = K.reshape(-1, 1)
    K = K.reshape(-1, H.dim)
    if K.shape[0] == 0:
        raise ConfigurationError("h_bar needs a nonempty set K")
    if c <= 0:
        raise ConfigurationError("h_bar needs c > 0")
    P = _ball_covectors(H.dim, c, n)
    best = -np.inf
    chunk = max(1, _CHUNK_ELEMS // (P.shape[0] * H.dim))
    for s in range(0, K.shape[0], chunk):
        vals = H.evaluate(K[s:s + chunk, None, :], P[None])
        best = max(best, float(np.max(vals)))
    if not np.isfinite(best):
        raise EvaluationError("H is not finite on K x ball")
    return best


@dataclass(frozen=True)
class PsiFunction:
    """Sublinear domination function r -> C * phi^{-1}(r) given by tables."""

    s_table: np.ndarray
    phi_table: np.ndarray
    c_fk: float
    v_max: float

    @property
    def r_table(self) -> np.ndarray:
        return self.phi_table

    @property
    def psi_table(self) -> np.ndarray:
        return self.c_fk * self.s_table

    def inverse_phi(self, r) -> np.ndarray:
        # log-log interpolation is exact for power laws; np.interp clamps outside the table
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            logr = np.log(np.maximum(r, 0.0))
        return np.exp(np.interp(logr, np.log(self.phi_table), np.log(self.s_table)))

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = self.c_fk * self.inverse_phi(np.where(np.isfinite(r), r, self.phi_table[-1]))
        return out

    def rows(self):
        r = self.r_table
        psi = self.psi_table
        return np.column_stack([r, psi, psi / r])


def _directions(dim: int, n_dirs: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = np.linspace(0, 2 * np.pi, n_dirs, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    S = np.random.default_rng(1).normal(size=(n_dirs, dim))
    return S / np.linalg.norm(S, axis=1, keepdims=True)


def build_psi(H: HamiltonianSpec, f: SmoothTestFunction, K, v_max: float = 10.0,
              s_min: float = 1e-3, n_s: int = 400, n_dirs: int = 32,
              method: str = "auto", dp=None) -> PsiFunction:
    """Tabulate phi(s) = s * inf_{x in K} inf_{s <= |v| <= v_max} L(x,v)/|v| and psi = C phi^{-1}.

    The inner infimum over |v| >= s is truncated at ``v_max``.
    """
    K = np.asarray(K, dtype=float).reshape(-1, H.dim)
    if K.shape[0] == 0:
        raise ConfigurationError("build_psi needs a nonempty set K")
    if not (0 < s_min < v_max):
        raise ConfigurationError("need 0 < s_min < v_max")
    c_fk = float(np.max(np.linalg.norm(f.grad(K), axis=-1)))
    s = np.geomspace(s_min, v_max, n_s)
    dirs = _directions(H.dim, n_dirs)
    V = s[:, None, None] * dirs[None, :, :]                      # (n_s, n_dir, d)
    m = np.empty(n_s)
    for j in range(n_s):
        L = lagrangian(H, K[:, None, :], V[j][None, :, :], method=method, dp=dp)
        m[j] = np.min(L) / s[j]
    tail_min = np.minimum.accumulate(m[::-1])[::-1]
    phi = s * tail_min
    flat = np.flatnonzero(~(np.diff(phi) > 0))
    if flat.size:
        j = int(flat[0])
        raise ConstructionError(
            f"phi is not strictly increasing on |v| in [{s[j]:.4g}, {s[j + 1]:.4g}] "
            "(L/|v| does not grow; the conjugate is degenerate there)")
    if not np.all(np.isfinite(phi)):
        raise ConstructionError("phi is infinite on the table; lower v_max")
    return PsiFunction(s, phi, c_fk, float(v_max))


def legendre_rows(H: HamiltonianSpec, x, velocities, method: str = "auto", dp=None):
    """Table rows (x, v, L, argmax_p, saturated) for a fixed point x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    V = np.asarray(velocities, dtype=float).reshape(-1, H.dim)
    res = conjugate(H, x[None, :], V, method=method, dp=dp)
    return [(x, V[i], float(res.value[i]), res.argmax_p[i], bool(res.saturated[i]))
            for i in range(V.shape[0])]
