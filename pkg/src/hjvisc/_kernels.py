"""Hot loops of the semi-Lagrangian scheme.

Two interchangeable implementations of the sweep
``new[n] = max_k reward[n, k] + beta * interp(values, x_n + disp_k)``
with multilinear interpolation (clamped on boxes, wrapped on tori):

* a numba ``@njit(parallel=True)`` kernel, used by default when numba imports;
* a pure-numpy path, selected with ``HJVISC_NO_NUMBA=1`` or ``set_backend("numpy")``.

Both visit interpolation corners in the same order, so they agree to rounding.
``HJVISC_NUM_THREADS`` caps the numba thread pool.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit, prange
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

_DISABLED = os.environ.get("HJVISC_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")
_backend = "numba" if NUMBA_AVAILABLE and not _DISABLED else "numpy"

if NUMBA_AVAILABLE and "NUMBA_THREADING_LAYER" not in os.environ:
    # the system TBB may be too old for numba; prefer OpenMP, then the builtin pool
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

if NUMBA_AVAILABLE and os.environ.get("HJVISC_NUM_THREADS"):
    # numba refuses more threads than it launched with; clamp rather than fail at import
    numba.set_num_threads(max(1, min(int(os.environ["HJVISC_NUM_THREADS"]),
                                     numba.config.NUMBA_NUM_THREADS)))


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    _backend = name


def interp_numpy(values, pos, lower, spacing, shape, periodic):
    """Multilinear interpolation of a flat C-ordered field at points ``pos`` (M, d)."""
    d = pos.shape[1]
    shape = np.asarray(shape, dtype=np.int64)
    strides = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    i0 = np.empty(pos.shape, dtype=np.int64)
    i1 = np.empty(pos.shape, dtype=np.int64)
    fr = np.empty(pos.shape)
    for a in range(d):
        s = (pos[:, a] - lower[a]) / spacing[a]
        n = shape[a]
        if periodic:
            s = np.mod(s, n)
            fl = np.floor(s)
            lo = fl.astype(np.int64)
            fr[:, a] = s - fl
            lo = np.where(lo >= n, lo - n, lo)
            i0[:, a] = lo
            hi = lo + 1
            i1[:, a] = np.where(hi >= n, hi - n, hi)
        else:
            s = np.minimum(np.maximum(s, 0.0), n - 1.0)
            lo = np.minimum(np.floor(s), n - 2.0)
            fr[:, a] = s - lo
            i0[:, a] = lo.astype(np.int64)
            i1[:, a] = i0[:, a] + 1
    acc = np.zeros(pos.shape[0])
    for corner in range(1 << d):
        w = np.ones(pos.shape[0])
        idx = np.zeros(pos.shape[0], dtype=np.int64)
        for a in range(d):
            if (corner >> a) & 1:
                w = w * fr[:, a]
                idx += i1[:, a] * strides[a]
            else:
                w = w * (1.0 - fr[:, a])
                idx += i0[:, a] * strides[a]
        acc = acc + w * values[idx]
    return acc


def sweep_numpy(values, coords, disp, lower, spacing, shape, periodic, reward, beta):
    best = np.full(coords.shape[0], -np.inf)
    arg = np.full(coords.shape[0], -1, dtype=np.int64)
    for k in range(disp.shape[0]):
        r = reward[:, k]
        ok = r > -np.inf
        if not np.any(ok):
            continue
        cand = np.full(coords.shape[0], -np.inf)
        cand[ok] = r[ok] + beta * interp_numpy(values, coords[ok] + disp[k], lower, spacing,
                                               shape, periodic)
        better = cand > best
        best = np.where(better, cand, best)
        arg = np.where(better, k, arg)
    return best, arg


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _interp_point(values, y, lower, spacing, shape, strides, periodic, i0, i1, fr):
        d = y.shape[0]
        for a in range(d):
            s = (y[a] - lower[a]) / spacing[a]
            n = shape[a]
            if periodic:
                s = s % n
                fl = np.floor(s)
                lo = np.int64(fl)
                fr[a] = s - fl
                if lo >= n:
                    lo -= n
                i0[a] = lo
                hi = lo + 1
                if hi >= n:
                    hi -= n
                i1[a] = hi
            else:
                if s < 0.0:
                    s = 0.0
                if s > n - 1.0:
                    s = n - 1.0
                lo_f = np.floor(s)
                if lo_f > n - 2.0:
                    lo_f = n - 2.0
                fr[a] = s - lo_f
                i0[a] = np.int64(lo_f)
                i1[a] = i0[a] + 1
        acc = 0.0
        for corner in range(1 << d):
            w = 1.0
            idx = 0
            for a in range(d):
                if (corner >> a) & 1:
                    w = w * fr[a]
                    idx += i1[a] * strides[a]
                else:
                    w = w * (1.0 - fr[a])
                    idx += i0[a] * strides[a]
            acc = acc + w * values[idx]
        return acc

    @njit(inline="always")
    def _axis(s, n, periodic):
        """Lower corner index, upper corner index and fraction along one axis."""
        if periodic:
            s = s % n
            fl = np.floor(s)
            lo = np.int64(fl)
            fr = s - fl
            if lo >= n:
                lo -= n
            hi = lo + 1
            if hi >= n:
                hi -= n
            return lo, hi, fr
        if s < 0.0:
            s = 0.0
        if s > n - 1.0:
            s = n - 1.0
        fl = np.floor(s)
        if fl > n - 2.0:
            fl = n - 2.0
        lo = np.int64(fl)
        return lo, lo + 1, s - fl

    @njit(parallel=True, cache=True)
    def _sweep_1d(values, coords, disp, lower, spacing, shape, periodic, reward, beta,
                  best, arg):
        N = coords.shape[0]
        K = disp.shape[0]
        n0 = shape[0]
        for n in prange(N):
            b = -np.inf
            kb = -1
            for k in range(K):
                r = reward[n, k]
                if r == -np.inf:
                    continue
                i0, i1, f = _axis((coords[n, 0] + disp[k, 0] - lower[0]) / spacing[0],
                                  n0, periodic)
                acc = 0.0
                acc = acc + (1.0 - f) * values[i0]
                acc = acc + f * values[i1]
                c = r + beta * acc
                if c > b:
                    b = c
                    kb = k
            best[n] = b
            arg[n] = kb

    @njit(parallel=True, cache=True)
    def _sweep_2d(values, coords, disp, lower, spacing, shape, periodic, reward, beta,
                  best, arg):
        N = coords.shape[0]
        K = disp.shape[0]
        n0 = shape[0]
        n1 = shape[1]
        for n in prange(N):
            b = -np.inf
            kb = -1
            for k in range(K):
                r = reward[n, k]
                if r == -np.inf:
                    continue
                a0, a1, f = _axis((coords[n, 0] + disp[k, 0] - lower[0]) / spacing[0],
                                  n0, periodic)
                c0, c1, g = _axis((coords[n, 1] + disp[k, 1] - lower[1]) / spacing[1],
                                  n1, periodic)
                # same corner order as the generic path: axis 0 is bit 0
                acc = 0.0
                acc = acc + ((1.0 - f) * (1.0 - g)) * values[a0 * n1 + c0]
                acc = acc + (f * (1.0 - g)) * values[a1 * n1 + c0]
                acc = acc + ((1.0 - f) * g) * values[a0 * n1 + c1]
                acc = acc + (f * g) * values[a1 * n1 + c1]
                c = r + beta * acc
                if c > b:
                    b = c
                    kb = k
            best[n] = b
            arg[n] = kb

    @njit(parallel=True, cache=True)
    def _sweep_nb(values, coords, disp, lower, spacing, shape, strides, periodic, reward, beta,
                  best, arg):
        N, d = coords.shape
        K = disp.shape[0]
        for n in prange(N):
            i0 = np.empty(d, dtype=np.int64)
            i1 = np.empty(d, dtype=np.int64)
            fr = np.empty(d)
            y = np.empty(d)
            b = -np.inf
            kb = -1
            for k in range(K):
                r = reward[n, k]
                if r == -np.inf:
                    continue
                for a in range(d):
                    y[a] = coords[n, a] + disp[k, a]
                c = r + beta * _interp_point(values, y, lower, spacing, shape, strides,
                                             periodic, i0, i1, fr)
                if c > b:
                    b = c
                    kb = k
            best[n] = b
            arg[n] = kb

    @njit(parallel=True, cache=True)
    def _interp_nb(values, pos, lower, spacing, shape, strides, periodic, out):
        M, d = pos.shape
        for m in prange(M):
            i0 = np.empty(d, dtype=np.int64)
            i1 = np.empty(d, dtype=np.int64)
            fr = np.empty(d)
            out[m] = _interp_point(values, pos[m], lower, spacing, shape, strides, periodic,
                                   i0, i1, fr)


def _strides(shape):
    shape = np.asarray(shape, dtype=np.int64)
    s = np.ones(shape.size, dtype=np.int64)
    for a in range(shape.size - 2, -1, -1):
        s[a] = s[a + 1] * shape[a + 1]
    return s


def sweep_numba(values, coords, disp, lower, spacing, shape, periodic, reward, beta):
    N = coords.shape[0]
    best = np.empty(N)
    arg = np.empty(N, dtype=np.int64)
    shape = np.asarray(shape, dtype=np.int64)
    args = (np.ascontiguousarray(values, dtype=np.float64), np.ascontiguousarray(coords),
            np.ascontiguousarray(disp), np.asarray(lower, dtype=np.float64),
            np.asarray(spacing, dtype=np.float64), shape)
    rest = (bool(periodic), np.ascontiguousarray(reward), float(beta), best, arg)
    if shape.size == 1:
        _sweep_1d(*args, *rest)
    elif shape.size == 2:
        _sweep_2d(*args, *rest)
    else:
        _sweep_nb(*args, _strides(shape), *rest)
    return best, arg


def interp_numba(values, pos, lower, spacing, shape, periodic):
    out = np.empty(pos.shape[0])
    shape = np.asarray(shape, dtype=np.int64)
    _interp_nb(np.ascontiguousarray(values, dtype=np.float64), np.ascontiguousarray(pos),
               np.asarray(lower, dtype=np.float64), np.asarray(spacing, dtype=np.float64),
               shape, _strides(shape), bool(periodic), out)
    return out


def sweep(values, coords, disp, lower, spacing, shape, periodic, reward, beta):
    """One semi-Lagrangian sweep; returns (new values, index of the maximising velocity)."""
    if _backend == "numba":
        return sweep_numba(values, coords, disp, lower, spacing, shape, periodic, reward, beta)
    return sweep_numpy(values, coords, disp, lower, spacing, shape, periodic, reward, beta)


def interpolate(values, pos, lower, spacing, shape, periodic):
    if _backend == "numba":
        return interp_numba(values, pos, lower, spacing, shape, periodic)
    return interp_numpy(values, pos, lower, spacing, shape, periodic)
