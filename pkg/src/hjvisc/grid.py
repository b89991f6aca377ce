"""Uniform grids on boxes and flat tori."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ResourceError

MAX_NODES = 20_000_000

BOX = "box"
TORUS = "torus"


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """Rectangular box (clamped) or flat torus (periodic) with uniform spacing.

    Nodes are ordered C-style: the last axis varies fastest. For a torus the
    upper corner is identified with the lower one and is not a node.
    """

    kind: str
    lower: np.ndarray
    upper: np.ndarray
    shape: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def periodic(self) -> bool:
        return self.kind == TORUS

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def spacing(self) -> np.ndarray:
        n = np.asarray(self.shape, dtype=float)
        if self.periodic:
            return (self.upper - self.lower) / n
        return (self.upper - self.lower) / (n - 1)

    @property
    def period(self) -> np.ndarray:
        return self.upper - self.lower

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(self.lower[a] + self.spacing[a] * np.arange(self.shape[a])
                     for a in range(self.dim))

    @cached_property
    def points(self) -> np.ndarray:
        """All nodes as an (N, d) array."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def strides(self) -> np.ndarray:
        s = np.ones(self.dim, dtype=np.int64)
        for a in range(self.dim - 2, -1, -1):
            s[a] = s[a + 1] * self.shape[a + 1]
        return s

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def multi_index(self, flat):
        return np.unravel_index(flat, self.shape)

    def flat_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi, dtype=np.int64)
        if self.periodic:
            multi = np.mod(multi, np.asarray(self.shape))
        return multi @ self.strides

    def index_to_point(self, flat) -> np.ndarray:
        idx = np.stack(np.unravel_index(np.asarray(flat), self.shape), axis=-1)
        return self.lower + idx * self.spacing

    def point_to_index(self, x) -> np.ndarray:
        """Flat index of the nearest node (after wrapping/clamping)."""
        x = self.project(np.asarray(x, dtype=float))
        s = np.rint((x - self.lower) / self.spacing).astype(np.int64)
        n = np.asarray(self.shape)
        s = np.mod(s, n) if self.periodic else np.clip(s, 0, n - 1)
        return s @ self.strides

    def wrap(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.periodic:
            return x
        return self.lower + np.mod(x - self.lower, self.period)

    def clamp(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def project(self, x) -> np.ndarray:
        """Map a point into the domain: wrap on tori, clamp on boxes."""
        return self.wrap(x) if self.periodic else self.clamp(x)

    def displacement(self, a, b) -> np.ndarray:
        """b - a, using the minimal representative on tori."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.periodic:
            p = self.period
            d = d - p * np.rint(d / p)
        return d

    def distance(self, a, b) -> np.ndarray:
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def contains(self, x, atol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.periodic:
            return np.ones(x.shape[:-1], dtype=bool)
        return np.all((x >= self.lower - atol) & (x <= self.upper + atol), axis=-1)

    def reshape(self, values) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    def neighbours(self, flat: int, radius: int = 1) -> np.ndarray:
        """Flat indices of the (2r+1)^d block around a node, clipped or wrapped."""
        centre = np.array(self.multi_index(flat))
        offs = np.stack(np.meshgrid(*[np.arange(-radius, radius + 1)] * self.dim,
                                    indexing="ij"), axis=-1).reshape(-1, self.dim)
        idx = centre + offs
        n = np.asarray(self.shape)
        if self.periodic:
            idx = np.mod(idx, n)
        else:
            keep = np.all((idx >= 0) & (idx < n), axis=1)
            idx = idx[keep]
        return np.unique(idx @ self.strides)

    def describe(self) -> dict:
        return {"kind": self.kind, "lower": self.lower.tolist(),
                "upper": self.upper.tolist(), "nodes": list(self.shape)}


def build_grid(config: Mapping, max_nodes: int = MAX_NODES) -> DomainGrid:
    """Build a grid from ``{kind, lower, upper, nodes}``.

    Scalars are broadcast against the dimension implied by the longest list.
    """
    try:
        kind = config.get("kind", BOX)
        lower = np.atleast_1d(np.asarray(config["lower"], dtype=float))
        upper = np.atleast_1d(np.asarray(config["upper"], dtype=float))
        nodes = np.atleast_1d(np.asarray(config["nodes"]))
    except KeyError as exc:
        raise ConfigurationError(f"domain is missing {exc.args[0]!r}") from None
    if kind not in (BOX, TORUS):
        raise ConfigurationError(f"unknown domain kind {kind!r}")
    d = max(lower.size, upper.size, nodes.size)
    try:
        lower, upper, nodes = (np.broadcast_to(a, (d,)).copy()
                               for a in (lower, upper, nodes))
    except ValueError:
        raise ConfigurationError("lower/upper/nodes have inconsistent lengths") from None
    if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
        raise ConfigurationError("corners must be finite")
    if np.any(lower >= upper):
        raise ConfigurationError("each lower corner must be strictly below the upper one")
    if np.any(nodes != np.floor(nodes)) or np.any(nodes < 3):
        raise ConfigurationError("need an integer number of nodes >= 3 per axis")
    shape = tuple(int(n) for n in nodes)
    total = 1
    for n in shape:
        total *= n
    if total > max_nodes:
        raise ResourceError(f"{total} nodes exceeds the cap of {max_nodes}")
    lower.setflags(write=False)
    upper.setflags(write=False)
    return DomainGrid(kind, lower, upper, shape)


def grid_1d(lower: float, upper: float, nodes: int, kind: str = BOX) -> DomainGrid:
    return build_grid({"kind": kind, "lower": [lower], "upper": [upper], "nodes": [nodes]})


def as_points(x, dim: int) -> np.ndarray:
    """Promote scalars / 1D inputs to an (..., d) array."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def box_subset(grid: DomainGrid, lower: Sequence[float], upper: Sequence[float]) -> np.ndarray:
    """Grid nodes lying inside an axis-aligned box, as an (M, d) array."""
    pts = grid.points
    keep = np.all((pts >= np.asarray(lower) - 1e-12) & (pts <= np.asarray(upper) + 1e-12), axis=1)
    return pts[keep]
