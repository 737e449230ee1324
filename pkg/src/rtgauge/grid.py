"""Uniform cubical grids over axis-aligned boxes.

A :class:`Grid` stores vertex counts per axis and the box it covers.  All
axes share one spacing ``h``; cells of degree ``k`` are indexed by a sorted
tuple of axes (the directions the cell extends in).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

__all__ = ["Grid", "Subdomain", "build_grid", "refine", "interior"]

_REL_SPACING_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform vertex lattice on ``box``.

    Parameters
    ----------
    n : int
        Spatial dimension (2 or 3).
    shape : tuple of int
        Vertex count per axis.
    box : tuple of (float, float)
        Per-axis extents ``(lo, hi)``.
    """

    n: int
    shape: tuple[int, ...]
    box: tuple[tuple[float, float], ...]
    h: float = field(init=False, compare=False)

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {self.n}")
        if len(self.shape) != self.n or len(self.box) != self.n:
            raise ValueError("shape and box must have one entry per axis")
        if min(self.shape) < 3:
            raise ValueError(f"need at least 3 vertices per axis, got {self.shape}")
        widths = [hi - lo for lo, hi in self.box]
        if min(widths) <= 0:
            raise ValueError(f"box extents must be positive, got {self.box}")
        spacings = [w / (m - 1) for w, m in zip(widths, self.shape)]
        if max(spacings) - min(spacings) > _REL_SPACING_TOL * max(spacings):
            raise ValueError(f"non-uniform spacing {spacings}; all axes must share h")
        object.__setattr__(self, "h", spacings[0])

    @property
    def num_vertices(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Boolean array over vertices, True on the box faces."""
        mask = np.zeros(self.shape, dtype=bool)
        for a in range(self.n):
            idx = [slice(None)] * self.n
            idx[a] = 0
            mask[tuple(idx)] = True
            idx[a] = -1
            mask[tuple(idx)] = True
        mask.setflags(write=False)
        return mask

    @property
    def num_boundary(self) -> int:
        return int(self.boundary_mask.sum())

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(m - 2 for m in self.shape)

    def cells(self, k: int) -> list[tuple[int, ...]]:
        """Sorted multi-indices of the k-cell families."""
        return list(combinations(range(self.n), k))

    def cell_shape(self, cell: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(m - 1 if a in cell else m for a, m in enumerate(self.shape))

    def axis_coords(self, a: int) -> np.ndarray:
        lo, _ = self.box[a]
        return lo + self.h * np.arange(self.shape[a])

    def cell_centers(self, cell: tuple[int, ...] = ()) -> np.ndarray:
        """Coordinates of cell centers, shape ``cell_shape + (n,)``."""
        axes = []
        for a in range(self.n):
            x = self.axis_coords(a)
            axes.append(x[:-1] + 0.5 * self.h if a in cell else x)
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def vertices(self) -> np.ndarray:
        return self.cell_centers(())

    def to_dict(self) -> dict:
        return {"n": self.n, "shape": list(self.shape), "box": [list(b) for b in self.box]}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return build_grid(d["n"], d["shape"], d.get("box"))


@dataclass(frozen=True)
class Subdomain:
    """Vertex block obtained by stripping ``margin`` layers from every face."""

    parent: Grid
    margin: int

    def __post_init__(self):
        if self.margin < 1:
            raise ValueError("margin must be >= 1")
        if 2 * self.margin >= min(self.parent.shape):
            raise ValueError(
                f"margin {self.margin} leaves no vertices in grid of shape {self.parent.shape}"
            )

    @property
    def slices(self) -> tuple[slice, ...]:
        m = self.margin
        return tuple(slice(m, s - m) for s in self.parent.shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(s - 2 * self.margin for s in self.parent.shape)

    @property
    def mask(self) -> np.ndarray:
        mask = np.zeros(self.parent.shape, dtype=bool)
        mask[self.slices] = True
        return mask


def build_grid(n: int, shape, box=None) -> Grid:
    """Build a uniform grid; ``shape`` may be an int (same count on every axis)."""
    if np.isscalar(shape):
        shape = (int(shape),) * n
    shape = tuple(int(s) for s in shape)
    if box is None:
        box = ((0.0, 1.0),) * n
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    return Grid(n, shape, box)


def refine(g: Grid) -> Grid:
    """Halve the spacing: every axis gets ``2 * (m - 1) + 1`` vertices."""
    return Grid(g.n, tuple(2 * (m - 1) + 1 for m in g.shape), g.box)


def interior(g: Grid, margin: int = 1) -> Subdomain:
    return Subdomain(g, margin)
