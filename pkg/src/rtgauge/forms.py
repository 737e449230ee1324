"""Matrix-valued cochains on cubical grids.

A k-form stores one ``N x N`` matrix per k-cell.  Components are keyed by
the sorted tuple of axes the cell spans (``()`` for vertices, ``(i,)`` for
edges along axis ``i``, ``(i, j)`` for faces), so antisymmetry in the form
indices is structural.  Values are component values (the edge value of a
1-form approximates ``A_i`` at the edge midpoint), not integrated values.

Conventions
-----------
* ``ext_d`` is the forward-difference coboundary scaled by ``1/h``;
  ``d(d(w)) == 0`` up to round-off.
* ``codiff`` is ``-d^T`` under :func:`l2_pair`, with cells outside the grid
  treated as zero.  On 1-forms it is the backward-difference divergence, so
  ``laplacian = d codiff + codiff d`` is ``+sum_i d_i^2`` in the interior.
* Multiplying a 0-form into a k-form averages the 0-form onto the k-cells.
  :func:`inner` forms products cell by cell and then spreads them onto
  vertices with weight ``2**-k`` per incident cell.  With these choices the
  product rules ``codiff(U w) = U codiff(w) + <dU; w>`` and
  ``lap(a b) = lap(a) b + 2 <da; db> + a lap(b)`` hold exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .grid import Grid, Subdomain

__all__ = [
    "MatrixForm",
    "NormReport",
    "ext_d",
    "codiff",
    "laplacian",
    "wedge",
    "inner",
    "l2_pair",
    "norms",
    "lp_norm",
    "sup_norm",
    "grad_norm",
    "vertex_magnitude",
    "pointwise_inverse",
    "colocate",
]


def _perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (distinct entries)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass
class MatrixForm:
    """Matrix-valued k-cochain; ``comps[cell]`` has shape ``cell_shape + (N, N)``."""

    grid: Grid
    degree: int
    comps: dict

    def __post_init__(self):
        if not 0 <= self.degree <= self.grid.n:
            raise ValueError(f"degree {self.degree} invalid for n={self.grid.n}")
        cells = self.grid.cells(self.degree)
        if set(self.comps) != set(cells):
            raise ValueError(f"components {sorted(self.comps)} != cells {cells}")
        N = None
        for cell in cells:
            arr = np.asarray(self.comps[cell], dtype=float)
            want = self.grid.cell_shape(cell)
            if arr.shape[:-2] != want or arr.ndim != len(want) + 2:
                raise ValueError(f"component {cell} has shape {arr.shape}, expected {want}+(N,N)")
            if arr.shape[-1] != arr.shape[-2]:
                raise ValueError("fiber matrices must be square")
            if N is None:
                N = arr.shape[-1]
            elif arr.shape[-1] != N:
                raise ValueError("all components must share the fiber dimension")
            self.comps[cell] = arr

    # -- construction -------------------------------------------------------

    @classmethod
    def zeros(cls, grid: Grid, degree: int, N: int) -> "MatrixForm":
        return cls(grid, degree, {c: np.zeros(grid.cell_shape(c) + (N, N)) for c in grid.cells(degree)})

    @classmethod
    def from_vertex_values(cls, grid: Grid, values) -> "MatrixForm":
        values = np.asarray(values, dtype=float)
        if values.shape == grid.shape:
            values = values[..., None, None]
        return cls(grid, 0, {(): values})

    @classmethod
    def constant(cls, grid: Grid, degree: int, matrices) -> "MatrixForm":
        """Constant form; ``matrices`` is one matrix or a dict keyed by cell."""
        cells = grid.cells(degree)
        if not isinstance(matrices, dict):
            matrices = {c: matrices for c in cells}
        comps = {}
        for c in cells:
            m = np.asarray(matrices.get(c, 0.0), dtype=float)
            if m.ndim == 0:
                N = np.asarray(next(iter(matrices.values()))).shape[-1]
                m = np.full((N, N), float(m))
            comps[c] = np.broadcast_to(m, grid.cell_shape(c) + m.shape).copy()
        return cls(grid, degree, comps)

    @classmethod
    def from_function(cls, grid: Grid, degree: int, fn) -> "MatrixForm":
        """Sample ``fn(points, cell) -> (..., N, N)`` at cell centers."""
        return cls(grid, degree, {c: np.asarray(fn(grid.cell_centers(c), c), dtype=float)
                                  for c in grid.cells(degree)})

    # -- basic properties ---------------------------------------------------

    @property
    def fiber_dim(self) -> int:
        return next(iter(self.comps.values())).shape[-1]

    @property
    def values(self) -> np.ndarray:
        """Vertex array of a 0-form."""
        if self.degree != 0:
            raise ValueError("values is only defined for 0-forms")
        return self.comps[()]

    def __getitem__(self, cell) -> np.ndarray:
        return self.comps[tuple(cell)]

    def copy(self) -> "MatrixForm":
        return MatrixForm(self.grid, self.degree, {c: a.copy() for c, a in self.comps.items()})

    def map(self, fn) -> "MatrixForm":
        return MatrixForm(self.grid, self.degree, {c: fn(a) for c, a in self.comps.items()})

    @property
    def T(self) -> "MatrixForm":
        """Pointwise matrix transpose."""
        return self.map(lambda a: np.swapaxes(a, -1, -2))

    def lmul(self, M) -> "MatrixForm":
        """Left-multiply every value by the constant matrix ``M``."""
        M = np.asarray(M, dtype=float)
        return self.map(lambda a: M @ a)

    def rmul(self, M) -> "MatrixForm":
        M = np.asarray(M, dtype=float)
        return self.map(lambda a: a @ M)

    def _check_compatible(self, other: "MatrixForm"):
        if not isinstance(other, MatrixForm):
            raise TypeError(f"expected MatrixForm, got {type(other).__name__}")
        if other.grid != self.grid or other.degree != self.degree or other.fiber_dim != self.fiber_dim:
            raise ValueError("forms differ in grid, degree or fiber dimension")

    def __add__(self, other):
        self._check_compatible(other)
        return MatrixForm(self.grid, self.degree, {c: a + other.comps[c] for c, a in self.comps.items()})

    def __sub__(self, other):
        self._check_compatible(other)
        return MatrixForm(self.grid, self.degree, {c: a - other.comps[c] for c, a in self.comps.items()})

    def __neg__(self):
        return self.map(np.negative)

    def __mul__(self, s):
        if isinstance(s, MatrixForm):
            return wedge(self, s)
        return self.map(lambda a: a * float(s))

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self.map(lambda a: a / float(s))

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(a))) if a.size else 0.0 for a in self.comps.values())

    # -- debugging dump -----------------------------------------------------

    def rows(self):
        """Yield ``(cell_index, multi_index, row, col, value)`` tuples."""
        for cell in self.grid.cells(self.degree):
            arr = self.comps[cell]
            cshape = arr.shape[:-2]
            flat = arr.reshape(-1, arr.shape[-2], arr.shape[-1])
            for idx in range(flat.shape[0]):
                cidx = np.unravel_index(idx, cshape)
                label = "".join(str(a + 1) for a in cell) or "0"
                for r in range(flat.shape[1]):
                    for col in range(flat.shape[2]):
                        yield ("_".join(str(int(i)) for i in cidx), label, r, col, float(flat[idx, r, col]))

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell_index", "multi_index", "row", "col", "value"])
            for cidx, label, r, c, v in self.rows():
                w.writerow([cidx, label, r, c, f"{v:.17g}"])


@dataclass(frozen=True)
class NormReport:
    """``lp``: L^p norm; ``w1p``: L^p plus difference-quotient gradient;
    ``combo``: ``||w||_{L^{2p}} + ||dw||_{L^p}``."""

    lp: float
    w1p: float
    combo: float


# -- averaging between cell families -----------------------------------------

def _avg_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (arr[tuple(lo)] + arr[tuple(hi)])


def _spread_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of :func:`_avg_axis` (zero outside the grid)."""
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (1, 1)
    return _avg_axis(np.pad(arr, pad), axis)


def colocate(arr: np.ndarray, src: tuple, dst: tuple) -> np.ndarray:
    """Average values on ``src`` cells onto ``dst`` cells (``src`` subset of ``dst``)."""
    if not set(src) <= set(dst):
        raise ValueError(f"cannot colocate {src} onto {dst}")
    for a in dst:
        if a not in src:
            arr = _avg_axis(arr, a)
    return arr


def _spread_to_vertices(arr: np.ndarray, cell: tuple) -> np.ndarray:
    for a in cell:
        arr = _spread_axis(arr, a)
    return arr


def _pair_sum(arr: np.ndarray, axis: int) -> np.ndarray:
    """Zero-pad along ``axis`` and add neighbours: cell sums onto vertices."""
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (1, 1)
    arr = np.pad(arr, pad)
    n = arr.shape[axis]
    return np.take(arr, range(n - 1), axis=axis) + np.take(arr, range(1, n), axis=axis)


def _mean_to_vertices(arr: np.ndarray, cell: tuple) -> np.ndarray:
    """Average over the incident cells that exist (boundary vertices see fewer).

    Leading axes of ``arr`` are grid axes; trailing axes are carried along.
    """
    count = np.ones(arr.shape)
    total = arr
    for a in cell:
        total = _pair_sum(total, a)
        count = _pair_sum(count, a)
    return total / count


# -- exterior calculus ---------------------------------------------------------

def ext_d(w: MatrixForm) -> MatrixForm:
    """Cubical coboundary ``d`` (forward differences over ``h``)."""
    g, k = w.grid, w.degree
    if k >= g.n:
        raise ValueError(f"d of a {k}-form on an {g.n}-dimensional grid is not defined")
    out = {}
    for J in g.cells(k + 1):
        acc = 0.0
        for pos, a in enumerate(J):
            I = J[:pos] + J[pos + 1:]
            term = np.diff(w.comps[I], axis=a) / g.h
            acc = acc + term if pos % 2 == 0 else acc - term
        out[J] = acc
    return MatrixForm(g, k + 1, out)


def codiff(w: MatrixForm) -> MatrixForm:
    """Co-derivative ``delta = -d^T`` (zero outside the grid)."""
    g, k = w.grid, w.degree
    if k == 0:
        raise ValueError("co-derivative of a 0-form is not defined")
    out = {}
    for I in g.cells(k - 1):
        acc = np.zeros(g.cell_shape(I) + (w.fiber_dim,) * 2)
        for a in range(g.n):
            if a in I:
                continue
            J = tuple(sorted(I + (a,)))
            sign = -1 if J.index(a) % 2 else 1
            pad = [(0, 0)] * (g.n + 2)
            pad[a] = (1, 1)
            term = np.diff(np.pad(w.comps[J], pad), axis=a) / g.h
            acc = acc + term if sign > 0 else acc - term
        out[I] = acc
    return MatrixForm(g, k - 1, out)


def laplacian(w: MatrixForm) -> MatrixForm:
    """``d codiff + codiff d`` (only ``codiff d`` on 0-forms)."""
    k, n = w.degree, w.grid.n
    if k not in (0, 1):
        raise ValueError(f"laplacian supports degrees 0 and 1, got {k}")
    out = codiff(ext_d(w)) if k < n else None
    if k > 0:
        dd = ext_d(codiff(w))
        out = dd if out is None else out + dd
    return out


def wedge(w: MatrixForm, u: MatrixForm) -> MatrixForm:
    """Wedge product with matrix multiplication of coefficients.

    Both factors are averaged onto the cells of the result; the coefficient
    of ``dx^K`` is ``sum sign(I, J) w_I . u_J`` over splits ``K = I + J``.
    Matrix factors are not antisymmetrized, so ``w ^ w`` may be nonzero.
    """
    g = w.grid
    if u.grid != g:
        raise ValueError("wedge of forms on different grids")
    if w.fiber_dim != u.fiber_dim:
        raise ValueError("wedge of forms with different fiber dimensions")
    k, l = w.degree, u.degree
    if k + l > g.n:
        raise ValueError(f"degree overflow: {k} + {l} > {g.n}")
    out = {}
    for K in g.cells(k + l):
        acc = 0.0
        for I in combinations(K, k):
            J = tuple(a for a in K if a not in I)
            s = _perm_sign(I + J)
            term = colocate(w.comps[I], I, K) @ colocate(u.comps[J], J, K)
            acc = acc + term if s > 0 else acc - term
        out[K] = acc
    return MatrixForm(g, k + l, out)


def inner(w: MatrixForm, u: MatrixForm) -> MatrixForm:
    """Matrix-valued inner product ``<w; u> = sum_I w_I . u_I`` as a 0-form.

    Products are formed on each cell and spread to vertices with weight
    ``2**-k`` per incident cell (cells outside the grid count as zero).
    """
    if w.degree != u.degree:
        raise ValueError(f"inner product of a {w.degree}-form with a {u.degree}-form")
    if w.grid != u.grid or w.fiber_dim != u.fiber_dim:
        raise ValueError("inner product of incompatible forms")
    g = w.grid
    acc = np.zeros(g.shape + (w.fiber_dim,) * 2)
    for I in g.cells(w.degree):
        acc = acc + _spread_to_vertices(w.comps[I] @ u.comps[I], I)
    return MatrixForm(g, 0, {(): acc})


def l2_pair(w: MatrixForm, u: MatrixForm) -> float:
    """``h^n * sum over cells of tr(w^T u)``."""
    if w.degree != u.degree or w.grid != u.grid or w.fiber_dim != u.fiber_dim:
        raise ValueError("l2_pair of incompatible forms")
    total = 0.0
    for I in w.grid.cells(w.degree):
        total += float(np.sum(w.comps[I] * u.comps[I]))
    return total * w.grid.h ** w.grid.n


def pointwise_inverse(U: MatrixForm) -> MatrixForm:
    if U.degree != 0:
        raise ValueError("pointwise inverse needs a 0-form")
    return MatrixForm(U.grid, 0, {(): np.linalg.inv(U.values)})


# -- norms ---------------------------------------------------------------------

def vertex_magnitude(w: MatrixForm) -> np.ndarray:
    """Pointwise Frobenius magnitude over matrix and form indices, at vertices."""
    g = w.grid
    sq = np.zeros(g.shape)
    for I in g.cells(w.degree):
        a = w.comps[I]
        cell_sq = np.einsum("...ij,...ij->...", a, a)
        sq = sq + _mean_to_vertices(cell_sq, I)
    return np.sqrt(sq)


def _restrict(arr: np.ndarray, region) -> np.ndarray:
    if region is None:
        return arr
    if isinstance(region, Subdomain):
        return arr[region.slices]
    return arr[np.asarray(region, dtype=bool)]


def _lp_of_vertex_values(mag: np.ndarray, p: float, h: float, n: int) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if mag.size == 0:
        return 0.0
    if np.isinf(p):
        return float(mag.max())
    scale = float(mag.max())
    if scale == 0.0:
        return 0.0
    return scale * float((h ** n * np.sum((mag / scale) ** p)) ** (1.0 / p))


def lp_norm(w: MatrixForm, p: float, region=None) -> float:
    """``(h^n sum |w|^p)^(1/p)`` over vertices (optionally a subdomain)."""
    g = w.grid
    return _lp_of_vertex_values(_restrict(vertex_magnitude(w), region), p, g.h, g.n)


def sup_norm(w: MatrixForm, region=None) -> float:
    mag = _restrict(vertex_magnitude(w), region)
    return float(mag.max()) if mag.size else 0.0


def _grad_magnitude(w: MatrixForm) -> np.ndarray:
    """Vertex magnitude of the forward difference quotients of all components.

    Components are first averaged onto vertices, then differenced along
    every axis; the edge values are averaged back onto vertices.
    """
    g = w.grid
    sq = np.zeros(g.shape)
    for I in g.cells(w.degree):
        vals = w.comps[I]
        for a in I:
            vals = _pair_sum(vals, a) / _pair_sum(np.ones(vals.shape[: g.n]), a)[(...,) + (None,) * 2]
        for a in range(g.n):
            dq = np.diff(vals, axis=a) / g.h
            sq = sq + _mean_to_vertices(np.einsum("...ij,...ij->...", dq, dq), (a,))
    return np.sqrt(sq)


def grad_norm(w: MatrixForm, p: float, region=None) -> float:
    """L^p norm of the forward difference-quotient gradient."""
    g = w.grid
    return _lp_of_vertex_values(_restrict(_grad_magnitude(w), region), p, g.h, g.n)


def norms(w: MatrixForm, p: float, region=None) -> NormReport:
    """L^p, W^{1,p}-proxy and the ``L^{2p} + ||dw||_{L^p}`` pair norm."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    lp = lp_norm(w, p, region)
    w1p = lp + grad_norm(w, p, region)
    combo = lp_norm(w, 2 * p, region)
    if w.degree < w.grid.n:
        combo += lp_norm(ext_d(w), p, region)
    return NormReport(lp=lp, w1p=w1p, combo=combo)
