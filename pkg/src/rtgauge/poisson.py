"""Dirichlet problems for the component-wise vertex Laplacian."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from .forms import MatrixForm, colocate, norms, _mean_to_vertices
from .grid import Grid

__all__ = [
    "PoissonProblem",
    "SolveStats",
    "PoissonError",
    "solve_dirichlet",
    "dirichlet_matrix",
    "estimate_elliptic_constant",
]

DEFAULT_TOL = 1e-10


class PoissonError(RuntimeError):
    """The solver missed its residual tolerance."""

    def __init__(self, message: str, stats: "SolveStats"):
        super().__init__(message)
        self.stats = stats


@dataclass(frozen=True)
class SolveStats:
    method: str
    iterations: int
    residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {"method": self.method, "iterations": self.iterations,
                "residual": self.residual, "converged": self.converged}


@dataclass
class PoissonProblem:
    """``lap u = rhs`` in the interior with ``u = boundary`` on the box faces.

    ``boundary`` is a 0-form whose interior values are ignored; ``None``
    means homogeneous data.
    """

    rhs: MatrixForm
    boundary: MatrixForm | None = None
    grid: Grid = field(init=False)

    def __post_init__(self):
        self.grid = self.rhs.grid
        if self.rhs.degree not in (0, 1):
            raise ValueError("rhs must be a 0- or 1-form")
        for a in self.rhs.comps.values():
            if not np.all(np.isfinite(a)):
                raise ValueError("rhs has non-finite entries")
        if self.boundary is not None:
            if self.boundary.degree != 0 or self.boundary.grid != self.grid:
                raise ValueError("boundary data must be a 0-form on the rhs grid")
            if self.boundary.fiber_dim != self.rhs.fiber_dim:
                raise ValueError("boundary and rhs fiber dimensions differ")
            if not np.all(np.isfinite(self.boundary.values[self.grid.boundary_mask])):
                raise ValueError("boundary data has non-finite entries")


@lru_cache(maxsize=16)
def dirichlet_matrix(grid: Grid) -> sp.csc_matrix:
    """Negative interior Laplacian (SPD) on the interior vertices, row-major."""
    ish = grid.interior_shape
    ops = []
    for a in range(grid.n):
        m = ish[a]
        T = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
        parts = [sp.identity(ish[b]) for b in range(grid.n)]
        parts[a] = T
        K = parts[0]
        for P in parts[1:]:
            K = sp.kron(K, P)
        ops.append(K)
    return (sum(ops) / grid.h ** 2).tocsc()


@lru_cache(maxsize=16)
def _factor(grid: Grid):
    return splu(dirichlet_matrix(grid))


def _interior(grid: Grid):
    return tuple(slice(1, -1) for _ in range(grid.n))


def _solve_vertex(grid: Grid, f: np.ndarray, g: np.ndarray | None, tol: float,
                  max_iter: int, method: str):
    """Solve for vertex arrays ``f``, ``g`` of shape ``grid.shape + (N, N)``."""
    N = f.shape[-1]
    inner = _interior(grid)
    u = np.zeros(grid.shape + (N, N))
    if g is not None:
        u[grid.boundary_mask] = g[grid.boundary_mask]
    # -lap u = -f, with the known boundary values moved to the right
    b = -f[inner].copy()
    if g is not None:
        for a in range(grid.n):
            for off in (slice(None, -2), slice(2, None)):
                nb = list(inner)
                nb[a] = off
                b += u[tuple(nb)] / grid.h ** 2
    B = b.reshape(-1, N * N)
    K = dirichlet_matrix(grid)
    bnorm = float(np.linalg.norm(B))
    iterations = 0
    if bnorm == 0.0:
        X = np.zeros_like(B)
    elif method == "direct":
        X = _factor(grid).solve(B)
        iterations = 1
    elif method == "cg":
        X = np.zeros_like(B)
        for j in range(B.shape[1]):
            if not np.any(B[:, j]):
                continue
            counter = [0]

            def _count(_):
                counter[0] += 1

            X[:, j], _ = cg(K, B[:, j], rtol=tol * 1e-2, atol=0.0, maxiter=max_iter, callback=_count)
            iterations = max(iterations, counter[0])
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(K @ X - B)) / bnorm if bnorm else 0.0
    u[inner] = X.reshape(b.shape)
    return u, SolveStats(method, iterations, res, res <= tol)


def solve_dirichlet(prob: PoissonProblem, tol: float = DEFAULT_TOL, max_iter: int = 10_000,
                    method: str = "direct"):
    """Solve the discrete Dirichlet problem.

    Parameters
    ----------
    prob : PoissonProblem
    tol : float
        Bound on the relative residual ``|K u - b| / |b|`` of the interior system.
    max_iter : int
        Iteration cap for ``method="cg"``.
    method : {"direct", "cg"}
        Sparse LU (factor cached per grid) or conjugate gradients.

    Returns
    -------
    u : MatrixForm
        Same degree as ``prob.rhs``.  Boundary values equal the data exactly.
    stats : SolveStats

    Raises
    ------
    PoissonError
        If the residual exceeds ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = prob.grid
    rhs = prob.rhs
    g = prob.boundary.values if prob.boundary is not None else None
    if rhs.degree == 0:
        u, stats = _solve_vertex(grid, rhs.values, g, tol, max_iter, method)
        out = MatrixForm(grid, 0, {(): u})
    else:
        comps, worst = {}, None
        for I, arr in rhs.comps.items():
            f = _mean_to_vertices(arr, I)
            u, st = _solve_vertex(grid, f, g, tol, max_iter, method)
            comps[I] = colocate(u, (), I)
            worst = st if worst is None or st.residual > worst.residual else worst
        out, stats = MatrixForm(grid, 1, comps), worst
    if not stats.converged:
        raise PoissonError(f"residual {stats.residual:.3e} exceeds tol {tol:.1e}", stats)
    return out, stats


def _random_trig(grid: Grid, rng: np.random.Generator, modes: int = 3) -> np.ndarray:
    x = grid.vertices()
    out = np.zeros(grid.shape)
    for _ in range(modes):
        k = rng.integers(1, 4, size=grid.n)
        phase = rng.uniform(0, 2 * np.pi, size=grid.n)
        term = rng.normal()
        for a in range(grid.n):
            term = term * np.cos(np.pi * k[a] * x[..., a] + phase[a])
        out += term
    return out


def estimate_elliptic_constant(grid: Grid, samples: int = 8, seed: int = 0, p: float = 2.0,
                               rhs: bool = True) -> float:
    """Empirical lower bound for ``|u|_{W1p} <= C (|f|_{Lp} + |u0|_{W1p})``.

    Random trigonometric sources and boundary data are drawn; the boundary
    norm is that of the smooth extension the data was sampled from.  With
    ``rhs=False`` every source is zero.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        f = _random_trig(grid, rng) if rhs else np.zeros(grid.shape)
        g = _random_trig(grid, rng)
        F = MatrixForm.from_vertex_values(grid, f)
        G = MatrixForm.from_vertex_values(grid, g)
        u, _ = solve_dirichlet(PoissonProblem(F, G))
        denom = norms(F, p).lp + norms(G, p).w1p
        if denom > 0:
            worst = max(worst, norms(u, p).w1p / denom)
    return worst
