"""Gauge transformations of connections and refinement-based smoothness metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forms import MatrixForm, codiff, ext_d, grad_norm, lp_norm, wedge
from .gauge import DEFAULT_TOL, MembershipError, Signature, group_inverse
from .grid import Subdomain, build_grid, refine
from .rt import ConvergenceError, ConvergenceReport, RTConfig, run_iteration

__all__ = [
    "gauge_transform",
    "a_tilde_prime",
    "coulomb_residual",
    "curvature",
    "optimal_connection",
    "regularize",
    "RegularizeResult",
    "SmoothnessReport",
    "smoothness_metric",
    "fit_slope",
]

REGULARITY_MARGIN = 2


def _inverse(U: MatrixForm) -> MatrixForm:
    try:
        return MatrixForm(U.grid, 0, {(): np.linalg.inv(U.values)})
    except np.linalg.LinAlgError as exc:
        raise MembershipError("gauge field is singular at some vertex") from exc


def gauge_transform(A: MatrixForm, U: MatrixForm, sig: Signature, tol: float = DEFAULT_TOL) -> MatrixForm:
    """``U (A - U^{-1} dU) U^{-1} = U A U^{-1} - dU U^{-1}`` for group-valued ``U``."""
    Uinv = group_inverse(U, sig, tol)
    return wedge(wedge(U, A), Uinv) - wedge(ext_d(U), Uinv)


def a_tilde_prime(A: MatrixForm, U: MatrixForm) -> MatrixForm:
    """``A - U^{-1} dU`` on edges (``U^{-1}`` averaged onto each edge)."""
    return A - wedge(_inverse(U), ext_d(U))


def coulomb_residual(A_tilde: MatrixForm, p: float = 4.0, margin: int = REGULARITY_MARGIN) -> float:
    """Interior L^p norm of ``delta At``."""
    if A_tilde.degree != 1:
        raise ValueError("coulomb_residual expects a 1-form")
    return lp_norm(codiff(A_tilde), p, Subdomain(A_tilde.grid, margin) if margin else None)


def curvature(A: MatrixForm) -> MatrixForm:
    """``dA + A ^ A``."""
    if A.degree != 1:
        raise ValueError("curvature expects a 1-form")
    return ext_d(A) + wedge(A, A)


def optimal_connection(U: MatrixForm, A_tilde: MatrixForm, sig: Signature,
                       tol: float = DEFAULT_TOL) -> MatrixForm:
    """``U At U^{-1}``."""
    return wedge(wedge(U, A_tilde), group_inverse(U, sig, tol))


@dataclass
class RegularizeResult:
    U: MatrixForm
    report: ConvergenceReport
    A_tilde: MatrixForm
    A_b: MatrixForm


def regularize(A: MatrixForm, cfg: RTConfig, tol: float = DEFAULT_TOL) -> RegularizeResult:
    """Solve for a gauge that lifts ``A`` and return the transformed connection.

    The iteration runs on ``A / eps`` so the returned ``U`` solves the gauge
    equation for ``A`` itself.

    Raises
    ------
    ConvergenceError
        If the solver diverges or stops short of convergence.
    """
    U, rep = run_iteration(A / cfg.epsilon, cfg)
    if not rep.converged:
        raise ConvergenceError(f"solver did not converge: {rep.message}", rep)
    At = a_tilde_prime(A, U)
    return RegularizeResult(U, rep, At, optimal_connection(U, At, cfg.sig, tol))


def fit_slope(x, y) -> float:
    """Least-squares slope of ``y`` against ``x``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class SmoothnessReport:
    """Per-level norms sorted by decreasing ``h`` and the fitted growth exponent."""

    mode: str
    p: float
    levels: list
    growth_exponent: float
    local_slopes: list = field(default_factory=list)
    reports: list = field(default_factory=list, repr=False)

    COLUMNS = ("level", "h", "shape", "a_l2p", "grad_lp", "da_lp", "local_slope")

    def rows(self):
        for i, lev in enumerate(self.levels):
            slope = self.local_slopes[i - 1] if i > 0 else math.nan
            yield [i, lev["h"], lev["shape"], lev["a_l2p"], lev["grad_lp"], lev["da_lp"], slope]

    def to_dict(self) -> dict:
        return {"mode": self.mode, "p": self.p, "levels": [dict(l) for l in self.levels],
                "growth_exponent": self.growth_exponent, "local_slopes": list(self.local_slopes)}


def _as_sampler(generator):
    if hasattr(generator, "connection"):
        return generator.connection
    if callable(generator):
        return generator
    raise TypeError("generator must be callable or provide .connection(grid)")


def smoothness_metric(generator, pipeline: str = "input-only", levels: int = 3, p: float = 4.0,
                      base_shape: int = 17, n: int = 2, margin: int = REGULARITY_MARGIN,
                      cfg: RTConfig | None = None) -> SmoothnessReport:
    """Refinement study of ``|grad_h A|_{L^p}`` on a fixed interior region.

    Parameters
    ----------
    generator : FieldSpec or callable
        Resolution-independent connection; called with each grid.
    pipeline : {"input-only", "full"}
        Measure the input, or the transformed connection after solving.
    levels : int
        Number of grids (at least 3), starting at ``base_shape`` vertices per axis.
    margin : int
        Layers stripped at the coarsest level; doubled with each refinement so
        the physical region is fixed.

    Raises
    ------
    ConvergenceError
        If a solve fails at some level (``pipeline="full"``).
    """
    if levels < 3:
        raise ValueError("need at least 3 levels")
    if pipeline not in ("input-only", "full"):
        raise ValueError(f"unknown pipeline {pipeline!r}")
    sampler = _as_sampler(generator)
    if cfg is None:
        sig = getattr(generator, "sig", None) or Signature(2, 0)
        cfg = RTConfig(sig=sig, p=p)
    grid = build_grid(n, base_shape)
    rows, reports = [], []
    for lev in range(levels):
        A = sampler(grid)
        if pipeline == "full":
            res = regularize(A, cfg)
            reports.append(res.report)
            A = res.A_b
        region = Subdomain(grid, margin * 2 ** lev)
        rows.append({
            "h": grid.h,
            "shape": grid.shape[0],
            "a_l2p": lp_norm(A, 2 * p, region),
            "grad_lp": grad_norm(A, p, region),
            "da_lp": lp_norm(ext_d(A), p, region),
        })
        grid = refine(grid)
    logs_h = [math.log(1 / r["h"]) for r in rows]
    logs_g = [math.log(max(r["grad_lp"], 1e-300)) for r in rows]
    slope = fit_slope(logs_h, logs_g)
    local = [(logs_g[i] - logs_g[i - 1]) / (logs_h[i] - logs_h[i - 1]) for i in range(1, levels)]
    return SmoothnessReport(pipeline, p, rows, slope, local, reports)
