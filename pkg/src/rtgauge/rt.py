"""Fixed-point solver for the reduced gauge equation and its diagnostics.

The unknown is a matrix field ``U = 1 + eps v`` with ``U = 1`` on the
boundary.  Each step solves the Dirichlet problem

    lap v_{k+1} = U_k delta A - eps (U_k^T eta)^{-1} <dv_k^T; eta dv_k> - U_k X

so a fixed point ``U`` satisfies

    lap U = U delta(eps A) - (U^T eta)^{-1} <dU^T; eta dU> - U (eps X),

i.e. the solver works with the *effective* connection ``eps A``.  All final
residuals are reported against that effective data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from .forms import (
    MatrixForm,
    codiff,
    ext_d,
    inner,
    l2_pair,
    laplacian,
    lp_norm,
    norms,
    sup_norm,
    wedge,
)
from .gauge import (
    MembershipError,
    Signature,
    invert_near_identity,
    is_in_algebra,
    w_of,
)
from .grid import Grid, Subdomain, build_grid
from .poisson import PoissonError, PoissonProblem, _factor, dirichlet_matrix, solve_dirichlet

__all__ = [
    "RTConfig",
    "IterateState",
    "ConvergenceReport",
    "ConvergenceError",
    "LambdaSweep",
    "SpectrumReport",
    "SpectrumError",
    "rescale_problem",
    "source_term",
    "quadratic_term",
    "iterate_step",
    "run_iteration",
    "residual_rt2",
    "residual_rt1",
    "w_residual",
    "bilinear_B",
    "alpha_check",
    "lambda_sweep",
    "spectrum_probe",
    "epsilon_bounds",
    "choose_epsilon",
    "aligned_test_field",
]

DIVERGENCE_STREAK = 3


@dataclass(frozen=True)
class RTConfig:
    """Solver settings.

    Attributes
    ----------
    sig : Signature
    p : float
        Lebesgue exponent, ``p > n/2``; iterates are measured in W^{1,2p}.
    epsilon : float
        Rescaling parameter in (0, 1).
    tol_fix : float
        Stop once ``|v_{k+1} - v_k|_{W^{1,2p}} <= tol_fix``.
    tol_res : float
        Residual bound a converged run must meet.
    max_iter : int
    lambda_schedule : tuple of float
        Sorted values in (0, 1] for :func:`lambda_sweep`.
    X : ndarray or None
        Free Lie algebra element (zero when None).
    seed : int
    """

    sig: Signature = field(default_factory=lambda: Signature(2, 0))
    p: float = 4.0
    epsilon: float = 0.5
    tol_fix: float = 1e-12
    tol_res: float = 1e-8
    max_iter: int = 200
    lambda_schedule: tuple = (0.25, 0.5, 0.75, 1.0)
    X: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.tol_fix <= 0 or self.tol_res <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        sched = tuple(float(x) for x in self.lambda_schedule)
        if not sched or any(not 0 < x <= 1 for x in sched) or list(sched) != sorted(sched):
            raise ValueError(f"lambda_schedule must be sorted values in (0, 1], got {sched}")
        object.__setattr__(self, "lambda_schedule", sched)
        if self.X is not None:
            X = np.asarray(self.X, dtype=float)
            if not is_in_algebra(X, self.sig):
                raise ValueError("X must lie in the Lie algebra")
            object.__setattr__(self, "X", X)

    def check_dimension(self, n: int):
        if not self.p > n / 2:
            raise ValueError(f"p = {self.p} must exceed n/2 = {n / 2}")

    def to_dict(self) -> dict:
        return {
            "sig": self.sig.to_dict(),
            "p": self.p,
            "epsilon": self.epsilon,
            "tol_fix": self.tol_fix,
            "tol_res": self.tol_res,
            "max_iter": self.max_iter,
            "lambda_schedule": list(self.lambda_schedule),
            "X": None if self.X is None else self.X.tolist(),
            "seed": self.seed,
        }


@dataclass
class IterateState:
    """Iterate ``k`` with ``U = 1 + eps v`` and ``U^{-1} = 1 - eps u``."""

    k: int
    v: MatrixForm
    u: MatrixForm
    diff_norm: float = math.inf
    source_norm: float = 0.0


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    epsilon: float
    iterates: list = field(default_factory=list)
    contraction: list = field(default_factory=list)
    residual_rt2: float = math.nan
    residual_rt1: float = math.nan
    w_norm: float = math.nan
    w_residual: float = math.nan
    det_defect: float = math.nan
    coulomb: float = math.nan
    alpha_norm: float = math.nan
    data_norm: float = math.nan
    u_norm: float = math.nan
    constants: dict = field(default_factory=dict)
    message: str = ""

    TRACE_COLUMNS = ("k", "v_norm", "diff_norm", "contraction", "rt2_residual", "w_norm", "det_defect")

    def trace_rows(self):
        for row in self.iterates:
            yield [row[c] for c in self.TRACE_COLUMNS]

    def to_dict(self) -> dict:
        keys = ("converged", "iterations", "epsilon", "residual_rt2", "residual_rt1", "w_norm",
                "w_residual", "det_defect", "coulomb", "alpha_norm", "data_norm", "u_norm", "message")
        out = {k: getattr(self, k) for k in keys}
        out["contraction"] = list(self.contraction)
        out["constants"] = dict(self.constants)
        out["iterates"] = [dict(r) for r in self.iterates]
        return out


class ConvergenceError(RuntimeError):
    """The fixed-point iteration diverged or left the invertible regime."""

    def __init__(self, message: str, report: ConvergenceReport):
        super().__init__(message)
        self.report = report


# -- helpers -------------------------------------------------------------------

def _identity(grid: Grid, N: int) -> MatrixForm:
    return MatrixForm.constant(grid, 0, np.eye(N))


def _pointwise(fn, *forms: MatrixForm) -> MatrixForm:
    return MatrixForm(forms[0].grid, 0, {(): fn(*(f.values for f in forms))})


def _check_pair(U: MatrixForm, A: MatrixForm):
    if U.degree != 0 or A.degree != 1:
        raise ValueError("expected a 0-form U and a 1-form A")
    if U.grid != A.grid or U.fiber_dim != A.fiber_dim:
        raise ValueError("U and A live on different grids or fibers")


def _region(grid: Grid, margin: int):
    return Subdomain(grid, margin) if margin else None


def _solve(M: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.solve(M, B)
    except np.linalg.LinAlgError as exc:
        raise MembershipError(f"{what} is singular at some vertex") from exc


def rescale_problem(sampler, grid: Grid, eps: float, center=None, domain=None) -> MatrixForm:
    """Sample a connection on the sub-box ``center + eps (x' - c)`` of ``domain``.

    ``sampler(g)`` returns the connection on any grid ``g`` (e.g. a bound
    :class:`~rtgauge.synth.FieldSpec`).  Fibre values are unchanged; only the
    coordinates are relabeled onto ``grid`` (so derivatives pick up a factor
    ``eps``).

    Raises
    ------
    ValueError
        If the sub-box leaves ``domain`` (default: ``grid.box``).
    """
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    domain = grid.box if domain is None else tuple(tuple(b) for b in domain)
    c_ref = [0.5 * (lo + hi) for lo, hi in grid.box]
    center = c_ref if center is None else list(center)
    sub = []
    for (lo, hi), c, c0, (dlo, dhi) in zip(grid.box, center, c_ref, domain):
        a, b = c + eps * (lo - c0), c + eps * (hi - c0)
        if a < dlo - 1e-12 or b > dhi + 1e-12:
            raise ValueError(f"sub-box [{a}, {b}] escapes the domain [{dlo}, {dhi}]")
        sub.append((a, b))
    small = build_grid(grid.n, grid.shape, sub)
    A_small = sampler(small)
    return MatrixForm(grid, A_small.degree, {c: a.copy() for c, a in A_small.comps.items()})


# -- the iteration -------------------------------------------------------------

def source_term(U: MatrixForm, A: MatrixForm) -> MatrixForm:
    """``U delta A`` assembled in divergence form ``delta(U A) - <dU; A>``."""
    _check_pair(U, A)
    return codiff(wedge(U, A)) - inner(ext_d(U), A)


def quadratic_term(U: MatrixForm, sig: Signature) -> MatrixForm:
    """``(U^T eta)^{-1} <dU^T; eta dU>``."""
    dU = ext_d(U)
    Q = inner(dU.T, dU.lmul(sig.eta))
    UTeta = np.swapaxes(U.values, -1, -2) @ sig.eta
    return MatrixForm(U.grid, 0, {(): _solve(UTeta, Q.values, "U^T eta")})


def _rhs(v: MatrixForm, A: MatrixForm, cfg: RTConfig) -> MatrixForm:
    eps, N = cfg.epsilon, A.fiber_dim
    U = _identity(A.grid, N) + v * eps
    dv = ext_d(v)
    Q = inner(dv.T, dv.lmul(cfg.sig.eta))
    UTeta = np.swapaxes(U.values, -1, -2) @ cfg.sig.eta
    quad = MatrixForm(A.grid, 0, {(): _solve(UTeta, Q.values, "U^T eta")})
    rhs = source_term(U, A) - quad * eps
    if cfg.X is not None:
        rhs = rhs - U.rmul(cfg.X)
    return rhs


def _wnorm(v: MatrixForm, cfg: RTConfig) -> float:
    return norms(v, 2 * cfg.p).w1p


def iterate_step(state: IterateState, A: MatrixForm, cfg: RTConfig) -> IterateState:
    """One Dirichlet solve of the rescaled equation.

    Raises
    ------
    MembershipError
        If ``1 + eps v_k`` is not safely invertible.
    PoissonError
        If the linear solve misses its tolerance.
    """
    return _invert(_solve_step(state, A, cfg), cfg)


def _solve_step(state: IterateState, A: MatrixForm, cfg: RTConfig) -> IterateState:
    rhs = _rhs(state.v, A, cfg)
    v_next, _ = solve_dirichlet(PoissonProblem(rhs))
    diff = _wnorm(v_next - state.v, cfg)
    return IterateState(state.k + 1, v_next, state.u, diff, lp_norm(rhs, cfg.p))


def _invert(state: IterateState, cfg: RTConfig) -> IterateState:
    state.u = invert_near_identity(state.v, cfg.epsilon)
    return state


def _row(k, v, diff, contraction, U, A_eff, cfg):
    return {
        "k": k,
        "v_norm": _wnorm(v, cfg),
        "diff_norm": diff,
        "contraction": contraction,
        "rt2_residual": residual_rt2(U, A_eff, cfg.sig, cfg.p, X=_eff_X(cfg)),
        "w_norm": sup_norm(w_of(U, cfg.sig)),
        "det_defect": float(np.max(np.abs(np.linalg.det(U.values) - 1.0))),
    }


def _eff_X(cfg: RTConfig):
    return None if cfg.X is None else cfg.epsilon * cfg.X


def run_iteration(A: MatrixForm, cfg: RTConfig, diagnostics: bool = True):
    """Iterate from ``v_1 = 0`` until the W^{1,2p} increment drops below ``tol_fix``.

    Parameters
    ----------
    A : MatrixForm
        Connection in the rescaled coordinates.
    cfg : RTConfig
    diagnostics : bool
        Evaluate the final RT1, Coulomb and alpha diagnostics.

    Returns
    -------
    U : MatrixForm
        ``1 + eps v``; exactly the identity on boundary vertices.
    report : ConvergenceReport

    Raises
    ------
    ConvergenceError
        On three consecutive increases of the increment, non-finite values or
        loss of invertibility.  The partial report is attached.
    """
    grid, N = A.grid, A.fiber_dim
    cfg.check_dimension(grid.n)
    if N != cfg.sig.N:
        raise ValueError(f"connection fiber {N} does not match signature size {cfg.sig.N}")
    eps = cfg.epsilon
    A_eff = A * eps
    eye = _identity(grid, N)
    zero = MatrixForm.zeros(grid, 0, N)
    state = IterateState(1, zero, zero.copy())
    report = ConvergenceReport(False, 1, eps)
    data = norms(A, cfg.p).combo
    report.data_norm = data
    consts = {"C0": 0.0, "C1": 0.0, "C2": 0.0, "C-1": 0.0}
    hint = "lower epsilon or the connection amplitude"
    v_norms = [0.0]
    prev_diff = None
    streak = 0
    while True:
        try:
            new = _solve_step(state, A, cfg)
        except PoissonError as exc:
            report.message = f"Poisson solve failed at k={state.k + 1}: {exc}"
            raise ConvergenceError(report.message, report) from exc
        diff = new.diff_norm
        if not (math.isfinite(diff) and np.all(np.isfinite(new.v.values))):
            report.message = f"non-finite iterate at k={new.k}; {hint}"
            raise ConvergenceError(report.message, report)
        vk, vk1 = v_norms[-1], _wnorm(new.v, cfg)
        if vk1 > 0:
            consts["C0"] = max(consts["C0"], sup_norm(new.v) / vk1)
            consts["C1"] = max(consts["C1"], vk1 / (data + eps * data * vk + eps * (1 + eps * vk) * vk ** 2))
            if new.source_norm > 0:
                consts["C-1"] = max(consts["C-1"], vk1 / new.source_norm)
        if prev_diff and len(v_norms) >= 2:
            vkm1 = v_norms[-2]
            Ck = (1 + eps * vkm1) * (vk + vkm1) + eps * vk
            consts["C2"] = max(consts["C2"], diff / (eps * (data + Ck) * prev_diff))
        v_norms.append(vk1)
        try:
            new = _invert(new, cfg)
        except MembershipError as exc:
            report.message = f"inversion failed at k={new.k}: {exc}; {hint}"
            _finish(report, eye + state.v * eps, A_eff, cfg, consts, v_norms, diagnostics=False)
            raise ConvergenceError(report.message, report) from exc
        U = eye + new.v * eps
        contraction = diff / prev_diff if prev_diff else math.nan
        if prev_diff:
            report.contraction.append(contraction)
        report.iterates.append(_row(new.k, new.v, diff, contraction, U, A_eff, cfg))
        state = new
        report.iterations = new.k
        if diff <= cfg.tol_fix:
            report.converged = True
            break
        streak = streak + 1 if prev_diff is not None and diff > prev_diff else 0
        if streak >= DIVERGENCE_STREAK:
            report.message = f"increment grew {DIVERGENCE_STREAK} times in a row (k={new.k}); {hint}"
            _finish(report, U, A_eff, cfg, consts, v_norms, diagnostics=False)
            raise ConvergenceError(report.message, report)
        if new.k - 1 >= cfg.max_iter:
            report.message = f"max_iter={cfg.max_iter} reached with increment {diff:.3e}"
            break
        prev_diff = diff
    _finish(report, U, A_eff, cfg, consts, v_norms, diagnostics)
    if report.converged and not report.residual_rt2 <= cfg.tol_res:
        report.message = f"increment converged but rt2 residual {report.residual_rt2:.3e} > tol_res"
        report.converged = False
    if report.converged and not report.message:
        report.message = "converged"
    return U, report


def _finish(report, U, A_eff, cfg, consts, v_norms, diagnostics=True):
    sig = cfg.sig
    report.residual_rt2 = residual_rt2(U, A_eff, sig, cfg.p, X=_eff_X(cfg))
    report.w_norm = sup_norm(w_of(U, sig))
    report.w_residual = w_residual(U, A_eff, sig, cfg.p)
    report.det_defect = float(np.max(np.abs(np.linalg.det(U.values) - 1.0)))
    report.u_norm = norms(U - _identity(U.grid, U.fiber_dim), 2 * cfg.p).w1p
    if diagnostics:
        from .regularity import a_tilde_prime, coulomb_residual

        At = a_tilde_prime(A_eff, U)
        report.coulomb = coulomb_residual(At, cfg.p)
        report.residual_rt1 = residual_rt1(At, U, A_eff, cfg.p)
        report.alpha_norm = alpha_check(U, A_eff, At, sig, X=_eff_X(cfg), p=cfg.p)
    consts = dict(consts)
    consts.update(epsilon_bounds(consts, report.data_norm, max(v_norms)))
    consts["epsilon"] = cfg.epsilon
    consts["bounds_satisfied"] = bool(cfg.epsilon < consts["eps_bar"])
    report.constants = consts


def epsilon_bounds(consts: dict, M: float, v_max: float) -> dict:
    """Smallness thresholds on ``eps`` induced by measured constants.

    ``eps_uniform`` keeps the iterates bounded, ``eps_contract`` makes
    differences contract, ``eps_invert`` keeps ``1 + eps v`` invertible;
    ``eps_bar`` is their minimum.  Zero denominators give ``inf``.
    """
    C0, C1, C2 = consts.get("C0", 0.0), consts.get("C1", 0.0), consts.get("C2", 0.0)

    def inv(x):
        return math.inf if x <= 0 else 1.0 / x

    uniform = min(inv(4 * M * C1 * C0), inv(4 * C1 ** 2 * M), inv(4 * C1 * M * (1 + C1)))
    contract = inv(C2 * (M + 10 * C1 * M))
    invert = inv(2 * C0 * v_max)
    return {
        "eps_uniform": uniform,
        "eps_contract": contract,
        "eps_invert": invert,
        "eps_bar": min(uniform, contract, invert),
    }


def choose_epsilon(A: MatrixForm, cfg: RTConfig, pilot: float = 0.05, safety: float = 0.5) -> float:
    """Pick ``eps`` from constants measured on a pilot run at small ``eps``.

    Returns ``min(cfg.epsilon, safety * eps_bar)``.
    """
    _, rep = run_iteration(A, replace(cfg, epsilon=pilot), diagnostics=False)
    bar = rep.constants["eps_bar"]
    return float(min(cfg.epsilon, safety * bar))


# -- residuals -----------------------------------------------------------------

def residual_rt2(U: MatrixForm, A: MatrixForm, sig: Signature, p: float = 4.0,
                 margin: int = 1, X=None) -> float:
    """Interior L^p norm of ``lap U - U delta A + (U^T eta)^{-1} <dU^T; eta dU> (+ U X)``."""
    _check_pair(U, A)
    r = laplacian(U) - source_term(U, A) + quadratic_term(U, sig)
    if X is not None:
        r = r + U.rmul(X)
    return lp_norm(r, p, _region(U.grid, margin))


def residual_rt1(A_tilde: MatrixForm, U: MatrixForm, A: MatrixForm, p: float = 4.0,
                 margin: int = 2) -> float:
    """Interior L^p norm of ``lap At - delta dA + delta(dU^{-1} ^ dU)``."""
    _check_pair(U, A)
    if A_tilde.grid != A.grid or A_tilde.degree != 1:
        raise ValueError("A_tilde must be a 1-form on the grid of A")
    Uinv = MatrixForm(U.grid, 0, {(): np.linalg.inv(U.values)})
    r = laplacian(A_tilde) - codiff(ext_d(A)) + codiff(wedge(ext_d(Uinv), ext_d(U)))
    return lp_norm(r, p, _region(A.grid, margin))


def w_residual(U: MatrixForm, A: MatrixForm, sig: Signature, p: float = 4.0, margin: int = 1) -> float:
    """Interior L^p norm of ``lap w - (delta A)^T w - w delta A`` with ``w = U^T eta U - eta``."""
    _check_pair(U, A)
    w = w_of(U, sig)
    S = codiff(A).values
    r = laplacian(w).values - np.swapaxes(S, -1, -2) @ w.values - w.values @ S
    return lp_norm(MatrixForm(U.grid, 0, {(): r}), p, _region(U.grid, margin))


def bilinear_B(w: MatrixForm, v: MatrixForm, A: MatrixForm) -> float:
    """``<dw, dv> + h^n sum tr(w^T S v + (w S)^T v)`` with ``S = delta A``.

    Equals ``-<lap w - S^T w - w S, v>`` for zero-boundary ``w``, ``v``.
    """
    for f in (w, v):
        if f.degree != 0:
            raise ValueError("bilinear_B takes 0-forms")
        if np.any(f.values[f.grid.boundary_mask]):
            raise ValueError("bilinear_B inputs must vanish on the boundary")
    S = codiff(A).values
    W, V = w.values, v.values
    zeroth = float(np.sum(W * (S @ V)) + np.sum((W @ S) * V))
    return l2_pair(ext_d(w), ext_d(v)) + w.grid.h ** w.grid.n * zeroth


def alpha_check(U: MatrixForm, A: MatrixForm, A_tilde: MatrixForm, sig: Signature, X=None,
                p: float = 4.0, margin: int = 1) -> float:
    """Interior L^p norm of ``(U^T eta)^{-1} <dU^T; eta dU> + <dU; A - At> + U X``."""
    _check_pair(U, A)
    alpha = quadratic_term(U, sig) + inner(ext_d(U), A - A_tilde)
    if X is not None:
        alpha = alpha + U.rmul(X)
    return lp_norm(alpha, p, _region(U.grid, margin))


# -- lambda continuation and spectrum -----------------------------------------

@dataclass
class LambdaSweep:
    lambdas: list
    U: list
    reports: list
    w_norms: list
    lipschitz: list
    C3: float
    failures: dict

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas, "w_norms": self.w_norms, "lipschitz": self.lipschitz,
                "C3": self.C3, "failures": self.failures,
                "converged": [r.converged if r is not None else False for r in self.reports]}


def lambda_sweep(A: MatrixForm, cfg: RTConfig, schedule=None) -> LambdaSweep:
    """Solve with ``lambda A`` for each scheduled value.

    ``C3`` is the largest ``|U^l - U^l'|_{W^{1,2p}} / |l - l'|`` over adjacent
    converged pairs.  Divergent values are recorded in ``failures``.
    """
    lams = list(cfg.lambda_schedule if schedule is None else schedule)
    if not lams:
        raise ValueError("empty lambda schedule")
    Us, reps, wn, fails = [], [], [], {}
    for lam in lams:
        try:
            U, rep = run_iteration(A * lam, cfg, diagnostics=False)
            Us.append(U)
            reps.append(rep)
            wn.append(rep.w_norm)
            if not rep.converged:
                fails[lam] = rep.message
        except ConvergenceError as exc:
            Us.append(None)
            reps.append(exc.report)
            wn.append(math.nan)
            fails[lam] = str(exc)
    lips = []
    for i in range(len(lams) - 1):
        if Us[i] is None or Us[i + 1] is None:
            lips.append(math.nan)
            continue
        lips.append(_wnorm(Us[i + 1] - Us[i], cfg) / (lams[i + 1] - lams[i]))
    finite = [x for x in lips if math.isfinite(x)]
    C3 = max(finite) if finite else (0.0 if len(lams) == 1 else math.nan)
    return LambdaSweep(lams, Us, reps, wn, lips, C3, fails)


class SpectrumError(RuntimeError):
    """The eigensolver did not converge."""


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    spectral_radius: float
    distances: dict
    dimension: int
    method: str

    def to_dict(self) -> dict:
        return {
            "eigenvalues_real": [float(z.real) for z in self.eigenvalues],
            "eigenvalues_imag": [float(z.imag) for z in self.eigenvalues],
            "spectral_radius": self.spectral_radius,
            "distances": {str(k): v for k, v in self.distances.items()},
            "dimension": self.dimension,
            "method": self.method,
        }


def _sym_basis(N: int) -> np.ndarray:
    out = []
    for i in range(N):
        for j in range(i, N):
            E = np.zeros((N, N))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1 / math.sqrt(2)
            out.append(E)
    return np.array(out)


DENSE_LIMIT = 1500


def spectrum_probe(A: MatrixForm, sig: Signature, count: int = 6, schedule=(0.25, 0.5, 0.75, 1.0),
                   seed: int = 0) -> SpectrumReport:
    """Largest-magnitude eigenvalues of ``K w = lap^{-1}(S^T w + w S)``, ``S = delta A``.

    ``K`` acts on symmetric matrix fields vanishing on the boundary.  Small
    problems use a dense eigensolver; larger ones use ARPACK with a seeded
    start vector.  ``distances[l]`` is the distance from ``1/l`` to the
    computed eigenvalues.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if A.fiber_dim != sig.N:
        raise ValueError("connection fiber does not match the signature")
    grid = A.grid
    inner_sl = tuple(slice(1, -1) for _ in range(grid.n))
    S = codiff(A).values[inner_sl].reshape(-1, sig.N, sig.N)
    basis = _sym_basis(sig.N)
    m, nint = len(basis), S.shape[0]
    dim = m * nint
    # per-vertex matrix of w -> S^T w + w S in the orthonormal symmetric basis
    img = np.einsum("vji,bjk->vbik", S, basis) + np.einsum("bij,vjk->vbik", basis, S)
    blocks = np.einsum("aik,vbik->vab", basis, img)
    k = min(count, dim)
    if not np.any(blocks):
        eig, method = np.zeros(k, dtype=complex), "zero"
    elif dim <= DENSE_LIMIT:
        Linv = -np.linalg.inv(dirichlet_matrix(grid).toarray())
        Kmat = np.einsum("uv,vab->uavb", Linv, blocks).reshape(dim, dim)
        eig, method = np.linalg.eigvals(Kmat), "dense"
    else:
        lu = _factor(grid)

        def matvec(x):
            Y = np.einsum("vab,vb->va", blocks, np.asarray(x).reshape(nint, m))
            return -lu.solve(Y).reshape(-1)

        op = spla.LinearOperator((dim, dim), matvec=matvec, dtype=float)
        v0 = np.random.default_rng(seed).standard_normal(dim)
        try:
            eig = spla.eigs(op, k=min(k, dim - 2), which="LM", v0=v0, return_eigenvectors=False,
                            maxiter=20 * dim)
        except spla.ArpackNoConvergence as exc:
            raise SpectrumError(f"eigensolver stagnated: {exc}") from exc
        method = "arpack"
    eig = np.asarray(eig, dtype=complex)
    order = np.lexsort((-eig.imag, -eig.real, -np.round(np.abs(eig), 12)))
    eig = eig[order][:k]
    radius = float(np.max(np.abs(eig))) if eig.size else 0.0
    distances = {float(lam): float(np.min(np.abs(1.0 / lam - eig))) for lam in schedule}
    return SpectrumReport(eig, radius, distances, dim, method)


def aligned_test_field(A: MatrixForm, width: float = 0.1) -> MatrixForm:
    """Symmetric zero-boundary field concentrated where ``delta A`` is largest.

    ``w = psi(x) (1 + P)`` with ``P`` the normalized symmetric part of
    ``delta A`` at its peak and ``psi`` a Gaussian clipped to the interior.
    For a non-compact signature this makes ``B(w, w) - |dw|^2`` visibly
    nonzero; for a compact one the symmetric part vanishes and ``P = 0``.
    """
    grid, N = A.grid, A.fiber_dim
    S = codiff(A).values
    inner_sl = tuple(slice(1, -1) for _ in range(grid.n))
    mag = np.zeros(grid.shape)
    sym = 0.5 * (S + np.swapaxes(S, -1, -2))
    mag[inner_sl] = np.linalg.norm(sym, axis=(-2, -1))[inner_sl]
    peak = np.unravel_index(int(np.argmax(mag)), grid.shape)
    P = sym[peak]
    nrm = np.linalg.norm(P, 2)
    P = P / nrm if nrm > 0 else np.zeros((N, N))
    x = grid.vertices()
    psi = np.exp(-np.sum((x - x[peak]) ** 2, axis=-1) / (2 * width ** 2))
    psi[grid.boundary_mask] = 0.0
    return MatrixForm(grid, 0, {(): psi[..., None, None] * (np.eye(N) + P)})
