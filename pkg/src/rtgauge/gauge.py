"""The group SO(r,s), its Lie algebra, and pointwise group-valued fields."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .forms import MatrixForm

__all__ = [
    "Signature",
    "Membership",
    "MembershipError",
    "is_in_group",
    "is_in_algebra",
    "algebra_basis",
    "w_of",
    "group_inverse",
    "invert_near_identity",
    "exp_generator",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-8


class MembershipError(ValueError):
    """A field failed a group or algebra membership test."""


@dataclass(frozen=True)
class Signature:
    """Metric signature ``(r, s)``; ``eta = diag(1 x r, -1 x s)``."""

    r: int
    s: int
    eta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.r < 0 or self.s < 0 or self.r + self.s == 0:
            raise ValueError(f"invalid signature ({self.r}, {self.s})")
        eta = np.diag([1.0] * self.r + [-1.0] * self.s)
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @property
    def N(self) -> int:
        return self.r + self.s

    @property
    def compact(self) -> bool:
        return self.s == 0

    def to_dict(self) -> dict:
        return {"r": self.r, "s": self.s}

    @classmethod
    def from_dict(cls, d: dict) -> "Signature":
        return cls(int(d["r"]), int(d["s"]))


@dataclass(frozen=True)
class Membership:
    """Outcome of a membership test; truthy iff every defect is within ``tol``."""

    ok: bool
    defects: dict
    tol: float

    def __bool__(self) -> bool:
        return self.ok


def _check_size(M: np.ndarray, sig: Signature):
    if M.shape[-2:] != (sig.N, sig.N):
        raise ValueError(f"expected {sig.N}x{sig.N} matrices, got {M.shape[-2:]}")


def _as_array(U) -> np.ndarray:
    return U.values if isinstance(U, MatrixForm) else np.asarray(U, dtype=float)


def is_in_group(U, sig: Signature, tol: float = DEFAULT_TOL) -> Membership:
    """Test ``U^T eta U = eta`` and ``det U = 1`` (pointwise for fields).

    Defects are maxima over all points of the Frobenius norm of
    ``U^T eta U - eta`` and of ``|det U - 1|``.
    """
    U = _as_array(U)
    _check_size(U, sig)
    eta = sig.eta
    metric = np.swapaxes(U, -1, -2) @ eta @ U - eta
    metric_defect = float(np.max(np.sqrt(np.einsum("...ij,...ij->...", metric, metric))))
    det_defect = float(np.max(np.abs(np.linalg.det(U) - 1.0)))
    ok = metric_defect <= tol and det_defect <= tol
    return Membership(ok, {"metric": metric_defect, "det": det_defect}, tol)


def is_in_algebra(X, sig: Signature, tol: float = DEFAULT_TOL) -> Membership:
    """Test ``X^T eta + eta X = 0`` and ``tr X = 0`` (pointwise for fields)."""
    X = _as_array(X)
    _check_size(X, sig)
    eta = sig.eta
    sym = np.swapaxes(X, -1, -2) @ eta + eta @ X
    sym_defect = float(np.max(np.sqrt(np.einsum("...ij,...ij->...", sym, sym))))
    trace_defect = float(np.max(np.abs(np.trace(X, axis1=-2, axis2=-1))))
    ok = sym_defect <= tol and trace_defect <= tol
    return Membership(ok, {"antisym": sym_defect, "trace": trace_defect}, tol)


def algebra_basis(sig: Signature) -> np.ndarray:
    """Basis ``eta (E_ij - E_ji)``, ``i < j``, of so(r,s); shape ``(dim, N, N)``."""
    N = sig.N
    basis = []
    for i in range(N):
        for j in range(i + 1, N):
            E = np.zeros((N, N))
            E[i, j], E[j, i] = 1.0, -1.0
            basis.append(sig.eta @ E)
    return np.array(basis).reshape(-1, N, N)


def w_of(U: MatrixForm, sig: Signature) -> MatrixForm:
    """``U^T eta U - eta`` at every vertex; vanishes iff ``U`` is pseudo-orthogonal."""
    if U.degree != 0:
        raise ValueError("w_of expects a 0-form")
    _check_size(U.values, sig)
    V = U.values
    w = np.swapaxes(V, -1, -2) @ sig.eta @ V - sig.eta
    return MatrixForm(U.grid, 0, {(): 0.5 * (w + np.swapaxes(w, -1, -2))})


def group_inverse(U: MatrixForm, sig: Signature, tol: float = DEFAULT_TOL) -> MatrixForm:
    """Closed-form inverse ``eta U^T eta`` of a group-valued field."""
    mem = is_in_group(U, sig, tol)
    if not mem:
        raise MembershipError(f"field is not group-valued: {mem.defects}")
    eta = sig.eta
    return MatrixForm(U.grid, 0, {(): eta @ np.swapaxes(U.values, -1, -2) @ eta})


def invert_near_identity(v: MatrixForm, eps: float, margin: float = 0.5) -> MatrixForm:
    """Return ``u`` with ``(1 + eps v)^{-1} = 1 - eps u`` at every vertex.

    Parameters
    ----------
    v : MatrixForm
        0-form perturbation.
    eps : float
        Scale of the perturbation.
    margin : float
        Upper bound required on ``eps * |v|`` (spectral norm) at every vertex.
        The default mirrors ``eps < 1 / (2 sup|v|)``; values up to 1 are
        accepted, beyond which the Neumann series need not converge.

    Raises
    ------
    MembershipError
        If the smallness condition fails at some vertex.
    """
    if v.degree != 0:
        raise ValueError("invert_near_identity expects a 0-form")
    if not 0 < margin <= 1:
        raise ValueError("margin must lie in (0, 1]")
    if eps == 0:
        return MatrixForm.zeros(v.grid, 0, v.fiber_dim)
    V = v.values
    size = float(np.max(np.linalg.norm(V, ord=2, axis=(-2, -1)))) if V.size else 0.0
    if abs(eps) * size >= margin:
        raise MembershipError(
            f"eps*|v| = {abs(eps) * size:.3g} >= {margin}; near-identity inverse not guaranteed"
        )
    eye = np.eye(v.fiber_dim)
    Uinv = np.linalg.inv(eye + eps * V)
    return MatrixForm(v.grid, 0, {(): (eye - Uinv) / eps})


def _exp_field(phi: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``exp(phi G)`` for an array of scalars ``phi``."""
    N = G.shape[0]
    if N == 2:
        # G^2 = c I for traceless 2x2 G, with c = -det G
        c = -float(np.linalg.det(G))
        t = phi[..., None, None]
        eye = np.eye(2)
        if c > 0:
            r = np.sqrt(c)
            return np.cosh(r * t) * eye + np.sinh(r * t) / r * G
        if c < 0:
            r = np.sqrt(-c)
            return np.cos(r * t) * eye + np.sin(r * t) / r * G
        return eye + t * G
    flat = phi.reshape(-1)
    out = expm(flat[:, None, None] * G[None])
    return out.reshape(phi.shape + (N, N))


def exp_generator(phi, G, sig: Signature, tol: float = DEFAULT_TOL) -> MatrixForm:
    """Group-valued 0-form ``exp(phi(x) G)``.

    ``phi`` is a scalar 0-form (or a vertex array); ``G`` must lie in the
    Lie algebra.  Two-dimensional fibers use the closed form.
    """
    G = np.asarray(G, dtype=float)
    mem = is_in_algebra(G, sig, tol)
    if not mem:
        raise MembershipError(f"generator is not in the Lie algebra: {mem.defects}")
    if isinstance(phi, MatrixForm):
        grid, vals = phi.grid, phi.values[..., 0, 0]
    else:
        raise TypeError("phi must be a scalar MatrixForm 0-form")
    return MatrixForm(grid, 0, {(): _exp_field(np.asarray(vals, dtype=float), G)})
