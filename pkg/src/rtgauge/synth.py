"""Deterministic, resolution-independent test fields.

Every generator is defined by closed-form functions, so the same
:class:`FieldSpec` can be sampled on any grid.  Connections are sampled by
line averages along edges (three-point Gauss-Legendre), gauge fields at
vertices.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .forms import MatrixForm, ext_d, lp_norm, sup_norm
from .gauge import Signature, algebra_basis, exp_generator, is_in_algebra
from .grid import Grid

__all__ = [
    "FieldSpec",
    "KINDS",
    "algebra_element",
    "sample_connection",
    "kink_profile",
    "make_smooth_connection",
    "make_rough_gauge",
    "make_nonoptimal",
    "make_sequence",
    "SequenceMember",
]

KINDS = ("smooth_bump", "constant", "kink", "pure_gauge", "sequence_member")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True)
class FieldSpec:
    """Resolution-independent field description.

    Parameters (by kind)
    --------------------
    smooth_bump : ``center`` (default 0.5 per axis), ``sigma`` (0.15),
        ``generators`` (one algebra matrix per axis; random from ``seed`` if absent).
    constant : ``generators`` as above (missing axes are zero).
    kink, pure_gauge, sequence_member : ``center`` (0.5), ``halfwidth`` (0.25),
        ``direction`` (0), ``collar`` ((0.125, 0.875)), ``generator``
        (random from ``seed`` if absent) and optionally ``background``, a
        nested smooth_bump spec dict for the optimal part.
    """

    kind: str
    amplitude: float = 0.1
    seed: int = 0
    sig: Signature = field(default_factory=lambda: Signature(2, 0))
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}; expected one of {KINDS}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    def __hash__(self):
        return hash((self.kind, self.amplitude, self.seed, self.sig))

    def connection(self, grid: Grid) -> MatrixForm:
        if self.kind in ("smooth_bump", "constant"):
            return make_smooth_connection(self, grid)
        background = self.parameters.get("background")
        bg = spec_from_dict(background, self.sig) if background else None
        return make_nonoptimal(bg, self, grid)[0]

    def gauge(self, grid: Grid) -> MatrixForm:
        return make_rough_gauge(self, grid)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude, "seed": self.seed,
                "sig": self.sig.to_dict(), "parameters": _jsonable(self.parameters)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def spec_from_dict(d: dict, sig: Signature | None = None) -> FieldSpec:
    sig = Signature.from_dict(d["sig"]) if "sig" in d else (sig or Signature(2, 0))
    return FieldSpec(d["kind"], float(d.get("amplitude", 0.1)), int(d.get("seed", 0)), sig,
                     dict(d.get("parameters", {})))


def algebra_element(sig: Signature, seed: int) -> np.ndarray:
    """Random unit-Frobenius element of the Lie algebra (zero when it is trivial)."""
    basis = algebra_basis(sig)
    if len(basis) == 0:
        return np.zeros((sig.N, sig.N))
    c = np.random.default_rng(seed).standard_normal(len(basis))
    G = np.einsum("b,bij->ij", c, basis)
    return G / np.linalg.norm(G)


def _generator(spec: FieldSpec, key: str = "generator", offset: int = 0) -> np.ndarray:
    if key in spec.parameters:
        G = np.asarray(spec.parameters[key], dtype=float)
        if not is_in_algebra(G, spec.sig, 1e-10):
            raise ValueError(f"{key} is not in the Lie algebra")
        return G
    return algebra_element(spec.sig, spec.seed + offset)


def sample_connection(grid: Grid, fn) -> MatrixForm:
    """Line-average ``fn(points) -> (..., n, N, N)`` along every edge."""
    comps = {}
    for (a,) in grid.cells(1):
        centers = grid.cell_centers((a,))
        acc = 0.0
        for t, wgt in zip(_GL_NODES, _GL_WEIGHTS):
            pts = centers.copy()
            pts[..., a] += 0.5 * grid.h * t
            acc = acc + 0.5 * wgt * fn(pts)[..., a, :, :]
        comps[(a,)] = acc
    return MatrixForm(grid, 1, comps)


# -- smooth connections --------------------------------------------------------

def _smooth_fn(spec: FieldSpec, n: int):
    N = spec.sig.N
    prm = spec.parameters
    if "generators" in prm:
        gens = [np.asarray(g, dtype=float) for g in prm["generators"]]
        gens += [np.zeros((N, N))] * (n - len(gens))
        for G in gens:
            if not is_in_algebra(G, spec.sig, 1e-10):
                raise ValueError("generator is not in the Lie algebra")
    else:
        gens = [algebra_element(spec.sig, spec.seed * 101 + a) for a in range(n)]
    gens = np.array(gens[:n])
    amp = spec.amplitude
    if spec.kind == "constant":
        return lambda x: amp * np.broadcast_to(gens, x.shape[:-1] + gens.shape)
    center = np.broadcast_to(np.asarray(prm.get("center", 0.5), dtype=float), (n,))
    sigma = float(prm.get("sigma", 0.15))

    def fn(x):
        env = np.exp(-np.sum((x - center) ** 2, axis=-1) / (2 * sigma ** 2))
        return amp * env[..., None, None, None] * gens

    return fn


def make_smooth_connection(spec: FieldSpec, grid: Grid) -> MatrixForm:
    """Algebra-valued connection: Gaussian envelope (or constant) times fixed generators."""
    if spec.kind not in ("smooth_bump", "constant"):
        raise ValueError(f"make_smooth_connection needs smooth_bump or constant, got {spec.kind!r}")
    if spec.amplitude == 0:
        return MatrixForm.zeros(grid, 1, spec.sig.N)
    return sample_connection(grid, _smooth_fn(spec, grid.n))


# -- rough gauges ----------------------------------------------------------------

def _bump(x, lo, hi):
    s = (2 * x - (lo + hi)) / (hi - lo)
    out = np.zeros_like(x)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1 - 1 / (1 - s[inside] ** 2))
    return out


def kink_profile(spec: FieldSpec):
    """Scalar ``phi(x)``: a tent in ``direction`` times C^infinity bumps in the other axes."""
    prm = spec.parameters
    c = float(prm.get("center", 0.5))
    w = float(prm.get("halfwidth", 0.25))
    d = int(prm.get("direction", 0))
    lo, hi = prm.get("collar", (0.125, 0.875))
    amp = spec.amplitude

    def phi(x):
        out = amp * np.maximum(0.0, 1 - np.abs(x[..., d] - c) / w)
        for b in range(x.shape[-1]):
            if b != d:
                out = out * _bump(x[..., b], lo, hi)
        return out

    return phi


def make_rough_gauge(spec: FieldSpec, grid: Grid) -> MatrixForm:
    """``exp(phi G)`` with a Lipschitz ``phi`` vanishing near the boundary."""
    if spec.kind not in ("kink", "pure_gauge", "sequence_member"):
        raise ValueError(f"make_rough_gauge needs a kink-type spec, got {spec.kind!r}")
    phi = kink_profile(spec)(grid.vertices())
    phi[grid.boundary_mask] = 0.0
    return exp_generator(MatrixForm.from_vertex_values(grid, phi), _generator(spec), spec.sig)


def make_nonoptimal(background: FieldSpec | None, gauge_spec: FieldSpec | None, grid: Grid):
    """``A = U^{-1} dU + U^{-1} A_b U`` for smooth ``A_b`` and rough ``U = exp(phi G)``.

    The pure-gauge part is sampled exactly as ``G d_h phi``; the conjugated
    background is line-averaged.

    Returns
    -------
    A : MatrixForm
    truth : dict
        ``{"A_b": sampled background, "U": gauge field}``.
    """
    N = (background or gauge_spec).sig.N
    A_b = make_smooth_connection(background, grid) if background is not None \
        else MatrixForm.zeros(grid, 1, N)
    if gauge_spec is None:
        U = MatrixForm.constant(grid, 0, np.eye(N))
        return A_b.copy(), {"A_b": A_b, "U": U}
    U = make_rough_gauge(gauge_spec, grid)
    G = _generator(gauge_spec)
    phi_fn = kink_profile(gauge_spec)
    phi = phi_fn(grid.vertices())
    phi[grid.boundary_mask] = 0.0
    dphi = ext_d(MatrixForm.from_vertex_values(grid, phi))
    A = MatrixForm(grid, 1, {c: a[..., 0, 0][..., None, None] * G for c, a in dphi.comps.items()})
    if background is not None and background.amplitude > 0:
        bg_fn = _smooth_fn(background, grid.n)

        def conj(x):
            ph = phi_fn(x)
            E = _exp_batch(ph, G)
            Einv = _exp_batch(-ph, G)
            return np.einsum("...ij,...ajk,...kl->...ail", Einv, bg_fn(x), E)

        A = A + sample_connection(grid, conj)
    return A, {"A_b": A_b, "U": U}


def _exp_batch(t: np.ndarray, G: np.ndarray) -> np.ndarray:
    flat = t.reshape(-1)
    return expm(flat[:, None, None] * G[None]).reshape(t.shape + G.shape)


# -- bounded sequences -----------------------------------------------------------

@dataclass
class SequenceMember:
    spec: FieldSpec
    A: MatrixForm
    bound: float


_CENTERS = (7 / 16, 8 / 16, 9 / 16)


def make_sequence(M_bound: float, count: int, seed: int, grid: Grid, p: float = 4.0,
                  sig: Signature | None = None, amplitude: float = 0.3,
                  background_amplitude: float = 0.05) -> list:
    """Kinked connections with ``|A|_inf + |dA|_{L^p} <= M_bound`` each.

    Kink centers are dyadic (7/16, 1/2, 9/16) so kinks sit on vertices of
    every grid with ``16 k + 1`` vertices per axis; directions alternate.

    Raises
    ------
    ValueError
        If a member violates the bound.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    sig = sig or Signature(2, 0)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        amp = float(amplitude * rng.uniform(0.5, 1.0))
        prm = {
            "center": _CENTERS[int(rng.integers(len(_CENTERS)))],
            "direction": i % grid.n,
            "background": {"kind": "smooth_bump",
                           "amplitude": float(background_amplitude * rng.uniform(0.5, 1.0)),
                           "seed": int(seed * 1000 + i), "sig": sig.to_dict(),
                           "parameters": {"center": [float(c) for c in rng.uniform(0.4, 0.6, grid.n)]}},
        }
        spec = FieldSpec("sequence_member", amp, int(seed * 1000 + i), sig, prm)
        A = spec.connection(grid)
        bound = sup_norm(A) + lp_norm(ext_d(A), p)
        if bound > M_bound:
            raise ValueError(f"member {i} has |A|_inf + |dA|_p = {bound:.4g} > M = {M_bound}")
        out.append(SequenceMember(spec, A, bound))
    return out
