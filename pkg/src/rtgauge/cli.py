"""Command-line experiment runner.

Every subcommand reads one JSON config (all keys optional), applies
``--set key=value`` overrides, validates the result against :data:`SCHEMA`
and writes ``summary.json`` plus CSV tables into ``--out``.

Exit codes: 0 when every contract of the experiment holds, 1 on numerical
failure, 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .forms import MatrixForm, codiff, ext_d, inner, l2_pair, laplacian, lp_norm, norms, wedge
from .gauge import Signature, exp_generator, group_inverse, is_in_group
from .grid import Grid, Subdomain, build_grid
from .poisson import PoissonProblem, solve_dirichlet
from .regularity import regularize, smoothness_metric
from .rt import (
    ConvergenceError,
    RTConfig,
    aligned_test_field,
    bilinear_B,
    choose_epsilon,
    lambda_sweep,
    run_iteration,
    spectrum_probe,
)
from .synth import FieldSpec, algebra_element, make_sequence, spec_from_dict

__all__ = ["main", "run_experiment", "check_suite", "load_config", "SCHEMA", "DEFAULTS"]

EXPERIMENTS = ("solve", "regularity", "sweep-lambda", "spectrum", "compactness", "check")

_NUM = {"type": "number"}
_SIG = {"type": "object", "required": ["r", "s"], "additionalProperties": False,
        "properties": {"r": {"type": "integer", "minimum": 0}, "s": {"type": "integer", "minimum": 0}}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "grid", "rt", "field"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "grid": {
            "type": "object", "additionalProperties": False, "required": ["n", "shape"],
            "properties": {
                "n": {"enum": [2, 3]},
                "shape": {"oneOf": [{"type": "integer", "minimum": 3},
                                    {"type": "array", "items": {"type": "integer", "minimum": 3}}]},
                "box": {"type": ["array", "null"], "items": {"type": "array", "items": _NUM,
                                                              "minItems": 2, "maxItems": 2}},
            },
        },
        "rt": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "sig": _SIG,
                "p": {"type": "number", "exclusiveMinimum": 0},
                "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "auto_epsilon": {"type": "boolean"},
                "tol_fix": {"type": "number", "exclusiveMinimum": 0},
                "tol_res": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "lambda_schedule": {"type": "array", "minItems": 1,
                                    "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
                "X": {"type": ["array", "null"]},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "field": {
            "type": "object", "required": ["kind"], "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["smooth_bump", "constant", "kink", "pure_gauge", "sequence_member"]},
                "amplitude": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "sig": _SIG,
                "parameters": {"type": "object"},
            },
        },
        "regularity": {
            "type": "object", "additionalProperties": False,
            "properties": {"levels": {"type": "integer", "minimum": 3},
                           "base_shape": {"type": "integer", "minimum": 5},
                           "max_output_exponent": _NUM},
        },
        "spectrum": {"type": "object", "additionalProperties": False,
                     "properties": {"count": {"type": "integer", "minimum": 1}}},
        "compactness": {
            "type": "object", "additionalProperties": False,
            "properties": {"count": {"type": "integer", "minimum": 2},
                           "M_bound": {"type": "number", "exclusiveMinimum": 0},
                           "amplitude": {"type": "number", "minimum": 0},
                           "margin": {"type": "integer", "minimum": 1}},
        },
        "check": {"type": "object", "additionalProperties": False,
                  "properties": {"level": {"enum": ["fast", "full"]}}},
        "threads": {"type": "integer", "minimum": 1},
    },
}

DEFAULTS = {
    "experiment": "solve",
    "grid": {"n": 2, "shape": 33, "box": None},
    "rt": {"sig": {"r": 2, "s": 0}, "p": 4.0, "epsilon": 0.5, "auto_epsilon": False,
           "tol_fix": 1e-12, "tol_res": 1e-8, "max_iter": 200,
           "lambda_schedule": [0.25, 0.5, 0.75, 1.0], "X": None, "seed": 0},
    "field": {"kind": "smooth_bump", "amplitude": 0.1, "seed": 0, "parameters": {}},
    "regularity": {"levels": 3, "base_shape": 17, "max_output_exponent": 0.2},
    "spectrum": {"count": 6},
    "compactness": {"count": 8, "M_bound": 2.0, "amplitude": 0.3, "margin": 2},
    "check": {"level": "fast"},
    "threads": 1,
}

MEMBERSHIP_TOL = 1e-8


class ConfigError(ValueError):
    """Invalid configuration or command line."""


# -- configuration ---------------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "parameters":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _apply_set(cfg: dict, item: str):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {part} is not an object")
    node[parts[-1]] = value


def load_config(path=None, sets=(), experiment=None, seed=None, threads=None) -> dict:
    """Merge defaults, the JSON file and overrides, then validate."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be an object")
    cfg = _merge(DEFAULTS, user)
    for item in sets:
        _apply_set(cfg, item)
    if experiment is not None:
        cfg["experiment"] = experiment
    if seed is not None:
        cfg["rt"]["seed"] = seed
        cfg["field"]["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return cfg


def _build(cfg: dict):
    g = cfg["grid"]
    grid = build_grid(g["n"], g["shape"], g.get("box"))
    r = cfg["rt"]
    sig = Signature.from_dict(r["sig"])
    rt = RTConfig(sig=sig, p=float(r["p"]), epsilon=float(r["epsilon"]), tol_fix=float(r["tol_fix"]),
                  tol_res=float(r["tol_res"]), max_iter=int(r["max_iter"]),
                  lambda_schedule=tuple(r["lambda_schedule"]), X=r.get("X"), seed=int(r["seed"]))
    rt.check_dimension(grid.n)
    fd = dict(cfg["field"])
    fd.setdefault("sig", r["sig"])
    spec = spec_from_dict(fd)
    if spec.sig != sig:
        raise ConfigError("field signature differs from rt.sig")
    return grid, rt, spec


# -- output ------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path: Path, data: dict):
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def _contract(name, value, limit, ok=None):
    ok = (value is not None and math.isfinite(value) and value <= limit) if ok is None else ok
    return {"name": name, "value": value, "limit": limit, "pass": bool(ok)}


# -- experiments -----------------------------------------------------------------

def _solve(cfg, out: Path) -> dict:
    grid, rt, spec = _build(cfg)
    A = spec.connection(grid)
    if cfg["rt"].get("auto_epsilon"):
        rt = dataclasses.replace(rt, epsilon=choose_epsilon(A, rt))
    U, rep = run_iteration(A, rt)
    write_csv(out / "trace.csv", rep.TRACE_COLUMNS, rep.trace_rows())
    late = rep.contraction[1:]
    contracts = [
        _contract("converged", None, None, rep.converged),
        _contract("residual_rt2", rep.residual_rt2, rt.tol_res),
        _contract("w_sup", rep.w_norm, MEMBERSHIP_TOL),
        _contract("det_defect", rep.det_defect, MEMBERSHIP_TOL),
        _contract("late_contraction_max", max(late) if late else 0.0, 1.0 - 1e-15),
    ]
    return {"report": rep.to_dict(), "contracts": contracts}


def _regularity(cfg, out: Path) -> dict:
    grid, rt, spec = _build(cfg)
    rc = cfg["regularity"]
    kw = dict(levels=rc["levels"], p=rt.p, base_shape=rc["base_shape"], n=grid.n)
    r_in = smoothness_metric(spec, "input-only", **kw)
    r_out = smoothness_metric(spec, "full", cfg=rt, **kw)
    rows = []
    for rep in (r_in, r_out):
        for row in rep.rows():
            rows.append([rep.mode] + row)
    write_csv(out / "smoothness.csv", ("mode",) + r_in.COLUMNS, rows)
    coulomb = [r.coulomb for r in r_out.reports]
    contracts = [
        _contract("output_growth_exponent", r_out.growth_exponent, rc["max_output_exponent"]),
        _contract("coulomb_max", max(coulomb), 1e-9),
    ]
    return {"input": r_in.to_dict(), "output": r_out.to_dict(), "coulomb": coulomb, "contracts": contracts}


def _sweep(cfg, out: Path) -> dict:
    grid, rt, spec = _build(cfg)
    A = spec.connection(grid)
    sw = lambda_sweep(A, rt)
    rows = [[lam, w, r.iterations if r is not None else -1, bool(r is not None and r.converged)]
            for lam, w, r in zip(sw.lambdas, sw.w_norms, sw.reports)]
    write_csv(out / "trace.csv", ("lambda", "w_sup", "iterations", "converged"), rows)
    w_max = max(sw.w_norms) if all(math.isfinite(w) for w in sw.w_norms) else math.inf
    contracts = [
        _contract("w_lambda_max", w_max, MEMBERSHIP_TOL),
        _contract("C3_finite", sw.C3, math.inf, math.isfinite(sw.C3)),
        _contract("no_failures", None, None, not sw.failures),
    ]
    return {"sweep": sw.to_dict(), "contracts": contracts}


def _spectrum(cfg, out: Path) -> dict:
    grid, rt, spec = _build(cfg)
    A = spec.connection(grid) * rt.epsilon
    rep = spectrum_probe(A, rt.sig, cfg["spectrum"]["count"], rt.lambda_schedule, rt.seed)
    rows = [[i, z.real, z.imag, abs(z)] for i, z in enumerate(rep.eigenvalues)]
    write_csv(out / "spectrum.csv", ("index", "real", "imag", "abs"), rows)
    contracts = [_contract("spectral_radius_finite", rep.spectral_radius, math.inf,
                           math.isfinite(rep.spectral_radius))]
    return {"spectrum": rep.to_dict(), "contracts": contracts}


def clustering_subsequence(D: np.ndarray) -> list:
    """Greedy chain whose successive distances never increase.

    Starts from the closest pair and repeatedly appends the nearest unused
    member not farther than the previous step.
    """
    n = D.shape[0]
    masked = D + np.diag(np.full(n, np.inf))
    i, j = np.unravel_index(int(np.argmin(masked)), D.shape)
    # walk backwards from the closest pair: later steps must be no longer
    chain, last = [int(j), int(i)], float(D[i, j])
    used = set(chain)
    path = [last]
    head = chain[0]
    while True:
        cands = [(D[head, k], k) for k in range(n) if k not in used and D[head, k] >= last]
        if not cands:
            break
        d, k = min(cands)
        chain.insert(0, int(k))
        used.add(int(k))
        path.insert(0, float(d))
        last, head = float(d), int(k)
    return chain


def compactness_harness(cfg: dict, grid: Grid | None = None) -> dict:
    """Regularize a bounded kink sequence and collect the uniform-bound data."""
    g0, rt, _ = _build(cfg)
    grid = grid or g0
    cc = cfg["compactness"]
    seq = make_sequence(cc["M_bound"], cc["count"], rt.seed, grid, p=rt.p, sig=rt.sig,
                        amplitude=cc["amplitude"])
    region = Subdomain(grid, cc["margin"] * (grid.shape[0] - 1) // 16)
    eye = MatrixForm.constant(grid, 0, np.eye(rt.sig.N))
    members, A_bs = [], []
    for m in seq:
        res = regularize(m.A, rt)
        A_bs.append(res.A_b)
        members.append({
            "bound": m.bound,
            "A_b_w1p": norms(res.A_b, rt.p, region).w1p,
            "A_w1p": norms(m.A, rt.p, region).w1p,
            "U_w12p": norms(res.U, 2 * rt.p, region).w1p,
            "U_minus_1_w12p": norms(res.U - eye, 2 * rt.p, region).w1p,
            "w_sup": res.report.w_norm,
            "iterations": res.report.iterations,
        })
    n = len(A_bs)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = lp_norm(A_bs[i] - A_bs[j], rt.p, region)
    M = cc["M_bound"]
    return {
        "shape": grid.shape[0],
        "M_bound": M,
        "members": members,
        "C_shared": max(m["A_b_w1p"] for m in members) / M,
        "C_input": max(m["A_w1p"] for m in members) / M,
        "U_bound": max(m["U_w12p"] for m in members),
        "distances": D,
        "subsequence": clustering_subsequence(D),
    }


def _compactness(cfg, out: Path) -> dict:
    res = compactness_harness(cfg)
    rows = [[i] + [m[k] for k in ("bound", "A_w1p", "A_b_w1p", "U_w12p", "w_sup", "iterations")]
            for i, m in enumerate(res["members"])]
    write_csv(out / "trace.csv", ("member", "bound", "A_w1p", "A_b_w1p", "U_w12p", "w_sup", "iterations"), rows)
    contracts = [
        _contract("C_shared_finite", res["C_shared"], math.inf, math.isfinite(res["C_shared"])),
        _contract("w_sup_max", max(m["w_sup"] for m in res["members"]), MEMBERSHIP_TOL),
    ]
    return {"compactness": res, "contracts": contracts}


# -- invariant suite -------------------------------------------------------------

def _random_form(grid, k, N, rng, support=False):
    f = MatrixForm(grid, k, {c: rng.standard_normal(grid.cell_shape(c) + (N, N)) for c in grid.cells(k)})
    if support and k == 0:
        f.values[grid.boundary_mask] = 0.0
    return f


def _poisson_error(m):
    g = build_grid(2, m)
    x = g.vertices()
    us = np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])
    u, st = solve_dirichlet(PoissonProblem(MatrixForm.from_vertex_values(g, -2 * np.pi ** 2 * us)))
    return math.sqrt(g.h ** 2 * np.sum((u.values[..., 0, 0] - us) ** 2)), st.residual


def check_suite(level: str = "fast") -> list:
    """Evaluate the library invariants; each row is ``{name, value, limit, pass}``.

    ``fast`` uses 17x17 grids, ``full`` 65x65 (and 33/65 for convergence orders).
    """
    if level not in ("fast", "full"):
        raise ValueError(f"unknown level {level!r}")
    m = 17 if level == "fast" else 65
    grid = build_grid(2, m)
    rng = np.random.default_rng(0)
    rows = []
    w = _random_form(grid, 0, 2, rng)
    rows.append(_contract("d_squared_zero", ext_d(ext_d(w)).max_abs() * grid.h ** 2, 1e-12))
    u = _random_form(grid, 0, 2, rng, support=True)
    om = _random_form(grid, 1, 2, rng)
    du = ext_d(u)
    adj = abs(l2_pair(du, om) + l2_pair(u, codiff(om)))
    rows.append(_contract("adjointness", adj / (math.sqrt(l2_pair(du, du) * l2_pair(om, om))), 1e-12))
    x = grid.vertices()
    q = MatrixForm.from_vertex_values(grid, x[..., 0] ** 2)
    rows.append(_contract("laplacian_quadratic", float(np.max(np.abs(laplacian(q).values[1:-1, 1:-1] - 2))), 1e-9))
    sig = Signature(1, 1)
    phi = MatrixForm.from_vertex_values(grid, 0.4 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]))
    U = exp_generator(phi, algebra_element(sig, 1), sig)
    rows.append(_contract("exp_field_w", is_in_group(U, sig).defects["metric"], 1e-10))
    rows.append(_contract("group_inverse_involution",
                          (group_inverse(group_inverse(U, sig), sig) - U).max_abs(), 1e-12))
    lhs = codiff(wedge(U, om))
    rhs = wedge(U, codiff(om)) + inner(ext_d(U), om)
    rows.append(_contract("codiff_leibniz_rel", lp_norm(lhs - rhs, 2) / lp_norm(lhs, 2), 1e-12))
    e1, r1 = _poisson_error(m)
    e2, r2 = _poisson_error(2 * (m - 1) + 1)
    rows.append(_contract("poisson_residual", max(r1, r2), 1e-10))
    order = math.log2(e1 / e2)
    rows.append(_contract("poisson_order_dev", abs(order - 2.0), 0.2))
    spec = FieldSpec("smooth_bump", 0.1, 0, Signature(2, 0))
    cfg = RTConfig(sig=spec.sig)
    _, rep = run_iteration(spec.connection(grid), cfg)
    rows.append(_contract("rt2_residual", rep.residual_rt2, cfg.tol_res))
    rows.append(_contract("rt_w_sup", rep.w_norm, MEMBERSHIP_TOL))
    rows.append(_contract("rt_det_defect", rep.det_defect, MEMBERSHIP_TOL))
    csig = Signature(2, 0)
    A = FieldSpec("smooth_bump", 1.0, 1, csig).connection(grid)
    ws = _random_form(grid, 0, 2, rng, support=True)
    ws = MatrixForm(grid, 0, {(): ws.values + np.swapaxes(ws.values, -1, -2)})
    dw2 = l2_pair(ext_d(ws), ext_d(ws))
    rows.append(_contract("bilinear_compact_rel", abs(bilinear_B(ws, ws, A) - dw2) / dw2, 1e-12))
    A11 = FieldSpec("smooth_bump", 1.0, 1, sig).connection(grid)
    wa = aligned_test_field(A11)
    dwa = l2_pair(ext_d(wa), ext_d(wa))
    gap = abs(bilinear_B(wa, wa, A11) - dwa) / dwa
    rows.append(_contract("bilinear_noncompact_gap", gap, math.inf, gap >= 0.01))
    As = spec.connection(build_grid(2, 17)) * cfg.epsilon
    s1 = spectrum_probe(As, spec.sig, 2)
    s2 = spectrum_probe(As * 2, spec.sig, 2)
    rows.append(_contract("spectrum_linear", float(abs(s2.spectral_radius - 2 * s1.spectral_radius)), 1e-8))
    s0 = spectrum_probe(As * 0, spec.sig, 2)
    rows.append(_contract("spectrum_zero", s0.spectral_radius, 0.0))
    return rows


def _check(cfg, out: Path) -> dict:
    rows = check_suite(cfg["check"]["level"])
    write_csv(out / "trace.csv", ("name", "value", "limit", "pass"),
              [[r["name"], r["value"] if r["value"] is not None else "", r["limit"] if r["limit"] is not None else "",
                r["pass"]] for r in rows])
    for r in rows:
        mark = "PASS" if r["pass"] else "FAIL"
        print(f"{mark}  {r['name']:<28} {_fmt(r['value']) if r['value'] is not None else '-'}")
    return {"contracts": rows}


_RUNNERS = {
    "solve": _solve,
    "regularity": _regularity,
    "sweep-lambda": _sweep,
    "spectrum": _spectrum,
    "compactness": _compactness,
    "check": _check,
}


def run_experiment(cfg: dict, out_dir) -> int:
    """Run a validated config; write reports; return the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"version": __version__, "config": cfg}
    try:
        result = _RUNNERS[cfg["experiment"]](cfg, out)
    except ConvergenceError as exc:
        summary.update({"status": "diverged", "error": str(exc), "report": exc.report.to_dict()})
        write_json(out / "summary.json", summary)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary.update(result)
    ok = all(c["pass"] for c in result.get("contracts", []))
    summary["status"] = "pass" if ok else "fail"
    write_json(out / "summary.json", summary)
    return 0 if ok else 1


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted key, JSON value); repeatable")
    common.add_argument("--threads", type=int, help="worker threads (recorded; runs are sequential)")
    common.add_argument("--seed", type=int, help="seed for the solver and field generators")
    p = argparse.ArgumentParser(prog="rtgauge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, parents=[common])
        if name == "check":
            sp.add_argument("--level", choices=("fast", "full"))
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    sets = list(args.sets)
    if getattr(args, "level", None):
        sets.append(f"check.level={json.dumps(args.level)}")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, sets, args.experiment, args.seed, args.threads)
        _build(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
