"""Continuation in lambda and the spectrum of the linearized w-operator.

Solves with ``lambda A`` for a coarse and a fine schedule, reports the
Lipschitz proxy ``C3`` of ``lambda -> U``, and lists the leading eigenvalues
of ``K`` together with the distance of each ``1/lambda`` to them.

Run with ``python3 demos/03_lambda_and_spectrum.py``.
"""
import numpy as np

from rtgauge.gauge import Signature
from rtgauge.grid import build_grid
from rtgauge.rt import RTConfig, lambda_sweep, spectrum_probe
from rtgauge.synth import FieldSpec


def main():
    sig = Signature(2, 0)
    grid = build_grid(2, 33)
    A = FieldSpec("smooth_bump", 0.1, 0, sig).connection(grid)
    cfg = RTConfig(sig=sig)
    for sched in ((0.25, 0.5, 0.75, 1.0), tuple(np.round(np.linspace(0.1, 1.0, 10), 12))):
        sw = lambda_sweep(A, cfg, sched)
        print(f"{len(sched):2d} values: C3 = {sw.C3:.5f}, max |w_lambda| = {max(sw.w_norms):.1e}")
    rep = spectrum_probe(A * cfg.epsilon, sig, count=4, schedule=cfg.lambda_schedule)
    print(f"\nleading eigenvalues of K ({rep.method}, dimension {rep.dimension}):")
    for z in rep.eigenvalues:
        print(f"  {z.real:+.4e} {z.imag:+.1e}i")
    for lam, dist in rep.distances.items():
        print(f"  distance from 1/{lam} to the spectrum: {dist:.3f}")


if __name__ == "__main__":
    main()
