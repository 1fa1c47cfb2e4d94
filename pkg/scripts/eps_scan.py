"""gamma - g and sup |X^u - separatrix| over a range of eps.

Shows that gamma - g scales like eps^2 for f = cos(phi) cos(psi) while the
whisker moves at order eps.
"""
import sys

import numpy as np

from whisker_lab.kernel import phi0
from whisker_lab.linearization import solve_newton
from whisker_lab.model import ModelConfig
from whisker_lab.torus import solve_torus
from whisker_lab.whisker import sample_grid, solve_whisker

d = int(sys.argv[1]) if len(sys.argv) > 1 else 1
print("%10s %14s %14s %14s" % ("eps", "gamma-g", "/eps^2", "|dX|/eps"))
for eps in (3e-3, 1e-3, 3e-4, 1e-4):
    cfg = ModelConfig.for_dim(d, eps=eps)
    tor = solve_torus(cfg)
    lin = solve_newton(cfg, tor)
    sol = solve_whisker(cfg, tor, lin)
    z, th = sample_grid(sol, 24)
    X = sol.X(z, th, tensor=True)
    X[..., 0] -= phi0(z)[:, None]
    dg = lin.gamma - cfg.g
    print("%10.1e %14.6e %14.6f %14.6f" % (eps, dg, dg / eps**2, np.abs(X).max() / eps))
