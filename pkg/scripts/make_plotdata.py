"""Write (phi, I) samples of both whiskers on psi = 0 for a config.

usage: python scripts/make_plotdata.py configs/d1.toml out.csv [n]
"""
import sys

from whisker_lab.linearization import solve_newton
from whisker_lab.model import load_config
from whisker_lab.pipeline import branch_gap, plotdata_rows, validate_plotdata, write_plotdata
from whisker_lab.torus import solve_torus
from whisker_lab.whisker import solve_whisker


def main(argv):
    if len(argv) < 2:
        print(__doc__)
        return 2
    cfg = load_config(argv[0])
    n = int(argv[2]) if len(argv) > 2 else 200
    tor = solve_torus(cfg)
    sol = solve_whisker(cfg, tor, solve_newton(cfg, tor))
    rows = plotdata_rows(sol, n)
    write_plotdata(argv[1], rows)
    validate_plotdata(argv[1])
    print("%d rows, branch gap %.3e" % (len(rows), branch_gap(rows)))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
