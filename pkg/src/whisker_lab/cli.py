"""Command line entry point: whisker-lab <subcommand> --config cfg.toml ..."""
from __future__ import annotations

import sys

import click
import numpy as np

from . import pipeline as pl
from .linearization import solve_newton, tune_gamma_rg
from .lindstedt import continue_to_wedge, expand_orders
from .model import ConfigError, _parse_eps, load_config
from .torus import SolverError, solve_torus
from .whisker import solve_whisker

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _config(path, eps):
    cfg = load_config(path)
    if eps is not None:
        cfg = cfg.with_eps(_parse_eps(eps)).validate()
    return cfg


def _emit(obj, out):
    if out:
        pl.write_json(out, obj)
    else:
        click.echo(pl.dumps(obj))


def _guard(fn):
    """Map config errors to exit 2 and numeric failures to exit 1."""
    def run(*a, **kw):
        try:
            code = fn(*a, **kw)
        except ConfigError as exc:
            click.echo("config error: %s" % exc, err=True)
            sys.exit(EXIT_CONFIG)
        except (SolverError, ArithmeticError, RuntimeError, ValueError) as exc:
            click.echo("numeric failure: %s: %s" % (type(exc).__name__, exc), err=True)
            sys.exit(EXIT_FAIL)
        sys.exit(code or EXIT_OK)
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


config_opt = click.option("--config", "config", required=True, type=click.Path(), help="TOML or JSON config")
eps_opt = click.option("--eps", default=None, help="override eps (real, or e.g. '1e-3+2e-4i')")
out_opt = click.option("--out", default=None, type=click.Path(), help="output file (stdout if omitted)")


@click.group()
def main():
    """Hyperbolic tori and their whiskers for a pendulum coupled to rotators."""


@main.command()
@config_opt
@eps_opt
@out_opt
@_guard
def torus(config, eps, out):
    """Solve for the invariant torus X0."""
    cfg = _config(config, eps)
    _emit(pl.torus_artifact(cfg, solve_torus(cfg)), out)


@main.command()
@config_opt
@eps_opt
@out_opt
@click.option("--method", type=click.Choice(["newton", "rg"]), default="newton")
@_guard
def linearize(config, eps, out, method):
    """Lyapunov exponent and the linearized solution X1."""
    cfg = _config(config, eps)
    tor = solve_torus(cfg)
    lin = solve_newton(cfg, tor) if method == "newton" else tune_gamma_rg(cfg, tor)
    _emit(pl.linearization_artifact(cfg, lin), out)


@main.command()
@config_opt
@eps_opt
@out_opt
@_guard
def whisker(config, eps, out):
    """Solve for the unstable whisker and normalize it."""
    cfg = _config(config, eps)
    tor = solve_torus(cfg)
    sol = solve_whisker(cfg, tor, solve_newton(cfg, tor))
    _emit(pl.whisker_artifact(cfg, sol), out)


@main.command()
@config_opt
@out_opt
@click.option("--order", "order", type=int, default=None, help="highest eps order (config 'order' by default)")
@_guard
def expand(config, out, order):
    """eps-expansion coefficients of gamma, X0, X1 and X^u."""
    cfg = _config(config, None)
    L = cfg.order if order is None else order
    _emit(pl.expand_artifact(cfg, expand_orders(cfg, L)), out)


@main.command()
@config_opt
@click.option("--l", "l", type=int, required=True, help="eps order")
@click.option("--z", "z", required=True, help="complex point, e.g. '5+0.5i'")
@click.option("--theta", "theta", required=True, help="comma separated angles")
@_guard
def wedge(config, l, z, theta):
    """Order-l value of X^u at a complex point of the wedge."""
    cfg = _config(config, None)
    zc = complex(_parse_eps(z))
    th = [float(v) for v in theta.split(",")]
    if len(th) != cfg.d:
        raise ConfigError("theta needs %d angles" % cfg.d)
    s = expand_orders(cfg, max(l, 1))
    w = continue_to_wedge(s, l, zc, th)
    click.echo(pl.dumps({"l": l, "z": zc, "theta": th, "value": [complex(v) for v in w.value],
                         "certificate": w.certificate, "eta": w.eta, "certificate_ok": w.ok}))
    return EXIT_OK if w.ok else EXIT_FAIL


@main.command()
@config_opt
@eps_opt
@out_opt
@click.option("--artifacts", default=None, type=click.Path(), help="directory for per-stage JSON")
@click.option("--rg/--no-rg", default=False, help="also cross-check gamma with the RG tuning")
@_guard
def verify(config, eps, out, artifacts, rg):
    """Run all stages and the invariant checks; exit 0 iff all pass."""
    rep = pl.run_pipeline(config, eps=None if eps is None else _parse_eps(eps), out_dir=artifacts, rg=rg)
    if out:
        pl.write_json(out, rep.to_dict())
    click.echo(rep.text())
    return rep.exit_code


@main.command()
@config_opt
@eps_opt
@click.option("--section", default="psi=0", show_default=True)
@click.option("--n", "n", type=int, default=200, show_default=True, help="points per branch")
@click.option("--out", required=True, type=click.Path())
@_guard
def plotdata(config, eps, section, n, out):
    """(phi, I) samples of both whiskers on a section, as CSV."""
    cfg = _config(config, eps)
    pl.parse_section(section)
    tor = solve_torus(cfg)
    sol = solve_whisker(cfg, tor, solve_newton(cfg, tor))
    rows = pl.plotdata_rows(sol, n)
    pl.write_plotdata(out, rows)
    pl.validate_plotdata(out)
    click.echo("branch gap %.3e" % pl.branch_gap(rows))


if __name__ == "__main__":
    main()
