import functools

import numpy as np
import pytest

from whisker_lab.lindstedt import TreeOrders, expand_orders
from whisker_lab.linearization import solve_newton
from whisker_lab.model import ModelConfig
from whisker_lab.torus import solve_torus
from whisker_lab.whisker import solve_whisker


@functools.lru_cache(maxsize=None)
def config(d=1, eps=0.0, **kw):
    return ModelConfig.for_dim(d, eps=eps, **kw)


@functools.lru_cache(maxsize=None)
def pipeline(d=1, eps=1e-3):
    cfg = config(d, eps)
    tor = solve_torus(cfg)
    lin = solve_newton(cfg, tor)
    sol = solve_whisker(cfg, tor, lin)
    return cfg, tor, lin, sol


@functools.lru_cache(maxsize=None)
def series(d=1, L=3):
    return expand_orders(config(d), L)


@functools.lru_cache(maxsize=None)
def tree_orders(d=1):
    return TreeOrders(config(d))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(n, ok, detail):
    line = "criterion %2d: %s  %s" % (n, "PASS" if ok else "FAIL", detail)
    ACCEPTANCE[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
