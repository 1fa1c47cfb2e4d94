import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from whisker_lab.lindstedt import (DOT, circle, check_R1, check_R2, continue_to_wedge, enumerate_trees,
                                   in_wedge, node, trig_degree_check, wedge_certificate)
from whisker_lab.linearization import solve_newton
from whisker_lab.torus import solve_torus
from whisker_lab.kernel import KernelParams

from conftest import config, series, tree_orders

TREES = enumerate_trees(4)


def test_tree_counts():
    counts = [len(enumerate_trees(D)) for D in range(1, 5)]
    assert counts == [1, 5, 21, 96]
    assert len({t.key for t in TREES}) == len(TREES)
    assert all(check_R1(t) and check_R2(t) for t in TREES)
    with pytest.raises(ValueError):
        enumerate_trees(5)


def test_tree_rules():
    assert not check_R2(node(DOT, DOT))
    assert not check_R2(node(circle(1), node(DOT)))
    assert check_R2(node(circle(1), DOT))
    assert node(circle(1), DOT).degree == 2 and node(circle(1)).degree == 2
    assert node(circle(1), circle(1)).multiplicity == 1
    assert node(DOT, circle(1)).multiplicity == 2
    assert node(DOT, circle(1)).key == node(circle(1), DOT).key
    # five canonical trees of degree <= 2; counting orderings gives six terms
    low = enumerate_trees(2)
    assert len(low) == 5 and sum(t.multiplicity for t in low) == 6


def _ordered_count(t):
    # number of distinct ordered trees with this shape, by brute force over permutations
    if t.kind != "node":
        return 1
    seen = set()
    for perm in itertools.permutations(t.children):
        seen.add(tuple(c.key for c in perm))
    out = len(seen)
    for c in t.children:
        out *= _ordered_count(c)
    return out


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(TREES))
def test_multiplicity_counts_orderings(t):
    assert t.multiplicity == _ordered_count(t)
    assert t.degree <= 4 and t.has_circle


def test_w_closed_form_vs_cauchy(rng):
    ctx = tree_orders(1).ctx[0]
    z = np.array([0.3, -0.8])
    shape = (len(z), 2, ctx.modes.size)
    for k in (1, 2, 3):
        args = [ctx.modes.conj_sym(rng.normal(size=shape) * 0.1 + 0j) for _ in range(k)]
        a = ctx.w_apply(k, args, z)
        b = ctx.w_apply_cauchy(k, args, z)
        assert np.max(np.abs(a - b)) < 1e-12


def test_w0_is_field_at_separatrix():
    ctx = tree_orders(1).ctx[1]
    z = np.array([0.5])
    zero = np.zeros((1, 2, ctx.modes.size))
    assert np.max(np.abs(ctx.w_apply(0, [], z) - ctx.w_full(zero, z))) < 1e-16


def test_first_order_tree_matches_expansion():
    s = series(1, 3)
    z = np.array([0.3, 0.7, -0.9])
    r = tree_orders(1).raw_orders(z, 1)
    assert np.max(np.abs(r - s.raw(z)[:2])) < 1e-7


def test_second_order_trees_match_expansion():
    s = series(1, 3)
    z = np.array([0.6])
    r = tree_orders(1).raw_orders(z, 2)
    assert np.max(np.abs(r - s.raw(z)[:3])) < 1e-9


LEADING = enumerate_trees(2) + [circle(3), node(node(circle(1))), node(circle(1), circle(2)),
                                node(circle(1), node(DOT, circle(1)))]


@pytest.mark.parametrize("t", LEADING, ids=lambda t: t.key)
def test_tree_leading_order(t):
    z = np.array([0.5])
    o = tree_orders(1).orders([t], z, t.degree)
    scale = max(np.max(np.abs(o)), 1e-300)
    assert np.max(np.abs(o[: t.degree])) < 1e-8 * max(scale, 1.0)


def test_gamma_series():
    s = series(1, 3)
    assert s.gamma[0] == 1
    assert abs(s.gamma[1]) < 1e-15 and abs(s.gamma[3]) < 1e-15
    errs = []
    for eps in (8e-3, 4e-3):
        cfg = config(1, eps)
        g = solve_newton(cfg, solve_torus(cfg)).gamma
        errs.append(abs(s.gamma_sum(eps) - g))
        assert abs(s.gamma_sum(eps, 1) - g) > eps**3
    # the truncation error is O(eps^4)
    assert 12 < errs[0] / errs[1] < 20


def test_trig_degree():
    assert trig_degree_check(series(1, 3)) == [0, 1, 2, 3]


def test_orders_real():
    s = series(1, 3)
    c = s.normalized(np.array([0.2, 0.9]))
    assert np.max(np.abs(c - np.conj(c[..., s.modes.neg]))) < 1e-13
    assert np.max(np.abs(s.alpha.imag)) == 0


def test_normalization_orders():
    s = series(1, 3)
    v = s.values(np.array([1.0]), np.zeros((1, 1)))
    assert abs(v[0, 0, 0] - np.pi) < 1e-14
    assert np.max(np.abs(v[1:, 0])) < 1e-12


def test_in_wedge():
    assert in_wedge(0.5 + 0.2j, 0.3, 0.2)
    assert in_wedge(10 * np.exp(0.15j), 0.3, 0.2)
    assert in_wedge(-10 * np.exp(0.15j), 0.3, 0.2)
    assert not in_wedge(10 * np.exp(0.3j), 0.3, 0.2)
    assert not in_wedge(0.5 + 0.5j, 0.3, 0.2)


def test_wedge_certificate():
    s_min = KernelParams(1.0, (1.6,)).s_min
    assert wedge_certificate(1.0, 0.7, s_min) == 0
    c = wedge_certificate(1.0, 5 * np.exp(0.2j), s_min)
    assert 0 < c < 1.0


def test_wedge_order_zero():
    s = series(1, 3)
    w = continue_to_wedge(s, 0, 10.0, [0.0])
    assert abs(w.value[0] - 4 * np.arctan(10)) < 1e-14 and w.ok
    with pytest.raises(ValueError):
        continue_to_wedge(s, 0, 10j, [0.0])


def test_wedge_conjugation():
    s = series(1, 3)
    to = tree_orders(1)
    a = continue_to_wedge(s, 1, 2 * np.exp(0.1j), [0.3], orders=to).value
    b = continue_to_wedge(s, 1, 2 * np.exp(-0.1j), [0.3], orders=to).value
    assert np.max(np.abs(a - np.conj(b))) < 1e-13


def test_wedge_overlap_with_real_grid():
    # on the real segment the tree continuation agrees with the expansion
    s = series(1, 3)
    z = np.array([0.5, 0.9])
    w = continue_to_wedge(s, 1, z, [0.4], orders=tree_orders(1)).value
    ref = s.values(z, np.full((2, 1), 0.4))[1]
    assert np.max(np.abs(w - ref)) < 1e-10
