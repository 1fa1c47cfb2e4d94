"""Expansion of the whisker in powers of eps, and the tree bookkeeping of
its remainder.

Two independent routes produce the eps-orders of delta_2 Xtilde:

* `expand_orders`: the order recursion with the kernel frozen at gamma = g
  and the gamma corrections moved to the right-hand side, all nonlinear
  terms through `Series` arithmetic;
* trees: each tree is evaluated at finitely many complex eps with the
  nonperturbative gamma, x0, x1, and its orders are read off by a Cauchy
  integral in eps.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .fourier import Modes
from .kernel import (DeltaTwo, KernelParams, PoleError, ZGrid, k_inverse_fn, k_inverse_tilde, phi0)
from .linearization import solve_newton
from .model import dnf_contract, grad_f, hess_f, omega_field
from .series import Series, cos, stack
from .torus import solve_torus


class DegenerateOrder(ArithmeticError):
    pass


# ---------------------------------------------------------------- orders


def _to_grid(m, S):
    return S.map(m.to_grid) if isinstance(S, Series) else m.to_grid(S)


def _from_grid(m, S):
    return S.map(m.from_grid) if isinstance(S, Series) else m.from_grid(S)


def _taylor_in_z(fn, z, K, rho, nodes=32):
    """z-Taylor coefficients 0..K of fn around each point z, by a Cauchy circle.

    fn maps points (Q,) to (L+1, Q, ...); the result is (K+1, L+1, P, ...).
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    t = 2 * np.pi * np.arange(nodes) / nodes
    pts = (z[:, None] + rho * np.exp(1j * t)[None, :]).ravel()
    vals = np.asarray(fn(pts))
    vals = vals.reshape(vals.shape[:1] + (len(z), nodes) + vals.shape[2:])
    out = []
    for k in range(K + 1):
        rot = np.exp(-1j * k * t).reshape((nodes,) + (1,) * (vals.ndim - 3))
        out.append((vals * rot).mean(axis=2) / rho**k)
    return np.stack(out)


def compose_normalized(alpha, beta, modes, z, raw_taylor, K):
    """Orders of X^u(z, theta) = X(alpha z, theta + beta) + (0, beta).

    alpha (L+1,), beta (L+1, d): eps-series of the normalization.
    raw_taylor: z-Taylor coefficients (K+1, L+1, P, C, M) of the raw
    parametrization without the separatrix term.  Returns (L+1, P, C, M).
    """
    L = len(alpha) - 1
    A = Series(alpha)
    z = np.asarray(z, dtype=complex)
    C = 1 + beta.shape[1]
    dl = (A - 1) * z  # (P,)
    w = A * z
    out = Series(np.zeros((L + 1, len(z), C, modes.size), complex))
    pw = Series.const(np.ones(len(z)), L)
    for k in range(K + 1):
        out = out + Series(raw_taylor[k]) * Series(pw.data[:, :, None, None])
        pw = pw * dl
    e0 = np.zeros((C, modes.size))
    e0[0, modes.zero] = 1.0
    out = out + Series(4 * w.arctan().data[:, :, None, None]) * e0
    B = Series(np.asarray(beta, dtype=complex))
    phase = Series(1j * B.data @ modes.q.T.astype(float)).exp()  # (M,)
    out = out * phase
    add = np.zeros((L + 1, C, modes.size), complex)
    add[:, 1:, modes.zero] = beta
    return (out + Series(add)).data


@dataclass
class EpsSeries:
    """eps-orders 0..L of gamma, X0, X1, Z/z^2 and the normalization (alpha, beta)."""

    cfg: object
    modes: Modes
    grid: ZGrid
    gamma: np.ndarray  # (L+1,)
    x0: np.ndarray  # (L+1, C, M)
    x1: np.ndarray  # (L+1, C, M)
    zt: np.ndarray  # (L+1, n, C, M)
    alpha: np.ndarray = None
    beta: np.ndarray = None
    solvability: list = field(default_factory=list)

    @property
    def L(self):
        return len(self.gamma) - 1

    @property
    def x1s(self):
        out = self.x1.copy()
        out[0, 0, self.modes.zero] -= 4.0
        return out

    @property
    def z2(self):
        """Orders of delta_2 of the raw parametrization on the grid (order 0 is delta_2 X^0)."""
        zn = self.grid.z
        out = self.zt * (zn**2)[None, :, None, None]
        out[0, :, 0, self.modes.zero] += phi0(zn) - 4 * zn
        return out

    def raw(self, w):
        """Orders of the raw parametrization minus the separatrix, at points w: (L+1, P, C, M)."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        B = self.grid.interp_matrix(w)
        Zw = np.einsum("pn,lnc...->lpc...", B, self.zt)
        ww = w[None, :, None, None]
        return self.x0[:, None] + ww * self.x1s[:, None] + ww**2 * Zw

    def normalized(self, z, rho=0.05):
        """Normalized orders X^{u,l}(z, .) as theta-coefficients (L+1, P, C, M)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        rho = rho * abs(self.grid.b - self.grid.a) / 2.2
        tay = _taylor_in_z(self.raw, z, self.L, rho)
        return compose_normalized(self.alpha, self.beta, self.modes, z, tay, self.L)

    def values(self, z, theta, normalized=True):
        """(L+1, P, C) order values at paired points."""
        c = self.normalized(z) if normalized else self.raw(z)
        theta = np.asarray(theta, dtype=float).reshape(len(np.atleast_1d(z)), -1)
        E = np.exp(1j * theta @ self.modes.q.T.astype(float))
        return np.einsum("lpcm,pm->lpc", c, E)

    def partial_sum_coeffs(self, eps, z, upto=None):
        upto = self.L if upto is None else upto
        c = self.normalized(z)
        p = np.asarray(eps) ** np.arange(upto + 1)
        return np.tensordot(p, c[: upto + 1], axes=(0, 0))

    def gamma_sum(self, eps, upto=None):
        upto = self.L if upto is None else upto
        return complex(np.sum(self.gamma[: upto + 1] * np.asarray(eps) ** np.arange(upto + 1)))


def _torus_orders(cfg, m, theta, wq, L):
    C, M = 1 + cfg.d, m.size
    nz = np.arange(M) != m.zero
    lam = Series.eps(L, cfg.g**2)
    X0 = np.zeros((L + 1, C, M), complex)
    solv = []
    for l in range(1, L + 1):
        v = _to_grid(m, Series(X0))
        Om = omega_field(cfg.perturbation, cfg.g, lam, [v[i] for i in range(C)], theta)
        R = m.from_grid(Om.data[l])
        X0[l, 0] = R[0] / (-wq**2 - cfg.g**2)
        X0[l, 1:][:, nz] = R[1:, nz] / (-wq[nz] ** 2)
        solv.append(float(np.abs(R[1:, m.zero]).max()))
        X0[l] = m.conj_sym(X0[l])
    return X0, solv


def _linear_orders(cfg, m, theta, wq, L, X0):
    C, M = 1 + cfg.d, m.size
    g = cfg.g
    nz = np.arange(M) != m.zero
    lam = Series.eps(L, g**2)
    v0 = _to_grid(m, Series(X0))
    Phi = v0[0]
    psi = [theta[i] + v0[1 + i] for i in range(cfg.d)]
    H = hess_f(cfg.perturbation, Phi, psi)
    cphi = cos(Phi)
    gam = np.zeros(L + 1, complex)
    gam[0] = g
    X1 = np.zeros((L + 1, C, M), complex)
    X1[0, 0, m.zero] = 4.0
    iw = 1j * wq
    for l in range(1, L + 1):
        G = Series(gam)
        S = Series(X1)
        lhs = S * iw**2 + 2 * G * (S * iw) + G * G * S
        v = _to_grid(m, S)
        rows = []
        for a in range(C):
            acc = 0.0
            for b in range(C):
                acc = acc + H[a][b] * v[b]
            acc = lam * acc
            if a == 0:
                acc = acc + g**2 * cphi * v[0]
            rows.append(acc)
        rhs = _from_grid(m, stack(rows))
        r = (lhs - rhs).data[l]
        piv = 8 * g
        if abs(piv) < 1e-14:
            raise DegenerateOrder("vanishing solvability pivot %.3e at order %d" % (abs(piv), l))
        gam[l] = -r[0, m.zero] / piv
        X1[l, 0, nz] = -r[0, nz] / (-wq[nz] ** 2 + 2j * g * wq[nz])
        X1[l, 1:] = -r[1:] / (iw + g) ** 2
        X1[l] = m.conj_sym(X1[l])
        gam[l] = gam[l].real
    return gam, X1


def _w_total_series(cfg, m, theta, gam, X0, X1s, z, Zt):
    """Series version of the whisker right-hand side at points z: data (L+1, P, C, M)."""
    C = 1 + cfg.d
    L = len(gam) - 1
    zz = z[:, None, None]
    G = Series(gam)
    Zc = Zt * zz**2
    Xt = Series(X0) + Series(X1s) * zz + Zc
    v = _to_grid(m, Xt)  # (L+1, P, C, n..)
    p0 = phi0(z).reshape((-1,) + (1,) * cfg.d)
    X = [v[:, 0] + p0] + [v[:, 1 + i] for i in range(cfg.d)]
    lam = Series.eps(L, cfg.g**2)
    Om = omega_field(cfg.perturbation, cfg.g, lam, X, theta)  # (L+1, C, P, n..)
    comps = [Om[i] for i in range(C)]
    comps[0] = comps[0] - G * G * (np.sin(p0) + _to_grid(m, Zc[:, 0]) * np.cos(p0))
    out = _from_grid(m, stack(comps))
    return np.moveaxis(out.data, 1, 2)


def expand_orders(cfg, L, grid=None):
    """eps-orders 0..L of the whisker on a real z-grid."""
    if L > 6:
        raise ValueError("orders above 6 are out of scope")
    m = Modes(cfg.d, cfg.kmax, cfg.n_theta)
    theta = np.moveaxis(m.theta, -1, 0)
    wq = m.q @ cfg.omega.array
    grid = ZGrid.real(cfg.tau, cfg.z_nodes) if grid is None else grid
    X0, solv = _torus_orders(cfg, m, theta, wq, L)
    gam, X1 = _linear_orders(cfg, m, theta, wq, L, X0)
    X1s = X1.copy()
    X1s[0, 0, m.zero] -= 4.0
    C, M, n = 1 + cfg.d, m.size, grid.n
    g = cfg.g
    params = KernelParams(g, cfg.omega.omega, cfg.tau, cfg.panel_order, cfg.quad_tol)
    Zt = np.zeros((L + 1, n, C, M), complex)
    zn = grid.z.astype(complex)
    Dm = grid.diff_matrix()
    tc = 2 * np.pi * np.arange(cfg.cauchy_nodes) / cfg.cauchy_nodes
    zc = cfg.cauchy_radius * np.exp(1j * tc)
    cphi = np.cos(phi0(zn))[:, None]

    def T(A):  # Z/z^2 representation of z d/dz acting on z^2 A
        return 2 * A + zn[:, None, None] * np.tensordot(Dm, A, axes=(1, 0))

    def Lg(A):
        return 1j * wq * A + g * T(A)

    for l in range(1, L + 1):
        Zs = Series(Zt)
        Wn = _w_total_series(cfg, m, theta, gam, X0, X1s, zn, Zs)[l]
        Zcs = Series(np.einsum("pn,lnc...->lpc...", grid.interp_matrix(zc), Zt))
        Wc = _w_total_series(cfg, m, theta, gam, X0, X1s, zc, Zcs)[l]
        a0 = Wc.mean(axis=0)
        a1 = (Wc * np.exp(-1j * tc)[:, None, None]).mean(axis=0) / cfg.cauchy_radius
        ht = (Wn - a0 - zn[:, None, None] * a1) / (zn**2)[:, None, None]
        dG = Series(gam) - g
        corr = 2 * dG * Zs.map(lambda A: T(Lg(A))) + dG * dG * Zs.map(lambda A: T(T(A)))
        cz = np.zeros_like(Zt)
        cz[:, :, 0] = cphi * Zt[:, :, 0]
        corr = corr - (Series(gam) * Series(gam) - g**2) * Series(cz)
        rhs = ht - corr.data[l]
        Zt[l] = k_inverse_tilde(params, grid, wq, rhs, zn)
        Zt[l] = m.conj_sym(Zt[l])
    out = EpsSeries(cfg, m, grid, gam, X0, X1, Zt, solvability=solv)
    return normalize_series(out)


def normalize_series(s):
    """Orders of (alpha, beta) from X^u(1, 0) = (pi, 0), one linear step per order."""
    L, d = s.L, s.cfg.d
    s.alpha = np.zeros(L + 1, complex)
    s.alpha[0] = 1.0
    s.beta = np.zeros((L + 1, d), complex)
    # the order-m unknowns enter linearly: d Phi0(alpha)/d alpha = 2 at alpha = 1
    for mth in range(1, L + 1):
        v = s.values(np.array([1.0]), np.zeros((1, d)))[mth, 0]
        s.alpha[mth] = -v[0] / 2
        s.beta[mth] = -v[1:]
    s.alpha, s.beta = s.alpha.real.astype(complex), s.beta.real.astype(complex)
    return s


def trig_degree_check(s, zs=None, tol=1e-12):
    """Largest |q|_1 carrying a coefficient above tol, per order, over sample z."""
    zs = np.linspace(-1, 1, 9) if zs is None else zs
    c = np.abs(s.normalized(zs)).max(axis=(1, 2))  # (L+1, M)
    n1 = np.abs(s.modes.q).sum(axis=1)
    degs = []
    for l in range(s.L + 1):
        big = n1[c[l] > tol]
        degs.append(int(big.max()) if len(big) else 0)
    return degs


# ---------------------------------------------------------------- trees


@dataclass(frozen=True)
class Tree:
    """kind: 'circle' (label k), 'dot', or 'node' with k = len(children) entering lines."""

    kind: str
    k: int = 0
    children: tuple = ()

    @cached_property
    def key(self):
        if self.kind == "circle":
            return "c%d" % self.k
        if self.kind == "dot":
            return "b"
        return "n(" + ",".join(c.key for c in self.children) + ")"

    def __str__(self):
        return self.key

    @property
    def degree(self):
        if self.kind == "dot":
            return 1
        if self.kind == "circle":
            return self.k
        return (1 if len(self.children) == 1 else 0) + sum(c.degree for c in self.children)

    @property
    def has_circle(self):
        if self.kind == "circle":
            return True
        return any(c.has_circle for c in self.children)

    @property
    def multiplicity(self):
        """Number of ordered trees collapsing onto this canonical one."""
        if self.kind != "node":
            return 1
        out = math.factorial(len(self.children))
        for key, grp in itertools.groupby(self.children, key=lambda c: c.key):
            out //= math.factorial(len(list(grp)))
        for c in self.children:
            out *= c.multiplicity
        return out


def node(*children):
    return Tree("node", len(children), tuple(sorted(children, key=lambda c: c.key)))


def circle(k):
    return Tree("circle", k)


DOT = Tree("dot")


def check_R1(t):
    if t.kind == "node":
        return len(t.children) >= 1 and all(check_R1(c) for c in t.children)
    return t.kind in ("circle", "dot")


def check_R2(t):
    if t.kind != "node":
        return True
    return any(c.has_circle for c in t.children) and all(check_R2(c) for c in t.children)


def _subtrees(D, memo):
    if D in memo:
        return memo[D]
    out = [circle(D)]
    if D == 1:
        out.append(DOT)
    if D >= 2:
        out += [node(c) for c in _subtrees(D - 1, memo) if c.has_circle]
    pool = [t for e in range(1, D) for t in _subtrees(e, memo)]
    seen = set()
    for k in range(2, D + 1):
        for combo in itertools.combinations_with_replacement(range(len(pool)), k):
            kids = [pool[i] for i in combo]
            if sum(c.degree for c in kids) != D or not any(c.has_circle for c in kids):
                continue
            t = node(*kids)
            if t.key not in seen:
                seen.add(t.key)
                out.append(t)
    memo[D] = out
    return out


def enumerate_trees(max_degree):
    """Canonical trees obeying R1 and R2 with degree <= max_degree."""
    if max_degree > 4:
        raise ValueError("max_degree above 4 is out of scope")
    memo = {}
    out = []
    for D in range(1, max_degree + 1):
        out += [t for t in _subtrees(D, memo) if t.kind != "dot"]
    return out


class EpsContext:
    """Nonperturbative gamma, X0, X1 at one (possibly complex) eps, and the w^(k)."""

    def __init__(self, cfg, eps):
        self.cfg = cfg.with_eps(eps)
        self.torus = solve_torus(self.cfg)
        self.lin = solve_newton(self.cfg, self.torus)
        self.modes = self.torus.basis.modes
        self.gamma = complex(self.lin.gamma)
        self.x0 = self.torus.coeffs
        self.x1s = self.lin.coeffs.copy()
        self.x1s[0, self.modes.zero] -= 4.0
        self.wq = self.modes.q @ cfg.omega.array
        self.theta = np.moveaxis(self.modes.theta, -1, 0)
        self.params = KernelParams(self.gamma, cfg.omega.omega, cfg.tau, cfg.panel_order, cfg.quad_tol)
        self._leaf = {}

    def x_le1(self, z):
        z = np.asarray(z)
        return self.x0[None] + z[:, None, None] * self.x1s[None]

    def w_apply(self, k, args, z):
        """w^(k)(args) at points z; args are k coefficient arrays (P, C, M)."""
        cfg, m = self.cfg, self.modes
        z = np.atleast_1d(np.asarray(z))
        d = cfg.d
        p0 = phi0(z).reshape((-1,) + (1,) * d)
        psi = [self.theta[i] + 0 * p0 for i in range(d)]
        g2, gm2 = cfg.g**2, self.gamma**2
        vals = [np.moveaxis(m.to_grid(a), 1, 0) for a in args]  # (C, P, n..)
        if k == 0:
            fphi, fpsi = grad_f(cfg.perturbation, p0 + 0 * psi[0], psi)
            comps = [(g2 - gm2) * np.sin(p0) + cfg.lam * fphi] + [cfg.lam * v for v in fpsi]
        else:
            comps = [cfg.lam * c for c in dnf_contract(cfg.perturbation, k, p0 + 0 * psi[0], psi, vals)]
            if k == 1:
                comps[0] = comps[0] + (g2 - gm2) * np.cos(p0) * vals[0][0]
            else:
                prod = g2 * np.sin(p0 + k * np.pi / 2)
                for v in vals:
                    prod = prod * v[0]
                comps[0] = comps[0] + prod
            comps = [c / math.factorial(k) for c in comps]
        comps = np.stack(np.broadcast_arrays(*[c + 0 * p0 for c in comps]), axis=1)
        return m.from_grid(comps)

    def w_full(self, x, z):
        """W~ at the perturbation x (coefficients (P, C, M)) around the separatrix."""
        cfg, m = self.cfg, self.modes
        z = np.atleast_1d(np.asarray(z))
        p0 = phi0(z).reshape((-1,) + (1,) * cfg.d)
        v = np.moveaxis(m.to_grid(x), 1, 0)
        Om = omega_field(cfg.perturbation, cfg.g, cfg.lam, [p0 + v[0]] + list(v[1:]), self.theta)
        Om = np.stack(np.broadcast_arrays(*list(Om)))
        Om[0] = Om[0] - self.gamma**2 * (np.sin(p0) + np.cos(p0) * v[0])
        return m.from_grid(np.moveaxis(Om, 0, 1))

    def w_apply_cauchy(self, k, args, z, radius=0.05, nodes=8):
        """w^(k)(args) as the mixed t_1..t_k Taylor coefficient of W~(sum t_i a_i) / k!."""
        z = np.atleast_1d(np.asarray(z))
        if k == 0:
            return self.w_full(np.zeros((len(z), 1 + self.cfg.d, self.modes.size)), z)
        t = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
        out = 0
        for idx in itertools.product(range(nodes), repeat=k):
            ts = t[list(idx)]
            x = sum(ti * a for ti, a in zip(ts, args))
            out = out + self.w_full(x, z) / np.prod(ts)
        return out / nodes**k / math.factorial(k)

    def h(self, k, z):
        z = np.atleast_1d(np.asarray(z))
        x = self.x_le1(z)
        if k == 1:
            out = self.w_apply(0, [], z) + self.w_apply(1, [x], z)
            out[:, 0] += self.gamma**2 * np.cos(phi0(z))[:, None] * x[:, 0]
            return out
        return self.w_apply(k, [x] * k, z)

    def leaf(self, k):
        if k not in self._leaf:
            self._leaf[k] = DeltaTwo(lambda z: self.h(k, z), radius=0.25, nodes=64)
        return self._leaf[k]


class TreeEvaluator:
    """Tree values at one eps; internal nodes on a z-grid, leaves pointwise."""

    def __init__(self, ctx, grid):
        self.ctx = ctx
        self.grid = grid
        self.memo = {}

    def _grid_value(self, t):
        """('a1', tilde values) or ('full', values) of subtree t on the grid nodes."""
        if t.key in self.memo:
            return self.memo[t.key]
        zn = self.grid.z
        if t.kind == "dot":
            out = ("full", self.ctx.x_le1(zn))
        else:
            out = ("a1", self.evaluate_tilde(t, zn))
        self.memo[t.key] = out
        return out

    def node_input(self, t):
        """w^(k)(children)/z^2 on the grid nodes."""
        zn = self.grid.z
        vals = [self._grid_value(c) for c in t.children]
        args, used = [], False
        for kind, v in vals:
            if kind == "a1" and not used:
                args.append(v)
                used = True
            elif kind == "a1":
                args.append(v * (zn**2)[:, None, None])
            else:
                args.append(v)
        if not used:
            raise ValueError("node without a circled descendant")
        return self.ctx.w_apply(len(args), args, zn)

    def evaluate_tilde(self, t, z):
        """Tree value / z^2 at points z (on the grid's segment)."""
        ctx = self.ctx
        if t.kind == "circle":
            return k_inverse_fn(ctx.params, ctx.wq, ctx.leaf(t.k), z)
        if t.kind == "dot":
            raise ValueError("a lone dot is not a tree of the expansion")
        inp = self.node_input(t)
        return k_inverse_tilde(ctx.params, self.grid, ctx.wq, inp, z)

    def evaluate(self, t, z):
        z = np.atleast_1d(np.asarray(z))
        return self.evaluate_tilde(t, z) * (z**2)[:, None, None]


def ray_grid(z, n=64, stretch=1.25):
    """Chebyshev grid on the segment from 0 through z."""
    return ZGrid(0.0, complex(z) * stretch, n)


def tree_sum(evaluator, trees, z):
    out = 0
    for t in trees:
        out = out + t.multiplicity * evaluator.evaluate(t, z)
    return out


def eps_circle(radius, J):
    return radius * np.exp(2j * np.pi * (np.arange(J) + 0.5) / J)


def eps_orders(values, eps_pts, L):
    """Taylor coefficients 0..L from samples on an eps circle (first axis)."""
    values = np.asarray(values)
    J = len(eps_pts)
    out = []
    for l in range(L + 1):
        w = (eps_pts ** (-l) / J).reshape((J,) + (1,) * (values.ndim - 1))
        out.append((values * w).sum(axis=0))
    return np.stack(out)


class TreeOrders:
    """eps-orders of tree sums from contexts on a circle |eps| = radius."""

    def __init__(self, cfg, radius=5e-3, J=8):
        self.cfg = cfg
        self.eps = eps_circle(radius, J)
        self.ctx = [EpsContext(cfg, e) for e in self.eps]

    def orders(self, trees, z, L, grid=None):
        """Orders 0..L of sum_T mult(T) T(z) (values, not divided by z^2)."""
        z = np.atleast_1d(np.asarray(z))
        vals = []
        for c in self.ctx:
            ev = TreeEvaluator(c, grid if grid is not None else ray_grid(z[np.argmax(np.abs(z))]))
            vals.append(tree_sum(ev, trees, z))
        return eps_orders(vals, self.eps, L)

    def raw_orders(self, z, L, grid=None):
        """Orders of the raw parametrization minus separatrix via trees: (L+1, P, C, M)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        trees = enumerate_trees(max(L, 1))
        if grid is None and len(z) > 1 and any(t.kind == "node" for t in trees):
            # internal nodes need a grid through each point
            return np.concatenate([self.raw_orders(zk, L) for zk in z], axis=1)
        vals = []
        for c in self.ctx:
            ev = TreeEvaluator(c, grid if grid is not None else ray_grid(z[np.argmax(np.abs(z))]))
            vals.append(c.x_le1(z) + tree_sum(ev, trees, z))
        return eps_orders(vals, self.eps, L)


def eval_tree(ctx, tree, z, theta, grid=None):
    """Value of one tree at paired points (z, theta) for the eps of ctx: (P, 1+d)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    grid = grid if grid is not None else ray_grid(z[np.argmax(np.abs(z))])
    c = TreeEvaluator(ctx, grid).evaluate(tree, z)
    theta = np.asarray(theta, dtype=float).reshape(len(z), -1)
    E = np.exp(1j * theta @ ctx.modes.q.T.astype(float))
    return np.einsum("pcm,pm->pc", c, E)


# ---------------------------------------------------------------- wedge


def in_wedge(z, tau, angle):
    z = complex(z)
    if abs(z.real) <= 1 + tau and abs(z.imag) <= tau:
        return True
    return abs(np.angle(z)) <= angle or abs(np.angle(-z)) <= angle


def wedge_certificate(gamma, z, s_min):
    """max |Im Phi0| along the characteristic from z toward 0."""
    s = np.linspace(s_min, 0, 2001)
    w = complex(z) * np.exp(gamma * s)
    return float(np.max(np.abs(np.imag(phi0(w)))))


@dataclass
class WedgeValue:
    value: np.ndarray  # (1+d,)
    certificate: float
    eta: float
    ok: bool


def continue_to_wedge(series, l, z, theta, orders=None, eta=1.0, rho=0.05):
    """Normalized order-l value at complex z in the wedge, via trees.

    series: EpsSeries on the real grid (supplies alpha and beta).
    orders: a TreeOrders instance (built on demand).
    z may be a scalar or an array of points sharing one theta.
    """
    cfg = series.cfg
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    for zk in z:
        if not in_wedge(zk, cfg.wedge_tau, cfg.wedge_angle):
            raise ValueError("z = %r lies outside the wedge" % (zk,))
        if abs(zk**2 + 1) < 1e-6:
            raise PoleError("z at a pole of the separatrix")
    if l >= 1:
        orders = TreeOrders(cfg) if orders is None else orders
        tay = _taylor_in_z(lambda pts: orders.raw_orders(pts, l), z, l, rho, nodes=16)
    else:
        tay = np.zeros((1, 1, len(z), 1 + cfg.d, series.modes.size), complex)
    c = compose_normalized(series.alpha[: l + 1], series.beta[: l + 1], series.modes, z, tay, l)[l]
    theta = np.asarray(theta, dtype=float).reshape(1, -1)
    E = np.exp(1j * theta @ series.modes.q.T.astype(float))[0]
    val = np.einsum("pcm,m->pc", c, E)
    s_min = KernelParams(cfg.g, cfg.omega.omega, cfg.tau, cfg.panel_order, cfg.quad_tol).s_min
    cert = max(wedge_certificate(cfg.g, zk, s_min) for zk in z)
    return WedgeValue(val[0] if scalar else val, cert, eta, cert < eta)


def morera_loop(series, l, center, theta, radius=0.1, n=32, orders=None):
    """|closed contour integral| of the order-l evaluator around a small circle."""
    t = 2 * np.pi * np.arange(n) / n
    zs = center + radius * np.exp(1j * t)
    v = continue_to_wedge(series, l, zs, theta, orders=orders).value
    dz = 1j * radius * np.exp(1j * t) * (2 * np.pi / n)
    return float(np.abs((v * dz[:, None]).sum(axis=0)).max())
