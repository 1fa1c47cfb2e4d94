"""Lyapunov exponent gamma and linearization X1 = (Phi1, Psi1) of the torus.

(D + gamma)^2 X1 = DOmega(X0) X1.  The rotator block is eliminated,
Psi1 = J Phi1, and Phi1 = 4 + xi with <xi> = 0 solves

    xi(q) = G(q) (pi0 Phi1)(q)   (q != 0),     (pi0 Phi1)(0) = 0,

where pi0 = H + g^2 - gamma^2.  Two routes: Newton in (xi, gamma), and the
scale-by-scale flow pi_{n+1} = (1 - pi_n Gamma_n)^{-1} pi_n with gamma tuned
so that delta_N = pi_N(0, 0) vanishes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import hess_f
from .torus import Basis, SolverError


def default_aleph(g):
    return min(1 / 8, (g / 3) ** 2)


class LinearProblem:
    """Multiplication operators of DOmega(X0) on a (possibly smaller) mode set."""

    def __init__(self, cfg, torus, kmax=None):
        self.cfg = cfg
        self.torus = torus
        b = self.b = Basis(cfg, kmax)
        d, M = cfg.d, b.M
        # restrict the torus to this basis
        c = np.zeros((1 + d, M), complex)
        for i, q in enumerate(b.modes.q):
            j = torus.basis.modes.index.get(tuple(q))
            if j is not None:
                c[:, i] = torus.coeffs[:, j]
        self.x0 = c
        X = b.grid(c)
        psi = [b.theta[i] + X[1 + i] for i in range(d)]
        Hs = hess_f(cfg.perturbation, X[0], psi)
        lam = cfg.lam
        self.Hgrid = [[lam * (Hs[a][bb] + 0 * X[0]) for bb in range(1 + d)] for a in range(1 + d)]
        self.Hgrid[0][0] = self.Hgrid[0][0] + cfg.g**2 * np.cos(X[0])
        self.X = X
        m = b.mat
        self.Lpp = m(self.Hgrid[0][0] - cfg.g**2)  # g^2 (cos Phi0 - 1) + lam f_pp
        self.Lpr = np.hstack([m(self.Hgrid[0][1 + j]) for j in range(d)])  # (M, dM)
        self.Lrp = np.vstack([m(self.Hgrid[1 + i][0]) for i in range(d)])  # (dM, M)
        self.Lrr = np.block([[m(self.Hgrid[1 + i][1 + j]) for j in range(d)] for i in range(d)])

    def shifted_symbol(self, gamma):
        return (1j * self.b.wq + gamma) ** 2


def build_J(prob, gamma):
    """J = [(D + gamma)^2 - lam f_psipsi]^{-1} lam f_psiphi as a (dM, M) matrix."""
    d = prob.cfg.d
    A = np.diag(np.tile(prob.shifted_symbol(gamma), d)) - prob.Lrr
    return np.linalg.solve(A, prob.Lrp)


def build_J_neumann(prob, gamma, terms=3):
    d = prob.cfg.d
    Dinv = np.tile(1.0 / prob.shifted_symbol(gamma), d)
    out = np.zeros_like(prob.Lrp)
    T = Dinv[:, None] * prob.Lrp
    for _ in range(terms):
        out = out + T
        T = Dinv[:, None] * (prob.Lrr @ T)
    return out


def build_H(prob, gamma, kappa=0.0):
    """H = g^2 (cos Phi0 - 1) + lam f_pp + lam f_ppsi J; kappa shifts the diagonal symbols."""
    d = prob.cfg.d
    A = np.diag(np.tile((1j * (prob.b.wq + kappa) + gamma) ** 2, d)) - prob.Lrr
    return prob.Lpp + prob.Lpr @ np.linalg.solve(A, prob.Lrp)


def _pi0_and_derivative(prob, gamma):
    d = prob.cfg.d
    sym = np.tile(prob.shifted_symbol(gamma), d)
    A = np.diag(sym) - prob.Lrr
    J = np.linalg.solve(A, prob.Lrp)
    dJ = -np.linalg.solve(A, np.tile(2 * (1j * prob.b.wq + gamma), d)[:, None] * J)
    M = prob.b.M
    I = np.eye(M)
    pi0 = prob.Lpp + prob.Lpr @ J + (prob.cfg.g**2 - gamma**2) * I
    dpi0 = prob.Lpr @ dJ - 2 * gamma * I
    return pi0, dpi0, J


def G_kernel(gamma, wq):
    wq = np.asarray(wq, dtype=float)
    out = np.zeros(wq.shape, complex)
    nz = wq != 0
    out[nz] = 1.0 / (2j * gamma * wq[nz] - wq[nz] ** 2)
    return out


@dataclass
class LinearizationSolution:
    gamma: complex
    cphi1: np.ndarray  # (M,) on prob.b
    cpsi1: np.ndarray  # (d, M)
    method: str
    residual: float
    prob: LinearProblem
    iterations: int = 0
    delta_trace: list = field(default_factory=list)
    norms: list = field(default_factory=list)

    @property
    def coeffs(self):
        return np.vstack([self.cphi1[None], self.cpsi1])

    @property
    def phi1(self):
        return self.prob.b.modes.sparse(self.cphi1, real=self.prob.cfg.is_real)

    @property
    def psi1(self):
        return self.prob.b.modes.sparse(self.cpsi1, real=self.prob.cfg.is_real)

    def __call__(self, theta):
        return self.prob.b.modes.evaluate(self.coeffs, theta)


def linear_residual(prob, gamma, c1):
    """l1 norm of (D + gamma)^2 X1 - DOmega(X0) X1, products done on the grid."""
    b, d = prob.b, prob.cfg.d
    X1 = b.grid(c1)
    out = prob.shifted_symbol(gamma) * c1
    for a in range(1 + d):
        acc = 0
        for bb in range(1 + d):
            acc = acc + prob.Hgrid[a][bb] * X1[bb]
        out[a] -= b.coef(acc)
    return float(np.abs(out).sum())


def _finish(prob, gamma, xi, method, it, **kw):
    cfg, b = prob.cfg, prob.b
    if cfg.is_real:
        gamma = complex(gamma.real, 0.0)
        xi = b.modes.conj_sym(xi)
    xi = xi.copy()
    xi[b.zero] = 0
    phi1 = xi.copy()
    phi1[b.zero] = 4.0
    J = build_J(prob, gamma)
    psi1 = (J @ phi1).reshape(cfg.d, b.M)
    if cfg.is_real:
        psi1 = b.modes.conj_sym(psi1)
    c1 = np.vstack([phi1[None], psi1])
    gam = gamma.real if cfg.is_real else gamma
    return LinearizationSolution(gam, phi1, psi1, method, linear_residual(prob, gamma, c1), prob, it, **kw)


def solve_newton(cfg, torus, kmax=None, max_iter=40):
    prob = LinearProblem(cfg, torus, kmax)
    b = prob.b
    M, z = b.M, b.zero
    nz = b.nz
    gamma = complex(cfg.g)
    xi = np.zeros(M, complex)
    e0 = np.zeros(M)
    e0[z] = 1.0
    for it in range(max_iter):
        pi0, dpi0, _ = _pi0_and_derivative(prob, gamma)
        G = G_kernel(gamma, b.wq)
        dG = -(G**2) * 2j * b.wq
        phi1 = xi + 4 * e0
        v = pi0 @ phi1
        F = np.where(nz, xi - G * v, v)
        if np.abs(F).sum() < cfg.tol_lin * 1e-2:
            break
        Jm = np.zeros((M, M + 1), complex)
        Jm[:, :M] = np.where(nz[:, None], np.eye(M) - G[:, None] * pi0, pi0)
        dv = dpi0 @ phi1
        Jm[:, M] = np.where(nz, -dG * v - G * dv, dv)
        cols = np.append(nz, True)
        step = np.linalg.solve(Jm[:, cols], F)
        xi[nz] -= step[:-1]
        gamma -= step[-1]
        if abs(gamma - cfg.g) > 0.5 * cfg.g:
            raise SolverError("gamma left |gamma - g| < g/2")
        if np.abs(step).sum() < 1e-17:
            break
    else:
        raise SolverError("linearization Newton did not converge")
    return _finish(prob, gamma, xi, "newton", it + 1)


def chi_n(aleph, n, kappa):
    if n == 0:
        return np.ones_like(np.asarray(kappa), dtype=complex) + 0 * np.asarray(kappa)
    return np.exp(-((np.asarray(kappa, dtype=complex) / aleph**n) ** 6))


def weights(aleph, n, wq):
    return np.exp(aleph ** (-n) * np.abs(wq))


def op_norm(L, aleph, n, m, wq):
    """sup_q sum_p |L(p, q)| w_m(p) w_{-n}(q)."""
    col = (np.abs(L) * weights(aleph, m, wq)[:, None]).sum(axis=0) * weights(aleph, -n, wq)
    return float(col.max())


def default_levels(wq, aleph):
    """Largest n with min |w.q| < aleph^(n-1), and at least 1."""
    m = np.min(np.abs(wq[wq != 0]))
    n = 1
    while m < aleph**n:
        n += 1
    return n


def resolved_levels(wq, aleph, floor=1e-17):
    """Smallest N >= 1 with chi_N(w.q) below floor on every retained q != 0."""
    w = np.abs(wq[wq != 0])
    n = 1
    while np.max(np.abs(chi_n(aleph, n, w))) > floor:
        n += 1
    return n


def chi_tail(prob, n, aleph=None):
    """max chi_n(w.q) over retained q != 0: what the first n levels leave unresolved."""
    aleph = default_aleph(prob.cfg.g) if aleph is None else aleph
    wq = prob.b.wq
    return float(np.max(np.abs(chi_n(aleph, n, wq[wq != 0]))))


@dataclass
class RGState:
    n: int
    pi_n: np.ndarray
    rho_n: np.ndarray
    delta_n: complex
    aleph: float
    alpha_n: float
    x_n: np.ndarray
    norm: float


def rg_flow(prob, gamma, n_levels, aleph=None, alpha0=1.0):
    cfg, b = prob.cfg, prob.b
    aleph = default_aleph(cfg.g) if aleph is None else aleph
    pi, _, _ = _pi0_and_derivative(prob, gamma)
    rho = 4 * pi[:, b.zero].copy()
    G = G_kernel(gamma, b.wq)
    Gn = [chi_n(aleph, n, b.wq) * G for n in range(n_levels + 2)]
    I = np.eye(b.M)
    states = []
    alpha = alpha0
    for n in range(n_levels + 1):
        x = (G - Gn[n]) * rho
        states.append(RGState(n, pi, rho, pi[b.zero, b.zero], aleph, alpha, x,
                              op_norm(pi, aleph, n, -n, b.wq)))
        if n == n_levels:
            break
        Gam = Gn[n] - Gn[n + 1]
        R = I - pi * Gam[None, :]
        if np.linalg.cond(R) > 1e12:
            raise SolverError("1 - pi_n Gamma_n singular at level %d: gamma out of basin" % n)
        pi = np.linalg.solve(R, pi)
        rho = np.linalg.solve(R, rho)
        alpha = (1 - 4 / (n + 3) ** 2) * alpha
    return states


def rg_levels(prob, aleph=None):
    return default_levels(prob.b.wq, default_aleph(prob.cfg.g) if aleph is None else aleph)


def tune_gamma_rg(cfg, torus, n_levels=None, kmax=None, max_iter=60):
    if kmax is None:
        kmax = cfg.k_rg if cfg.k_rg is not None else (12 if cfg.d == 1 else 8)
    prob = LinearProblem(cfg, torus, kmax)
    aleph = default_aleph(cfg.g)
    N = rg_levels(prob, aleph) if n_levels is None else n_levels

    def delta(gm):
        return rg_flow(prob, gm, N, aleph)[-1].delta_n

    if cfg.eps == 0:
        g0 = complex(cfg.g)
    else:
        a, c = cfg.g * (1 - 5 * abs(cfg.eps)), cfg.g * (1 + 5 * abs(cfg.eps))
        fa, fc = delta(a), delta(c)
        g0 = c
        for it in range(max_iter):
            if fc == fa:
                break
            g0 = c - fc * (c - a) / (fc - fa)
            a, fa = c, fc
            c, fc = g0, delta(g0)
            if abs(fc) < cfg.tol_delta or abs(c - a) < 1e-16 * cfg.g:
                break
        else:
            raise SolverError("secant on delta_N did not converge: last samples %r" % [fa, fc])
        if abs(fc) > 1e3 * cfg.tol_delta:
            raise SolverError("secant stalled with |delta_N| = %.3e" % abs(fc))
    states = rg_flow(prob, g0, N, aleph)
    xi = states[-1].x_n
    sol = _finish(prob, complex(g0), xi, "rg", N, delta_trace=[s.delta_n for s in states],
                  norms=[s.norm for s in states])
    sol.states = states
    return sol


def zero_mode_row(prob, gamma, xi):
    pi0, _, _ = _pi0_and_derivative(prob, gamma)
    phi1 = xi.copy()
    phi1[prob.b.zero] = 4.0
    return complex((pi0 @ phi1)[prob.b.zero])
