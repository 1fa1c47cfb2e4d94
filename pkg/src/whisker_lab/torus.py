"""The perturbed hyperbolic torus X0 = (Phi0, Psi0).

D^2 X0 = Omega(X0) with D = omega . d/dtheta.  Phi is eliminated by a
contraction for fixed Psi; Psi is found by Newton on the truncated mode set
with its zero mode pinned to 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fourier import FourierPoly, Modes
from .model import grad_f, hess_f


class SolverError(RuntimeError):
    pass


class Basis:
    """Mode set, collocation grid and diagonal symbols for one config."""

    def __init__(self, cfg, kmax=None):
        self.cfg = cfg
        self.modes = Modes(cfg.d, cfg.kmax if kmax is None else kmax, cfg.n_theta)
        self.theta = np.moveaxis(self.modes.theta, -1, 0)  # (d, n, .., n)
        self.wq = self.modes.divisors(cfg.omega)  # omega . q
        self.M = self.modes.size
        self.zero = self.modes.zero
        self.nz = np.arange(self.M) != self.zero

    def grid(self, c):
        return self.modes.to_grid(c)

    def coef(self, v):
        return self.modes.from_grid(v)

    def mat(self, values):
        return self.modes.mult_matrix(values)

    def real(self, c):
        return self.modes.conj_sym(c) if self.cfg.is_real else c


def _U(b, cphi, cpsi):
    cfg = b.cfg
    Phi = b.grid(cphi)
    psi = [b.theta[i] + b.grid(cpsi[i]) for i in range(cfg.d)]
    fphi, _ = grad_f(cfg.perturbation, Phi, psi)
    return b.coef(cfg.g**2 * (np.sin(Phi) - Phi) + cfg.lam * (fphi + 0 * Phi))


def _phi_of_psi(b, cpsi, cphi=None, tol=None):
    cfg = b.cfg
    tol = cfg.tol_torus * 1e-2 if tol is None else tol
    inv = 1.0 / (-b.wq**2 - cfg.g**2)
    cphi = np.zeros(b.M, complex) if cphi is None else cphi
    for it in range(200):
        new = b.real(inv * _U(b, cphi, cpsi))
        change = np.abs(new - cphi).sum()
        cphi = new
        if change <= tol or change <= 1e-15 * np.abs(cphi).sum():
            return cphi, it + 1
        if it > 5 and change > 1e3:
            break
    raise SolverError("Phi contraction did not converge (eps too large?)")


def _V(b, cphi, cpsi):
    cfg = b.cfg
    Phi = b.grid(cphi)
    psi = [b.theta[i] + b.grid(cpsi[i]) for i in range(cfg.d)]
    _, fpsi = grad_f(cfg.perturbation, Phi, psi)
    return np.stack([b.coef(cfg.lam * (v + 0 * Phi)) for v in fpsi])


def U_eval(cfg, phi, psi):
    b = Basis(cfg)
    return b.modes.sparse(_U(b, b.modes.dense(phi), _dense_vec(b, psi)), real=cfg.is_real)


def solve_phi0(cfg, psi):
    b = Basis(cfg)
    cphi, _ = _phi_of_psi(b, _dense_vec(b, psi))
    return b.modes.sparse(cphi, real=cfg.is_real)


def V_eval(cfg, psi):
    b = Basis(cfg)
    cpsi = _dense_vec(b, psi)
    cphi, _ = _phi_of_psi(b, cpsi)
    return b.modes.sparse(_V(b, cphi, cpsi), real=cfg.is_real)


def _dense_vec(b, psi):
    c = b.modes.dense(psi)
    return c.reshape(b.cfg.d, b.M)


@dataclass
class TorusSolution:
    cfg: object
    basis: Basis
    cphi: np.ndarray  # (M,)
    cpsi: np.ndarray  # (d, M)
    residual_phi: float
    residual_psi: float
    residual_zero: float
    iterations: dict = field(default_factory=dict)

    @property
    def phi0(self):
        return self.basis.modes.sparse(self.cphi, real=self.cfg.is_real)

    @property
    def psi0(self):
        return self.basis.modes.sparse(self.cpsi, real=self.cfg.is_real)

    @property
    def coeffs(self):
        """(1+d, M) stacked coefficients of X0."""
        return np.vstack([self.cphi[None], self.cpsi])

    def grid_values(self):
        return self.basis.grid(self.coeffs)

    def __call__(self, theta):
        return self.basis.modes.evaluate(self.coeffs, theta)

    def l1(self):
        return float(np.abs(self.cphi).sum()), float(np.abs(self.cpsi).sum())


def first_order_guess(b):
    cfg = b.cfg
    zero = [b.theta[i] for i in range(cfg.d)]
    fphi, fpsi = grad_f(cfg.perturbation, np.zeros_like(b.theta[0]), zero)
    cpsi = np.zeros((cfg.d, b.M), complex)
    for i in range(cfg.d):
        cpsi[i, b.nz] = cfg.lam * b.coef(fpsi[i] + 0 * b.theta[0])[b.nz] / (-b.wq[b.nz] ** 2)
    return cpsi


def _residuals(b, cphi, cpsi):
    cfg = b.cfg
    rphi = (-b.wq**2 - cfg.g**2) * cphi - _U(b, cphi, cpsi)
    rpsi = -b.wq**2 * cpsi - _V(b, cphi, cpsi)
    return rphi, rpsi


def _psi_jacobian(b, cphi, cpsi):
    """Jacobian of Psi -> D^2 Psi - V(Psi) with Phi = Phi(Psi) eliminated."""
    cfg = b.cfg
    d, M = cfg.d, b.M
    Phi = b.grid(cphi)
    psi = [b.theta[i] + b.grid(cpsi[i]) for i in range(d)]
    Hs = hess_f(cfg.perturbation, Phi, psi)
    lam = cfg.lam

    def m(v):
        return b.mat(v + 0 * Phi)

    A = np.diag(-b.wq**2 - cfg.g**2) - m(cfg.g**2 * (np.cos(Phi) - 1) + lam * Hs[0][0])
    Upsi = np.hstack([m(lam * Hs[0][1 + j]) for j in range(d)])  # (M, dM)
    dphi = np.linalg.solve(A, Upsi)
    J = np.zeros((d * M, d * M), complex)
    for i in range(d):
        row = slice(i * M, (i + 1) * M)
        J[row] -= m(lam * Hs[1 + i][0]) @ dphi
        for j in range(d):
            J[row, j * M:(j + 1) * M] -= m(lam * Hs[1 + i][1 + j])
        J[row, row] += np.diag(-b.wq**2)
    return J


def solve_torus(cfg, max_newton=30):
    b = Basis(cfg)
    d, M = cfg.d, b.M
    cpsi = first_order_guess(b) if cfg.eps != 0 else np.zeros((d, M), complex)
    keep = np.tile(b.nz, d)
    cphi = None
    inner = 0
    for it in range(max_newton + 1):
        cphi, n_in = _phi_of_psi(b, cpsi, cphi)
        inner += n_in
        rphi, rpsi = _residuals(b, cphi, cpsi)
        res = np.abs(rpsi[:, b.nz]).sum()
        if res < cfg.tol_torus or cfg.eps == 0:
            break
        if it == max_newton:
            raise SolverError("torus Newton stagnated at residual %.3e" % res)
        J = _psi_jacobian(b, cphi, cpsi)[np.ix_(keep, keep)]
        step = np.zeros(d * M, complex)
        step[keep] = np.linalg.solve(J, rpsi.reshape(-1)[keep])
        new = b.real(cpsi - step.reshape(d, M))
        if np.abs(new - cpsi).sum() < 1e-16 * max(1.0, np.abs(cpsi).sum()):
            cpsi = new
            break
        cpsi = new
    cphi, n_in = _phi_of_psi(b, cpsi, cphi)
    rphi, rpsi = _residuals(b, cphi, cpsi)
    return TorusSolution(cfg, b, cphi, cpsi, float(np.abs(rphi).sum()), float(np.abs(rpsi[:, b.nz]).sum()),
                         float(np.abs(rpsi[:, b.zero]).sum()), {"newton": it, "inner": inner + n_in})


def ward_residual(cfg, psi, basis=None):
    """|int V^i - int Psi . d_i V| for each rotator index i."""
    b = Basis(cfg) if basis is None else basis
    cpsi = psi if isinstance(psi, np.ndarray) else _dense_vec(b, psi)
    cphi, _ = _phi_of_psi(b, cpsi)
    V = _V(b, cphi, cpsi)
    out = np.zeros(cfg.d)
    for i in range(cfg.d):
        lhs = V[i, b.zero]
        dV = 1j * b.modes.q[:, i] * V  # d/dtheta_i V, all components
        # mean of Psi . dV from coefficients: sum_q Psi_q dV_{-q}
        rhs = np.sum(cpsi * dV[:, b.modes.neg])
        out[i] = abs(lhs - rhs)
    return out


def combined_residual(sol):
    """l1 norm of D^2 X0 - Omega(X0), zero modes included."""
    rphi, rpsi = _residuals(sol.basis, sol.cphi, sol.cpsi)
    # the Phi residual is written for (D^2 - g^2) Phi - U which equals D^2 Phi - Omega_Phi
    return float(np.abs(rphi).sum() + np.abs(rpsi).sum())
