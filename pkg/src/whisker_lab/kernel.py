"""Separatrix, characteristics and the explicit inverse of
K = diag(L^2 - gamma^2 cos Phi0, L^2),  L = omega . d/dtheta + gamma z d/dz.

Functions of (z, theta) are stored on Chebyshev nodes of a segment in the
complex z plane times a dense set of theta modes.  Functions vanishing to
second order at z = 0 are stored divided by z^2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss


class PoleError(ValueError):
    pass


def phi0(z):
    z = np.asarray(z)
    if np.any(np.abs(z * z + 1) < 1e-14):
        raise PoleError("separatrix is singular at z = +-i")
    return 4 * np.arctan(z)


def dphi0(z):
    return 4 / (1 + np.asarray(z) ** 2)


def time_reversal(z, theta):
    z = np.asarray(z)
    if np.any(z == 0):
        raise ZeroDivisionError("time reversal undefined at z = 0")
    return 1 / z, -np.asarray(theta)


def P(z):
    return z / (z * z + 1)


def Q(z):
    return (z * z - 1) / z


def wronskian_funcs(gamma):
    """Zero modes of d^2/dt^2 - gamma^2 cos Phi0(e^{gamma t}) and their z-forms."""
    W1 = lambda z: 2 * P(z)
    W2 = lambda z: P(z) * np.log(z) / gamma + Q(z) / (4 * gamma)
    u1 = lambda t: 1 / np.cosh(gamma * t)
    u2 = lambda t: t / (2 * np.cosh(gamma * t)) + np.sinh(gamma * t) / (2 * gamma)
    du1 = lambda t: -gamma * np.sinh(gamma * t) / np.cosh(gamma * t) ** 2
    du2 = lambda t: (1 / (2 * np.cosh(gamma * t)) - gamma * t * np.sinh(gamma * t) / (2 * np.cosh(gamma * t) ** 2)
                     + np.cosh(gamma * t) / 2)
    return {"P": P, "Q": Q, "W_phi1": W1, "W_phi2": W2, "u1": u1, "u2": u2, "du1": du1, "du2": du2}


def _kphi(gamma, s, z):
    # W2(z) W1(zE) - W1(z) W2(zE) with the logarithms cancelled: ln z - ln(zE) = -gamma s
    E = np.exp(gamma * s)
    z2 = z * z
    a = z2 + 1
    b = z2 * E * E + 1
    return -2 * s * z2 * E / (a * b) + (E * (z2 - 1) / b - (z2 * E * E - 1) / (E * a)) / (2 * gamma)


def K_phi_kernel(gamma, s, z):
    s, z = np.broadcast_arrays(np.asarray(s), np.asarray(z, dtype=complex))
    E = np.exp(gamma * s)
    if np.any(np.abs(z * z + 1) < 1e-6) or np.any(np.abs(z * z * E * E + 1) < 1e-6):
        raise PoleError("kernel evaluated within 1e-6 of a pole")
    return _kphi(gamma, s, z)


def K_psi_kernel(s, z=None):
    return -np.asarray(s)


@dataclass(frozen=True)
class KernelParams:
    gamma: complex
    omega: tuple
    tau: float = 0.1
    order: int = 32
    quad_tol: float = 1e-17

    @property
    def s_min(self):
        return np.log(self.quad_tol) / np.real(self.gamma)

    def nodes(self, refine=1):
        """Composite Gauss-Legendre nodes and weights on [s_min, 0]."""
        u = 1 / np.real(self.gamma)
        br = [0.0, -u / 8, -u / 4, -u / 2, -u, -2 * u, -3 * u, -4 * u]
        while br[-1] > self.s_min:
            br.append(br[-1] - 2 * u)
        br[-1] = min(br[-1], self.s_min)
        br = np.array(br)
        if refine > 1:
            br = np.concatenate([np.linspace(a, b, refine + 1)[:-1] for a, b in zip(br[:-1], br[1:])] + [br[-1:]])
        x, w = leggauss(self.order)
        S, Wt = [], []
        for a, b in zip(br[:-1], br[1:]):
            S.append((a + b) / 2 + (b - a) / 2 * x)
            Wt.append(abs(b - a) / 2 * w)
        return np.concatenate(S), np.concatenate(Wt)


class ZGrid:
    """Chebyshev points (first kind) on the segment [a, b] of the complex plane."""

    def __init__(self, a, b, n):
        self.a, self.b, self.n = complex(a), complex(b), n
        k = np.arange(n)
        self.x = np.cos((2 * k + 1) * np.pi / (2 * n))[::-1]
        self.w = (np.sin((2 * k + 1) * np.pi / (2 * n)) * (-1.0) ** k)[::-1]
        self.z = self.to_z(self.x)
        if np.all(np.imag(self.z) == 0):
            self.z = self.z.real

    @classmethod
    def real(cls, tau=0.1, n=48):
        return cls(-1 - tau, 1 + tau, n)

    def to_z(self, x):
        return (self.a + self.b) / 2 + (self.b - self.a) / 2 * x

    def to_x(self, z):
        return (2 * np.asarray(z) - self.a - self.b) / (self.b - self.a)

    def contains(self, z, slack=1e-9):
        x = self.to_x(z)
        return np.all(np.abs(x.imag) < slack) and np.all(np.abs(x.real) <= 1 + slack)

    def interp_matrix(self, z):
        """Barycentric interpolation matrix (P, n) for points z."""
        x = self.to_x(np.atleast_1d(z).ravel())
        diff = x[:, None] - self.x[None, :]
        exact = diff == 0
        diff[exact] = 1
        C = self.w[None, :] / diff
        C = C / C.sum(axis=1, keepdims=True)
        rows = exact.any(axis=1)
        C[rows] = exact[rows]
        return C

    def diff_matrix(self):
        """Derivative in z of the interpolant, evaluated at the nodes."""
        x, w = self.x, self.w
        D = (w[None, :] / w[:, None]) / (x[:, None] - x[None, :] + np.eye(self.n))
        np.fill_diagonal(D, 0)
        np.fill_diagonal(D, -D.sum(axis=1))
        return D * 2 / (self.b - self.a)


@dataclass
class GridFunction:
    """A (1+d)-vector field F(z, theta) stored as coefficients (n_z, 1+d, M).

    With in_a1 the stored array is F / z^2, so F and dF/dz vanish at z = 0
    by construction.
    """

    grid: ZGrid
    modes: object
    data: np.ndarray
    in_a1: bool = True

    def coeffs_at(self, z):
        z = np.atleast_1d(np.asarray(z))
        B = self.grid.interp_matrix(z)
        out = np.tensordot(B, self.data, axes=(1, 0))
        if self.in_a1:
            out = out * (z.ravel() ** 2)[:, None, None]
        return out

    def values(self):
        if self.in_a1:
            return self.data * (self.grid.z**2)[:, None, None]
        return self.data

    def __call__(self, z, theta):
        """Evaluate at paired points z (P,) and theta (P, d)."""
        c = self.coeffs_at(z)
        theta = np.asarray(theta, dtype=complex).reshape(len(c), -1)
        E = np.exp(1j * theta @ self.modes.q.T.astype(float))
        return np.einsum("pcm,pm->pc", c, E)

    def theta_modes(self, i):
        return self.modes.sparse(self.values()[i])

    def sup(self):
        return float(np.max(np.abs(self.values()).sum(axis=-1)))

    def __add__(self, other):
        assert self.in_a1 == other.in_a1
        return GridFunction(self.grid, self.modes, self.data + other.data, self.in_a1)

    def __sub__(self, other):
        assert self.in_a1 == other.in_a1
        return GridFunction(self.grid, self.modes, self.data - other.data, self.in_a1)

    def scaled(self, s):
        return GridFunction(self.grid, self.modes, s * self.data, self.in_a1)


def k_inverse_fn(params, wq, htilde, zeval, refine=1):
    """(K^{-1} h)(z) / z^2 at points zeval, for h = z^2 htilde.

    htilde: callable mapping points (S,) to coefficients (S, 1+d, M); it is
    sampled along each characteristic z e^{gamma s}.  Returns (P, 1+d, M).
    """
    gamma = params.gamma
    s, w = params.nodes(refine)
    E = np.exp(gamma * s)
    phase = np.exp(1j * np.outer(s, wq))  # (S, M)
    zeval = np.atleast_1d(zeval)
    out = None
    for i, z in enumerate(zeval):
        H = htilde(z * E)
        if out is None:
            out = np.zeros((len(zeval),) + H.shape[1:], complex)
        kp = w * E * E * _kphi(gamma, s, z)
        kr = w * E * E * (-s)
        out[i, 0] = np.einsum("s,sm,sm->m", kp, H[:, 0], phase)
        if H.shape[1] > 1:
            out[i, 1:] = np.einsum("s,scm,sm->cm", kr, H[:, 1:], phase)
    return out


def k_inverse_tilde(params, grid, wq, htilde, zeval, refine=1):
    """As k_inverse_fn, with htilde given as (n_z, 1+d, M) values on grid."""
    flat = htilde.reshape(grid.n, -1)
    fn = lambda pts: (grid.interp_matrix(pts) @ flat).reshape((len(pts),) + htilde.shape[1:])
    return k_inverse_fn(params, wq, fn, zeval, refine)


def K_inverse_apply(params, h, refine=1):
    """K^{-1} h for h in A1; the result is again stored divided by z^2."""
    if not h.in_a1:
        raise ValueError("K^{-1} needs an input vanishing to second order at z = 0")
    wq = h.modes.q @ np.asarray(params.omega, dtype=float)
    data = k_inverse_tilde(params, h.grid, wq, h.data, h.grid.z, refine)
    return GridFunction(h.grid, h.modes, data, True)


class DeltaTwo:
    """delta_2 h / z^2 for a function h analytic near z = 0, given pointwise.

    Away from 0 the Taylor part is subtracted and divided out; close to 0 the
    Taylor series from a Cauchy circle is summed instead.
    """

    def __init__(self, h, radius=0.25, nodes=64, switch=0.02):
        self.h = h
        self.switch = switch
        t = 2 * np.pi * np.arange(nodes) / nodes
        F = np.asarray(h(radius * np.exp(1j * t)))
        rot = np.exp(-1j * np.outer(np.arange(nodes), t)) / nodes  # (k, nodes)
        self.taylor = np.tensordot(rot, F, axes=(1, 0)) / (radius ** np.arange(nodes)).reshape(
            (-1,) + (1,) * (F.ndim - 1))
        self.a0, self.a1 = self.taylor[0], self.taylor[1]

    def __call__(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.zeros((len(z),) + self.a0.shape, complex)
        near = np.abs(z) < self.switch
        if np.any(~near):
            zf = z[~near]
            zb = zf.reshape((-1,) + (1,) * self.a0.ndim)
            out[~near] = (np.asarray(self.h(zf)) - self.a0 - zb * self.a1) / zb**2
        if np.any(near):
            zn = z[near]
            K = min(len(self.taylor), 24)
            pw = zn[:, None] ** np.arange(K - 2)[None, :]
            out[near] = np.tensordot(pw, self.taylor[2:K], axes=(1, 0))
        return out


def taylor01(fn, radius=0.025, n=64, center=0.0):
    """Value and first derivative at the center from samples on a circle."""
    t = 2 * np.pi * np.arange(n) / n
    zc = center + radius * np.exp(1j * t)
    F = np.asarray(fn(zc))
    a0 = F.mean(axis=0)
    rot = np.exp(-1j * t).reshape((n,) + (1,) * (F.ndim - 1))
    a1 = (F * rot).mean(axis=0) / radius
    return a0, a1


def characteristic(gamma, omega, z, theta, t):
    """Points (z e^{gamma t}, theta + omega t)."""
    z = np.asarray(z)
    theta = np.asarray(theta, dtype=float).reshape(len(np.atleast_1d(z)), -1)
    return z * np.exp(gamma * t), theta + np.asarray(omega) * t


def char_derivative(F, gamma, omega, z, theta, h, order=2):
    """d/dt or d^2/dt^2 of t -> F(z e^{gamma t}, theta + omega t) at t = 0, 5-point stencil."""
    vals = [F(*characteristic(gamma, omega, z, theta, k * h)) for k in (-2, -1, 0, 1, 2)]
    if order == 1:
        return (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * h)
    return (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * h * h)


def residual_characteristic(gamma, omega, F, rhs, z, theta, h=5e-3, richardson_tol=None):
    """sup |L^2 F - rhs| on sample points, L^2 F by differences along characteristics."""
    h = h / abs(gamma)
    d2 = char_derivative(F, gamma, omega, z, theta, h)
    r = d2 - rhs(z, theta)
    if richardson_tol is not None:
        d2b = char_derivative(F, gamma, omega, z, theta, 2 * h)
        if np.max(np.abs(d2 - d2b)) > richardson_tol:
            raise ArithmeticError("difference step flagged by Richardson disagreement")
    return float(np.max(np.abs(r)))
