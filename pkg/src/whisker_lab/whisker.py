"""Unstable and stable whiskers of the perturbed torus.

X^u(z, theta) = X0(theta) + (Phi0(z), 0) + z (X1(theta) - (4, 0)) + Z(z, theta),
with Z solving K Z = W(Z) as a fixed point of K^{-1} W.  The stable whisker
is obtained from the time-reversal symmetry, never solved for.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fourier import Modes
from .kernel import GridFunction, KernelParams, ZGrid, K_inverse_apply, phi0, taylor01
from .model import PhaseState, integrate_orbit, omega_field
from .torus import SolverError

# 5-point first-derivative stencil
_D1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
_D2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}


def embed(c, src, dst):
    """Copy coefficients (..., M_src) onto another mode set (..., M_dst)."""
    out = np.zeros(c.shape[:-1] + (dst.size,), complex)
    for i, q in enumerate(src.q):
        j = dst.index.get(tuple(q))
        if j is not None:
            out[..., j] = c[..., i]
    return out


class WhiskerProblem:
    """Everything needed to evaluate W(Z) on a z-grid."""

    def __init__(self, cfg, gamma, x0, x1, modes, grid=None):
        self.cfg = cfg
        self.gamma = gamma
        self.modes = modes
        self.grid = ZGrid.real(cfg.tau, cfg.z_nodes) if grid is None else grid
        self.x0 = x0  # (1+d, M)
        self.x1s = x1.copy()
        self.x1s[0, modes.zero] -= 4.0  # X1 - (4, 0)
        self.wq = modes.q @ cfg.omega.array
        self.theta = np.moveaxis(modes.theta, -1, 0)
        self.params = KernelParams(gamma, cfg.omega.omega, cfg.tau, cfg.panel_order, cfg.quad_tol)

    def w_total(self, z, ztil):
        """Omega(X0 + Xtilde) - gamma^2 sin Phi0 - gamma^2 cos Phi0 Z_phi at points z.

        ztil: (P, 1+d, M) coefficients of Z / z^2.  Returns (P, 1+d, M).
        """
        cfg, m = self.cfg, self.modes
        z = np.asarray(z)
        zz = z[:, None, None]
        Zc = zz**2 * ztil
        Xt = self.x0[None] + zz * self.x1s[None] + Zc
        vals = m.to_grid(Xt)  # (P, C, n..)
        p0 = phi0(z).reshape((-1,) + (1,) * cfg.d)
        X = [p0 + vals[:, 0]] + [vals[:, 1 + i] for i in range(cfg.d)]
        Om = omega_field(cfg.perturbation, cfg.g, cfg.lam, X, self.theta)
        Om = np.stack([Om[i] + 0 * vals[:, 0] for i in range(1 + cfg.d)], axis=1)
        Om[:, 0] -= self.gamma**2 * (np.sin(p0) + np.cos(p0) * m.to_grid(Zc[:, 0]))
        return m.from_grid(Om)

    def w_tilde(self, ztil):
        """delta_2 of the total field on the grid nodes, divided by z^2."""
        cfg = self.cfg
        zn = self.grid.z
        Wn = self.w_total(zn, ztil)
        B = lambda zc: np.tensordot(self.grid.interp_matrix(zc), ztil, axes=(1, 0))
        a0, a1 = taylor01(lambda zc: self.w_total(zc, B(zc)), cfg.cauchy_radius, cfg.cauchy_nodes)
        out = (Wn - a0[None] - zn[:, None, None] * a1[None]) / (zn**2)[:, None, None]
        return out, (a0, a1)

    def real(self, c):
        return self.modes.conj_sym(c) if self.cfg.is_real else c


def W_eval(prob, Z):
    """W(Z) as a GridFunction in A1."""
    data, _ = prob.w_tilde(Z.data)
    return GridFunction(prob.grid, prob.modes, prob.real(data), True)


def solve_Z(prob, max_iter=None, tol=None):
    cfg = prob.cfg
    max_iter = cfg.max_iter if max_iter is None else max_iter
    tol = cfg.tol_z if tol is None else tol
    M = prob.modes.size
    Z = GridFunction(prob.grid, prob.modes, np.zeros((prob.grid.n, 1 + cfg.d, M), complex), True)
    changes = []
    z2 = (prob.grid.z**2)[:, None, None]
    for it in range(max_iter):
        new = K_inverse_apply(prob.params, W_eval(prob, Z))
        new = GridFunction(new.grid, new.modes, prob.real(new.data), True)
        change = float(np.max(np.abs(z2 * (new.data - Z.data)).sum(axis=-1)))
        changes.append(change)
        Z = new
        if change < tol:
            break
        if it >= 3 and change > changes[-2]:
            raise SolverError("fixed point Z <- K^{-1} W(Z) is not contracting (changes %r)" % changes[-3:])
    else:
        raise SolverError("Z iteration hit max_iter with change %.3e" % changes[-1])
    return Z, changes


@dataclass
class WhiskerSolution:
    cfg: object
    prob: WhiskerProblem
    Z: GridFunction
    alpha: complex
    beta: np.ndarray
    changes: list = field(default_factory=list)
    norm_residual: float = 0.0
    h_y: float = 1e-4

    @property
    def gamma(self):
        return self.prob.gamma

    @property
    def d(self):
        return self.cfg.d

    # raw parametrization before normalization
    def raw_coeffs(self, z, sep=True):
        z = np.atleast_1d(np.asarray(z))
        # the interpolant is analytic, so a thin strip around the segment is fine
        # (complex eps makes alpha complex)
        x = self.prob.grid.to_x(z)
        if np.any(np.abs(x.real) > 1 + 1e-6) or np.any(np.abs(x.imag) > 0.05):
            raise ValueError("z outside the whisker domain")
        p = self.prob
        c = p.x0[None] + z[:, None, None] * p.x1s[None] + self.Z.coeffs_at(z)
        if sep:
            c[:, 0, p.modes.zero] += phi0(z)
        return c

    def coeffs(self, z, which="u", sep=True):
        """Theta-coefficients (P, 1+d, M) of X^u or X^s at points z.

        With sep=False the separatrix part Phi0(alpha z) (or its reflection) is left out.
        """
        z = np.atleast_1d(np.asarray(z))
        m = self.prob.modes
        if which == "s":
            cu = self.coeffs(1 / z, "u", sep)
            c = -cu[:, :, m.neg]
            if sep:
                c[:, 0, m.zero] += 2 * np.pi
            return c
        c = self.raw_coeffs(self.alpha * z, sep)
        c = c * np.exp(1j * m.q @ self.beta.astype(complex))[None, None, :]
        c[:, 1:, m.zero] += self.beta[None, :]
        return c

    def _sep_L(self, z, which, order):
        # L^k of the separatrix part, in closed form
        w = self.alpha * z if which == "u" else self.alpha / z
        if order == 1:
            return 4 * self.gamma * w / (1 + w * w)
        s = np.sin(phi0(w))
        return self.gamma**2 * (s if which == "u" else -s)

    def coeffs_L(self, z, which="u", order=1, h=None):
        """Theta-coefficients of L X or L^2 X.

        The separatrix part is differentiated exactly, the rest by 5-point
        differences along characteristics.
        """
        h = (self.h_y if h is None else h) / abs(self.gamma)
        z = np.atleast_1d(np.asarray(z))
        st = _D1 if order == 1 else _D2
        out = 0
        for k, wk in st.items():
            ph = np.exp(1j * self.prob.wq * k * h)
            out = out + wk * self.coeffs(z * np.exp(self.gamma * k * h), which, False) * ph[None, None, :]
        out = out / h**order
        out[:, 0, self.prob.modes.zero] += self._sep_L(z, which, order)
        return out

    def _evaluate(self, c, theta, tensor=False):
        q = self.prob.modes.q.astype(float)
        theta = np.asarray(theta, dtype=float).reshape(-1, self.d)
        E = np.exp(1j * theta @ q.T)
        if tensor:
            return np.einsum("pcm,tm->ptc", c, E)
        return np.einsum("pcm,pm->pc", c, E)

    def X(self, z, theta, which="u", tensor=False):
        return self._evaluate(self.coeffs(z, which), theta, tensor)

    def Y(self, z, theta, which="u", tensor=False, h=None):
        return self._evaluate(self.coeffs_L(z, which, 1, h), theta, tensor)

    def state(self, z, theta, which="u"):
        """Phase-space points (phi, psi, I, A) on the whisker; real parts."""
        z = np.atleast_1d(z)
        theta = np.asarray(theta, dtype=float).reshape(len(z), self.d)
        X = self.X(z, theta, which)
        Y = self.Y(z, theta, which)
        om = self.cfg.omega.array
        out = np.concatenate([X[:, :1], theta + X[:, 1:], Y[:, :1], om + Y[:, 1:]], axis=1)
        return out.real

    def pde_residual(self, z, theta, which="u", h=2e-3):
        """sup |L^2 X - Omega(X)| on the tensor grid z x theta."""
        cfg = self.cfg
        theta = np.asarray(theta, dtype=float).reshape(-1, self.d)
        L2 = self._evaluate(self.coeffs_L(z, which, 2, h), theta, True)  # (P, T, C)
        X = self.X(z, theta, which, True)
        Xl = [X[..., i] for i in range(1 + cfg.d)]
        th = [theta[None, :, i] for i in range(cfg.d)]
        Om = omega_field(cfg.perturbation, cfg.g, cfg.lam, Xl, th)
        Om = np.stack([Om[i] + 0 * X[..., 0] for i in range(1 + cfg.d)], axis=-1)
        return float(np.max(np.abs(L2 - Om)))


def normalize(sol, tol=1e-14, max_iter=30):
    """Newton for (alpha, beta): X(alpha, beta) + (0, beta) = (pi, 0)."""
    d = sol.d
    target = np.zeros(1 + d)
    target[0] = np.pi

    def F(u):
        sol.alpha, sol.beta = u[0], u[1:]
        return sol.X(np.array([1.0]), np.zeros((1, d)))[0] - target

    u = np.zeros(1 + d, complex)
    u[0] = 1.0
    real = sol.cfg.is_real
    for it in range(max_iter):
        r = F(u)
        if np.max(np.abs(r)) < tol:
            break
        J = np.zeros((1 + d, 1 + d), complex)
        h = 1e-6
        for k in range(1 + d):
            e = np.zeros(1 + d, complex)
            e[k] = h
            J[:, k] = (F(u + e) - F(u - e)) / (2 * h)
        step = np.linalg.solve(J, r)
        u = u - step
        if real:
            u = u.real.astype(complex)
        if abs(u[0] - 1) > 0.5:
            raise SolverError("normalization Newton diverged")
    else:
        raise SolverError("normalization Newton did not converge")
    r = F(u)
    sol.alpha = u[0].real if real else u[0]
    sol.beta = u[1:].real if real else u[1:]
    sol.norm_residual = float(np.max(np.abs(r)))
    return sol


def jacobian_det(sol):
    """det d(X(alpha, beta) + (0, beta))/d(alpha, beta) at the solution, by differences."""
    d = sol.d
    a0, saved = sol.alpha, sol.beta
    b0 = np.array(saved, dtype=complex)
    h = 1e-6
    J = np.zeros((1 + d, 1 + d), complex)
    for k in range(1 + d):
        vals = []
        for sgn in (1, -1):
            u = np.concatenate([[a0], b0])
            u[k] += sgn * h
            sol.alpha, sol.beta = u[0], u[1:]
            vals.append(sol.X(np.array([1.0]), np.zeros((1, d)))[0])
        J[:, k] = (vals[0] - vals[1]) / (2 * h)
    sol.alpha, sol.beta = a0, saved
    return complex(np.linalg.det(J))


def solve_whisker(cfg, torus, lin, grid=None):
    """Z fixed point, assembly and normalization."""
    modes = torus.basis.modes
    x1 = embed(lin.coeffs, lin.prob.b.modes, modes)
    prob = WhiskerProblem(cfg, lin.gamma, torus.coeffs, x1, modes, grid)
    Z, changes = solve_Z(prob)
    sol = WhiskerSolution(cfg, prob, Z, 1.0, np.zeros(cfg.d), changes)
    return normalize(sol)


def a1_defect(Z, radius=0.025, n=64):
    """|value| and |z-derivative| of Z at 0 from its interpolant."""
    a0, a1 = taylor01(lambda zc: Z.coeffs_at(zc), radius, n)
    return float(np.abs(a0).max()), float(np.abs(a1).max())


def sample_grid(sol, nz=48, which="u"):
    """Sample points: z in [-1, 1] for X^u, z = 1/w for w in [-1, 1] for X^s."""
    K = sol.prob.modes.kmax
    w = np.linspace(-1, 1, nz)
    if which == "s":
        w = w[np.abs(w) > 0.05]
        w = 1 / w
    t1 = 2 * np.pi * np.arange(2 * K + 1) / (2 * K + 1)
    theta = np.stack(np.meshgrid(*([t1] * sol.d), indexing="ij"), axis=-1).reshape(-1, sol.d)
    return w, theta


def residual_pde(sol, which="u", nz=48):
    z, theta = sample_grid(sol, nz, which)
    out = 0.0
    for i in range(0, len(z), 8):
        out = max(out, sol.pde_residual(z[i:i + 8], theta, which))
    return out


def symmetry_check(sol, n=100, seed=0):
    """Max violation of X^s = (2pi, 0) - X^u o T and Y^s = Y^u o T on random points."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.95, 1.05, n) * rng.choice([-1, 1], n)
    theta = rng.uniform(0, 2 * np.pi, (n, sol.d))
    Xs = sol.X(z, theta, "s")
    Xu = sol.X(1 / z, -theta, "u")
    shift = np.zeros(1 + sol.d)
    shift[0] = 2 * np.pi
    ex = float(np.max(np.abs(Xs + Xu - shift)))
    ey = float(np.max(np.abs(sol.Y(z, theta, "s") - sol.Y(1 / z, -theta, "u"))))
    return ex, ey


def _flow(cfg, y0, t):
    if t <= 0:
        return np.asarray(y0, dtype=float)
    tr = integrate_orbit(cfg, PhaseState.from_vector(y0), 0.0, float(t), tol=1e-13)
    return tr.y[-1]


def unstable_state(sol, z, theta, z_safe=1.0):
    """W^u at real z, extended past |z| = z_safe by flowing from |z| = z_safe."""
    z = float(np.real(z))
    theta = np.asarray(theta, dtype=float)
    if abs(z) <= z_safe:
        return sol.state(np.array([z]), theta[None])[0]
    t = np.log(abs(z) / z_safe) / np.real(sol.gamma)
    om = sol.cfg.omega.array
    y0 = sol.state(np.array([np.sign(z) * z_safe]), (theta - om * t)[None])[0]
    return _flow(sol.cfg, y0, t)


def reverse_state(y, d):
    """(phi, psi, I, A) -> (2 pi - phi, -psi, I, A)."""
    y = np.array(y, dtype=float)
    y[0] = 2 * np.pi - y[0]
    y[1:1 + d] = -y[1:1 + d]
    return y


def homoclinic_check(sol, n=21):
    """max_t |W^s(e^{gamma t}, omega t) - W^u(e^{gamma t}, omega t)| for t in [-1/gamma, 1/gamma]."""
    g = np.real(sol.gamma)
    om = sol.cfg.omega.array
    d = sol.d
    err = 0.0
    for t in np.linspace(-1 / g, 1 / g, n):
        z = np.exp(g * t)
        wu = unstable_state(sol, z, om * t)
        ws = reverse_state(unstable_state(sol, 1 / z, -om * t), d)
        diff = wu - ws
        diff[0] = (diff[0] + np.pi) % (2 * np.pi) - np.pi
        err = max(err, float(np.max(np.abs(diff))))
    return err


def shadow_check(sol, t_span=None, z0=np.exp(-3), theta0=None, n=61):
    """Integrate from W^u(z0, theta0) and compare with the parametrized orbit."""
    cfg = sol.cfg
    g = np.real(sol.gamma)
    t_span = 3 / cfg.g if t_span is None else t_span
    theta0 = np.zeros(cfg.d) if theta0 is None else np.asarray(theta0, dtype=float)
    om = cfg.omega.array
    if abs(z0) * np.exp(g * t_span) > 1 + cfg.tau:
        raise ValueError("shadowing window leaves the whisker domain")
    ts = np.linspace(0, t_span, n)
    y0 = sol.state(np.array([z0]), theta0[None])[0]
    tr = integrate_orbit(cfg, PhaseState.from_vector(y0), 0.0, t_span, tol=1e-13, t_eval=ts)
    ref = sol.state(z0 * np.exp(g * ts), theta0[None] + om[None] * ts[:, None])
    return float(np.max(np.abs(tr.y - ref)))


def section_points(sol, which="u", n=200, zmin=0.05):
    """(phi, I) pairs of the whisker on the section psi = 0."""
    d = sol.d
    if which == "u":
        zs = np.linspace(zmin, 1.0 + 0.5 * sol.cfg.tau, n)
    else:
        zs = 1 / np.linspace(zmin, 1.0 + 0.5 * sol.cfg.tau, n)
    rows = []
    th = np.zeros(d)
    for z in zs:
        for it in range(40):
            X = sol.X(np.array([z]), th[None], which)[0].real
            r = th + X[1:]
            if np.max(np.abs(r)) < 1e-13:
                break
            J = np.eye(d)
            for k in range(d):
                e = np.zeros(d)
                e[k] = 1e-6
                Xp = sol.X(np.array([z]), (th + e)[None], which)[0].real
                Xm = sol.X(np.array([z]), (th - e)[None], which)[0].real
                J[:, k] += (Xp[1:] - Xm[1:]) / 2e-6
            th = th - np.linalg.solve(J, r)
        st = sol.state(np.array([z]), th[None], which)[0]
        rows.append((which, float(z), st[0], st[1 + d]))
    return rows
