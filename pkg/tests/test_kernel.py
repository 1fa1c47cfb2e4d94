import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from whisker_lab.fourier import Modes
from whisker_lab.kernel import (DeltaTwo, GridFunction, KernelParams, K_inverse_apply, K_phi_kernel, K_psi_kernel,
                                PoleError, ZGrid, dphi0, k_inverse_fn, phi0, residual_characteristic, taylor01,
                                time_reversal, wronskian_funcs)

G = 1.0
OM = (np.sqrt(5) - 1) / 2 + 1.0


def test_phi0_values():
    assert phi0(0.0) == 0
    assert phi0(1.0) == pytest.approx(np.pi, abs=1e-15)
    assert phi0(1e8) == pytest.approx(2 * np.pi, abs=1e-7)
    with pytest.raises(PoleError):
        phi0(1j)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_phi0_reversal(z):
    # Phi0(1/z) = 2 pi - Phi0(z) for z > 0, so the separatrix is symmetric under T
    zr, th = time_reversal(z, np.array([0.3]))
    assert phi0(zr) == pytest.approx(2 * np.pi - phi0(z), abs=1e-13)
    assert th[0] == -0.3


def test_time_reversal_zero():
    with pytest.raises(ZeroDivisionError):
        time_reversal(0.0, [0.0])


def test_phi0_pendulum():
    # z dPhi0/dz along z = e^{g t} solves the pendulum: (d/dt)^2 Phi0 = g^2 sin Phi0
    g = 0.8
    t = np.linspace(-3, 3, 13)
    h = 1e-3
    f = lambda t: phi0(np.exp(g * t))
    d2 = (f(t + h) - 2 * f(t) + f(t - h)) / h**2
    assert np.max(np.abs(d2 - g * g * np.sin(f(t)))) < 1e-6
    assert np.allclose(dphi0(0.5), 4 / 1.25)


@pytest.mark.parametrize("gamma", [1.0, 0.7, 1.3 + 0.05j])
def test_wronskian(gamma):
    W = wronskian_funcs(gamma)
    t = np.linspace(-4, 4, 17)
    det = W["u1"](t) * W["du2"](t) - W["u2"](t) * W["du1"](t)
    assert np.max(np.abs(det - 1)) < 1e-13
    # both solve u'' = gamma^2 cos(Phi0(e^{gamma t})) u
    h = 1e-3
    for u in (W["u1"], W["u2"]):
        d2 = (u(t + h) - 2 * u(t) + u(t - h)) / h**2
        pot = gamma**2 * np.cos(phi0(np.exp(gamma * t)))
        assert np.max(np.abs(d2 - pot * u(t))) < 1e-5


def test_z_forms_match_time_forms():
    gamma = 0.9
    W = wronskian_funcs(gamma)
    t = np.linspace(-2, 2, 9)
    z = np.exp(gamma * t)
    assert np.allclose(W["W_phi1"](z), W["u1"](t), atol=1e-14)
    assert np.allclose(W["W_phi2"](z), W["u2"](t), atol=1e-14)


def test_kernel_values():
    z = np.linspace(0.1, 1.1, 7)
    assert np.all(K_phi_kernel(G, 0.0, z) == 0)
    assert K_psi_kernel(-1.0) == 1
    # dK/ds at s = 0 is -1 (the Green function jump)
    h = 1e-5
    d = (K_phi_kernel(G, h, z) - K_phi_kernel(G, -h, z)) / (2 * h)
    assert np.allclose(d, -1, atol=1e-8)


def test_kernel_even_in_z():
    s = np.linspace(-5, 0, 11)
    for z in (0.3, 0.9 + 0.1j):
        assert np.allclose(K_phi_kernel(G, s, z), K_phi_kernel(G, s, -z), atol=0, rtol=1e-14)


def test_kernel_vs_wronskian_form():
    # the log-free kernel equals W2(z) W1(zE) - W1(z) W2(zE)
    W = wronskian_funcs(G)
    s = np.linspace(-3, -0.1, 8)
    z = 0.7
    zE = z * np.exp(G * s)
    ref = W["W_phi2"](z) * W["W_phi1"](zE) - W["W_phi1"](z) * W["W_phi2"](zE)
    assert np.allclose(K_phi_kernel(G, s, z), ref, atol=1e-13)


def test_kernel_pole():
    with pytest.raises(PoleError):
        K_phi_kernel(G, 0.0, 1j)


def test_nodes_cover_range():
    p = KernelParams(G, (OM,))
    s, w = p.nodes()
    # panels reach at least down to s_min, where e^{2 gamma s} is below quad_tol
    assert s.max() <= 0 and w.sum() >= -p.s_min
    assert np.exp(2 * s.min()) < p.quad_tol
    assert p.s_min == pytest.approx(np.log(1e-17))


def _inverse(params, wq, ht, z, theta, refine=1):
    out = k_inverse_fn(params, wq, ht, z, refine)  # (P, 2, M)
    E = np.exp(1j * np.asarray(theta).reshape(len(z), -1) @ np.array([[-1.0, 0.0, 1.0]]))
    return (z**2)[:, None] * np.einsum("pcm,pm->pc", out, E)


def test_psi_power_round_trip():
    # L^2 z^2 = 4 gamma^2 z^2, so the inverse of z^2 is z^2 / (4 gamma^2)
    for gamma in (1.0, 0.6, 1.2 + 0.1j):
        params = KernelParams(gamma, (OM,))
        wq = np.array([0.0])
        ht = lambda pts: np.ones((len(pts), 2, 1), complex)
        z = np.array([0.3, 0.9, 1.1])
        out = k_inverse_fn(params, wq, ht, z)
        assert np.allclose(out[:, 1, 0], 1 / (4 * gamma**2), rtol=1e-13)


@pytest.mark.parametrize("gamma", [1.0, 0.8 + 0.05j])
def test_inverse_satisfies_pde(gamma):
    params = KernelParams(gamma, (OM,))
    wq = np.array([-OM, 0.0, OM])
    coef = np.array([0.3, 1.0, 0.3 + 0.1j])

    def ht(pts):
        pts = np.asarray(pts)
        base = np.exp(-pts**2)[:, None] * coef[None, :]
        return np.stack([base, 0.5 * base], axis=1)

    def rhs(z, theta):
        z = np.asarray(z)
        E = np.exp(1j * theta.reshape(len(z), 1) * np.array([[-1.0, 0.0, 1.0]]))
        h = (z**2)[:, None] * np.einsum("pcm,pm->pc", ht(z), E)
        F = _inverse(params, wq, ht, z, theta)
        h[:, 0] += gamma**2 * np.cos(phi0(z)) * F[:, 0]
        return h

    F = lambda z, th: _inverse(params, wq, ht, np.asarray(z), th)
    z = np.array([0.2, 0.5, 0.9, 1.05])
    theta = np.array([[0.1], [1.0], [2.0], [4.0]])
    r = residual_characteristic(gamma, (OM,), F, rhs, z, theta, h=2e-2)
    assert r < 1e-6


def test_quadrature_refinement():
    params = KernelParams(G, (OM,))
    wq = np.array([OM])
    ht = lambda pts: np.stack([np.cos(pts)[:, None], np.sin(pts)[:, None] + 1], axis=1).astype(complex)
    z = np.array([0.4, 1.0])
    a = k_inverse_fn(params, wq, ht, z)
    b = k_inverse_fn(params, wq, ht, z, refine=3)
    assert np.max(np.abs(a - b)) < 1e-13


def test_grid_inverse_matches_pointwise():
    m = Modes(1, 1)
    grid = ZGrid.real(0.1, 32)
    params = KernelParams(G, (OM,))
    data = np.zeros((grid.n, 2, m.size), complex)
    data[:, 0, m.zero] = 1 / (1 + grid.z**2)
    data[:, 1, m.index[(1,)]] = np.exp(grid.z)
    h = GridFunction(grid, m, data, True)
    out = K_inverse_apply(params, h)
    wq = m.q @ np.array([OM])
    ht = lambda pts: np.stack([np.where(m.q[:, 0] == 0, 1, 0)[None, :] / (1 + pts[:, None] ** 2),
                               np.where(m.q[:, 0] == 1, 1, 0)[None, :] * np.exp(pts)[:, None]], axis=1)
    ref = k_inverse_fn(params, wq, ht, grid.z)
    # differs only by the Chebyshev interpolation of the samples along each characteristic
    assert np.max(np.abs(out.data - ref)) < 1e-10
    with pytest.raises(ValueError):
        K_inverse_apply(params, GridFunction(grid, m, data, False))


def test_grid_interp_and_diff():
    grid = ZGrid(-1.1, 1.1, 40)
    f = np.exp(grid.z) * np.cos(grid.z)
    zq = np.array([0.123, -0.77, 1.05])
    assert np.allclose(grid.interp_matrix(zq) @ f, np.exp(zq) * np.cos(zq), atol=1e-13)
    df = grid.diff_matrix() @ f
    assert np.allclose(df, np.exp(grid.z) * (np.cos(grid.z) - np.sin(grid.z)), atol=1e-10)
    assert grid.contains(0.3) and not grid.contains(1.3)


def test_delta_two():
    d = DeltaTwo(np.exp)
    z = np.array([1e-3, 0.01, 0.5, 1.0, 0.7 + 0.2j])
    from math import factorial
    ref = sum(z**k / factorial(k + 2) for k in range(30))
    assert np.allclose(d(z), ref, atol=1e-12, rtol=0)
    assert d(np.array([0.0]))[0] == pytest.approx(0.5, abs=1e-14)


def test_taylor01():
    a0, a1 = taylor01(lambda z: np.sin(z) + 2, center=0.3)
    assert a0 == pytest.approx(np.sin(0.3) + 2, abs=1e-14)
    assert a1 == pytest.approx(np.cos(0.3), abs=1e-13)


def test_residual_characteristic_known_solution():
    # F = z^2 cos(theta): L F = (i... ) check L^2 F for real angles numerically
    gamma = 1.0
    F = lambda z, th: (z**2 * np.cos(th[:, 0]))[:, None]
    # L^2 (z^2 e^{+-i theta}) = (2 gamma +- i omega)^2 z^2 e^{+-i theta}
    def rhs(z, th):
        a, b = (2 * gamma + 1j * OM) ** 2, (2 * gamma - 1j * OM) ** 2
        return (z**2 * (a * np.exp(1j * th[:, 0]) + b * np.exp(-1j * th[:, 0])) / 2)[:, None]
    z = np.array([0.3, 0.8])
    th = np.array([[0.5], [2.0]])
    assert residual_characteristic(gamma, (OM,), F, rhs, z, th) < 1e-8
    with pytest.raises(ArithmeticError):
        residual_characteristic(gamma, (OM,), F, lambda z, t: 0 * F(z, t), z, th, h=1e-2, richardson_tol=1e-30)
