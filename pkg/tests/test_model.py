import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from whisker_lab.fourier import FrequencyVector
from whisker_lab.model import (ConfigError, ModelConfig, Perturbation, PhaseState, Term, config_from_dict,
                               energy, eom_rhs, f_eval, grad_f, integrate_orbit, load_config, omega_field)

angles = st.floats(-10, 10, allow_nan=False)


def default(d=1, eps=0.0):
    return ModelConfig.for_dim(d, eps=eps)


def test_f_default_at_origin():
    assert f_eval(Perturbation.default(1), 0.0, [0.0]) == pytest.approx(1.0)
    assert f_eval(Perturbation.default(2), 0.3, [0.2, 5.0]) == pytest.approx(np.cos(0.3) * np.cos(0.2))


@settings(max_examples=50, deadline=None)
@given(angles, angles, angles)
def test_f_even(phi, p1, p2):
    p = Perturbation((Term(1, (1, 0), 0.5), Term(2, (-1, 1), 0.3), Term(0, (0, 2), -1.2)))
    assert f_eval(p, phi, [p1, p2]) - f_eval(p, -phi, [-p1, -p2]) == 0.0


def test_grad_vs_differences(rng):
    p = Perturbation((Term(1, (1, 0), 0.5), Term(2, (-1, 1), 0.3)))
    h = 1e-6
    for _ in range(100):
        phi, psi = rng.uniform(-4, 4), list(rng.uniform(-4, 4, 2))
        fphi, fpsi = grad_f(p, phi, psi)
        d_phi = (f_eval(p, phi + h, psi) - f_eval(p, phi - h, psi)) / (2 * h)
        assert abs(fphi - d_phi) < 1e-9
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            d_psi = (f_eval(p, phi, list(psi + e)) - f_eval(p, phi, list(psi - e))) / (2 * h)
            assert abs(fpsi[i] - d_psi) < 1e-9


def test_degree_N():
    assert Perturbation.default(2).N == 1
    assert Perturbation((Term(1, (2, -1), 1.0), Term(0, (1, 0), 1.0))).N == 3


def test_omega_field():
    cfg = default(1)
    out = omega_field(cfg.perturbation, cfg.g, cfg.lam, [0.0, 0.0], [0.4])
    assert np.allclose(out, 0)
    out = omega_field(cfg.perturbation, cfg.g, cfg.lam, [np.pi / 2, 0.0], [0.4])
    assert out[0] == pytest.approx(cfg.g**2) and out[1] == 0
    # default f: cos(phi) cos(psi) -> f_phi = -sin phi cos psi, f_psi = -cos phi sin psi
    cfg = default(1, 1e-3)
    Phi, Psi, th = 0.7, 0.2, 1.1
    out = omega_field(cfg.perturbation, cfg.g, cfg.lam, [Phi, Psi], [th])
    ref = [cfg.g**2 * np.sin(Phi) - cfg.lam * np.sin(Phi) * np.cos(th + Psi),
           -cfg.lam * np.cos(Phi) * np.sin(th + Psi)]
    assert np.allclose(out, ref, atol=1e-14, rtol=0)


def test_eom_rhs():
    cfg = default(1)
    assert np.allclose(eom_rhs(cfg, PhaseState(0.0, (0.3,), 0.0, (cfg.omega.omega[0],)))[[0, 2]], 0)
    # separatrix at t = 0: phi = Phi0(1) = pi, I = g * 1 * dPhi0/dz(1) = 2 g
    s = PhaseState(np.pi, (0.0,), 2 * cfg.g, (cfg.omega.omega[0],))
    r = eom_rhs(cfg, s)
    assert r[0] == pytest.approx(2 * cfg.g)
    # d/dt of I = d^2/dt^2 4 arctan e^{gt} = g^2 sin(phi) = 0 at phi = pi
    assert abs(r[2]) < 1e-15


def test_energy_conserved_by_rhs(rng):
    cfg = default(2, 5e-3)
    for _ in range(10):
        v = rng.normal(size=6)
        h = 1e-6
        dH = (energy(cfg, v + h * eom_rhs(cfg, v)) - energy(cfg, v - h * eom_rhs(cfg, v))) / (2 * h)
        assert abs(dH) < 1e-9


def test_energy_values():
    cfg = default(1)
    assert energy(cfg, PhaseState(0.0, (0.0,), 0.0, (0.0,))) == pytest.approx(cfg.g**2)
    for z in (0.1, 1.0, 3.0):
        phi = 4 * np.arctan(z)
        I = cfg.g * z * 4 / (1 + z * z)
        assert energy(cfg, PhaseState(phi, (0.0,), I, (0.0,))) == pytest.approx(cfg.g**2, abs=1e-12)
    cfg = default(1, 1e-3)
    s = PhaseState(0.4, (1.0,), 0.5, (0.2,))
    ref = 0.125 + np.cos(0.4) + 0.02 - cfg.lam * np.cos(0.4) * np.cos(1.0)
    assert energy(cfg, s) == pytest.approx(ref, abs=1e-15)


def test_integrate_separatrix():
    cfg = default(1)
    g, om = cfg.g, cfg.omega.omega[0]
    t0 = -2.0
    z = np.exp(g * t0)
    s0 = PhaseState(4 * np.arctan(z), (om * t0,), g * z * 4 / (1 + z * z), (om,))
    ts = np.linspace(t0, t0 + 5 / g, 21)
    tr = integrate_orbit(cfg, s0, t0, t0 + 5 / g, tol=1e-13, t_eval=ts)
    assert np.max(np.abs(tr.y[:, 0] - 4 * np.arctan(np.exp(g * ts)))) < 1e-9
    assert np.max(np.abs(tr.y[:, 1] - om * ts)) < 1e-9


def test_integrate_libration_and_reversal():
    cfg = default(1, 2e-3)
    s0 = PhaseState(np.pi + 0.5, (0.1,), 0.0, (cfg.omega.omega[0],))
    tr = integrate_orbit(cfg, s0, 0.0, 10.0, tol=1e-13)
    assert tr.energy_drift < 1e-11
    y1 = tr.y[-1].copy()
    y1[2:] *= -1  # reverse the momenta and run forward again
    back = integrate_orbit(cfg, y1, 0.0, 10.0, tol=1e-13).y[-1]
    back[2:] *= -1
    assert np.max(np.abs(back - s0.vector())) < 1e-8


def test_integrate_rejects():
    cfg = default(1)
    with pytest.raises(ValueError):
        integrate_orbit(cfg, np.zeros(4), 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate_orbit(cfg.with_eps(1e-3j), np.zeros(4), 0.0, 1.0)


def test_trajectory_csv(tmp_path):
    cfg = default(2)
    tr = integrate_orbit(cfg, np.zeros(6) + 0.1, 0.0, 0.5)
    p = tmp_path / "t.csv"
    tr.to_csv(p, 2)
    head = p.read_text().splitlines()[0]
    assert head == "t,phi,psi1,psi2,I,A1,A2"


def test_config_loading(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('g = 1.0\nomega = [1.618033988749895]\neps = 1e-3\nf_terms = [{j = 1, q = [1], c = 1.0}]\n')
    cfg = load_config(p)
    assert cfg.eps == 1e-3 and cfg.perturbation.terms[0].q == (1,)
    q = tmp_path / "c.json"
    q.write_text(json.dumps({"d": 2, "eps": "1e-3+2e-4i"}))
    cfg = load_config(q)
    assert cfg.d == 2 and cfg.eps == complex(1e-3, 2e-4)


@pytest.mark.parametrize("raw", [
    {"omega": [1.0, 2.0]},                    # rational
    {"omega": [1.0, 1.0]},
    {"eps": 0.5},                             # above eps0
    {"g": -1.0},
    {"bogus_key": 1},
    {"tau": 1.5},
])
def test_config_rejections(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_config_round_trip():
    cfg = default(2, 1e-3)
    back = config_from_dict({k: v for k, v in cfg.to_dict().items()})
    assert back.omega == cfg.omega and back.eps == cfg.eps and back.perturbation == cfg.perturbation
