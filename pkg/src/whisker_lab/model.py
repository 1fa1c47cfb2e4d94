"""The forced pendulum: Hamiltonian, perturbation, vector field, configs.

H = I^2/2 + g^2 cos(phi) + |A|^2/2 - lam f(phi, psi),   lam = eps g^2.

Array convention: vector valued fields are component first, so X has shape
(1+d, ...) with X[0] = Phi and X[1:] = Psi.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .fourier import FrequencyVector, default_frequency
from .series import sincos, stack

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    """c * cos(j phi + q.psi + phase)."""

    j: int
    q: tuple
    c: float
    phase: float = 0.0

    @property
    def k(self):
        return np.array((self.j,) + tuple(self.q), dtype=float)


@dataclass(frozen=True)
class Perturbation:
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ConfigError("perturbation needs at least one term")
        if len({len(t.q) for t in self.terms}) != 1:
            raise ConfigError("all terms must have the same number of rotator angles")

    @classmethod
    def default(cls, d):
        """cos(phi) cos(psi_1) written as two exponentials' worth of cosines."""
        e1 = (1,) + (0,) * (d - 1)
        m1 = (-1,) + (0,) * (d - 1)
        return cls((Term(1, e1, 0.5), Term(1, m1, 0.5)))

    @property
    def d(self):
        return len(self.terms[0].q)

    @property
    def N(self):
        return max(sum(abs(v) for v in t.q) for t in self.terms)

    @property
    def is_even(self):
        return all(abs(np.sin(t.phase)) < 1e-15 for t in self.terms)

    def shifted(self, beta):
        """f(phi, psi + beta)."""
        beta = np.atleast_1d(beta)
        return Perturbation(tuple(Term(t.j, t.q, t.c, t.phase + float(np.dot(t.q, beta))) for t in self.terms))


def _angles(p, phi, psi):
    for t in p.terms:
        arg = t.j * phi + t.phase
        for qi, ps in zip(t.q, psi):
            if qi:
                arg = arg + qi * ps
        yield t, arg


def f_eval(p, phi, psi):
    out = 0.0
    for t, arg in _angles(p, phi, psi):
        out = out + t.c * sincos(arg)[1]
    return out


def grad_f(p, phi, psi):
    """(df/dphi, [df/dpsi_i]) ; psi is a sequence of d components."""
    fphi = 0.0
    fpsi = [0.0] * p.d
    for t, arg in _angles(p, phi, psi):
        s = sincos(arg)[0]
        fphi = fphi - t.c * t.j * s
        for i, qi in enumerate(t.q):
            if qi:
                fpsi[i] = fpsi[i] - t.c * qi * s
    return fphi, fpsi


def hess_f(p, phi, psi):
    """Second derivatives as a (1+d) x (1+d) nested list."""
    n = 1 + p.d
    H = [[0.0] * n for _ in range(n)]
    for t, arg in _angles(p, phi, psi):
        c = sincos(arg)[1]
        k = t.k
        for a in range(n):
            for b in range(n):
                if k[a] and k[b]:
                    H[a][b] = H[a][b] - t.c * k[a] * k[b] * c
    return H


def dnf_contract(p, m, phi, psi, dirs):
    """m-th derivative of grad f contracted with m direction fields.

    dirs is a list of m fields of shape (1+d, ...).  Returns the (1+d)
    components of D^m (grad f)[dirs...], using d^n/dx^n cos(x) = cos(x + n pi/2).
    """
    n = 1 + p.d
    out = [0.0] * n
    for t, arg in _angles(p, phi, psi):
        s, c = sincos(arg)
        r = (m + 1) % 4
        base = (c, -s, -c, s)[r]
        prod = t.c * base
        for x in dirs:
            kx = 0.0
            for a in range(n):
                if t.k[a]:
                    kx = kx + t.k[a] * x[a]
            prod = prod * kx
        for a in range(n):
            if t.k[a]:
                out[a] = out[a] + t.k[a] * prod
    return out


def omega_field(p, g, lam, X, theta):
    """Omega(X) = (g^2 sin Phi + lam f_phi, lam f_psi) at Phi, theta + Psi."""
    Phi = X[0]
    psi = [theta[i] + X[1 + i] for i in range(p.d)]
    fphi, fpsi = grad_f(p, Phi, psi)
    return stack([g**2 * sincos(Phi)[0] + lam * fphi] + [lam * v for v in fpsi])


@dataclass(frozen=True)
class ModelConfig:
    g: float = 1.0
    omega: FrequencyVector = field(default_factory=lambda: default_frequency(1))
    eps: complex = 0.0
    perturbation: Perturbation = field(default_factory=lambda: Perturbation.default(1))
    kmax: int = 12
    n_theta: int | None = None
    eps0: float = 1e-2
    q_check: int = 50
    tol_torus: float = 1e-13
    tol_lin: float = 1e-12
    tol_delta: float = 1e-13
    tol_z: float = 1e-12
    max_iter: int = 60
    k_rg: int | None = None
    z_nodes: int = 48
    tau: float = 0.1
    cauchy_radius: float = 0.025
    cauchy_nodes: int = 64
    panel_order: int = 32
    quad_tol: float = 1e-17
    ball_radius: float = 0.1
    wedge_tau: float = 0.3
    wedge_angle: float = 0.2
    order: int = 3
    workers: int = 1

    @classmethod
    def for_dim(cls, d, **kw):
        """Default frequency and perturbation for d rotators."""
        kw.setdefault("omega", default_frequency(d))
        kw.setdefault("perturbation", Perturbation.default(d))
        return cls(**kw)

    @property
    def d(self):
        return self.omega.d

    @property
    def lam(self):
        return self.eps * self.g**2

    @property
    def is_real(self):
        return np.imag(self.eps) == 0

    def with_eps(self, eps):
        return replace(self, eps=eps)

    def replace(self, **kw):
        return replace(self, **kw)

    def validate(self):
        if not self.g > 0:
            raise ConfigError("g must be positive")
        if self.perturbation.d != self.d:
            raise ConfigError("perturbation acts on %d angles but omega has %d" % (self.perturbation.d, self.d))
        if not abs(self.eps) < self.eps0:
            raise ConfigError("|eps| = %g is not below eps0 = %g" % (abs(self.eps), self.eps0))
        margin, q = self.omega.diophantine_margin(self.q_check)
        if not margin > 1.0:
            raise ConfigError("omega fails the Diophantine check at q=%s (margin %.3g)" % (q, margin))
        if self.kmax < 1 or self.z_nodes < 8:
            raise ConfigError("truncations too small")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        return self

    def to_dict(self):
        return {
            "g": self.g,
            "omega": list(self.omega.omega),
            "nu": self.omega.nu,
            "dio_a": self.omega.a,
            "eps": [float(np.real(self.eps)), float(np.imag(self.eps))],
            "f_terms": [{"j": t.j, "q": list(t.q), "c": t.c, "phase": t.phase} for t in self.perturbation.terms],
            "kmax": self.kmax,
            "z_nodes": self.z_nodes,
            "tau": self.tau,
        }


_SCALAR_KEYS = {
    "kmax", "n_theta", "eps0", "q_check", "tol_torus", "tol_lin", "tol_delta", "tol_z", "max_iter", "k_rg",
    "z_nodes", "tau", "cauchy_radius", "cauchy_nodes", "panel_order", "quad_tol", "ball_radius", "wedge_tau",
    "wedge_angle", "order", "workers",
}


def _parse_eps(v):
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    if isinstance(v, str):
        return complex(v.replace(" ", "").replace("i", "j"))
    return v


def config_from_dict(raw):
    raw = dict(raw)
    try:
        if "omega" in raw:
            omega = FrequencyVector(tuple(raw.pop("omega")), raw.pop("nu", 1.0), raw.pop("dio_a", 1.0))
        else:
            omega = default_frequency(int(raw.pop("d", 1)))
            if "nu" in raw or "dio_a" in raw:
                omega = FrequencyVector(omega.omega, raw.pop("nu", omega.nu), raw.pop("dio_a", omega.a))
        raw.pop("d", None)
        if "f_terms" in raw:
            terms = []
            for t in raw.pop("f_terms"):
                phase = float(t.get("phase", 0.0))
                if t.get("kind", "cos") == "sin":
                    phase -= np.pi / 2
                terms.append(Term(int(t["j"]), tuple(int(v) for v in t["q"]), float(t["c"]), phase))
            pert = Perturbation(tuple(terms))
        else:
            pert = Perturbation.default(omega.d)
        kw = {}
        for key in list(raw):
            if key in ("g", "eps"):
                continue
            if key not in _SCALAR_KEYS:
                raise ConfigError("unknown config key %r" % key)
            kw[key] = raw.pop(key)
        cfg = ModelConfig(g=float(raw.get("g", 1.0)), omega=omega, eps=_parse_eps(raw.get("eps", 0.0)),
                          perturbation=pert, **kw)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("cannot parse %s: %s" % (path, exc)) from exc
    return config_from_dict(raw)


@dataclass(frozen=True)
class PhaseState:
    phi: float
    psi: tuple
    I: float
    A: tuple

    def vector(self):
        return np.concatenate([[self.phi], np.atleast_1d(self.psi), [self.I], np.atleast_1d(self.A)]).astype(float)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        d = (len(v) - 2) // 2
        return cls(v[0], tuple(v[1:1 + d]), v[1 + d], tuple(v[2 + d:]))


def eom_rhs(cfg, s):
    """Time derivative of the state vector (phi, psi, I, A)."""
    v = s.vector() if isinstance(s, PhaseState) else np.asarray(s, dtype=float)
    d = cfg.d
    phi, psi, I, A = v[0], v[1:1 + d], v[1 + d], v[2 + d:]
    lam = np.real(cfg.lam)
    fphi, fpsi = grad_f(cfg.perturbation, phi, list(psi))
    dI = cfg.g**2 * np.sin(phi) + lam * fphi
    dA = lam * np.array(fpsi, dtype=float)
    return np.concatenate([[I], A, [dI], dA])


def energy(cfg, s):
    v = s.vector() if isinstance(s, PhaseState) else np.asarray(s, dtype=float)
    d = cfg.d
    phi, psi, I, A = v[0], v[1:1 + d], v[1 + d], v[2 + d:]
    return 0.5 * I**2 + cfg.g**2 * np.cos(phi) + 0.5 * A @ A - np.real(cfg.lam) * f_eval(cfg.perturbation, phi, list(psi))


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # (n_t, 2+2d)
    energy_drift: float

    def to_csv(self, path, d):
        cols = ["t", "phi"] + ["psi%d" % (i + 1) for i in range(d)] + ["I"] + ["A%d" % (i + 1) for i in range(d)]
        data = np.column_stack([self.t, self.y])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def integrate_orbit(cfg, s0, t0, t1, tol=1e-12, t_eval=None):
    """DOP853 reference integration of the equations of motion (real eps only)."""
    if np.imag(cfg.eps) != 0:
        raise ValueError("orbit integration needs real eps")
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    y0 = s0.vector() if isinstance(s0, PhaseState) else np.asarray(s0, dtype=float)
    sol = solve_ivp(lambda t, y: eom_rhs(cfg, y), (t0, t1), y0, method="DOP853", rtol=tol, atol=tol,
                    t_eval=t_eval, dense_output=False)
    if not sol.success:
        raise RuntimeError("integration failed: %s" % sol.message)
    e = np.array([energy(cfg, y) for y in sol.y.T])
    return Trajectory(sol.t, sol.y.T, float(np.max(np.abs(e - energy(cfg, y0)))))
