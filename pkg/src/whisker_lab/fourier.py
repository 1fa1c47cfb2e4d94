"""Finitely supported Fourier series on the d-torus.

Two representations live here.  `FourierPoly` is the sparse, user facing
object (a map q -> coefficient).  `Modes` is the dense workhorse used by the
solvers: a fixed ordered set of modes |q|_1 <= K together with the uniform
collocation grid used to evaluate nonlinearities.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

DROP_TOL = 1e-16
GOLDEN = (1 + np.sqrt(5.0)) / 2


class AliasingWarning(UserWarning):
    pass


def _lattice(d, kmax):
    """All q in Z^d with |q|_1 <= kmax, sorted by (|q|_1, q)."""
    rng = range(-kmax, kmax + 1)
    qs = [q for q in itertools.product(rng, repeat=d) if sum(map(abs, q)) <= kmax]
    qs.sort(key=lambda q: (sum(map(abs, q)), q))
    return np.array(qs, dtype=int).reshape(-1, d)


@dataclass(frozen=True)
class FrequencyVector:
    """Frequency vector omega with Diophantine data |w.q| > a |q|_1^-nu."""

    omega: tuple
    nu: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in np.atleast_1d(self.omega)))

    @property
    def d(self):
        return len(self.omega)

    @property
    def array(self):
        return np.array(self.omega)

    def dot(self, q):
        return np.asarray(q) @ self.array

    def diophantine_margin(self, q_check=50):
        """Smallest |w.q| |q|_1^nu / a over 0 < |q|_1 <= q_check, and its q."""
        qs = _lattice(self.d, q_check)[1:]
        n1 = np.abs(qs).sum(axis=1)
        vals = np.abs(qs @ self.array) * n1**self.nu / self.a
        i = int(np.argmin(vals))
        return float(vals[i]), tuple(int(v) for v in qs[i])

    def is_diophantine(self, q_check=50):
        return self.diophantine_margin(q_check)[0] > 1.0


def default_frequency(d):
    if d == 1:
        return FrequencyVector((GOLDEN,), nu=1.0, a=1.0)
    if d == 2:
        # |w.q| |q|^nu equals 1 at q=(1,0) for any nu, hence a < 1
        return FrequencyVector((1.0, np.sqrt(2.0)), nu=1.5, a=0.5)
    raise ValueError("no default frequency for d=%d; give omega explicitly" % d)


@dataclass(frozen=True)
class FourierPoly:
    """Sparse Fourier series sum_q c_q e^{i q.theta}, scalar or vector valued."""

    dim: int
    coeffs: dict = field(default_factory=dict)
    arity: int = 1
    real: bool = False

    def __post_init__(self):
        clean = {}
        for q, c in self.coeffs.items():
            q = tuple(int(v) for v in q)
            if len(q) != self.dim:
                raise ValueError("mode %r has wrong dimension" % (q,))
            c = np.array(c, dtype=complex).reshape(self.arity)
            clean[q] = c
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def zero(cls, dim, arity=1):
        return cls(dim, {}, arity, True)

    @classmethod
    def constant(cls, dim, c, arity=1):
        return cls(dim, {(0,) * dim: c}, arity, bool(np.all(np.imag(c) == 0)))

    @classmethod
    def mode(cls, q, c=1.0):
        return cls(len(q), {tuple(q): c}, 1, False)

    @property
    def degree(self):
        return max((sum(map(abs, q)) for q in self.coeffs), default=0)

    def __getitem__(self, q):
        c = self.coeffs.get(tuple(q), np.zeros(self.arity, complex))
        return c[0] if self.arity == 1 else c

    def __len__(self):
        return len(self.coeffs)

    def component(self, i):
        return FourierPoly(self.dim, {q: c[i] for q, c in self.coeffs.items()}, 1, self.real)

    def pruned(self, tol=DROP_TOL):
        return FourierPoly(self.dim, {q: c for q, c in self.coeffs.items() if np.max(np.abs(c)) >= tol},
                           self.arity, self.real)

    def truncated(self, kmax):
        return FourierPoly(self.dim, {q: c for q, c in self.coeffs.items() if sum(map(abs, q)) <= kmax},
                           self.arity, self.real)

    def is_conjugate_symmetric(self, tol=1e-14):
        for q, c in self.coeffs.items():
            mq = tuple(-v for v in q)
            if np.max(np.abs(self[mq] - np.conj(c))) > tol * max(1.0, np.max(np.abs(c))):
                return False
        return True

    def __call__(self, theta):
        """Evaluate at angles theta of shape (..., d)."""
        theta = np.asarray(theta, dtype=complex)
        if self.dim == 1 and (theta.ndim == 0 or theta.shape[-1] != 1):
            theta = theta[..., None]
        out = np.zeros(theta.shape[:-1] + (self.arity,), complex)
        for q, c in self.coeffs.items():
            out += np.exp(1j * (theta @ np.array(q, float)))[..., None] * c
        if self.arity == 1:
            out = out[..., 0]
        return out.real if self.real else out

    def scaled(self, s):
        return FourierPoly(self.dim, {q: s * c for q, c in self.coeffs.items()}, self.arity,
                           self.real and np.isrealobj(s))

    def to_json(self):
        rows = []
        for q in sorted(self.coeffs, key=lambda q: (sum(map(abs, q)), q)):
            c = self.coeffs[q]
            if self.arity == 1:
                rows.append({"q": list(q), "re": float(c[0].real), "im": float(c[0].imag)})
            else:
                rows.append({"q": list(q), "re": [float(v) for v in c.real], "im": [float(v) for v in c.imag]})
        return rows

    @classmethod
    def from_json(cls, rows, dim, arity=1, real=False):
        coeffs = {}
        for r in rows:
            coeffs[tuple(r["q"])] = np.asarray(r["re"]) + 1j * np.asarray(r["im"])
        return cls(dim, coeffs, arity, real)


def _check(a, b):
    if a.dim != b.dim or a.arity != b.arity:
        raise ValueError("dimension/arity mismatch: (%d,%d) vs (%d,%d)" % (a.dim, a.arity, b.dim, b.arity))


def fp_add(a, b):
    _check(a, b)
    out = dict(a.coeffs)
    for q, c in b.coeffs.items():
        out[q] = out[q] + c if q in out else c
    return FourierPoly(a.dim, out, a.arity, a.real and b.real)


def fp_mul(a, b):
    """Exact convolution.  At least one factor must be scalar."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    if a.arity != 1 and b.arity != 1:
        raise ValueError("fp_mul needs a scalar factor")
    arity = max(a.arity, b.arity)
    out = {}
    for qa, ca in a.coeffs.items():
        for qb, cb in b.coeffs.items():
            q = tuple(x + y for x, y in zip(qa, qb))
            v = ca * cb
            out[q] = out[q] + v if q in out else v
    return FourierPoly(a.dim, out, arity, a.real and b.real)


def _diag(F, symbol):
    out = {}
    for q, c in F.coeffs.items():
        out[q] = symbol(np.array(q)) * c
    return out


def op_D(omega, F):
    out = _diag(F, lambda q: 1j * omega.dot(q))
    return FourierPoly(F.dim, {q: c for q, c in out.items() if any(q)}, F.arity, F.real)


def op_inv_D2_minus_g2(omega, g, F):
    return FourierPoly(F.dim, _diag(F, lambda q: 1.0 / (-omega.dot(q) ** 2 - g**2)), F.arity, F.real)


def op_inv_shifted_sq(omega, gamma, F):
    def sym(q):
        den = 1j * omega.dot(q) + gamma
        if abs(den) < 1e-12:
            raise ZeroDivisionError("|i w.q + gamma| < 1e-12 at q=%s" % (tuple(q),))
        return den**-2
    return FourierPoly(F.dim, _diag(F, sym), F.arity, F.real and np.isrealobj(gamma))


def op_translate(beta, F):
    beta = np.atleast_1d(np.asarray(beta))
    out = _diag(F, lambda q: np.exp(1j * (q @ beta)))
    return FourierPoly(F.dim, out, F.arity, F.real and np.isrealobj(beta))


def norm_sigma(F, sigma):
    return float(sum(np.abs(c).sum() * np.exp(sigma * sum(map(abs, q))) for q, c in F.coeffs.items()))


def nonlinear_compose(fn, F, grid_size, kmax=None, expected_degree=None):
    """fn(F) by collocation on a uniform grid of grid_size points per angle."""
    kmax = F.degree if kmax is None else kmax
    deg = kmax if expected_degree is None else expected_degree
    if grid_size < 2 * deg + 1:
        warnings.warn("grid of %d points aliases degree %d" % (grid_size, deg), AliasingWarning)
    modes = Modes(F.dim, max(kmax, F.degree), grid_size)
    vals = fn(modes.to_grid(modes.dense(F)))
    G = modes.sparse(modes.from_grid(vals), real=F.real).truncated(kmax)
    return G.pruned()


class Modes:
    """Dense mode set |q|_1 <= kmax with an n^d collocation grid."""

    def __init__(self, d, kmax, n=None):
        self.d = d
        self.kmax = kmax
        if n is None:
            n = 8
            while n < 2 * kmax + 2:
                n *= 2
        self.n = n
        self.q = _lattice(d, kmax)
        self.size = len(self.q)
        self.index = {tuple(q): i for i, q in enumerate(self.q)}
        self.zero = self.index[(0,) * d]
        self.neg = np.array([self.index[tuple(-q)] for q in self.q])
        self._slot = tuple((self.q % n).T)
        ax = 2 * np.pi * np.arange(n) / n
        self.theta = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1)

    def divisors(self, omega):
        return self.q @ omega.array

    def dense(self, F):
        out = np.zeros((F.arity, self.size), complex)
        for q, c in F.coeffs.items():
            i = self.index.get(q)
            if i is not None:
                out[:, i] = c
        return out[0] if F.arity == 1 else out

    def sparse(self, c, real=False, tol=0.0):
        c = np.asarray(c)
        arity = 1 if c.ndim == 1 else c.shape[0]
        cc = c.reshape(arity, self.size)
        coeffs = {tuple(q): cc[:, i] for i, q in enumerate(self.q) if np.max(np.abs(cc[:, i])) > tol}
        return FourierPoly(self.d, coeffs, arity, real)

    def to_grid(self, c):
        """Coefficients (..., M) -> grid values (..., n, ..., n)."""
        c = np.asarray(c)
        lead = c.shape[:-1]
        box = np.zeros(lead + (self.n,) * self.d, complex)
        box[(Ellipsis,) + self._slot] = c
        axes = tuple(range(-self.d, 0))
        return np.fft.ifftn(box, axes=axes) * self.n**self.d

    def from_grid(self, v):
        axes = tuple(range(-self.d, 0))
        box = np.fft.fftn(v, axes=axes) / self.n**self.d
        return box[(Ellipsis,) + self._slot]

    def mult_matrix(self, values):
        """Galerkin matrix of multiplication by grid values: T[p, q] = a^((p - q) mod n)."""
        axes = tuple(range(-self.d, 0))
        ahat = np.fft.fftn(values, axes=axes) / self.n**self.d
        diff = (self.q[:, None, :] - self.q[None, :, :]) % self.n
        return ahat[(Ellipsis,) + tuple(diff[..., k] for k in range(self.d))]

    def evaluate(self, c, theta):
        """Sum of coefficients (..., M) at angles theta (P, d) -> (..., P)."""
        theta = np.asarray(theta, dtype=complex).reshape(-1, self.d)
        E = np.exp(1j * theta @ self.q.T.astype(float))
        return np.asarray(c) @ E.T

    def conj_sym(self, c):
        """Project coefficients onto the real-valued subspace."""
        return 0.5 * (c + np.conj(c[..., self.neg]))
