"""Truncated power series in the coupling, with array-valued coefficients.

A `Series` holds c[0..L] and stands for sum_k eps^k c[k].  The arithmetic
mirrors numpy closely enough that the pointwise nonlinearities in `model`
run unchanged on plain arrays and on series.
"""
from __future__ import annotations

import numpy as np


class Series:
    __array_priority__ = 100
    __array_ufunc__ = None

    def __init__(self, data):
        self.data = np.asarray(data, dtype=complex)

    @property
    def order(self):
        return self.data.shape[0] - 1

    @classmethod
    def const(cls, value, order):
        value = np.asarray(value, dtype=complex)
        data = np.zeros((order + 1,) + value.shape, complex)
        data[0] = value
        return cls(data)

    @classmethod
    def eps(cls, order, scale=1.0):
        """The series scale * eps."""
        data = np.zeros(order + 1, complex)
        if order >= 1:
            data[1] = scale
        return cls(data)

    def _lift(self, other):
        if isinstance(other, Series):
            return other
        return Series.const(other, self.order)

    @staticmethod
    def _pad(a, ndim):
        # insert singleton axes after the order axis so coefficient shapes align on the right
        return a.reshape(a.shape[:1] + (1,) * (ndim - a.ndim + 1) + a.shape[1:])

    def _bcast(self, a, b):
        """Broadcast coefficient shapes of two series."""
        shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
        a, b = self._pad(a, len(shape)), self._pad(b, len(shape))
        return (np.broadcast_to(a, a.shape[:1] + shape), np.broadcast_to(b, b.shape[:1] + shape))

    def _scale(self, other, op):
        o = np.asarray(other)
        shape = np.broadcast_shapes(self.data.shape[1:], o.shape)
        return Series(op(self._pad(self.data, len(shape)), o[None]))

    def __add__(self, other):
        o = self._lift(other)
        a, b = self._bcast(self.data, o.data)
        return Series(a + b)

    __radd__ = __add__

    def __neg__(self):
        return Series(-self.data)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Series):
            return self._scale(other, np.multiply)
        a, b = self._bcast(self.data, other.data)
        out = np.zeros_like(a, dtype=complex)
        for k in range(self.order + 1):
            for i in range(k + 1):
                out[k] += a[i] * b[k - i]
        return Series(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Series):
            raise NotImplementedError
        return self._scale(other, np.divide)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Series(self.data[(slice(None),) + idx])

    def __len__(self):
        return self.data.shape[1]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def shape(self):
        return self.data.shape[1:]

    def map(self, fn):
        """Apply a linear map to every coefficient."""
        return Series(np.stack([fn(c) for c in self.data]))

    def sincos(self):
        a = self.data
        S = np.zeros_like(a)
        C = np.zeros_like(a)
        S[0], C[0] = np.sin(a[0]), np.cos(a[0])
        for k in range(1, self.order + 1):
            for j in range(1, k + 1):
                S[k] += j * a[j] * C[k - j]
                C[k] -= j * a[j] * S[k - j]
            S[k] /= k
            C[k] /= k
        return Series(S), Series(C)

    def sin(self):
        return self.sincos()[0]

    def cos(self):
        return self.sincos()[1]

    def exp(self):
        a = self.data
        E = np.zeros_like(a)
        E[0] = np.exp(a[0])
        for k in range(1, self.order + 1):
            for j in range(1, k + 1):
                E[k] += j * a[j] * E[k - j]
            E[k] /= k
        return Series(E)

    def reciprocal(self):
        a = self.data
        R = np.zeros_like(a)
        R[0] = 1 / a[0]
        for k in range(1, self.order + 1):
            acc = 0
            for j in range(1, k + 1):
                acc = acc + a[j] * R[k - j]
            R[k] = -acc * R[0]
        return Series(R)

    def arctan(self):
        a = self.data
        c = (1 + self * self).reciprocal().data
        B = np.zeros_like(a)
        B[0] = np.arctan(a[0])
        for k in range(1, self.order + 1):
            for j in range(1, k + 1):
                B[k] += j * a[j] * c[k - j]
            B[k] /= k
        return Series(B)

    def __pow__(self, n):
        out = Series.const(np.ones(self.shape), self.order)
        for _ in range(int(n)):
            out = out * self
        return out

    def __call__(self, eps):
        p = np.asarray(eps) ** np.arange(self.order + 1)
        return np.tensordot(p, self.data, axes=(0, 0))


def sin(x):
    return x.sin() if isinstance(x, Series) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Series) else np.cos(x)


def sincos(x):
    return x.sincos() if isinstance(x, Series) else (np.sin(x), np.cos(x))


def stack(items):
    """np.stack for arrays or series (stacking along the first coefficient axis)."""
    if any(isinstance(x, Series) for x in items):
        L = max(x.order for x in items if isinstance(x, Series))
        items = [x if isinstance(x, Series) else Series.const(x, L) for x in items]
        shape = np.broadcast_shapes(*[x.shape for x in items])
        return Series(np.stack([np.broadcast_to(Series._pad(x.data, len(shape)), x.data.shape[:1] + shape)
                                for x in items], axis=1))
    items = np.broadcast_arrays(*[np.asarray(x) for x in items])
    return np.stack(items)
