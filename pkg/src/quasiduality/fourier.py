"""Finite Fourier series on R/(period·Z) with holomorphic evaluation.

A series stores coefficients c_k for k = kmin .. kmin+M-1 along the last
axis; leading axes hold the value shape (scalar, vector or 2×2 matrix).
Evaluation at complex z uses the holomorphic extension
f(z) = Σ c_k e^{2πikz/period}.
"""

from __future__ import annotations

import numpy as np

from . import mat2

STRIP_POINTS = 512
_CHUNK = 1 << 21


class FourierSeries:
    __slots__ = ("coef", "kmin", "period")

    def __init__(self, coef, kmin: int = 0, period: float = 1.0):
        coef = np.array(coef, dtype=complex)
        if coef.ndim == 0:
            coef = coef.reshape(1)
        self.coef = coef
        self.kmin = int(kmin)
        self.period = float(period)

    # -- basic properties ----------------------------------------------------
    @property
    def shape(self):
        return self.coef.shape[:-1]

    @property
    def kmax(self) -> int:
        return self.kmin + self.coef.shape[-1] - 1

    @property
    def modes(self):
        return np.arange(self.kmin, self.kmax + 1)

    def coefficient(self, k: int):
        i = int(k) - self.kmin
        if 0 <= i < self.coef.shape[-1]:
            return self.coef[..., i]
        return np.zeros(self.shape, dtype=complex)

    @property
    def mean(self):
        return self.coefficient(0)

    def essential_degree(self, tol: float = 0.0) -> int:
        """Length b − a of the smallest mode interval [a, b] carrying coefficients above ``tol`` (relative)."""
        mag = np.abs(self.coef).reshape(-1, self.coef.shape[-1]).max(axis=0)
        if mag.max() == 0:
            return 0
        nz = np.nonzero(mag > tol * mag.max())[0]
        return int(nz[-1] - nz[0])

    def __repr__(self):
        return f"FourierSeries(shape={self.shape}, modes=[{self.kmin},{self.kmax}], period={self.period})"

    # -- evaluation ----------------------------------------------------------
    def __call__(self, z):
        z = np.asarray(z)
        flat = z.reshape(-1).astype(complex)
        c = self.coef.reshape(-1, self.coef.shape[-1]).T
        step = max(1, _CHUNK // c.shape[0])
        vals = np.empty((flat.size, c.shape[1]), dtype=complex)
        w = 2j * np.pi / self.period
        for s in range(0, flat.size, step):
            vals[s:s + step] = np.exp(w * np.outer(flat[s:s + step], self.modes)) @ c
        return vals.reshape(z.shape + self.shape)

    # -- transformations -----------------------------------------------------
    def copy_with(self, coef, kmin=None):
        return FourierSeries(coef, self.kmin if kmin is None else kmin, self.period)

    def shift(self, a: float) -> "FourierSeries":
        """x ↦ f(x + a)."""
        ph = np.exp((2j * np.pi / self.period) * self.modes * a)
        return self.copy_with(self.coef * ph)

    def conj(self) -> "FourierSeries":
        """Holomorphic extension of the real-line conjugate: z ↦ conj(f(conj z))."""
        return FourierSeries(np.conj(self.coef[..., ::-1]), -self.kmax, self.period)

    def truncate(self, kmin: int, kmax: int) -> "FourierSeries":
        kmin, kmax = int(kmin), int(kmax)
        out = np.zeros(self.shape + (kmax - kmin + 1,), dtype=complex)
        lo, hi = max(kmin, self.kmin), min(kmax, self.kmax)
        if lo <= hi:
            out[..., lo - kmin:hi - kmin + 1] = self.coef[..., lo - self.kmin:hi - self.kmin + 1]
        return FourierSeries(out, kmin, self.period)

    def trimmed(self, tol: float = 0.0) -> "FourierSeries":
        """Drop leading/trailing modes with all coefficients ≤ tol."""
        mag = np.abs(self.coef).reshape(-1, self.coef.shape[-1]).max(axis=0)
        nz = np.nonzero(mag > tol)[0]
        if nz.size == 0:
            return FourierSeries(np.zeros(self.shape + (1,)), 0, self.period)
        return FourierSeries(self.coef[..., nz[0]:nz[-1] + 1], self.kmin + nz[0], self.period)

    def map_coef(self, fn) -> "FourierSeries":
        return self.copy_with(fn(self.coef))

    def _aligned(self, other: "FourierSeries"):
        lo = min(self.kmin, other.kmin)
        hi = max(self.kmax, other.kmax)
        return self.truncate(lo, hi).coef, other.truncate(lo, hi).coef, lo

    def __add__(self, other):
        if isinstance(other, FourierSeries):
            a, b, lo = self._aligned(other)
            return FourierSeries(a + b, lo, self.period)
        return self + constant(np.broadcast_to(np.asarray(other, dtype=complex), self.shape), self.period)

    __radd__ = __add__

    def __neg__(self):
        return self.copy_with(-self.coef)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FourierSeries):
            return convolve(self, other)
        return self.copy_with(self.coef * other)

    __rmul__ = __mul__

    # -- construction --------------------------------------------------------
    @classmethod
    def from_samples(cls, values, period: float = 1.0, tol: float = 0.0) -> "FourierSeries":
        """Coefficients from samples at x_j = j·period/n, j < n (values axis 0).

        Modes -n/2 .. n/2-1 are kept (n even); the Nyquist mode is dropped.
        """
        values = np.asarray(values, dtype=complex)
        n = values.shape[0]
        c = np.fft.fft(values, axis=0) / n
        c = np.moveaxis(np.fft.fftshift(c, axes=0), 0, -1)
        kmin = -(n // 2)
        if n % 2 == 0:
            c = c[..., 1:]
            kmin += 1
        out = cls(c, kmin, period)
        return out.trimmed(tol * np.abs(c).max()) if tol > 0 else out

    @classmethod
    def from_function(cls, fn, n: int, period: float = 1.0, tol: float = 0.0) -> "FourierSeries":
        x = np.arange(n) * (period / n)
        return cls.from_samples(fn(x), period, tol)

    # -- norms ---------------------------------------------------------------
    def strip_sup(self, eps: float, n: int = STRIP_POINTS) -> float:
        """sup of |f| (matrices: operator norm) over |Im z| = eps."""
        return strip_sup(self, eps, n, self.period)

    def to_triples(self):
        """Scalar series as [(k, re, im), ...]; matrix series as nested lists per entry."""
        if self.shape == ():
            return [(int(k), float(c.real), float(c.imag)) for k, c in zip(self.modes, self.coef)]
        out = np.empty(self.shape, dtype=object)
        for idx in np.ndindex(*self.shape):
            out[idx] = [(int(k), float(c.real), float(c.imag)) for k, c in zip(self.modes, self.coef[idx])]
        return out.tolist()


def constant(value, period: float = 1.0) -> FourierSeries:
    value = np.asarray(value, dtype=complex)
    return FourierSeries(value[..., None], 0, period)


def convolve(a: FourierSeries, b: FourierSeries) -> FourierSeries:
    """Entrywise product of two series (broadcast over value shapes)."""
    shape = np.broadcast_shapes(a.shape, b.shape)
    ca = np.broadcast_to(a.coef, shape + a.coef.shape[-1:])
    cb = np.broadcast_to(b.coef, shape + b.coef.shape[-1:])
    out = np.empty(shape + (ca.shape[-1] + cb.shape[-1] - 1,), dtype=complex)
    for idx in np.ndindex(*shape):
        out[idx] = np.convolve(ca[idx], cb[idx])
    return FourierSeries(out, a.kmin + b.kmin, a.period)


def matmul(a: FourierSeries, b: FourierSeries) -> FourierSeries:
    """Product of matrix-valued series (value shapes (p,q) and (q,r))."""
    p, q = a.shape
    q2, r = b.shape
    assert q == q2
    la, lb = a.coef.shape[-1], b.coef.shape[-1]
    out = np.zeros((p, r, la + lb - 1), dtype=complex)
    for i in range(p):
        for j in range(r):
            for k in range(q):
                out[i, j] += np.convolve(a.coef[i, k], b.coef[k, j])
    return FourierSeries(out, a.kmin + b.kmin, a.period)


def strip_grid(eps: float, n: int = STRIP_POINTS, period: float = 1.0):
    """Points on both boundary lines |Im z| = eps (one line when eps = 0)."""
    x = np.arange(n) * (period / n)
    if eps == 0:
        return x.astype(complex)
    return np.concatenate([x + 1j * eps, x - 1j * eps])


def strip_sup(f, eps: float, n: int = STRIP_POINTS, period: float = 1.0) -> float:
    """sup over |Im z| = eps of |f| (vector 2-norm, operator norm for 2×2 values)."""
    v = np.asarray(f(strip_grid(eps, n, period)))
    return sup_norm(v, v.ndim - 1)


def sup_norm(v, value_ndim: int = 0) -> float:
    """Max over sample axes of the pointwise norm; the last ``value_ndim`` axes are values."""
    v = np.asarray(v)
    if value_ndim == 2:
        return float(np.max(mat2.opnorm(v)))
    if value_ndim == 1:
        return float(np.max(np.linalg.norm(v, axis=-1)))
    return float(np.max(np.abs(v)))
