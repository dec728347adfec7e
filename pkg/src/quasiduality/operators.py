"""Potentials and finite restrictions of the dual operator.

The direct model is (Hu)_n = u_{n+1} + u_{n-1} + λ v(θ + nα) u_n.  Its dual
acts on Fourier coefficients,

    (Ĥ û)_k = Σ_j λ v̂_j û_{k-j} + 2 cos(2π(θ + kα)) û_k,

and Ȟ = Ĥ / λ is the rescaled version used for determinant estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.linalg import eig_banded

from . import _kernels
from .arithmetic import Frequency
from .errors import (ConvergenceFailure, IllConditioned, SingularRestriction,
                     ValidationError, ZeroCoupling)
from .fourier import FourierSeries

HAT = "hat"      # Ĥ normalization
CHECK = "check"  # Ȟ = Ĥ/λ normalization

MAX_WINDOW = 2000


# ---------------------------------------------------------------------------
# Potentials


@dataclass(frozen=True)
class Potential:
    """Real trigonometric polynomial v(x) = Σ v̂_k e^{2πikx} with coupling λ.

    ``coefficients`` is a sorted tuple of (k, v̂_k) pairs covering both signs.
    """

    coefficients: tuple
    coupling: float = 1.0

    def __post_init__(self):
        d = dict(self.coefficients)
        for k, c in d.items():
            if abs(complex(d.get(-k, 0)) - np.conj(complex(c))) > 1e-12 * max(1.0, abs(c)):
                raise ValidationError(f"coefficients must satisfy v̂_(-k) = conj(v̂_k); k={k}")
        if not np.isfinite(self.coupling):
            raise ValidationError("coupling must be finite")

    @classmethod
    def from_dict(cls, coeffs: dict, coupling: float = 1.0) -> "Potential":
        full = {}
        for k, c in coeffs.items():
            full[int(k)] = complex(c)
        for k, c in list(full.items()):
            full.setdefault(-k, np.conj(c))
        items = tuple(sorted((k, c) for k, c in full.items() if c != 0))
        return cls(items, float(coupling))

    def with_coupling(self, coupling: float) -> "Potential":
        return Potential(self.coefficients, float(coupling))

    def vhat(self, k: int) -> complex:
        return dict(self.coefficients).get(int(k), 0j)

    def as_dict(self) -> dict:
        return dict(self.coefficients)

    @property
    def support(self) -> int:
        """K_v: largest |k| with v̂_k ≠ 0."""
        return max((abs(k) for k, _ in self.coefficients), default=0)

    @property
    def is_real_symmetric(self) -> bool:
        return all(abs(c.imag) == 0 for _, c in self.coefficients)

    @property
    def decay_rate(self) -> float:
        """Largest σ with max_k |v̂_k| e^{|k|σ} ≤ 10 max_k |v̂_k|."""
        mags = {k: abs(c) for k, c in self.coefficients if c != 0}
        if not mags:
            return np.inf
        top = max(mags.values())
        rates = [np.log(10 * top / m) / abs(k) for k, m in mags.items() if k != 0]
        return float(min(rates)) if rates else np.inf

    @property
    def sup_bound(self) -> float:
        """Σ|v̂_k| ≥ ‖v‖_∞."""
        return float(sum(abs(c) for _, c in self.coefficients))

    def series(self) -> FourierSeries:
        """v as a Fourier series (without the coupling)."""
        K = self.support
        coef = [self.vhat(k) for k in range(-K, K + 1)]
        return FourierSeries(coef, -K)

    def __call__(self, x):
        """v(x); real part returned for real arguments."""
        x = np.asarray(x)
        val = self.series()(x)
        return val.real if not np.iscomplexobj(x) else val

    def to_triples(self):
        return [(int(k), float(c.real), float(c.imag)) for k, c in self.coefficients]


def almost_mathieu(coupling: float) -> Potential:
    """v(x) = 2cos 2πx, i.e. v̂_{±1} = 1."""
    return Potential(((-1, 1 + 0j), (1, 1 + 0j)), float(coupling))


def potential_from_triples(triples, coupling: float) -> Potential:
    return Potential.from_dict({int(k): complex(re, im) for k, re, im in triples}, coupling)


# ---------------------------------------------------------------------------
# Tail weights


@dataclass(frozen=True)
class TailWeights:
    """a_k = Σ_{|j| ≥ |k|, jk ≥ 0} |j v̂_j| (both sides once at k = 0)."""

    a: tuple  # ((k, a_k), ...) for |k| ≤ K_v

    def __call__(self, k):
        d = dict(self.a)
        k = np.asarray(k)
        out = np.vectorize(lambda kk: d.get(int(kk), 0.0), otypes=[float])(k)
        return float(out) if out.ndim == 0 else out


def tail_weights(pot: Potential) -> TailWeights:
    K = pot.support
    w = {j: abs(j * pot.vhat(j)) for j in range(-K, K + 1)}
    a = {}
    for k in range(-K, K + 1):
        if k == 0:
            a[k] = sum(w.values())
        elif k > 0:
            a[k] = sum(w[j] for j in range(k, K + 1))
        else:
            a[k] = sum(w[j] for j in range(-K, k + 1))
    return TailWeights(tuple(sorted(a.items())))


# ---------------------------------------------------------------------------
# Restrictions


@dataclass(frozen=True, eq=False)
class DualRestriction:
    theta: float
    energy: float
    interval: tuple
    matrix: np.ndarray
    normalization: str
    coupling: float
    bandwidth: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def indices(self):
        return np.arange(self.interval[0], self.interval[1] + 1)


def _dual_diagonal(pot: Potential, freq: Frequency, theta, idx, normalization):
    c = np.cos(2 * np.pi * (np.asarray(theta)[..., None] + idx * freq.value))
    lam = pot.coupling
    if normalization == CHECK:
        return (2.0 / lam) * c + pot.vhat(0).real
    return 2.0 * c + lam * pot.vhat(0).real


def _offdiag_matrix(pot: Potential, n: int, normalization: str):
    scale = 1.0 if normalization == CHECK else pot.coupling
    real = pot.is_real_symmetric
    m = np.zeros((n, n), dtype=float if real else complex)
    for k, c in pot.coefficients:
        if k == 0 or abs(k) >= n:
            continue
        val = scale * (c.real if real else c)
        # M[i, j] = v̂_{i-j}
        if k > 0:
            m[np.arange(k, n), np.arange(0, n - k)] = val
        else:
            m[np.arange(0, n + k), np.arange(-k, n)] = val
    return m


def build_restriction(pot: Potential, freq: Frequency, theta: float, E: float, interval,
                      normalization: str = CHECK) -> DualRestriction:
    """R_I(Ȟ_θ − E)R_I* (or the Ĥ version) on I = [a, b]."""
    a, b = int(interval[0]), int(interval[1])
    if b < a:
        raise ValidationError("empty interval")
    if normalization not in (HAT, CHECK):
        raise ValidationError(f"normalization must be {HAT!r} or {CHECK!r}")
    if normalization == CHECK and pot.coupling == 0:
        raise ZeroCoupling("rescaled normalization needs nonzero coupling")
    idx = np.arange(a, b + 1)
    m = _offdiag_matrix(pot, len(idx), normalization)
    m[np.diag_indices(len(idx))] = _dual_diagonal(pot, freq, theta, idx, normalization) - E
    return DualRestriction(float(theta), float(E), (a, b), m, normalization, pot.coupling,
                           min(pot.support, len(idx) - 1))


def log_det(res: DualRestriction):
    """(sign, log|det|) with partial pivoting inside the band."""
    s, l = _kernels.banded_slogdet(res.matrix, max(res.bandwidth, 1))
    return (s.real if np.iscomplexobj(s) else s), l


def det_P_N(res: DualRestriction) -> float:
    s, l = log_det(res)
    return float(s * np.exp(l)) if np.isfinite(l) else 0.0


def log_abs_P_N(pot: Potential, freq: Frequency, E: float, N: int, thetas) -> np.ndarray:
    """ln|P_N(θ)| on an array of phases (I = [0, N-1], Ȟ normalization)."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    base = build_restriction(pot, freq, 0.0, E, (0, N - 1)).matrix
    diags = _dual_diagonal(pot, freq, thetas, np.arange(N), CHECK) - E
    _, logs = _kernels.batched_slogdet(base, diags.astype(base.dtype), max(min(pot.support, N - 1), 1))
    return logs


def P_N_values(pot: Potential, freq: Frequency, E: float, N: int, thetas) -> np.ndarray:
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    base = build_restriction(pot, freq, 0.0, E, (0, N - 1)).matrix
    diags = _dual_diagonal(pot, freq, thetas, np.arange(N), CHECK) - E
    s, logs = _kernels.batched_slogdet(base, diags.astype(base.dtype), max(min(pot.support, N - 1), 1))
    return np.real(s) * np.exp(logs)


@lru_cache(maxsize=64)
def Q_N_chebyshev(pot: Potential, freq: Frequency, E: float, N: int, rtol: float = 1e-8):
    """Chebyshev coefficients of Q_N with P_N(θ) = Q_N(cos 2π(θ + (N-1)α/2))."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    shift = (N - 1) * freq.value / 2

    def P_of_z(z):
        th = np.arccos(np.clip(z, -1, 1)) / (2 * np.pi) - shift
        return P_N_values(pot, freq, E, N, th)

    nodes = np.cos(np.pi * (np.arange(N + 1) + 0.5) / (N + 1))
    with np.errstate(over="ignore", invalid="ignore"):
        samples = P_of_z(nodes)
        check = np.cos(np.pi * np.arange(N + 1) / max(N, 1))
        ref = P_of_z(check)
    if not (np.all(np.isfinite(samples)) and np.all(np.isfinite(ref))):
        raise IllConditioned(f"P_{N} overflows double precision at the sampling nodes")
    coef = C.chebfit(nodes, samples, N)
    scale = max(np.max(np.abs(ref)), np.max(np.abs(coef)), 1e-300)
    err = np.max(np.abs(C.chebval(check, coef) - ref)) / scale
    if not err <= rtol:
        raise IllConditioned(f"Q_{N} interpolation residual {err:.2e} exceeds {rtol:.0e}")
    return coef


def eval_Q_N(pot: Potential, freq: Frequency, E: float, N: int, z):
    coef = Q_N_chebyshev(pot, freq, float(E), int(N))
    out = C.chebval(np.asarray(z, dtype=float), coef)
    return float(out) if np.ndim(out) == 0 else out


def _singular_check(m, tol):
    ev = np.linalg.eigvalsh(m)
    scale = max(1.0, float(np.max(np.abs(ev))))
    if np.min(np.abs(ev)) <= tol * scale:
        raise SingularRestriction(f"restriction is singular (min |eig| = {np.min(np.abs(ev)):.3e})")


def green_matrix(res: DualRestriction, tol: float = 1e-12) -> np.ndarray:
    """Inverse of the restricted matrix (rows/cols indexed by res.indices)."""
    _singular_check(res.matrix, tol)
    return np.linalg.inv(res.matrix)


def green_function(res: DualRestriction, y: int, z: int, tol: float = 1e-12):
    """G_I(y, z) for absolute indices y, z ∈ I."""
    a, b = res.interval
    if not (a <= y <= b and a <= z <= b):
        raise ValidationError("indices outside the interval")
    g = green_matrix(res, tol)
    val = g[y - a, z - a]
    return float(val.real) if np.isrealobj(g) or abs(val.imag) == 0 else complex(val)


# ---------------------------------------------------------------------------
# Eigenpairs


class DualSpectrum:
    """Eigenpairs of R_I Ĥ_θ R_I*: ascending ``values``, vectors in columns."""

    def __init__(self, values, vectors, window):
        self.values = values
        self.vectors = vectors
        self.window = tuple(window)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i], self.vectors[:, i]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def indices(self):
        return np.arange(self.window[0], self.window[1] + 1)


def dual_eigenpairs(pot: Potential, freq: Frequency, theta: float, window,
                    max_size: int = MAX_WINDOW, rtol: float = 1e-8) -> DualSpectrum:
    """Full eigendecomposition of the Ĥ restriction to ``window`` (E = 0)."""
    a, b = int(window[0]), int(window[1])
    n = b - a + 1
    if n < 1:
        raise ValidationError("empty window")
    if n > max_size:
        raise ValidationError(f"window size {n} exceeds max_size {max_size}")
    res = build_restriction(pot, freq, theta, 0.0, (a, b), HAT)
    m = res.matrix
    p = max(res.bandwidth, 0)
    band = np.zeros((p + 1, n), dtype=m.dtype)
    for j in range(p + 1):
        band[j, : n - j] = np.diagonal(m, -j)
    w, v = eig_banded(band, lower=True)
    r = np.linalg.norm(m @ v - v * w, axis=0)
    bad = np.nonzero(r > rtol * np.maximum(np.linalg.norm(v, axis=0), 1e-300))[0]
    if bad.size:
        raise ConvergenceFailure(f"eigenpair residual too large at index {bad[0]}", index=int(bad[0]))
    return DualSpectrum(w, v, (a, b))
