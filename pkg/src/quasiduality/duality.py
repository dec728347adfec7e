"""Dual eigenfunctions, Bloch waves and the conjugacies built from them.

Pipeline: pick a phase θ(E) with a localized dual eigenvector û
(:func:`select_dual_phase`), build the Bloch wave U(x) = (e^{2πiθ}u(x), u(x−α))
(:func:`bloch_wave`), and from U the duality matrices, the triangularizing
conjugacy, the real conjugacy to a rotation and the parabolic reduction.

All strip quantities are evaluated pointwise from Fourier coefficients of u
(holomorphic extension), which keeps the exponentially small residuals above
floating-point noise.  Conjugacies are stored in push form: ``report.B``
satisfies B(x+α) A(x) B(x)^{-1} ≈ ``report.target``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath as mp
import numpy as np

from . import mat2
from .arithmetic import Frequency, find_resonances, torus_distance
from .cocycles import (CocycleMap, conjugate_push, degree, schrodinger_cocycle)
from .errors import (CaseAmbiguous, DegenerateMap, DeterminantFloor, FloorCollapse,
                     NoCandidate, NumericalError, SmallDivisor, ValidationError)
from .fourier import FourierSeries, STRIP_POINTS, strip_grid
from .operators import HAT, Potential, build_restriction, dual_eigenpairs

DEFAULT_STRIP = 0.05
C0 = 4
DIVISOR_FLOOR = 1e-8
EXCLUSION_FLOOR = 0.1
FLOOR_MIN = 1e-8
MP_DPS = 40

COMPLEX_DIAGONALIZING = "complex-diagonalizing"
TRIANGULARIZING = "triangularizing"
REAL_ROTATION = "real-rotation"
PERTURBATIVE = "perturbative"


# ---------------------------------------------------------------------------
# Extended-precision banded eigenvector refinement


def _mp_solve(diag, offd, rhs):
    """Solve a banded system with partial pivoting in mpmath.

    ``diag[i]`` is the (i, i) entry and ``offd[d]`` the constant (i, i+d) entry.
    """
    n = len(diag)
    p = max((abs(d) for d in offd), default=0)
    rows = []
    for i in range(n):
        r = {i: diag[i]}
        for d, v in offd.items():
            if 0 <= i + d < n:
                r[i + d] = v
        rows.append(r)
    b = list(rhs)
    tiny = mp.mpf(10) ** (-2 * mp.mp.dps)
    for k in range(n):
        last = min(k + p, n - 1)
        piv = max(range(k, last + 1), key=lambda r: abs(rows[r].get(k, 0)))
        if piv != k:
            rows[k], rows[piv] = rows[piv], rows[k]
            b[k], b[piv] = b[piv], b[k]
        pr = rows[k]
        pv = pr.get(k, 0)
        if pv == 0:
            pv = tiny
            pr[k] = pv
        for r in range(k + 1, last + 1):
            rr = rows[r]
            a = rr.pop(k, None)
            if a is None or a == 0:
                continue
            f = a / pv
            for c, val in pr.items():
                if c > k:
                    rr[c] = rr.get(c, 0) - f * val
            b[r] -= f * b[k]
    x = [None] * n
    for k in range(n - 1, -1, -1):
        s = b[k]
        for c, val in rows[k].items():
            if c > k:
                s -= val * x[c]
        x[k] = s / rows[k][k]
    return x


class _MpDual:
    """Ĥ_θ restricted to a window, in mpmath."""

    def __init__(self, pot: Potential, freq: Frequency, window):
        self.a, self.b = window
        self.alpha = mp.mpf(freq.value)
        lam = mp.mpf(pot.coupling)
        self.real = pot.is_real_symmetric
        self.v0 = lam * mp.mpf(pot.vhat(0).real)
        self.offd = {}
        for k, c in pot.coefficients:
            if k == 0:
                continue
            val = lam * (mp.mpf(c.real) if self.real else mp.mpc(c.real, c.imag))
            self.offd[-k] = val  # row i couples to i - k through v̂_k

    def diag(self, theta):
        return [2 * mp.cos(2 * mp.pi * (theta + n * self.alpha)) + self.v0 for n in range(self.a, self.b + 1)]

    def apply(self, d, x):
        n = len(x)
        out = []
        for i in range(n):
            s = d[i] * x[i]
            for dd, v in self.offd.items():
                j = i + dd
                if 0 <= j < n:
                    s += v * x[j]
            out.append(s)
        return out

    @staticmethod
    def _dot(x, y):
        return mp.fsum(mp.conj(a) * b for a, b in zip(x, y))

    def rayleigh(self, d, x):
        return mp.re(self._dot(x, self.apply(d, x)) / self._dot(x, x))

    def residual(self, d, x, mu):
        hx = self.apply(d, x)
        return max(abs(h - mu * xi) for h, xi in zip(hx, x))

    def normalize(self, x):
        s = mp.sqrt(mp.re(self._dot(x, x)))
        return [xi / s for xi in x]

    def slope(self, theta, x):
        """dμ/dθ by Hellmann–Feynman."""
        w = [abs(xi) ** 2 for xi in x]
        num = mp.fsum(-4 * mp.pi * mp.sin(2 * mp.pi * (theta + n * self.alpha)) * wi
                      for n, wi in zip(range(self.a, self.b + 1), w))
        return num / mp.fsum(w)

    def inverse_iteration(self, theta, x, mu, steps=6):
        d = self.diag(theta)
        tol = mp.mpf(10) ** (-(mp.mp.dps - 6))
        for _ in range(steps):
            y = _mp_solve([di - mu for di in d], self.offd, x)
            x = self.normalize(y)
            mu = self.rayleigh(d, x)
            if self.residual(d, x, mu) < tol:
                break
        return x, mu


def refine_eigenpair(pot: Potential, freq: Frequency, theta: float, window, vector, target=None,
                     dps: int = MP_DPS):
    """Refine a dual eigenpair to ``dps`` digits; optionally move θ so that μ(θ) = target.

    Returns (theta, mu, u) with theta a float, mu an mpf and u a list of mp numbers
    forming an eigenvector of Ĥ_theta at that float theta.
    """
    with mp.workdps(dps):
        op = _MpDual(pot, freq, window)
        conv = mp.mpf if op.real else mp.mpc
        x = [conv(complex(v).real) if op.real else mp.mpc(complex(v).real, complex(v).imag) for v in vector]
        th = mp.mpf(theta)
        d = op.diag(th)
        x = op.normalize(x)
        mu = op.rayleigh(d, x)
        x, mu = op.inverse_iteration(th, x, mu)
        if target is not None:
            E = mp.mpf(target)
            for _ in range(8):
                sl = op.slope(th, x)
                if abs(sl) < mp.mpf("1e-8"):
                    break
                step = (mu - E) / sl
                if abs(step) > mp.mpf("1e-3"):
                    break
                th -= step
                x, mu = op.inverse_iteration(th, x, mu, steps=4)
                if abs(mu - E) < mp.mpf(10) ** (-(dps - 8)):
                    break
        th_f = float(th) % 1.0
        th_m = mp.mpf(th_f)
        # the float phase is what downstream code uses: make û exact for it
        x, mu = op.inverse_iteration(th_m, x, op.rayleigh(op.diag(th_m), x), steps=3)
        return th_f, mu, x


# ---------------------------------------------------------------------------
# Dual eigen data


@dataclass(frozen=True, eq=False)
class DualEigenData:
    """Normalized dual eigenvector û (û_0 = 1) of Ĥ_θ on ``window``."""

    theta: float
    E: float
    u_hat: np.ndarray
    window: tuple
    sup_bound: float
    freq: Frequency
    potential: Potential
    requested_E: float = float("nan")
    candidates: tuple = ()
    eigen_residual: float = float("nan")

    @property
    def indices(self):
        return np.arange(self.window[0], self.window[1] + 1)

    @property
    def radius(self) -> int:
        return min(-self.window[0], self.window[1])

    def coefficient(self, k: int) -> complex:
        a, b = self.window
        return complex(self.u_hat[k - a]) if a <= k <= b else 0j

    def restricted(self, interval) -> np.ndarray:
        a, b = interval
        return np.array([self.coefficient(k) for k in range(a, b + 1)])

    def within_slack(self, norm_slack: float = 0.05) -> bool:
        return self.sup_bound <= 1 + norm_slack


def _window(window) -> tuple:
    if np.isscalar(window):
        r = int(window)
        return (-r, r)
    return (int(window[0]), int(window[1]))


def _shift_vector(v, c):
    """w_n = v_{n+c} with zero fill."""
    out = np.zeros_like(v)
    n = len(v)
    if c >= 0:
        out[: n - c] = v[c:]
    else:
        out[-c:] = v[: n + c]
    return out


def _finalize(pot, freq, theta, window, vec, target, requested, candidates, dps):
    th, mu, x = refine_eigenpair(pot, freq, theta, window, vec, target, dps)
    a, _ = window
    with mp.workdps(dps):
        x0 = x[-a]
        u = np.array([complex(xi / x0) for xi in x])
    # residual of the float copy against the float operator
    res = build_restriction(pot, freq, th, float(mu), window, HAT).matrix @ u
    interior = np.abs(res[1:-1]) if len(res) > 2 else np.abs(res)
    return DualEigenData(th, float(mu), u, window, float(np.max(np.abs(u))), freq, pot,
                         float(requested), tuple(candidates), float(np.max(interior)))


def dual_data_at_phase(pot: Potential, freq: Frequency, theta: float, window=200, center: int = 0,
                       near: Optional[float] = None, dps: int = MP_DPS) -> DualEigenData:
    """Dual eigenvector of Ĥ_θ at a fixed phase, normalized at index ``center``.

    Picks the eigenvector peaked at ``center`` (or, when ``near`` is given, the
    eigenvalue closest to ``near``).  E is the eigenvalue itself.
    """
    window = _window(window)
    sp = dual_eigenpairs(pot, freq, theta, window)
    a, b = window
    if near is None:
        # symmetric phases split the peak between two sites: take the largest weight at center
        mass = np.abs(sp.vectors[center - a])
        i = int(np.argmax(mass))
        if mass[i] < 0.5 * np.max(np.abs(sp.vectors[:, i])):
            raise NoCandidate(f"no eigenvector concentrated at index {center}")
    else:
        i = int(np.argmin(np.abs(sp.values - near)))
    th, mu, x = refine_eigenpair(pot, freq, theta, window, sp.vectors[:, i], None, dps)
    with mp.workdps(dps):
        x0 = x[center - a]
        u = np.array([complex(xi / x0) for xi in x])
    res = build_restriction(pot, freq, th, float(mu), window, HAT).matrix @ u
    return DualEigenData(th, float(mu), u, window, float(np.max(np.abs(u))), freq, pot,
                         float(mu), ((th, float(mu)),), float(np.max(np.abs(res[1:-1]))))


def _track(pot, freq, theta, ref, radius):
    sp = dual_eigenpairs(pot, freq, theta, (-radius, radius))
    ov = np.abs(np.conj(ref) @ sp.vectors)
    i = int(np.argmax(ov))
    v = sp.vectors[:, i]
    n = np.arange(-radius, radius + 1)
    sl = float(np.sum(np.abs(v) ** 2 * (-4 * np.pi * np.sin(2 * np.pi * (theta + n * freq.value)))))
    return float(sp.values[i]), v, sl


def _newton_phase(pot, freq, E, theta, vec, radius, tol=1e-12, iters=60):
    mu, v, sl = _track(pot, freq, theta, vec, radius)
    for _ in range(iters):
        if abs(mu - E) < tol:
            break
        c = int(np.argmax(np.abs(v))) - radius
        if c != 0:
            theta = (theta + c * freq.value) % 1.0
            v = _shift_vector(v, c)
            mu, v, sl = _track(pot, freq, theta, v, radius)
            continue
        if abs(sl) < 1e-10:
            break
        step = float(np.clip(-(mu - E) / sl, -0.02, 0.02))
        theta = (theta + step) % 1.0
        mu, v, sl = _track(pot, freq, theta, v, radius)
    c = int(np.argmax(np.abs(v))) - radius
    if c != 0:
        theta = (theta + c * freq.value) % 1.0
        v = _shift_vector(v, c)
        mu, v, sl = _track(pot, freq, theta, v, radius)
    return theta, mu, v


def select_dual_phase(pot: Potential, freq: Frequency, E: float, theta_grid: int = 64, window=200,
                      mesh: float = 1e-6, scan_radius: int = 60, dps: int = MP_DPS,
                      max_candidates: int = 6) -> DualEigenData:
    """Find θ(E) and a dual eigenvector û with û_0 = 1 = max |û_k|.

    A θ-grid scan of centered dual eigenvalues supplies starting points; each
    is refined by Newton steps in θ (Hellmann–Feynman slope) and finally in
    extended precision.  Raises :class:`NoCandidate` when no eigenvalue gets
    within 10·mesh of E.
    """
    window = _window(window)
    radius = min(scan_radius, window[1], -window[0])
    found = []
    for t in np.arange(theta_grid) / theta_grid:
        sp = dual_eigenpairs(pot, freq, t, (-radius, radius))
        peaks = np.argmax(np.abs(sp.vectors), axis=0) - radius
        layer = max(1, radius // 5)
        edge = np.sum(np.abs(sp.vectors[:layer]) ** 2, axis=0) + np.sum(np.abs(sp.vectors[-layer:]) ** 2, axis=0)
        ok = (np.abs(peaks) <= radius // 2) & (edge < 1e-6)
        for i in np.nonzero(ok)[0]:
            c = int(peaks[i])
            found.append((abs(sp.values[i] - E), (t + c * freq.value) % 1.0, float(sp.values[i]),
                          _shift_vector(sp.vectors[:, i], c)))
    if not found:
        raise NoCandidate("no localized dual eigenvectors found on the phase grid")
    found.sort(key=lambda f: f[0])
    tried = []
    best = None
    for _, t, mu0, v in found:
        if any(torus_distance(t - s) < 1e-3 for s, _ in tried):
            continue
        th, mu, vec = _newton_phase(pot, freq, E, t, v, radius)
        tried.append((th, mu))
        if best is None or abs(mu - E) < abs(best[1] - E):
            best = (th, mu, vec)
        if abs(mu - E) < 1e-10 or len(tried) >= max_candidates:
            break
    th, mu, vec = best
    if abs(mu - E) > 10 * mesh:
        raise NoCandidate(f"closest dual eigenvalue {mu:.6g} is {abs(mu - E):.2e} from E={E}")
    # full window, eigenvector with maximal overlap with the scan vector
    sp = dual_eigenpairs(pot, freq, th, window)
    ref = np.zeros(window[1] - window[0] + 1, dtype=complex)
    ref[radius * 0 - window[0] - radius: -window[0] + radius + 1] = vec
    i = int(np.argmax(np.abs(np.conj(ref) @ sp.vectors)))
    target = E if abs(mu - E) < 1e-6 else None
    return _finalize(pot, freq, th, window, sp.vectors[:, i], target, E, tried, dps)


# ---------------------------------------------------------------------------
# Bloch waves


@dataclass(frozen=True, eq=False)
class BlochWave:
    """U(x) = (e^{2πiθ}u(x), u(x−α)) with A(x)U(x) − e^{2πiθ}U(x+α) = (h(x), 0)."""

    theta: float
    E: float
    freq: Frequency
    cocycle: CocycleMap
    U: FourierSeries
    residual_h: FourierSeries
    strip: float
    strip_floor: float
    window: tuple = (0, 0)
    u: Optional[FourierSeries] = None
    extras: dict = field(default_factory=dict)

    @property
    def Uc(self) -> FourierSeries:
        """Holomorphic extension of conj(U) from the real line."""
        return self.U.conj()

    def defect(self, z):
        """A(z)U(z) − e^{2πiθ}U(z+α), evaluated pointwise."""
        z = np.asarray(z)
        Az = np.asarray(self.cocycle(z))
        return (np.einsum("...ij,...j->...i", Az, self.U(z))
                - np.exp(2j * np.pi * self.theta) * self.U(z + self.freq.value))

    @classmethod
    def from_section(cls, U: FourierSeries, theta: float, cocycle: CocycleMap,
                     strip: float = DEFAULT_STRIP, n: int = 1024) -> "BlochWave":
        """Wave from an arbitrary vector Fourier series (synthetic inputs)."""
        if U.shape != (2,):
            raise ValidationError("U must be a 2-vector series")
        tmp = cls(theta, float("nan"), cocycle.freq, cocycle, U, FourierSeries([0j]), strip, 0.0)
        h = FourierSeries.from_function(lambda x: tmp.defect(x)[..., 0], n)
        h = h.trimmed(1e-15 * max(1.0, float(np.max(np.abs(h.coef)))))
        floor = _strip_floor(U, strip)
        return cls(theta, float("nan"), cocycle.freq, cocycle, U, h, strip, floor)


def _strip_floor(U: FourierSeries, strip: float, n: int = STRIP_POINTS) -> float:
    x = np.arange(n) / n
    lines = [0.0] if strip == 0 else np.linspace(-strip, strip, 5)
    return float(min(np.min(np.linalg.norm(U(x + 1j * y), axis=-1)) for y in lines))


def _wave_interval(window_I, data: DualEigenData):
    if window_I is None:
        r = data.radius // 2
        return (-r, r)
    return _window(window_I)


def bloch_wave(data: DualEigenData, pot: Optional[Potential] = None, E: Optional[float] = None,
               window_I=None, strip: float = DEFAULT_STRIP) -> BlochWave:
    """Truncated Bloch wave u^I(x) = Σ_{k∈I} û_k e^{2πikx} and its exact residual."""
    pot = pot or data.potential
    freq = data.freq
    E = data.E if E is None else float(E)
    a, b = _wave_interval(window_I, data)
    if a < data.window[0] or b > data.window[1]:
        raise ValidationError("window_I must lie inside the data window")
    theta = data.theta
    uI = data.restricted((a, b))
    u = FourierSeries(uI, a)
    ph = np.exp(2j * np.pi * theta)
    U = FourierSeries(np.stack([ph * u.coef, u.shift(-freq.value).coef]), a)
    # ĥ = −e^{2πiθ} (Ĥ_θ − E)(χ_I û) on I widened by the potential's support
    K = pot.support
    lo, hi = a - K, b + K
    hmat = build_restriction(pot, freq, theta, E, (lo, hi), HAT).matrix
    w = np.zeros(hi - lo + 1, dtype=complex)
    w[K:K + len(uI)] = uI
    h = FourierSeries(-ph * (hmat @ w), lo)
    # cross-check: the same coefficients from the window complement
    A_, B_ = data.window
    full = build_restriction(pot, freq, theta, E, (A_ - K, B_ + K), HAT).matrix
    wf = np.zeros(full.shape[0], dtype=complex)
    wf[K:K + len(data.u_hat)] = data.u_hat
    out = wf.copy()
    out[a - (A_ - K): b - (A_ - K) + 1] = 0
    h_out = ph * (full @ out) - ph * (full @ wf)
    sel = slice(lo - (A_ - K), hi - (A_ - K) + 1)
    gap = float(np.max(np.abs(h_out[sel] - h.coef))) if hi - lo >= 0 else 0.0
    floor = _strip_floor(U, strip)
    if floor < FLOOR_MIN:
        raise FloorCollapse(f"inf ‖U‖ on the strip is {floor:.2e}")
    coc = schrodinger_cocycle(pot, E, freq)
    return BlochWave(theta, E, freq, coc, U, h, strip, floor, (a, b), u,
                     {"h_crosscheck": gap, "h_real_norm": float(np.sum(np.abs(h.coef)))})


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True, eq=False)
class ConjugacyReport:
    mode: str
    strip: float
    B: Callable
    norm_B: float
    degree: Optional[float]
    residual_blocks: dict
    residual: float
    target: np.ndarray
    cocycle: CocycleMap
    extras: dict = field(default_factory=dict)

    def fourier(self, n: int = 256) -> FourierSeries:
        """Fourier data of B from n samples on the real line."""
        s = FourierSeries.from_function(lambda x: np.asarray(self.B(x)), n)
        return s.trimmed(1e-15 * max(1e-300, float(np.max(np.abs(s.coef)))))

    def to_dict(self, n_fourier: int = 256) -> dict:
        tgt = np.asarray(self.target)
        out = {
            "mode": self.mode,
            "strip": self.strip,
            "norm_B": self.norm_B,
            "degree": self.degree,
            "residual": self.residual,
            "residual_blocks": {k: float(v) for k, v in self.residual_blocks.items()},
            "target": [[[float(tgt[i, j].real), float(tgt[i, j].imag)] for j in range(2)] for i in range(2)],
            "fourier": self.fourier(n_fourier).to_triples(),
        }
        out["extras"] = {k: _jsonable(v) for k, v in self.extras.items()}
        return out


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return str(v)


BLOCKS = ("11", "12", "21", "22")


def _blocks(values, target):
    d = np.asarray(values) - np.asarray(target)
    blocks = {k: float(np.max(np.abs(d[..., int(k[0]) - 1, int(k[1]) - 1]))) for k in BLOCKS}
    return blocks, float(np.max(mat2.opnorm(d)))


def measure(cocycle: CocycleMap, B, target, strip: float, n: int = STRIP_POINTS):
    """Residual blocks of B(z+α)A(z)B(z)^{-1} − target on |Im z| = strip via conjugate_push."""
    pushed, rep = conjugate_push(cocycle, B, strip, n_grid=512, n_strip=n)
    vals = pushed.func(strip_grid(strip, n))
    blocks, res = _blocks(vals, target)
    return blocks, res, rep


def _direct_blocks(cocycle, B, target, strip, n=STRIP_POINTS):
    """Construction-side evaluation of the same defect (independent code path)."""
    z = strip_grid(strip, n)
    Bz = np.asarray(B(z))
    Bza = np.asarray(B(z + cocycle.freq.value))
    Az = np.asarray(cocycle(z))
    vals = np.linalg.solve(np.swapaxes(Bz, -1, -2), np.swapaxes(Bza @ Az, -1, -2))
    return _blocks(np.swapaxes(vals, -1, -2), target)


def _make_report(mode, cocycle, B, target, strip, degree_=None, extras=None):
    blocks, res, rep = measure(cocycle, B, target, strip)
    cblocks, _ = _direct_blocks(cocycle, B, target, strip)
    ex = dict(extras or {})
    ex["construction_blocks"] = cblocks
    ex["min_det_B"] = rep.min_det_B
    deg = degree_ if degree_ is not None else rep.degree_B
    return ConjugacyReport(mode, strip, B, rep.norm_B.value, deg, blocks, res, np.asarray(target), cocycle, ex)


def verify_report(report: ConjugacyReport):
    """Recompute the residual blocks from scratch; returns (blocks, max abs difference)."""
    blocks, _, _ = measure(report.cocycle, report.B, report.target, report.strip)
    diff = max(abs(blocks[k] - report.residual_blocks[k]) for k in BLOCKS)
    return blocks, diff


# ---------------------------------------------------------------------------
# Duality matrices


def _unimodular_map(wave: BlochWave):
    U, Uc = wave.U, wave.Uc

    def Bx(z):
        z = np.asarray(z)
        u, uc = U(z), Uc(z)
        P = u[..., 0] * uc[..., 0] + u[..., 1] * uc[..., 1]
        out = np.empty(z.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = u[..., 0]
        out[..., 1, 0] = u[..., 1]
        out[..., 0, 1] = -uc[..., 1] / P
        out[..., 1, 1] = uc[..., 0] / P
        return out

    return Bx


def _columns_map(wave: BlochWave):
    U, Uc = wave.U, wave.Uc

    def Bt(z):
        z = np.asarray(z)
        u, uc = U(z), Uc(z)
        out = np.empty(z.shape + (2, 2), dtype=complex)
        out[..., :, 0] = u
        out[..., :, 1] = uc
        return out

    return Bt


def _inverse(f):
    return lambda z: mat2.inv(np.asarray(f(z)))


def duality_matrix(wave: BlochWave, variant: str = "unimodular") -> ConjugacyReport:
    """Matrix with first column U diagonalizing the cocycle up to the residual h.

    ``unimodular``: second column (−conj U_2, conj U_1)/‖U‖², det ≡ 1.
    ``columns``: columns U and conj(U); det is purely imaginary on R.
    """
    if wave.strip_floor <= 0:
        raise FloorCollapse("strip floor is zero")
    ph = np.exp(2j * np.pi * wave.theta)
    target = np.diag([ph, 1 / ph])
    x = np.arange(STRIP_POINTS) / STRIP_POINTS
    if variant == "unimodular":
        M = _unimodular_map(wave)
        extras = {"det_defect": float(np.max(np.abs(mat2.det(M(strip_grid(wave.strip))) - 1)))}
    elif variant in ("columns", "columns-U-Ubar"):
        M = _columns_map(wave)
        d_line = mat2.det(M(x))
        d_strip = mat2.det(M(strip_grid(wave.strip)))
        extras = {
            "inf_abs_det": float(np.min(np.abs(d_line))),
            "max_abs_re_det": float(np.max(np.abs(d_line.real))),
            "strip_variation": float(np.max(np.abs(d_strip - d_line[0]))),
            "inf_abs_im_det_strip": float(np.min(np.abs(d_strip.imag))),
        }
    else:
        raise ValidationError(f"unknown variant {variant!r}")
    extras["variant"] = variant
    return _make_report(COMPLEX_DIAGONALIZING, wave.cocycle, _inverse(M), target, wave.strip,
                        extras=extras)


# ---------------------------------------------------------------------------
# Cohomological equation


def cohomological_solve(b: FourierSeries, theta: float, freq: Frequency, mode_window=None,
                        excluded_modes=(), divisor_floor: float = DIVISOR_FLOOR) -> FourierSeries:
    """φ̂_k = −b̂_k e^{−2πiθ} / (1 − e^{−2πi(2θ−kα)}) on the retained modes.

    Solves e^{2πiθ}φ(x) + b(x) − e^{−2πiθ}φ(x+α) = 0 for the retained part of b.
    """
    modes = b.modes
    keep = np.ones(len(modes), dtype=bool)
    if mode_window is not None:
        keep &= (modes >= mode_window[0]) & (modes <= mode_window[1])
    for k in excluded_modes:
        keep &= modes != k
    phase = 2 * theta - np.asarray(freq.kalpha(modes))
    phase -= np.round(phase)
    # 1 − e^{−2πiφ} without cancellation for small φ
    div = 2j * np.sin(np.pi * phase) * np.exp(-1j * np.pi * phase)
    small = keep & (np.abs(div) <= divisor_floor) & (np.abs(b.coef) > 0)
    if np.any(small):
        raise SmallDivisor(modes[small], np.abs(div[small]))
    coef = np.zeros_like(b.coef)
    coef[keep] = -b.coef[keep] * np.exp(-2j * np.pi * theta) / div[keep]
    return FourierSeries(coef, b.kmin, b.period)


def retained_part(b: FourierSeries, mode_window=None, excluded_modes=()) -> FourierSeries:
    modes = b.modes
    keep = np.ones(len(modes), dtype=bool)
    if mode_window is not None:
        keep &= (modes >= mode_window[0]) & (modes <= mode_window[1])
    for k in excluded_modes:
        keep &= modes != k
    return FourierSeries(np.where(keep, b.coef, 0), b.kmin, b.period)


# ---------------------------------------------------------------------------
# Almost triangularization


def _fft_grid(wave: BlochWave) -> int:
    span = wave.U.coef.shape[-1] + 2 * wave.cocycle.series.coef.shape[-1]
    return max(1024, 1 << int(np.ceil(np.log2(8 * span))))


def delta_rule(b: FourierSeries, n: int, cap: int = 100_000) -> int:
    """Smallest Δ ≥ n with |b̂_k| ≤ Δ e^{−|k|/Δ} for all k."""
    mag = np.abs(b.coef)
    kk = np.abs(b.modes)
    nz = mag > 0
    D = max(int(n), 1)
    while D < cap:
        if np.all(mag[nz] <= D * np.exp(-kk[nz] / D)):
            return D
        # jump close to the next admissible value
        need = np.max(kk[nz] / np.maximum(np.log(D / mag[nz]), 1e-12), initial=0) if np.all(mag[nz] < D) else 0
        D = max(D + 1, int(np.ceil(need)) if np.isfinite(need) and need > D else D + 1)
    return cap


def _choose_resonance(theta, freq, N, eps0, c0):
    res = find_resonances(theta, freq, eps0, k_max=max(int(N), 1))
    return res, res.last_below(N / c0)[0]


def triangularize(pot: Potential, freq: Frequency, E: float, data: DualEigenData, window: int = 400,
                  epsilon_balance: Optional[float] = None, strip: float = 0.01, eps0: float = 0.05,
                  c0: int = C0, divisor_floor: float = DIVISOR_FLOOR,
                  exclusion_floor: float = EXCLUSION_FLOOR) -> ConjugacyReport:
    """Conjugate the Schrödinger cocycle close to diag(e^{2πiθ}, e^{−2πiθ}).

    The wave uses I = [−N/c0+1, N/c0−1].  The off-diagonal defect b of the
    unimodular duality matrix is split into the resonant mode n_j, low modes
    |k| ≤ Δ³ (removed by the cohomological equation) and high modes.
    """
    R = max(int(window) // c0 - 1, 1)
    wave = bloch_wave(data, pot, E, (-R, R), strip)
    res, nj = _choose_resonance(data.theta, freq, window, eps0, c0)
    return triangularize_wave(wave, nj, epsilon_balance, divisor_floor, exclusion_floor, int(window),
                              extras={"resonances": res.entries, "window": int(window)})


def triangularize_wave(wave: BlochWave, nj: int = 0, epsilon_balance: Optional[float] = None,
                       divisor_floor: float = DIVISOR_FLOOR, exclusion_floor: float = EXCLUSION_FLOOR,
                       min_cutoff: Optional[int] = None, extras=None) -> ConjugacyReport:
    """Triangularize from a Bloch wave.

    Low modes are |k| ≤ max(Δ³, min_cutoff).  ``min_cutoff`` is the scale N
    of the first split |k| < N; for small n the Δ rule alone leaves O(1)
    high modes behind.
    """
    freq, theta, strip = wave.freq, wave.theta, wave.strip
    alpha = freq.value
    A = wave.cocycle
    Bx = _unimodular_map(wave)

    def defect(z):
        z = np.asarray(z)
        return mat2.mul(mat2.mul(mat2.inv(Bx(z + alpha)), np.asarray(A(z))), Bx(z))

    n_fft = _fft_grid(wave)
    bser = FourierSeries.from_function(lambda x: defect(x)[..., 0, 1], n_fft)
    top = float(np.max(np.abs(bser.coef)))
    bser = bser.map_coef(lambda c: np.where(np.abs(c) < 1e-14 * max(top, 1e-300), 0, c))
    n = abs(nj) + 1
    Delta = delta_rule(bser, n)
    low = max(Delta ** 3, int(min_cutoff or 0))
    div_nj = abs(1 - np.exp(-2j * np.pi * (2 * theta - freq.kalpha(nj))))
    exclude = div_nj < exclusion_floor
    excluded = (nj,) if exclude else ()
    phi = cohomological_solve(bser, theta, freq, (-low, low), excluded, divisor_floor)
    b_r = bser.coefficient(nj) if exclude else 0j
    b_h = retained_part(bser, None, ()) - retained_part(bser, (-low, low), ())
    ph = np.exp(2j * np.pi * theta)
    target = np.diag([ph, 1 / ph])

    def Phi(z):
        z = np.asarray(z)
        T = np.zeros(z.shape + (2, 2), dtype=complex)
        T[..., 0, 0] = 1
        T[..., 1, 1] = 1
        T[..., 0, 1] = -phi(z)
        return mat2.mul(T, mat2.inv(Bx(z)))

    zs = strip_grid(strip)
    b_norm = float(np.max(np.abs(defect(zs)[..., 0, 1])))
    ex = dict(extras or {})
    ex.update({"n_j": int(nj), "Delta": int(Delta), "low_cutoff": int(low), "b_norm": b_norm,
               "b_r": abs(complex(b_r)), "b_h_norm": float(np.sum(np.abs(b_h.coef))),
               "resonant_excluded": bool(exclude), "divisor_n_j": float(div_nj),
               "norm_phi": float(np.max(np.abs(phi(zs)))), "strip_floor": wave.strip_floor})
    ex["norm_Phi"] = float(np.max(mat2.opnorm(Phi(zs))))
    B = Phi
    if epsilon_balance is not None:
        d = ex["norm_Phi"] * epsilon_balance ** 0.25
        D = np.diag([d, 1 / d])
        B = lambda z: D @ Phi(z)  # noqa: E731
        ex["epsilon"] = float(epsilon_balance)
        ex["d"] = float(d)
        ex["norm_W"] = float(np.max(mat2.opnorm(B(zs))))
    rep = _make_report(TRIANGULARIZING, A, B, target, strip, extras=ex)
    if epsilon_balance is not None:
        vals = np.asarray(conjugate_push(A, B, strip, n_grid=512)[0].func(zs))
        rep.extras["norm_Z"] = float(np.max(mat2.opnorm(vals)))
    else:
        rep.extras["norm_Z"] = None
    return rep


# ---------------------------------------------------------------------------
# Real conjugacy to a rotation


def _real_parts(U: FourierSeries):
    Uc = U.conj()
    S = (U + Uc) * 0.5
    T = (U - Uc) * (-0.5j)
    return S, T


def _vector_degree(V: FourierSeries, period: float) -> float:
    def f(x):
        v = V(x)
        if np.max(np.abs(v.imag)) > 1e-8 * max(1.0, np.max(np.abs(v.real))):
            raise ValidationError("vector map is not real")
        return v.real
    return degree(f, period=period)


def rotation_from_wave(wave: BlochWave, nj: int = 0, det_floor: float = 1e-10, extras=None) -> ConjugacyReport:
    """W = [S, σT]/√det with S = Re U, T = Im U; target R_{−σθ}."""
    S, T = _real_parts(wave.U)
    x = np.arange(STRIP_POINTS) / STRIP_POINTS
    s, t = S(x), T(x)
    dline = (s[:, 0] * t[:, 1] - s[:, 1] * t[:, 0]).real
    if np.min(np.abs(dline)) <= det_floor or np.min(dline) * np.max(dline) < 0:
        raise DeterminantFloor(f"det[Re U, Im U] reaches {np.min(np.abs(dline)):.2e} on the real line")
    sigma = 1.0 if dline[0] > 0 else -1.0
    zs = strip_grid(wave.strip)
    u, uc = wave.U(zs), wave.Uc(zs)
    det_bt = u[:, 0] * uc[:, 1] - u[:, 1] * uc[:, 0]
    if np.min(np.abs(det_bt.imag)) <= det_floor:
        raise DeterminantFloor("inf |Im det B| on the strip below the floor")

    def W(z):
        z = np.asarray(z)
        sz, tz = S(z), T(z)
        out = np.empty(z.shape + (2, 2), dtype=complex)
        out[..., :, 0] = sz
        out[..., :, 1] = sigma * tz
        d = mat2.det(out)
        return out / np.sqrt(d)[..., None, None]

    target = mat2.rotation(-sigma * wave.theta)
    degW = degree(lambda xx: W(xx).real)
    ex = dict(extras or {})
    ex.update({"sigma": sigma, "degree_W": degW, "n_j": int(nj), "inf_det_ST": float(np.min(np.abs(dline))),
               "strip_floor": wave.strip_floor})
    # degree through the twisted column e^{πi n_j x} U on R/2Z
    M, _, _ = _twisted_real(wave, nj)
    try:
        ex["winding_twisted"] = _vector_degree(M, 2.0)
    except (DegenerateMap, ValidationError):
        ex["winding_twisted"] = None
    return _make_report(REAL_ROTATION, wave.cocycle, _inverse(W), target, wave.strip, -degW, ex)


def rotation_conjugacy(pot: Potential, freq: Frequency, E: float, data: DualEigenData, window: int = 400,
                       strip: float = DEFAULT_STRIP, eps0: float = 0.05, c0: int = C0) -> ConjugacyReport:
    """Real conjugacy of the Schrödinger cocycle to a rotation R_{∓θ}."""
    R = max(int(window) // c0 - 1, 1)
    wave = bloch_wave(data, pot, E, (-R, R), strip)
    res, nj = _choose_resonance(data.theta, freq, window, eps0, c0)
    return rotation_from_wave(wave, nj, extras={"resonances": res.entries, "window": int(window)})


# ---------------------------------------------------------------------------
# Parabolic (resonant) reduction


def _twisted_real(wave: BlochWave, nj: int):
    """Real part (or imaginary part) of e^{πi n_j x}U(x), as a 2-periodic series."""
    coef = wave.U.coef
    m = coef.shape[-1]
    c2 = np.zeros((2, 2 * m - 1), dtype=complex)
    c2[:, ::2] = coef
    tw = FourierSeries(c2, 2 * wave.U.kmin + nj, 2.0)
    Mr, Mi = _real_parts(tw)
    xs = 2 * np.arange(STRIP_POINTS) / STRIP_POINTS
    nr = np.mean(np.linalg.norm(Mr(xs), axis=-1))
    ni = np.mean(np.linalg.norm(Mi(xs), axis=-1))
    return (Mr if nr >= ni else Mi), max(nr, ni), min(nr, ni)


def perturbative_from_wave(wave: BlochWave, nj: int, divisor_floor: float = DIVISOR_FLOOR,
                           resonance_tol: float = 1e-9, extras=None) -> ConjugacyReport:
    """Reduce a cocycle with 2θ ≡ n_j α to [[s, κ], [0, s]], s = ±1, |κ| ≤ 1."""
    freq, theta = wave.freq, wave.theta
    alpha = freq.value
    gap = torus_distance(2 * theta - freq.kalpha(nj))
    if gap > resonance_tol:
        raise ValidationError(f"θ is not resonant at n_j={nj} (‖2θ − n_jα‖ = {gap:.2e})")
    s = float(np.round(np.cos(2 * np.pi * theta - np.pi * nj * alpha)))
    M, big, small = _twisted_real(wave, nj)
    zs = strip_grid(wave.strip, period=1.0)
    mz = M(zs)
    q_strip = mz[:, 0] ** 2 + mz[:, 1] ** 2
    if np.min(np.abs(q_strip)) < FLOOR_MIN:
        raise FloorCollapse("‖M‖² collapses on the strip")

    def W(z):
        z = np.asarray(z)
        m = M(z)
        q = m[..., 0] ** 2 + m[..., 1] ** 2
        out = np.empty(z.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = m[..., 0]
        out[..., 1, 0] = m[..., 1]
        out[..., 0, 1] = -m[..., 1] / q
        out[..., 1, 1] = m[..., 0] / q
        return out

    A = wave.cocycle

    def C(z):
        z = np.asarray(z)
        return mat2.mul(mat2.mul(mat2.inv(W(z + alpha)), np.asarray(A(z))), W(z))

    n_fft = max(1024, 1 << int(np.ceil(np.log2(8 * wave.U.coef.shape[-1]))))
    beta2 = FourierSeries.from_function(lambda x: C(x)[..., 0, 1], n_fft)
    top = float(np.max(np.abs(beta2.coef)))
    beta2 = beta2.map_coef(lambda c: np.where(np.abs(c) < 1e-14 * max(top, 1e-300), 0, c))
    b = complex(beta2.mean)
    modes = beta2.modes
    div = np.exp(2j * np.pi * np.asarray(freq.kalpha(modes))) - 1
    nz = (modes != 0) & (np.abs(beta2.coef) > 0)
    if np.any(nz & (np.abs(div) <= divisor_floor)):
        raise SmallDivisor(modes[nz & (np.abs(div) <= divisor_floor)])
    phic = np.zeros_like(beta2.coef)
    phic[nz] = -beta2.coef[nz] / (s * div[nz])
    phi = FourierSeries(phic, beta2.kmin)
    br = b.real
    d2 = min(1 / abs(br), 1.0) if br != 0 else 1.0
    d = np.sqrt(d2)
    kappa = d2 * br
    D = np.diag([d, 1 / d])

    def Bmap(z):
        z = np.asarray(z)
        P = np.zeros(z.shape + (2, 2), dtype=complex)
        P[..., 0, 0] = 1
        P[..., 1, 1] = 1
        P[..., 0, 1] = phi(z)
        return D @ mat2.mul(P, mat2.inv(W(z)))

    target = np.array([[s, kappa], [0, s]])
    ex = dict(extras or {})
    ex.update({"s": s, "kappa": kappa, "mean_b": [b.real, b.imag], "n_j": int(nj),
               "twist_norm_ratio": float(small / big) if big > 0 else None,
               "norm_phi": float(np.max(np.abs(phi(zs))))})
    try:
        deg = degree(lambda xx: Bmap(xx).real)
    except (DegenerateMap, ValidationError):
        deg = None
    return _make_report(PERTURBATIVE, A, Bmap, target, wave.strip, deg, ex)


def exact_resonance(theta: float, freq: Frequency, k_max: int, tol: float = 1e-9):
    """n with ‖2θ − nα‖ < tol and |n| ≤ k_max (smallest |n|), or None."""
    ks = np.arange(-k_max, k_max + 1)
    d = torus_distance(2 * theta - np.asarray(freq.kalpha(ks)))
    ok = np.nonzero(d < tol)[0]
    if ok.size == 0:
        return None
    return int(ks[ok[np.argmin(np.abs(ks[ok]))]])


def perturbative_reduce(pot: Potential, freq: Frequency, E: float, data: DualEigenData, window: int = 400,
                        strip: float = 0.02, c0: int = C0, resonance_tol: float = 1e-9) -> ConjugacyReport:
    """Parabolic reduction at a resonant phase (2θ ∈ αZ + Z)."""
    R = max(int(window) // c0 - 1, 1)
    nj = exact_resonance(data.theta, freq, data.radius, resonance_tol)
    if nj is None:
        raise ValidationError("data.theta is not resonant; use rotation_conjugacy")
    wave = bloch_wave(data, pot, E, (-R, R), strip)
    return perturbative_from_wave(wave, nj, resonance_tol=resonance_tol, extras={"window": int(window)})


# ---------------------------------------------------------------------------
# Localized reduction (case split)


def reduce_wave(wave: BlochWave, k_max: int = 200, det_band=(1e-7, 1e-3),
                resonance_tol: float = 1e-9) -> ConjugacyReport:
    S, T = _real_parts(wave.U)
    x = np.arange(STRIP_POINTS) / STRIP_POINTS
    s, t = S(x), T(x)
    dline = np.abs((s[:, 0] * t[:, 1] - s[:, 1] * t[:, 0]).real)
    scale = float(np.max(np.linalg.norm(wave.U(x), axis=-1))) ** 2
    ratio = 2 * float(np.min(dline)) / scale
    nj = exact_resonance(wave.theta, wave.freq, k_max, resonance_tol)
    lo, hi = det_band
    info = {"det_ratio": ratio, "resonance": nj}
    if ratio >= hi:
        rep = rotation_from_wave(wave, 0, extras=info)
        rep.extras["case"] = "A"
        return rep
    if ratio <= lo and nj is not None:
        rep = perturbative_from_wave(wave, nj, resonance_tol=resonance_tol, extras=info)
        rep.extras["case"] = "B"
        return rep
    candidates = {}
    for name, fn in (("A", lambda: rotation_from_wave(wave, 0, extras=info)),
                     ("B", lambda: perturbative_from_wave(wave, nj if nj is not None else 0,
                                                         resonance_tol=np.inf, extras=info))):
        try:
            with np.errstate(all="ignore"):
                candidates[name] = fn()
        except (NumericalError, ValidationError) as exc:
            candidates[name] = exc
    raise CaseAmbiguous(f"|det B| ratio {ratio:.2e} inside the band {det_band}", candidates)


def reduce_localized(pot: Potential, freq: Frequency, E: float, data: DualEigenData, window=None,
                     strip: float = 0.02, det_band=(1e-7, 1e-3)) -> ConjugacyReport:
    """Case A (det B̃ ≠ 0): rotation; case B (2θ ∈ αZ + Z): parabolic normal form."""
    wave = bloch_wave(data, pot, E, window, strip)
    return reduce_wave(wave, data.radius, det_band)


def rho_from_report(report: ConjugacyReport) -> float:
    """ρ of the source cocycle implied by the report (mod 1)."""
    tgt = np.asarray(report.target)
    if report.mode == REAL_ROTATION:
        rho_t = np.arctan2(tgt[1, 0].real, tgt[0, 0].real) / (2 * np.pi)
    elif report.mode == PERTURBATIVE:
        rho_t = 0.0 if tgt[0, 0].real > 0 else 0.5
    else:
        raise ValidationError("ρ bookkeeping needs a real report")
    return float((rho_t - (report.degree or 0) * report.cocycle.freq.value) % 1.0)
