"""Quasiperiodic SL(2) cocycles: iteration, Lyapunov exponent, rotation number,
degree, a uniform-hyperbolicity test and conjugation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _kernels, mat2
from .arithmetic import Frequency
from .errors import (DegenerateMap, Inconclusive, NonzeroDegree, Overflow,
                     StripSingularity, ValidationError)
from .fourier import FourierSeries, constant, strip_grid, strip_sup
from .operators import Potential

OVERFLOW_GUARD = 1e300


@dataclass(frozen=True, eq=False)
class CocycleMap:
    """x ↦ A(x) ∈ SL(2, C) over the rotation by ``freq``.

    ``series`` holds the Fourier data of each entry.  When the map is only
    known pointwise (e.g. after a conjugation) ``func`` evaluates it exactly
    and ``series`` is its sampled transform.
    """

    freq: Frequency
    series: FourierSeries
    func: Optional[Callable] = None
    det_certificate: float = float("nan")
    real: bool = True
    meta: dict = field(default_factory=dict)

    def __call__(self, z):
        f = self.func if self.func is not None else self.series
        out = np.asarray(f(z))
        if self.real and not np.iscomplexobj(z):
            return out.real
        return out

    def strip_norm(self, eps: float, n: int = 512) -> "StripNorm":
        return StripNorm(eps, strip_sup(self, eps, n))


@dataclass(frozen=True)
class StripNorm:
    epsilon: float
    value: float


def _det_certificate(f, n: int = 256) -> float:
    x = np.arange(n) / n
    return float(np.max(np.abs(mat2.det(np.asarray(f(x))) - 1)))


def _is_real_series(s: FourierSeries, tol: float = 1e-12) -> bool:
    c = s.coef
    scale = max(1.0, float(np.max(np.abs(c))))
    return bool(np.max(np.abs(c - s.conj().truncate(s.kmin, s.kmax).coef)) <= tol * scale)


def cocycle_from_series(freq: Frequency, series: FourierSeries, func=None, meta=None) -> CocycleMap:
    if series.shape != (2, 2):
        raise ValidationError("cocycle series must be 2×2 valued")
    f = func if func is not None else series
    return CocycleMap(freq, series, func, _det_certificate(f), _is_real_series(series), meta or {})


def schrodinger_cocycle(pot: Potential, E: float, freq: Frequency) -> CocycleMap:
    """S(x) = [[E − λv(x), −1], [1, 0]]."""
    v = pot.series()
    K = pot.support
    coef = np.zeros((2, 2, 2 * K + 1), dtype=complex)
    coef[0, 0] = -pot.coupling * v.coef
    coef[0, 0, K] += E
    coef[0, 1, K] = -1.0
    coef[1, 0, K] = 1.0
    s = FourierSeries(coef, -K)
    return cocycle_from_series(freq, s, meta={"potential": pot, "energy": float(E)})


def constant_cocycle(m, freq: Frequency) -> CocycleMap:
    m = np.asarray(m, dtype=complex)
    return cocycle_from_series(freq, constant(m))


def rotation_cocycle(t: float, freq: Frequency) -> CocycleMap:
    return constant_cocycle(mat2.rotation(t), freq)


# ---------------------------------------------------------------------------
# Iteration


def orbit_matrices(coc: CocycleMap, xs, n: int) -> np.ndarray:
    """A(x_j + kα) for k < n, shape (n, m, 2, 2)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    pts = xs[None, :] + np.arange(n)[:, None] * coc.freq.value
    pts = np.mod(pts, 1.0)
    out = coc(pts)
    if coc.real:
        return np.ascontiguousarray(np.real(out))
    return np.ascontiguousarray(out)


def iterate(coc: CocycleMap, n: int, x):
    """A_n(x) = A(x+(n-1)α)···A(x); A_{-n}(x) = A_n(x − nα)^{-1}."""
    x = np.asarray(x, dtype=float)
    if n == 0:
        return mat2.eye(x.shape)
    if n < 0:
        # invert factor by factor: det of a long product loses all digits to cancellation
        mats = mat2.inv(orbit_matrices(coc, x.reshape(-1) + n * coc.freq.value, -n))
        p = mat2.eye((mats.shape[1],)).astype(mats.dtype)
        for k in range(-n):
            p = mat2.mul(p, mats[k])
            if np.max(np.abs(p)) > OVERFLOW_GUARD:
                raise Overflow(f"product entries exceed {OVERFLOW_GUARD:g} at step {k + 1}")
        return p.reshape(x.shape + (2, 2))
    mats = orbit_matrices(coc, x.reshape(-1), n)
    p = mat2.eye((mats.shape[1],)).astype(mats.dtype)
    for k in range(n):
        p = mat2.mul(mats[k], p)
        if np.max(np.abs(p)) > OVERFLOW_GUARD:
            raise Overflow(f"product entries exceed {OVERFLOW_GUARD:g} at step {k + 1}")
    return p.reshape(x.shape + (2, 2))


class Estimate(NamedTuple):
    value: float
    error: float


def _grid(samples: int):
    return np.arange(samples) / samples


def lyapunov_exponent(coc: CocycleMap, iterates: int = 10_000, samples: int = 64) -> Estimate:
    """(1/n)∫ ln‖A_n(x)‖ dx over ``samples`` phases.

    The error is half the spread between the n and n/2 estimates.
    """
    if iterates < 100:
        raise ValidationError("iterates must be at least 100")
    half = iterates // 2
    n = 2 * half
    traj = _kernels.log_norm_trajectory(orbit_matrices(coc, _grid(samples), n), half)
    l_half = float(np.mean(traj[:, 0])) / half
    l_full = float(np.mean(traj[:, 1])) / n
    return Estimate(l_full, 0.5 * abs(l_full - l_half))


def norm_growth(coc: CocycleMap, steps: int, samples: int = 256, every: int = 1):
    """ln‖A_s(x_j)‖ for s = every, 2·every, ..., shape (samples, steps // every)."""
    return _kernels.log_norm_trajectory(orbit_matrices(coc, _grid(samples), steps), every)


def _polar_center(coc: CocycleMap, n: int = 4096) -> float:
    """Midpoint of the lifted polar angle of A(x) over the circle (in turns)."""
    a = np.asarray(coc(np.arange(n) / n)).real
    g = np.unwrap(np.arctan2(a[:, 1, 0] - a[:, 0, 1], a[:, 0, 0] + a[:, 1, 1])) / (2 * np.pi)
    return 0.5 * float(g.min() + g.max())


def rotation_number(coc: CocycleMap, iterates: int = 10_000, samples: int = 8,
                    y_grid: int = 64, check_degree: bool = True) -> Estimate:
    """Fibered rotation number in [0, 1) via Birkhoff averages of the angle lift."""
    if not coc.real:
        raise ValidationError("rotation number needs a real cocycle")
    if check_degree:
        d = degree(coc)
        if d != 0:
            raise NonzeroDegree(f"cocycle has degree {d}; factor out R_(kx) first")
    half = iterates // 2
    n = 2 * half
    mats = orbit_matrices(coc, _grid(samples), n)
    tot, first = _kernels.rotation_lift(mats, y_grid, _polar_center(coc))
    r_full = float(np.mean(tot)) / n
    r_half = float(np.mean(first)) / half
    return Estimate(r_full % 1.0, 0.5 * abs(r_full - r_half))


def rotation_number_lift(coc: CocycleMap, iterates: int = 10_000, samples: int = 8,
                         y_grid: int = 64) -> float:
    """Unreduced lift average (not taken mod 1)."""
    half = iterates // 2
    mats = orbit_matrices(coc, _grid(samples), 2 * half)
    tot, _ = _kernels.rotation_lift(mats, y_grid, _polar_center(coc))
    return float(np.mean(tot)) / (2 * half)


# ---------------------------------------------------------------------------
# Degree


def degree(fmap, period: float = 1.0, tol: float = 1e-8, n0: int = 256, n_max: int = 1 << 17):
    """Winding number of the first column of a real matrix map on [0, period].

    Maps that flip sign after one period (PSL lifts) give half-integers.
    """
    n = n0
    while True:
        x = np.arange(n + 1) * (period / n)
        vals = np.asarray(fmap(x))
        if np.iscomplexobj(vals):
            if np.max(np.abs(vals.imag)) > 1e-8 * max(1.0, np.max(np.abs(vals.real))):
                raise ValidationError("degree needs a real-valued map")
            vals = vals.real
        if vals.shape[-2:] == (2, 2):
            smax, smin = mat2.singular_values(vals)
            if np.min(smin) <= tol:
                raise DegenerateMap(f"map nearly singular (min singular value {np.min(smin):.2e})")
            col = vals[..., :, 0]
        else:
            col = vals
            if np.min(np.linalg.norm(col, axis=-1)) <= tol:
                raise DegenerateMap("vector map vanishes on the grid")
        ang = np.arctan2(col[:, 1], col[:, 0]) / (2 * np.pi)
        inc = np.diff(ang)
        inc -= np.ceil(inc - 0.5)
        if np.max(np.abs(inc)) < 0.25 or n >= n_max:
            break
        n *= 2
    w = float(np.sum(inc))
    w2 = round(2 * w)
    return w2 // 2 if w2 % 2 == 0 else w2 / 2


# ---------------------------------------------------------------------------
# Uniform hyperbolicity


class UHResult(NamedTuple):
    is_uh: bool
    margin: float


def uh_test(coc: CocycleMap, horizon: int = 1000, grid: int = 64, efolds: float = 8.0) -> UHResult:
    """Semi-decision for uniform hyperbolicity.

    True when ln‖A_s‖ gains at least ``efolds`` between s = n/2 and s = n at
    every grid point and the most expanded directions at n/2 and n agree.
    False when sup_x ln‖A_n(x)‖ stays below 3 ln n + 5 (polynomial growth).
    Otherwise :class:`Inconclusive`.  The margin is the minimal growth rate
    (ln‖A_n‖ − ln‖A_{n/2}‖)/(n/2).
    """
    half = horizon // 2
    n = 2 * half
    mats = orbit_matrices(coc, _grid(grid), n)
    traj = _kernels.log_norm_trajectory(mats, half)
    rate = (traj[:, 1] - traj[:, 0]) / half
    margin = float(np.min(rate))
    if not coc.real:
        cauchy = True
    else:
        dirs = _kernels.top_directions(mats)
        dd = np.abs(dirs[:, 1] - dirs[:, 0])
        dd = np.minimum(dd, np.pi - dd)
        cauchy = bool(np.max(dd) < 1e-3)
    if margin * half >= efolds and cauchy:
        return UHResult(True, margin)
    if np.max(traj[:, 1]) <= 3 * np.log(n) + 5:
        return UHResult(False, margin)
    raise Inconclusive(f"no decision at horizon {n} (margin {margin:.3e}); increase the horizon")


# ---------------------------------------------------------------------------
# Conjugation


@dataclass(frozen=True)
class PushReport:
    strip: float
    norm_result: StripNorm
    norm_B: StripNorm
    min_det_B: float
    degree_B: Optional[float]
    grid: int


def _eval_map(B, z):
    return np.asarray(B(z))


def conjugate_push(coc: CocycleMap, B, eps: float = 0.0, n_grid: Optional[int] = None,
                   det_tol: float = 1e-12, n_strip: int = 512):
    """x ↦ B(x+α) A(x) B(x)^{-1} with strip norms and deg B.

    ``B`` is any callable returning 2×2 matrices (a :class:`FourierSeries`
    works).  The returned cocycle evaluates the product pointwise; its
    Fourier data come from an oversampled grid transform.
    """
    alpha = coc.freq.value
    zs = strip_grid(eps, n_strip)
    bz = _eval_map(B, zs)
    min_det = float(np.min(np.abs(mat2.det(bz))))
    if min_det < det_tol:
        raise StripSingularity(f"min |det B| = {min_det:.3e} on the strip")

    def func(z):
        z = np.asarray(z)
        return mat2.mul(mat2.mul(_eval_map(B, z + alpha), np.asarray(coc(z))),
                        mat2.inv(_eval_map(B, z)))

    if n_grid is None:
        modes = coc.series.coef.shape[-1]
        if isinstance(B, FourierSeries):
            modes += 2 * B.coef.shape[-1] * (2 if B.period == 2 else 1)
        else:
            modes += 256
        n_grid = max(512, 1 << int(np.ceil(np.log2(4 * modes))))
        n_grid = min(n_grid, 1 << 14)
    series = FourierSeries.from_function(func, n_grid)
    series = series.trimmed(1e-15 * float(np.max(np.abs(series.coef))))
    out = CocycleMap(coc.freq, series, func, _det_certificate(func), coc.real and _real_on_line(B),
                     {"pushed_from": coc})
    try:
        deg = degree(lambda x: _eval_map(B, x)) if _real_on_line(B) else None
    except (DegenerateMap, ValidationError):
        deg = None
    rep = PushReport(eps, StripNorm(eps, strip_sup(func, eps, n_strip)),
                     StripNorm(eps, float(np.max(mat2.opnorm(bz)))), min_det, deg, n_grid)
    return out, rep


def _real_on_line(B, n: int = 64) -> bool:
    v = _eval_map(B, np.arange(n) / n)
    return bool(np.max(np.abs(np.imag(v))) <= 1e-9 * max(1.0, float(np.max(np.abs(v)))))
