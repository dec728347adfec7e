"""Almost-localization, ε-uniformity, Lagrange bounds and (m,k)-regularity checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arithmetic import Frequency, ResonanceSequence
from .duality import C0, DualEigenData
from .errors import CoincidentNodes, DegreeTooHigh, ValidationError, WindowEmpty
from .fourier import FourierSeries
from .operators import (CHECK, HAT, Potential, build_restriction, green_matrix, log_abs_P_N,
                        tail_weights)

PASS = "PASS"
FAIL = "FAIL"
INDETERMINATE = "INDETERMINATE"

MIN_POINTS = 5
# explicit sizes standing in for "sufficiently large"
MIN_LENGTH = 20
MIN_QN = 13
RATE_CEILING = 50.0
ZERO_FLOOR = 1e-280


# ---------------------------------------------------------------------------
# Almost localization


@dataclass(frozen=True)
class WindowFit:
    lo: int
    hi: int
    C1: float
    eps1: float
    points: int


@dataclass(frozen=True, eq=False)
class DecayProfile:
    u_hat: np.ndarray
    indices: np.ndarray
    resonance_windows: tuple
    fits: tuple
    verdict: str
    c1_max: float = 1e3
    eps1_min: float = 0.01

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "windows": [list(w) for w in self.resonance_windows],
            "fits": [{"lo": f.lo, "hi": f.hi, "C1": f.C1, "eps1": f.eps1, "points": f.points} for f in self.fits],
        }


def resonance_windows(res: ResonanceSequence, radius: int, c0: float = C0):
    """Intervals C0(1+|n_j|) < |k| < |n_{j+1}|/C0, the last one closed by ``radius``."""
    mags = sorted({abs(n) for n in res.modes})
    if not mags or mags[0] != 0:
        mags = [0] + mags
    out = []
    for j, n in enumerate(mags):
        lo = int(np.floor(c0 * (1 + n))) + 1
        hi = int(np.ceil(mags[j + 1] / c0)) - 1 if j + 1 < len(mags) else radius
        hi = min(hi, radius)
        if hi >= lo:
            out.append((lo, hi))
    return out


def _fit_window(k, mag):
    ok = mag > ZERO_FLOOR
    if np.count_nonzero(ok) < MIN_POINTS:
        return 1.0, RATE_CEILING
    slope, _ = np.polyfit(k[ok], np.log(mag[ok]), 1)
    eps1 = min(float(-slope), RATE_CEILING)
    C1 = float(np.max(mag[ok] * np.exp(eps1 * k[ok])))
    return C1, eps1


def almost_localization_check(data: DualEigenData, res: ResonanceSequence, c0: float = C0,
                              c1_max: float = 1e3, eps1_min: float = 0.01) -> DecayProfile:
    """Log-linear decay fits of |û_k| between consecutive resonances.

    Both signs ±k are pooled in each window.  PASS when every window has
    C1 ≤ c1_max and ε1 ≥ eps1_min.  Raises :class:`WindowEmpty` when no window
    has at least five indices.
    """
    idx = data.indices
    mag = np.abs(data.u_hat)
    wins = [w for w in resonance_windows(res, data.radius, c0) if w[1] - w[0] + 1 >= MIN_POINTS]
    if not wins:
        raise WindowEmpty("all inter-resonance windows are shorter than five indices")
    fits = []
    for lo, hi in wins:
        sel = (np.abs(idx) >= lo) & (np.abs(idx) <= hi)
        C1, eps1 = _fit_window(np.abs(idx[sel]).astype(float), mag[sel])
        fits.append(WindowFit(lo, hi, C1, eps1, int(np.count_nonzero(sel))))
    ok = all(f.C1 <= c1_max and f.eps1 >= eps1_min for f in fits)
    return DecayProfile(data.u_hat, idx, tuple(wins), tuple(fits), PASS if ok else FAIL, c1_max, eps1_min)


# ---------------------------------------------------------------------------
# ε-uniformity of Lagrange nodes


@dataclass(frozen=True)
class UniformityResult:
    uniform: bool
    exponent: float
    k: int


def lagrange_max(nodes, grid: int = 1024) -> float:
    """max over z ∈ [−1, 1] and j of Π_{i≠j} |z − c_i| / |c_j − c_i|."""
    c = np.asarray(nodes, dtype=float)
    z = np.concatenate([np.linspace(-1, 1, grid), [-1.0, 1.0]])
    logs = np.empty((len(c), len(z)))
    # a grid point landing on a node gives log 0 = −inf, which is harmless under max
    with np.errstate(divide="ignore"):
        for j in range(len(c)):
            others = np.delete(c, j)
            logs[j] = np.sum(np.log(np.abs(z[None, :] - others[:, None])), axis=0) - np.sum(np.log(np.abs(c[j] - others)))
    return float(np.max(logs))


def uniformity_test(thetas, eps: float, grid: int = 1024, sep: float = 1e-10) -> UniformityResult:
    """Is {θ_0..θ_k} ε-uniform: max Lagrange ratio ≤ e^{kε}?  Exponent = log(max)/k."""
    c = np.cos(2 * np.pi * np.asarray(thetas, dtype=float))
    k = len(c) - 1
    if k < 1:
        raise ValidationError("need at least two nodes")
    gaps = np.abs(c[:, None] - c[None, :])[~np.eye(len(c), dtype=bool)]
    if np.min(gaps) <= sep:
        raise CoincidentNodes(f"cos values separated by {np.min(gaps):.2e}")
    lm = lagrange_max(c, grid)
    expo = lm / k
    return UniformityResult(bool(expo <= eps), float(expo), k)


def log_Q(pot: Potential, freq: Frequency, E: float, k: int, thetas) -> np.ndarray:
    """ln|Q_k(cos 2πθ)| through P_k(θ − (k−1)α/2) (Ȟ normalization)."""
    shift = (k - 1) * freq.value / 2
    return log_abs_P_N(pot, freq, E, k, np.asarray(thetas, dtype=float) - shift)


def in_A_kr(pot: Potential, freq: Frequency, E: float, k: int, r: float, thetas) -> np.ndarray:
    """Membership in A_{k,r} = {θ : |Q_k(cos 2πθ)| ≤ e^{(k+1)r}}."""
    return log_Q(pot, freq, E, k, thetas) <= (k + 1) * r


def nonuniform_exponent_bound(k: int, r: float, coupling: float) -> float:
    """Lower bound on the uniformity exponent of k+1 nodes inside A_{k,r}.

    Q_k has leading coefficient (2/λ)^k in z = cos 2πθ, so by the Chebyshev
    extremal property some Lagrange basis polynomial has sup ≥ 2λ^{−k}/((k+1)e^{(k+1)r}).
    """
    return (np.log(2) - k * np.log(coupling) - np.log(k + 1) - (k + 1) * r) / k


# ---------------------------------------------------------------------------
# Lagrange bound for trigonometric polynomials


@dataclass(frozen=True)
class LagrangeReport:
    sup: float
    orbit_sup: float
    ratio: float
    normalized: float
    points: int
    indeterminate: bool = False


def lagrange_bound_check(p: FourierSeries, freq: Frequency, x0: float, r: int, n_level: int,
                         grid: int = 4096) -> LagrangeReport:
    """Compare ‖p‖_0 with the sup of |p| along x0 + jα, 0 ≤ j ≤ r q_n − 1.

    Reports with q_n below ``MIN_QN`` are flagged indeterminate.
    """
    qs = freq.all_denominators
    if n_level + 1 >= len(qs):
        raise ValidationError("continued fraction too shallow for n_level")
    qn, qn1 = qs[n_level], qs[n_level + 1]
    k = r * qn - 1
    if p.essential_degree() > k:
        raise DegreeTooHigh(f"essential degree {p.essential_degree()} exceeds r q_n − 1 = {k}")
    x = np.arange(grid) / grid
    sup = float(np.max(np.abs(p(x))))
    orbit = x0 + np.arange(k + 1) * freq.value
    osup = float(np.max(np.abs(p(orbit))))
    if osup == 0:
        raise ValidationError("p vanishes on the orbit")
    ratio = sup / osup
    return LagrangeReport(sup, osup, ratio, float(np.log(ratio) / (r * np.log(qn1))), k + 1, qn < MIN_QN)


# ---------------------------------------------------------------------------
# (m, k)-regularity


@dataclass(frozen=True)
class RegularityResult:
    regular: bool
    value: float
    bound: float
    length: int
    verdict: str = PASS
    details: dict = field(default_factory=dict)


def regularity_check(pot: Potential, freq: Frequency, theta: float, E: float, y: int, interval, m: float,
                     tol: float = 1e-12, normalization: str = CHECK) -> RegularityResult:
    """Is y (m, k)-regular on I = [x1+1, x2−1]?

    Sum of |G_I(y, x) a_{x−x_i}| over x ∈ I, i = 1, 2 against e^{−mk}, with
    k = x2 − x1 − 1 the interval length.  Intervals shorter than
    ``MIN_LENGTH`` get the verdict INDETERMINATE.  With ``normalization=HAT``
    the operator is Ĥ_θ − E and the weights a_k carry the factor λ, which
    keeps the check meaningful at λ = 0.
    """
    a, b = int(interval[0]), int(interval[1])
    if not a <= y <= b:
        raise ValidationError("y must lie in the interval")
    x1, x2 = a - 1, b + 1
    k = b - a + 1
    res = build_restriction(pot, freq, theta, E, (a, b), normalization)
    g = green_matrix(res, tol)[y - a]
    w = tail_weights(pot)
    scale = abs(pot.coupling) if normalization == HAT else 1.0
    xs = np.arange(a, b + 1)
    total = scale * float(np.sum(np.abs(g) * (w(xs - x1) + w(xs - x2))))
    bound = float(np.exp(-m * k))
    regular = total < bound
    verdict = INDETERMINATE if k < MIN_LENGTH else (PASS if regular else FAIL)
    return RegularityResult(regular, total, bound, k, verdict)
