"""Continued fractions, torus distances, Diophantine fits and resonances."""

from __future__ import annotations

from dataclasses import dataclass, field

import functools
import math

import mpmath as mp
import numpy as np

from .errors import LiouvilleLike, RationalInput, ValidationError

_DPS = 50
_LARGE_K = 10**6

NAMED_FREQUENCIES = ("golden", "silver")


def _named_value(name: str):
    with mp.workdps(_DPS + 10):
        if name == "golden":
            return (mp.sqrt(5) - 1) / 2
        if name == "silver":
            return mp.sqrt(2) - 1
    raise ValidationError(f"unknown named frequency {name!r}; use one of {NAMED_FREQUENCIES}")


def torus_distance(x):
    """Distance from ``x`` to the nearest integer (vectorized)."""
    x = np.asarray(x, dtype=float)
    d = np.abs(x - np.round(x))
    return float(d) if d.ndim == 0 else d


@functools.lru_cache(maxsize=64)
def _alpha_parts(value: float, hp: str):
    h1 = math.ldexp(math.floor(math.ldexp(value, 26)), -26)
    with mp.workdps(_DPS):
        lo = float(mp.mpf(hp) - mp.mpf(value)) if hp else 0.0
    return h1, value - h1, lo


@dataclass(frozen=True)
class Frequency:
    """An irrational rotation number with its continued fraction data.

    ``denominators`` holds q_0..q_{cutoff-1}; ``partial_quotients`` holds
    a_1..a_cutoff so that the next denominator q_cutoff is also available.
    """

    value: float
    partial_quotients: tuple
    denominators: tuple
    cutoff: int
    hp: str = field(default="", compare=False)

    @property
    def next_denominator(self) -> int:
        q = self.denominators
        qm = q[-2] if len(q) > 1 else 0
        return self.partial_quotients[len(q) - 1] * q[-1] + qm

    @property
    def all_denominators(self) -> tuple:
        """q_0..q_cutoff (one more than ``denominators``)."""
        return self.denominators + (self.next_denominator,)

    def _mp_value(self):
        return mp.mpf(self.hp) if self.hp else mp.mpf(self.value)

    def kalpha(self, k):
        """k·α mod 1 in [0, 1); exact-ish for huge |k| via the stored high-precision value."""
        k = np.asarray(k)
        if k.size and np.max(np.abs(k)) > _LARGE_K:
            with mp.workdps(_DPS):
                a = self._mp_value()
                out = np.array([float(mp.frac(int(kk) * a)) for kk in k.ravel()])
            out = out.reshape(k.shape)
        else:
            # α = h1 + h2 + lo with h1, h2 short enough that k·h1, k·h2 are exact:
            # the phase error stays at one ulp of 1 instead of one ulp of kα
            h1, h2, lo = _alpha_parts(self.value, self.hp)
            out = np.mod(np.mod(k * h1, 1.0) + np.mod(k * h2, 1.0) + k * lo, 1.0)
        return float(out) if out.ndim == 0 else out

    def kalpha_distance(self, k):
        """‖kα‖ on R/Z."""
        return torus_distance(self.kalpha(k))

    def phase_distance(self, theta: float, k):
        """‖2θ − kα‖ on R/Z."""
        return torus_distance(2.0 * theta - np.asarray(self.kalpha(k)))


def continued_fraction(x, depth: int, tol: float = 1e-12) -> Frequency:
    """Continued-fraction expansion of ``x`` in (0,1).

    ``x`` may be a float, a decimal string, an mpmath number or one of the
    names ``"golden"``/``"silver"``.  Raises :class:`RationalInput` when the
    remainder drops below ``tol`` before ``depth`` levels are reached.
    """
    if depth < 1:
        raise ValidationError("depth must be a positive integer")
    with mp.workdps(_DPS):
        if isinstance(x, str) and x in NAMED_FREQUENCIES:
            xv = _named_value(x)
        else:
            xv = mp.mpf(x)
        if not (0 < xv < 1):
            raise ValidationError(f"frequency must lie in (0,1), got {x}")
        quotients = []
        r = xv
        for _ in range(depth):
            if r < tol:
                raise RationalInput(f"expansion of {x} terminates after {len(quotients)} quotients")
            inv = 1 / r
            a = int(mp.floor(inv))
            r = inv - a
            # a remainder within tol of 1 means inv was an integer up to rounding
            if 1 - r < tol:
                a += 1
                r = mp.mpf(0)
            quotients.append(a)
        if r < tol:
            raise RationalInput(f"expansion of {x} terminates after {depth} quotients")
        q = [1, quotients[0]]
        for a in quotients[1:depth - 1]:
            q.append(a * q[-1] + q[-2])
        hp = mp.nstr(xv, _DPS - 5)
        return Frequency(float(xv), tuple(quotients), tuple(q[:depth]), depth, hp)


def golden_mean(depth: int = 40) -> Frequency:
    return continued_fraction("golden", depth)


def silver_mean(depth: int = 40) -> Frequency:
    return continued_fraction("silver", depth)


def make_frequency(alpha, depth: int = 40) -> Frequency:
    """Frequency from a name, a float, or an existing :class:`Frequency`."""
    if isinstance(alpha, Frequency):
        return alpha
    if isinstance(alpha, str) and alpha not in NAMED_FREQUENCIES:
        try:
            alpha = float(alpha)
        except ValueError:
            raise ValidationError(f"cannot parse frequency {alpha!r}") from None
    if isinstance(alpha, float):
        # float inputs carry ~16 digits: keep the depth within what they support
        depth = min(depth, 25)
    return continued_fraction(alpha, depth)


# ---------------------------------------------------------------------------
# Diophantine parameters


@dataclass(frozen=True)
class DiophantineParams:
    """Parameters with q_{n+1} ≤ κ^{-1} q_n^{τ-1} at every computed level."""

    kappa: float
    tau: float
    slack: tuple = ()
    levels: tuple = ()

    def holds(self, qn: int, qn1: int) -> bool:
        return math.log(qn1) <= (self.tau - 1.0) * math.log(qn) - math.log(self.kappa) + 1e-12


def diophantine_fit(freq: Frequency, ceiling: float = 5.0) -> DiophantineParams:
    """Fit (κ, τ) to the denominator growth.

    τ comes from the least-squares slope of ln q_{n+1} against ln q_n over the
    levels with q_n ≥ 2 (clamped at 2, the Dirichlet value); κ is then the
    largest constant making the bound hold at every level.  The per-level
    slack ln(κ^{-1} q_n^{τ-1} / q_{n+1}) is returned as a certificate.
    """
    qi = freq.all_denominators
    if len(freq.denominators) < 4:
        raise ValidationError("diophantine_fit needs at least 4 denominators")
    # logs straight from the integers: super-exponential growth overflows floats
    lq = np.array([math.log(v) for v in qi])
    pairs = [(lq[i], lq[i + 1]) for i in range(len(qi) - 1) if qi[i] >= 2]
    if len(pairs) >= 2:
        slope = np.polyfit([p[0] for p in pairs], [p[1] for p in pairs], 1)[0]
        tau = max(1.0 + slope, 2.0)
    elif pairs:
        tau = max(1.0 + pairs[0][1] / pairs[0][0], 2.0)
    else:
        tau = 2.0
    log_kappa = np.min((tau - 1.0) * lq[:-1] - lq[1:])
    kappa = float(np.exp(log_kappa))
    slack = (tau - 1.0) * lq[:-1] - log_kappa - lq[1:]
    params = DiophantineParams(kappa, float(tau), tuple(float(s) for s in slack), tuple(int(v) for v in qi))
    if tau > ceiling:
        raise LiouvilleLike(f"fitted tau={tau:.3f} exceeds ceiling {ceiling}", fit=params)
    return params


# ---------------------------------------------------------------------------
# Resonances


@dataclass(frozen=True)
class ResonanceSequence:
    theta: float
    eps0: float
    entries: tuple  # ((n_j, strength), ...)
    terminal_exact: bool
    k_max: int = 0

    @property
    def modes(self) -> tuple:
        return tuple(n for n, _ in self.entries)

    def last_below(self, bound: float):
        """Largest-|n| entry with |n| < bound."""
        best = self.entries[0]
        for e in self.entries:
            if abs(e[0]) < bound:
                best = e
        return best

    def next_after(self, n: int):
        """|n_{j+1}| following mode n, or None (represents infinity)."""
        for m, _ in self.entries:
            if abs(m) > abs(n):
                return m
        return None


def find_resonances(theta: float, freq: Frequency, eps0: float = 0.05, k_max: int = 1000,
                    exact_tol: float = 1e-12) -> ResonanceSequence:
    """All ε₀-resonances of θ with |k| ≤ k_max.

    k is a resonance when ‖2θ − kα‖ ≤ e^{-|k|ε₀} and ‖2θ − kα‖ is minimal among
    all |j| ≤ |k|.  Scanning stops at the first exact resonance.
    """
    if eps0 <= 0:
        raise ValidationError("eps0 must be positive")
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    theta = float(theta) % 1.0
    kk = np.arange(0, min(int(k_max), _LARGE_K) + 1)
    dp = freq.phase_distance(theta, kk)
    dm = freq.phase_distance(theta, -kk)
    running = np.minimum.accumulate(np.minimum(dp, dm))
    bound = np.exp(-kk * eps0)
    entries = [(0, float(dp[0]))]
    if dp[0] < exact_tol:
        return ResonanceSequence(theta, eps0, tuple(entries), True, int(k_max))
    cand = np.nonzero((np.minimum(dp, dm) <= bound) & (np.minimum(dp, dm) <= running))[0]
    exact = False
    for k in cand:
        if k == 0:
            continue
        for sgn, d in ((1, dp[k]), (-1, dm[k])):
            if d <= bound[k] and d <= running[k]:
                entries.append((int(sgn * k), float(d)))
                if d < exact_tol:
                    exact = True
        if exact:
            break
    return ResonanceSequence(theta, eps0, tuple(entries), exact, int(k_max))


def orbit_log_sine_sum(x: float, freq: Frequency, n: int) -> float:
    """Σ_{l ≠ l0, 0 ≤ l < q_n} ln|sin π(x + lα)| + (q_n − 1) ln 2.

    l0 is the index minimizing |sin π(x + lα)|.
    """
    qn = freq.all_denominators[n]
    ll = np.arange(qn)
    with np.errstate(divide="ignore"):  # a zero can only sit at l0, which is dropped
        s = np.log(np.abs(np.sin(np.pi * (x + ll * freq.value))))
    l0 = int(np.argmin(s))
    return float(np.sum(np.delete(s, l0)) + (qn - 1) * np.log(2.0))


def best_approximation_holds(freq: Frequency, limit: int = 10**4) -> bool:
    """Check ‖q_n α‖ < ‖kα‖ for 1 ≤ k < q_{n+1}, k ≠ q_n, whenever q_{n+1} ≤ limit."""
    q = freq.all_denominators
    for n in range(1, len(q) - 1):
        if q[n + 1] > limit:
            break
        ks = np.arange(1, q[n + 1])
        d = freq.kalpha_distance(ks)
        dn = freq.kalpha_distance(q[n])
        others = d[ks != q[n]]
        if others.size and not np.all(dn < others):
            return False
    return True

