"""Compiled inner loops (numba)."""

import math

import numpy as np
from numba import njit

_RENORM = 32


@njit(cache=True)
def banded_slogdet(a, p):
    """Sign and log|det| of a square matrix with bandwidth p.

    Gaussian elimination with partial pivoting restricted to the band; the
    matrix is copied.  Row swaps widen the upper band to 2p.
    """
    m = a.copy()
    n = m.shape[0]
    sign = m[0, 0] * 0 + 1
    logabs = 0.0
    for k in range(n):
        r_end = min(k + p, n - 1)
        piv = k
        best = abs(m[k, k])
        for r in range(k + 1, r_end + 1):
            if abs(m[r, k]) > best:
                best = abs(m[r, k])
                piv = r
        if best == 0.0:
            return sign * 0, -np.inf
        c_end = min(k + 2 * p, n - 1)
        if piv != k:
            for c in range(k, c_end + 1):
                tmp = m[k, c]
                m[k, c] = m[piv, c]
                m[piv, c] = tmp
            sign = -sign
        pv = m[k, k]
        sign = sign * (pv / abs(pv))
        logabs += math.log(abs(pv))
        for r in range(k + 1, r_end + 1):
            f = m[r, k] / pv
            if f != 0:
                for c in range(k, c_end + 1):
                    m[r, c] -= f * m[k, c]
    return sign, logabs


@njit(cache=True)
def batched_slogdet(base, diags, p):
    """slogdet of ``base`` with its diagonal replaced by each row of ``diags``."""
    t = diags.shape[0]
    n = base.shape[0]
    signs = np.empty(t, dtype=base.dtype)
    logs = np.empty(t)
    m = base.copy()
    for j in range(t):
        for i in range(n):
            m[i, i] = diags[j, i]
        s, l = banded_slogdet(m, p)
        signs[j] = s
        logs[j] = l
    return signs, logs


@njit(cache=True)
def sturm_counts(diag, off2, energies):
    """Number of eigenvalues below each energy, summed over the rows of ``diag``.

    ``diag`` has shape (phases, size); ``off2`` holds squared off-diagonals.
    """
    ne = energies.shape[0]
    out = np.zeros(ne, dtype=np.int64)
    tiny = 1e-300
    for ph in range(diag.shape[0]):
        for j in range(ne):
            e = energies[j]
            q = diag[ph, 0] - e
            cnt = 0
            if q < 0:
                cnt += 1
            for i in range(1, diag.shape[1]):
                if q == 0.0:
                    q = tiny
                q = diag[ph, i] - e - off2[i - 1] / q
                if q < 0:
                    cnt += 1
            out[j] += cnt
    return out


@njit(cache=True)
def _opnorm(a, b, c, d):
    s = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det = abs(a * d - b * c)
    disc = s * s - 4.0 * det * det
    if disc < 0:
        disc = 0.0
    return math.sqrt(0.5 * (s + math.sqrt(disc)))


@njit(cache=True)
def log_norm_trajectory(mats, every):
    """ln‖A_s(x_j)‖ for s = every, 2·every, ... along precomputed orbits.

    ``mats[k, j]`` is A(x_j + kα).  Products are renormalized every 32 steps.
    Returns an array of shape (m, n // every).
    """
    n = mats.shape[0]
    m = mats.shape[1]
    nrec = n // every
    out = np.empty((m, nrec))
    for j in range(m):
        p00 = mats[0, j, 0, 0] * 0 + 1
        p01 = p00 * 0
        p10 = p00 * 0
        p11 = p00
        acc = 0.0
        rec = 0
        for k in range(n):
            a = mats[k, j]
            q00 = a[0, 0] * p00 + a[0, 1] * p10
            q01 = a[0, 0] * p01 + a[0, 1] * p11
            q10 = a[1, 0] * p00 + a[1, 1] * p10
            q11 = a[1, 0] * p01 + a[1, 1] * p11
            p00, p01, p10, p11 = q00, q01, q10, q11
            if (k + 1) % _RENORM == 0:
                nr = _opnorm(p00, p01, p10, p11)
                p00 /= nr
                p01 /= nr
                p10 /= nr
                p11 /= nr
                acc += math.log(nr)
            if (k + 1) % every == 0 and rec < nrec:
                out[j, rec] = acc + math.log(_opnorm(p00, p01, p10, p11))
                rec += 1
    return out


@njit(cache=True)
def top_directions(mats):
    """Angle of the most expanded input direction of A_n and A_{n/2} along each orbit.

    Returns (m, 2) angles in [0, π) (right singular vectors).
    """
    n = mats.shape[0]
    m = mats.shape[1]
    out = np.empty((m, 2))
    half = n // 2
    for j in range(m):
        p00 = 1.0
        p01 = 0.0
        p10 = 0.0
        p11 = 1.0
        for k in range(n):
            a = mats[k, j]
            q00 = a[0, 0] * p00 + a[0, 1] * p10
            q01 = a[0, 0] * p01 + a[0, 1] * p11
            q10 = a[1, 0] * p00 + a[1, 1] * p10
            q11 = a[1, 0] * p01 + a[1, 1] * p11
            p00, p01, p10, p11 = q00, q01, q10, q11
            if (k + 1) % _RENORM == 0:
                nr = _opnorm(p00, p01, p10, p11)
                p00 /= nr
                p01 /= nr
                p10 /= nr
                p11 /= nr
            if k + 1 == half or k + 1 == n:
                # right singular vector of P: top eigenvector of P^T P
                g00 = p00 * p00 + p10 * p10
                g01 = p00 * p01 + p10 * p11
                g11 = p01 * p01 + p11 * p11
                ang = 0.5 * math.atan2(2 * g01, g00 - g11)
                if ang < 0:
                    ang += math.pi
                out[j, 0 if k + 1 == half else 1] = ang
    return out


@njit(cache=True)
def rotation_lift(mats, ny, center):
    """Summed projective angle increments (in turns) along each orbit.

    For each orbit j and each of ``ny`` starting directions the vector is
    pushed through A(x_j + kα).  Each increment is taken within 1/2 of the
    angle γ of the orthogonal polar factor of the matrix, with γ chosen in
    (center − 1/2, center + 1/2]; this keeps the lift continuous wherever γ
    does not cross that window (always, for Schrödinger matrices).
    Returns (total, first_half) arrays of shape (m, ny).
    """
    n = mats.shape[0]
    m = mats.shape[1]
    tot = np.zeros((m, ny))
    half = np.zeros((m, ny))
    two_pi = 2.0 * math.pi
    for j in range(m):
        for iy in range(ny):
            ang = math.pi * iy / ny
            v0 = math.cos(ang)
            v1 = math.sin(ang)
            s = 0.0
            for k in range(n):
                a = mats[k, j]
                g = math.atan2(a[1, 0] - a[0, 1], a[0, 0] + a[1, 1]) / two_pi
                g -= math.ceil(g - center - 0.5)
                w0 = a[0, 0] * v0 + a[0, 1] * v1
                w1 = a[1, 0] * v0 + a[1, 1] * v1
                d = (math.atan2(w1, w0) - math.atan2(v1, v0)) / two_pi
                d -= math.ceil(d - g - 0.5)
                s += d
                nr = math.sqrt(w0 * w0 + w1 * w1)
                v0 = w0 / nr
                v1 = w1 / nr
                if k + 1 == n // 2:
                    half[j, iy] = s
            tot[j, iy] = s
    return tot, half
