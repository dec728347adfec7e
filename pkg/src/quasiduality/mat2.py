"""Vectorized helpers for stacks of 2×2 matrices (last two axes)."""

import numpy as np


def det(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def inv(m):
    d = det(m)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1] / d
    out[..., 1, 1] = m[..., 0, 0] / d
    out[..., 0, 1] = -m[..., 0, 1] / d
    out[..., 1, 0] = -m[..., 1, 0] / d
    return out


def mul(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def opnorm(m):
    """Operator 2-norm from the closed-form singular values."""
    s = np.sum(np.abs(m) ** 2, axis=(-2, -1))
    d = np.abs(det(m))
    disc = np.sqrt(np.maximum(s * s - 4.0 * d * d, 0.0))
    return np.sqrt(0.5 * (s + disc))


def singular_values(m):
    """(σ_max, σ_min) of each matrix."""
    smax = opnorm(m)
    d = np.abs(det(m))
    with np.errstate(divide="ignore", invalid="ignore"):
        smin = np.where(smax > 0, d / smax, 0.0)
    return smax, smin


def rotation(t):
    """R_t = [[cos 2πt, −sin 2πt], [sin 2πt, cos 2πt]]; t may be complex."""
    t = np.asarray(t)
    c = np.cos(2 * np.pi * t)
    s = np.sin(2 * np.pi * t)
    out = np.empty(t.shape + (2, 2), dtype=np.result_type(c, float))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def eye(shape=()):
    out = np.zeros(tuple(shape) + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    return out
