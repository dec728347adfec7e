import json

import numpy as np
import pytest

from quasiduality.arithmetic import ResonanceSequence, find_resonances
from quasiduality.diagnostics import (FAIL, INDETERMINATE, MIN_LENGTH, PASS, almost_localization_check,
                                      in_A_kr, lagrange_bound_check, lagrange_max, log_Q,
                                      nonuniform_exponent_bound, regularity_check, resonance_windows,
                                      uniformity_test)
from quasiduality.duality import DualEigenData, dual_data_at_phase
from quasiduality.errors import CoincidentNodes, DegreeTooHigh, SingularRestriction, WindowEmpty
from quasiduality.fourier import FourierSeries
from quasiduality.operators import HAT, almost_mathieu, build_restriction

LAM = 0.5
# phase with resonances {0, −1, 2, 10, −11} below 1000: one long window (49, 400)
NONRES_THETA = 0.1


@pytest.fixture(scope="module")
def amo():
    return almost_mathieu(LAM)


@pytest.fixture(scope="module")
def nonres(amo, golden):
    data = dual_data_at_phase(amo, golden, NONRES_THETA, window=400)
    res = find_resonances(data.theta, golden, 0.05, 1000)
    return data, res


def _synthetic(golden, pot, u_hat, radius, theta=0.1):
    return DualEigenData(theta, 0.0, np.asarray(u_hat, dtype=complex), (-radius, radius), 1.0, golden, pot)


# ---------------------------------------------------------------------------
# almost localization


def test_resonance_windows_between_modes():
    res = ResonanceSequence(0.1, 0.05, ((0, 0.5), (3, 1e-3), (200, 1e-9)), False)
    assert resonance_windows(res, 1000, c0=4) == [(17, 49), (805, 1000)]


def test_delta_eigenvector_passes(golden):
    pot = almost_mathieu(0.0)
    u = np.zeros(401)
    u[200] = 1.0
    data = _synthetic(golden, pot, u, 200)
    res = ResonanceSequence(0.1, 0.05, ((0, 0.2),), False)
    prof = almost_localization_check(data, res)
    assert prof.verdict == PASS
    assert all(f.eps1 >= 0.01 for f in prof.fits)


def test_bump_at_declared_resonance_is_excluded(golden, amo):
    k = np.arange(-300, 301)
    u = np.exp(-0.2 * np.abs(k))
    # resonance at 40; the bump sits inside the excluded band C0(1+|n|) around it
    u[np.abs(np.abs(k) - 40) <= 3] = 0.5
    data = _synthetic(golden, amo, u, 300)
    res = ResonanceSequence(0.1, 0.05, ((0, 0.3), (40, 1e-3)), False)
    prof = almost_localization_check(data, res)
    assert prof.verdict == PASS
    assert all(f.hi < 40 or f.lo > 40 for f in prof.fits)
    # without the declaration the same profile fails to decay on a single window
    prof2 = almost_localization_check(data, ResonanceSequence(0.1, 0.05, ((0, 0.3),), False), c1_max=10)
    assert prof2.verdict == FAIL


def test_amo_nonresonant_decay(nonres):
    data, res = nonres
    prof = almost_localization_check(data, res)
    assert prof.verdict == PASS
    assert min(f.eps1 for f in prof.fits) >= 0.01
    # the fitted rate sits near −ln λ
    assert all(abs(f.eps1 - np.log(2)) < 0.1 for f in prof.fits)
    json.dumps(prof.to_dict())


def test_window_empty(golden, amo):
    data = _synthetic(golden, amo, np.exp(-np.abs(np.arange(-10, 11))), 10)
    res = ResonanceSequence(0.1, 0.05, ((0, 0.3), (2, 1e-2)), False)
    with pytest.raises(WindowEmpty):
        almost_localization_check(data, res)


# ---------------------------------------------------------------------------
# ε-uniformity


def test_two_antipodal_nodes_uniform():
    u = uniformity_test([0.0, 0.5], 1e-6)
    assert u.exponent <= 1e-12
    assert u.uniform


def test_chebyshev_nodes_small_exponent():
    k = 12
    c = np.cos(np.pi * (2 * np.arange(k + 1) + 1) / (2 * k + 2))
    thetas = np.arccos(c) / (2 * np.pi)
    u = uniformity_test(thetas, 0.3)
    assert u.uniform
    assert 0 < u.exponent < 0.15


def test_near_coincident_nodes_not_uniform():
    c = np.array([-1.0, -0.3, 0.2, 0.2 + 1e-6, 1.0])
    u = uniformity_test(np.arccos(c) / (2 * np.pi), 0.1)
    assert not u.uniform
    assert u.exponent > 2.0


def test_coincident_nodes():
    with pytest.raises(CoincidentNodes):
        uniformity_test([0.1, 0.9, 0.3], 0.1)  # cos 2π·0.1 = cos 2π·0.9


def test_grid_doubling_stable(rng):
    for _ in range(5):
        thetas = rng.random(8) / 2
        a = uniformity_test(thetas, 0.1, grid=1024).exponent
        b = uniformity_test(thetas, 0.1, grid=2048).exponent
        assert abs(a - b) < 1e-3


def test_lagrange_max_is_one_for_two_nodes():
    assert lagrange_max([-1.0, 1.0]) == pytest.approx(0.0, abs=1e-14)


# ---------------------------------------------------------------------------
# A_{k,r} and the non-uniformity relation


def _spread(cos_values, n):
    """Greedy farthest-point choice of n cos values (most uniform subset available)."""
    c = np.unique(cos_values)
    pick = [c[0], c[-1]]
    while len(pick) < n:
        d = np.min(np.abs(c[:, None] - np.array(pick)[None, :]), axis=1)
        pick.append(c[np.argmax(d)])
    return np.arccos(np.array(pick)) / (2 * np.pi)


def test_log_Q_small_cases(amo, golden):
    # Q_1 is the 1×1 restriction of Ȟ − E
    th = np.linspace(0, 1, 7)
    E = 0.3
    expected = np.log(np.abs(2 * np.cos(2 * np.pi * th) / LAM - E))  # v̂_0 = 0
    assert np.allclose(log_Q(amo, golden, E, 1, th), expected, atol=1e-12)


@pytest.mark.parametrize("E", [0.1, 0.8])
@pytest.mark.parametrize("k", [4, 6, 8, 10])
@pytest.mark.parametrize("eps", [0.1, 0.3])
def test_nodes_in_A_kr_not_uniform(amo, golden, E, k, eps):
    r = -np.log(LAM) - eps
    grid = np.linspace(0, 0.5, 10001)
    inside = grid[in_A_kr(amo, golden, E, k, r, grid)]
    thetas = _spread(np.cos(2 * np.pi * inside), k + 1)
    assert in_A_kr(amo, golden, E, k, r, thetas).all()
    u = uniformity_test(thetas, eps)
    assert u.exponent >= nonuniform_exponent_bound(k, r, LAM)
    assert u.exponent >= r + np.log(LAM)
    assert not u.uniform


# ---------------------------------------------------------------------------
# Lagrange bound along orbits


def test_lagrange_constant(golden):
    rep = lagrange_bound_check(FourierSeries(np.array([1.0 + 0j])), golden, 0.37, 1, 6)
    assert rep.ratio == pytest.approx(1.0, abs=1e-14)
    assert rep.normalized == pytest.approx(0.0, abs=1e-13)
    assert rep.points == 13


def test_lagrange_single_exponential(golden):
    rep = lagrange_bound_check(FourierSeries(np.array([1.0 + 0j]), 1), golden, 0.2, 1, 6)
    assert np.isfinite(rep.ratio)
    assert rep.normalized <= 1e-12


def test_lagrange_ensemble_bounded(golden, rng):
    # 100 random polynomials of essential degree q_n − 1 for n = 5..9; largest normalized
    # report observed 0.18 (n = 5), decreasing with n
    worst = {}
    for n in range(5, 10):
        q = golden.all_denominators[n]
        vals = []
        for _ in range(100):
            c = rng.normal(size=q) + 1j * rng.normal(size=q)
            p = FourierSeries(c, int(rng.integers(-q, 1)))
            vals.append(lagrange_bound_check(p, golden, rng.random(), 1, n).normalized)
        worst[n] = max(vals)
    assert max(worst.values()) < 0.25
    assert worst[9] < worst[5]


def test_lagrange_scale_invariant(golden, rng):
    q = golden.all_denominators[7]
    p = FourierSeries(rng.normal(size=q) + 1j * rng.normal(size=q), -5)
    a = lagrange_bound_check(p, golden, 0.11, 1, 7)
    b = lagrange_bound_check(p * (3.5 - 2j), golden, 0.11, 1, 7)
    assert a.normalized == pytest.approx(b.normalized, rel=1e-12, abs=1e-14)


def test_lagrange_degree_too_high(golden):
    q = golden.all_denominators[6]
    with pytest.raises(DegreeTooHigh):
        lagrange_bound_check(FourierSeries(np.ones(q + 1, dtype=complex)), golden, 0.0, 1, 6)


def test_lagrange_indeterminate_flag(golden):
    p = FourierSeries(np.array([1.0 + 0j]))
    assert lagrange_bound_check(p, golden, 0.0, 1, 6).indeterminate is False  # q_6 = 13
    assert lagrange_bound_check(p, golden, 0.0, 1, 5).indeterminate is True


# ---------------------------------------------------------------------------
# (m, k)-regularity


def test_regularity_decoupled(golden):
    pot = almost_mathieu(0.0)
    r = regularity_check(pot, golden, 0.1, 5.0, 10, (0, 30), 0.5, normalization=HAT)
    assert r.regular
    assert r.value == 0.0
    assert r.verdict == PASS


def test_regularity_far_energy_small_coupling(golden):
    # |E| far above 2/λ + 2: diagonal dominance, Green function decays fast
    pot = almost_mathieu(0.05)
    r = regularity_check(pot, golden, 0.1, 200.0, 15, (0, 30), 0.5)
    assert r.regular and r.verdict == PASS


def test_regularity_singular(amo, golden):
    vals = np.linalg.eigvalsh(build_restriction(amo, golden, 0.2, 0.0, (0, 9)).matrix)
    with pytest.raises(SingularRestriction):
        regularity_check(amo, golden, 0.2, float(vals[3]), 4, (0, 9), 0.1)


def test_regularity_short_interval_indeterminate(golden):
    pot = almost_mathieu(0.05)
    r = regularity_check(pot, golden, 0.1, 200.0, 5, (0, MIN_LENGTH - 2), 0.5)
    assert r.regular
    assert r.verdict == INDETERMINATE


def test_regularity_in_inter_resonance_window(nonres, amo, golden):
    data, res = nonres
    prof = almost_localization_check(data, res)
    c = min(f.eps1 for f in prof.fits)
    lo, hi = prof.fits[0].lo, prof.fits[0].hi
    for y in (100, 150, 200, 250):
        assert lo <= y // 2 and y + y // 2 <= hi
        r = regularity_check(amo, golden, data.theta, data.E / LAM, y, (y - y // 2, y + y // 2), c / 4)
        assert r.regular and r.verdict == PASS
    # a resonant-free interval that is too short relative to its rate fails
    r = regularity_check(amo, golden, data.theta, data.E / LAM, 100, (90, 110), c)
    assert r.verdict == FAIL
