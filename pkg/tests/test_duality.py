import numpy as np
import pytest

from quasiduality import mat2
from quasiduality.arithmetic import find_resonances, torus_distance
from quasiduality.cocycles import cocycle_from_series, rotation_cocycle, rotation_number, schrodinger_cocycle
from quasiduality.duality import (BlochWave, CaseAmbiguous, bloch_wave, cohomological_solve, delta_rule,
                                  dual_data_at_phase, duality_matrix, perturbative_from_wave,
                                  perturbative_reduce, reduce_localized, reduce_wave, rho_from_report,
                                  rotation_conjugacy, rotation_from_wave, select_dual_phase,
                                  triangularize, triangularize_wave, verify_report)
from quasiduality.errors import NoCandidate, SmallDivisor, ValidationError
from quasiduality.fourier import FourierSeries
from quasiduality.operators import almost_mathieu

LAM = 0.5
SPEC_E = 0.1  # inside the spectrum of the λ=0.5 golden-mean operator, non-resonant phase


def rho_close(a, b, tol=1e-3):
    d = (a - b) % 1.0
    return min(d, 1 - d) < tol


@pytest.fixture(scope="module")
def amo():
    return almost_mathieu(LAM)


@pytest.fixture(scope="module")
def spec_data(golden, amo):
    return select_dual_phase(amo, golden, SPEC_E, window=200)


@pytest.fixture(scope="module")
def spec_wave(spec_data):
    return bloch_wave(spec_data, strip=0.05)


@pytest.fixture(scope="module")
def edge_data(golden, amo):
    # θ = α/2 is resonant with n = 1; the eigenvalue is a gap edge
    return dual_data_at_phase(amo, golden, golden.value / 2, window=200)


# -- dual phase selection --------------------------------------------------


def test_select_decoupled(golden):
    th0 = 0.11
    E = 2 * np.cos(2 * np.pi * th0)
    d = select_dual_phase(almost_mathieu(0.0), golden, E, window=50)
    assert min(torus_distance(d.theta - th0), torus_distance(d.theta + th0)) < 1e-9
    delta = np.zeros_like(d.u_hat)
    delta[50] = 1
    assert np.max(np.abs(d.u_hat - delta)) < 1e-12


def test_select_normalization_and_decay(spec_data):
    d = spec_data
    assert d.coefficient(0) == 1
    assert d.within_slack()
    assert abs(d.E - SPEC_E) < 1e-10
    k = np.abs(d.indices)
    assert np.max(np.abs(d.u_hat[k >= 60])) < 1e-6
    assert np.max(np.abs(d.u_hat[k >= 150])) < 1e-20


def test_select_outside_spectrum(golden, amo):
    with pytest.raises(NoCandidate):
        select_dual_phase(amo, golden, 0.8, window=100)


def test_shift_covariance(golden, amo, spec_data):
    th = spec_data.theta
    d1 = dual_data_at_phase(amo, golden, th, window=(-100, 100))
    d2 = dual_data_at_phase(amo, golden, (th + 5 * golden.value) % 1.0, window=(-105, 95), center=-5)
    assert torus_distance(d2.theta - d1.theta - 5 * golden.value) < 1e-10
    assert np.max(np.abs(d1.u_hat - d2.u_hat)) < 1e-10


# -- Bloch waves -------------------------------------------------------------


def test_wave_full_window_exact(spec_data):
    w = bloch_wave(spec_data, window_I=spec_data.window, strip=0.0)
    assert w.extras["h_real_norm"] < 1e-12


def test_wave_residual_decreases(spec_data):
    norms = [bloch_wave(spec_data, window_I=r, strip=0.0).extras["h_real_norm"] for r in (25, 50, 100)]
    assert norms[0] > norms[1] > norms[2]


def test_wave_identity_and_crosscheck(spec_wave):
    x = np.linspace(0, 1, 64, endpoint=False)
    d = spec_wave.defect(x)
    assert np.max(np.abs(d[:, 1])) < 1e-12
    assert np.max(np.abs(d[:, 0] - spec_wave.residual_h(x))) < 1e-12
    assert spec_wave.extras["h_crosscheck"] < 1e-12


def test_wave_mean(spec_wave):
    # û_0 = 1 puts (e^{2πiθ}, 1) in the mean of U
    assert 2 * np.linalg.norm(spec_wave.U.mean) >= 2


def test_wave_window_inside(spec_data):
    with pytest.raises(ValidationError):
        bloch_wave(spec_data, window_I=(-500, 500))


# -- duality matrices --------------------------------------------------------


def test_columns_constant_det(golden):
    U = FourierSeries(np.array([[np.exp(2j * np.pi * 0.25)], [1.0]]), 0)
    wave = BlochWave.from_section(U, 0.25, rotation_cocycle(0.25, golden), strip=0.05)
    rep = duality_matrix(wave, "columns")
    assert rep.extras["inf_abs_det"] == pytest.approx(2.0)
    assert rep.extras["max_abs_re_det"] < 1e-15


def test_unimodular_det(spec_wave):
    rep = duality_matrix(spec_wave, "unimodular")
    assert rep.extras["det_defect"] < 1e-10
    x = np.arange(512) / 512
    assert np.max(np.abs(mat2.det(np.asarray(rep.B(x))) - 1)) < 1e-10


def test_columns_det_imaginary(spec_wave):
    rep = duality_matrix(spec_wave, "columns-U-Ubar")
    assert rep.extras["max_abs_re_det"] < 1e-9
    assert rep.extras["strip_variation"] < 0.1 * rep.extras["inf_abs_im_det_strip"]


def test_duality_residual_recomputed(spec_wave):
    rep = duality_matrix(spec_wave)
    blocks, diff = verify_report(rep)
    assert diff < 1e-8
    assert max(abs(rep.extras["construction_blocks"][k] - rep.residual_blocks[k]) for k in blocks) < 1e-8
    assert rep.residual_blocks["21"] < 1e-6


def test_duality_unknown_variant(spec_wave):
    with pytest.raises(ValidationError):
        duality_matrix(spec_wave, "nope")


# -- cohomological equation --------------------------------------------------


def _coh_residual(b, phi, theta, alpha, x):
    return np.max(np.abs(b(x) - np.exp(-2j * np.pi * theta) * phi(x + alpha) + np.exp(2j * np.pi * theta) * phi(x)))


def test_coh_single_mode(golden):
    th = 0.3
    b = FourierSeries([2.0 + 1j], 0)
    phi = cohomological_solve(b, th, golden)
    ref = -(2 + 1j) * np.exp(-2j * np.pi * th) / (1 - np.exp(-4j * np.pi * th))
    assert phi.coefficient(0) == pytest.approx(ref)


def test_coh_exactness(golden, rng):
    th = 0.3
    x = np.arange(512) / 512
    for _ in range(20):
        c = rng.normal(size=81) + 1j * rng.normal(size=81)
        # unit Wiener norm: the double-precision residual floor scales with Σ|b̂_k|
        b = FourierSeries(c / np.sum(np.abs(c)), -40)
        phi = cohomological_solve(b, th, golden)
        assert _coh_residual(b, phi, th, golden.value, x) < 1e-12
        big = FourierSeries(c, -40)
        rel = _coh_residual(big, cohomological_solve(big, th, golden), th, golden.value, x) / np.sum(np.abs(c))
        assert rel < 1e-13


def test_coh_small_divisor(golden):
    th = 3 * golden.value / 2
    b = FourierSeries(np.ones(11), -5)
    with pytest.raises(SmallDivisor):
        cohomological_solve(b, th, golden)
    phi = cohomological_solve(b, th, golden, excluded_modes=(3,))
    assert phi.coefficient(3) == 0


def test_delta_rule():
    b = FourierSeries(np.exp(-0.5 * np.abs(np.arange(-20, 21))), -20)
    D = delta_rule(b, 1)
    assert D >= 1
    assert np.all(np.abs(b.coef) <= D * np.exp(-np.abs(b.modes) / D))
    assert not np.all(np.abs(b.coef) <= (D - 1) * np.exp(-np.abs(b.modes) / (D - 1))) or D == 1
    assert delta_rule(b, 7) >= 7


# -- synthetic reducible inputs ----------------------------------------------


def _conjugated(B0, target, freq, n=128):
    alpha = freq.value
    f = lambda x: mat2.mul(mat2.mul(B0(np.asarray(x) + alpha), np.broadcast_to(target, np.shape(x) + (2, 2))),  # noqa: E731
                           mat2.inv(B0(np.asarray(x))))
    return cocycle_from_series(freq, FourierSeries.from_function(f, n), func=f)


def _shear(x):
    x = np.asarray(x)
    a = np.zeros(x.shape + (2, 2), dtype=complex)
    a[..., 0, 0] = 1
    a[..., 1, 1] = 1
    a[..., 0, 1] = 0.3 * np.cos(2 * np.pi * x)
    b = np.zeros_like(a)
    b[..., 0, 0] = 1
    b[..., 1, 1] = 1
    b[..., 1, 0] = 0.2 * np.sin(2 * np.pi * x)
    return mat2.mul(a, b)


def test_triangularize_exactly_reducible(golden):
    th = 0.2
    coc = _conjugated(_shear, mat2.rotation(th), golden)
    v = np.array([1.0, -1j])
    U = FourierSeries.from_function(lambda x: np.einsum("...ij,j->...i", _shear(x), v), 64).trimmed(1e-15)
    wave = BlochWave.from_section(U, th, coc, strip=0.02)
    assert np.max(np.abs(wave.residual_h.coef)) < 1e-12
    # the Δ rule alone keeps |k| ≤ 1 here; the input's own scale sets the first split
    assert triangularize_wave(wave).extras["low_cutoff"] == 1
    rep = triangularize_wave(wave, min_cutoff=64)
    assert rep.residual < 1e-8
    assert verify_report(rep)[1] < 1e-8


def test_rotation_constant_synthetic(golden):
    th = 0.17
    U = FourierSeries(np.array([[1.0 + 0j], [-1j]]), 0)
    rep = rotation_from_wave(BlochWave.from_section(U, th, rotation_cocycle(th, golden), strip=0.05))
    x = np.linspace(0, 1, 9)
    B = np.asarray(rep.B(x))
    assert np.allclose(B, B[0])
    assert rep.residual < 1e-8
    assert rep.degree == 0
    assert rho_close(rho_from_report(rep), th)


def _parabolic_W(x):
    x = np.asarray(x)
    m1 = 1 + 0.3 * np.cos(2 * np.pi * x)
    m2 = 0.2 * np.sin(2 * np.pi * x)
    q = m1 ** 2 + m2 ** 2
    out = np.empty(x.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = m1
    out[..., 1, 0] = m2
    out[..., 0, 1] = -m2 / q
    out[..., 1, 1] = m1 / q
    return out


@pytest.fixture(scope="module")
def parabolic_wave(golden):
    kappa = 0.4
    coc = _conjugated(_parabolic_W, np.array([[1.0, kappa], [0.0, 1.0]]), golden, n=256)
    U = FourierSeries.from_function(lambda x: _parabolic_W(x)[..., :, 0], 16).trimmed(1e-15)
    return BlochWave.from_section(U, 0.0, coc, strip=0.02), kappa


def test_perturbative_synthetic(parabolic_wave):
    wave, kappa = parabolic_wave
    rep = perturbative_from_wave(wave, 0)
    assert rep.residual < 1e-8
    assert rep.extras["kappa"] == pytest.approx(kappa, abs=1e-10)
    assert rep.extras["s"] == 1


def test_perturbative_requires_resonance(spec_wave):
    with pytest.raises(ValidationError):
        perturbative_from_wave(spec_wave, 0)


def test_reduce_rational_synthetic(parabolic_wave):
    wave, kappa = parabolic_wave
    rep = reduce_wave(wave)
    assert rep.extras["case"] == "B"
    assert rep.extras["kappa"] == pytest.approx(kappa, abs=1e-10)
    rho = rotation_number(wave.cocycle).value
    assert rho_close(rho_from_report(rep), rho)
    # ρ = ±θ + mα/2 with θ = 0
    m = np.arange(-20, 21)
    assert np.min(torus_distance(rho - m * wave.freq.value / 2)) < 1e-3


# -- AMO pipelines -----------------------------------------------------------


def test_rotation_conjugacy_decreasing(golden, amo, spec_data):
    reps = [rotation_conjugacy(amo, golden, spec_data.E, spec_data, window=w) for w in (100, 200, 400)]
    res = [r.residual for r in reps]
    assert res[0] > res[1] > res[2]
    assert res[2] < 1e-6
    for r in reps:
        assert verify_report(r)[1] < 1e-8
        rho = rotation_number(schrodinger_cocycle(amo, spec_data.E, golden)).value
        assert rho_close(rho_from_report(r), rho)


def test_rotation_degree_bound(golden, amo):
    ratios = []
    for th in np.linspace(0.05, 0.45, 10):
        data = dual_data_at_phase(amo, golden, th, window=200)
        rep = rotation_conjugacy(amo, golden, data.E, data, window=200)
        ratios.append(abs(rep.degree) / (abs(rep.extras["n_j"]) + 1))
    assert max(ratios) <= 1


def test_triangularize_amo(golden, amo, spec_data):
    reps = [triangularize(amo, golden, spec_data.E, spec_data, window=w) for w in (100, 200, 400)]
    for r in reps:
        assert r.residual_blocks["12"] < r.extras["b_norm"]
    q11 = [r.residual_blocks["11"] for r in reps]
    assert q11[0] > q11[2]


def test_triangularize_balanced(golden, amo, spec_data):
    out = []
    for eps in (1e-2, 1e-3):
        r = triangularize(amo, golden, spec_data.E, spec_data, window=200, epsilon_balance=eps)
        out.append((eps, r.extras["norm_Z"] - 1, r.extras["norm_W"]))
    C = max(z / np.sqrt(e) for e, z, _ in out)
    assert C < 1
    # ‖W‖ grows no faster than ε^{-1/4}
    assert out[1][2] / out[0][2] <= 1.1 * 10 ** 0.25


def test_perturbative_amo_edge(golden, amo, edge_data):
    reps = [perturbative_reduce(amo, golden, edge_data.E, edge_data, window=w) for w in (100, 200, 400)]
    res = [r.residual for r in reps]
    assert res[0] > res[1] and res[2] < 1e-8
    k = reps[-1].extras["kappa"]
    assert -1 <= k <= 1
    assert all(abs(r.extras["kappa"] - k) < 1e-6 for r in reps[1:])
    rho = rotation_number(schrodinger_cocycle(amo, edge_data.E, golden)).value
    assert rho_close(rho_from_report(reps[-1]), rho)


def test_reduce_localized_decoupled(golden):
    pot = almost_mathieu(0.0)
    data = dual_data_at_phase(pot, golden, 0.13, window=40)
    rep = reduce_localized(pot, golden, data.E, data)
    assert rep.extras["case"] == "A"
    assert rep.residual < 1e-10


def test_reduce_localized_amo(golden, amo, spec_data):
    rep = reduce_localized(amo, golden, spec_data.E, spec_data, window=(-99, 99))
    assert rep.extras["case"] == "A"
    assert rep.residual < 1e-4


def test_reduce_localized_edge(golden, amo, edge_data):
    rep = reduce_localized(amo, golden, edge_data.E, edge_data, window=(-99, 99))
    assert rep.extras["case"] == "B"


def test_case_ambiguous(golden, amo, spec_data):
    wave = bloch_wave(spec_data, window_I=(-99, 99), strip=0.02)
    with pytest.raises(CaseAmbiguous) as exc:
        reduce_wave(wave, det_band=(1e-7, 1e3))
    assert set(exc.value.candidates) == {"A", "B"}


def test_resonance_linkage(golden, amo):
    for n in range(1, 6):
        th = (n * golden.value / 2 + 1e-6) % 1.0
        data = dual_data_at_phase(amo, golden, th, window=200)
        rho = rotation_number(schrodinger_cocycle(amo, data.E, golden)).value
        assert find_resonances(rho, golden, 0.05, k_max=100).entries
