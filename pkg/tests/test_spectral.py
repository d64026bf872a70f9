import math

import numpy as np
import pytest
import scipy.integrate

from fraccontrol.spectral import (
    FracParams,
    SpectralCoefficients,
    apply_fractional,
    chi_profile,
    eigenfunction,
    eigenvalue,
    exact_triple,
    normalization_constant,
    psi_profile,
    sine_coefficients,
    solve_fractional,
    truncation_excess,
)


def test_eigenvalues():
    assert eigenvalue(1, 1) == pytest.approx(2 * np.pi**2)
    assert eigenvalue(2, 2) == pytest.approx(8 * np.pi**2)
    assert eigenvalue(1, 2) == eigenvalue(2, 1)
    with pytest.raises(ValueError):
        eigenvalue(0, 1)


def test_normalization_constant():
    assert normalization_constant(0.5) == pytest.approx(1.0)
    s = 0.2
    assert normalization_constant(s) == pytest.approx(2 ** (1 - 2 * s) * math.gamma(1 - s) / math.gamma(s))
    assert FracParams(0.3).d_s == pytest.approx(normalization_constant(0.3))
    assert FracParams(0.3).alpha == pytest.approx(0.4)


@pytest.mark.parametrize("kwargs", [dict(s=0.0), dict(s=1.0), dict(s=0.5, vartheta=0.0),
                                    dict(s=0.5, a_bound=1.0, b_bound=0.0)])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        FracParams(**kwargs)


def test_apply_and_inverse_round_trip():
    rng = np.random.default_rng(0)
    w = SpectralCoefficients(rng.standard_normal((6, 6)))
    back = apply_fractional(apply_fractional(w, 0.3), 0.3, inverse=True)
    np.testing.assert_allclose(back.coeffs, w.coeffs, rtol=1e-13)
    # semigroup: L^0.3 L^0.4 = L^0.7
    a = apply_fractional(apply_fractional(w, 0.3), 0.4)
    np.testing.assert_allclose(a.coeffs, apply_fractional(w, 0.7).coeffs, rtol=1e-12)


def test_single_mode_scaling():
    w = SpectralCoefficients.single_mode(2, 2, 4)
    u = apply_fractional(w, 0.4)
    assert u[2, 2] == pytest.approx(eigenvalue(2, 2) ** 0.4)
    assert np.count_nonzero(u.coeffs) == 1


def test_sine_coefficients_of_bubble():
    c = sine_coefficients(lambda x, y: x * (1 - x) * y * (1 - y), 5)
    assert c[1, 1] == pytest.approx(64 / np.pi**6, rel=1e-12)
    assert abs(c[1, 2]) < 1e-14 and abs(c[2, 2]) < 1e-14
    assert c[3, 1] == pytest.approx(64 / (27 * np.pi**6), rel=1e-12)


def test_expansion_reproduces_function():
    phi = eigenfunction(2, 3)
    c = sine_coefficients(phi, 4)
    assert c[2, 3] == pytest.approx(1.0, rel=1e-12)
    x = np.linspace(0.05, 0.95, 7)
    np.testing.assert_allclose(c(x, x[::-1]), phi(x, x[::-1]), atol=1e-12)


def test_l2_norm_matches_quadrature():
    c = sine_coefficients(lambda x, y: x * (1 - x) * y * (1 - y), 40)
    # ||x(1-x)y(1-y)||^2 = (1/30)^2
    assert c.l2_norm() == pytest.approx(1 / 30, rel=1e-6)
    assert c.tail_norm(10) < 2e-3 * c.l2_norm()


def test_psi_profile_values():
    assert psi_profile(1.0, 0.5, 0.0) == 1.0
    y = np.array([0.1, 1.0, 3.0])
    np.testing.assert_allclose(psi_profile(4.0, 0.5, y), np.exp(-2 * y), rtol=1e-13)
    assert psi_profile(1.0, 0.3, 1000.0) == 0.0


def test_chi_profile_half_order_is_sinh_ratio():
    lam, Y = 2.0, 1.5
    y = np.linspace(0, Y, 9)
    ref = np.sinh(np.sqrt(lam) * (Y - y)) / np.sinh(np.sqrt(lam) * Y)
    np.testing.assert_allclose(chi_profile(lam, 0.5, Y, y), ref, atol=1e-13)


@pytest.mark.parametrize("s", [0.2, 0.7])
def test_profile_ode_residual(s):
    # (y^a chi')' = lam y^a chi
    lam, Y, a = 3.0, 2.0, 1 - 2 * s
    y = np.linspace(0.3, 1.7, 8)
    h = 1e-4
    f = lambda t: chi_profile(lam, s, Y, t)
    flux = lambda t: t**a * (f(t + h) - f(t - h)) / (2 * h)
    lhs = (flux(y + h) - flux(y - h)) / (2 * h)
    np.testing.assert_allclose(lhs, lam * y**a * f(y), rtol=1e-4)


def test_truncated_profile_approaches_infinite():
    lam, s = 20.0, 0.3
    y = np.linspace(0, 1, 5)
    np.testing.assert_allclose(chi_profile(lam, s, 6.0, y), psi_profile(lam, s, y), atol=1e-10)


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_conormal_flux(s):
    lam, Y = 5.0, 0.4
    a = 1 - 2 * s
    d = normalization_constant(s)

    def flux(y):
        h = 1e-3 * y
        return -(y**a) * (chi_profile(lam, s, Y, y + h) - chi_profile(lam, s, Y, y - h)) / (2 * h)

    # remove the leading y^(2-2s) correction by one Richardson step
    y, q = (1e-8 if s < 0.5 else 1e-4), 32.0
    r = q ** (2 - 2 * s)
    flux0 = (r * flux(y / q) - flux(y)) / (r - 1)
    expect = lam**s * (d + truncation_excess(lam, s, Y))
    assert flux0 == pytest.approx(expect, rel=1e-4)


def test_truncation_excess_half_order():
    lam, Y = 2.0, 0.7
    X = np.sqrt(lam) * Y
    assert 1 + truncation_excess(lam, 0.5, Y) == pytest.approx(1 / np.tanh(X), rel=1e-12)


def test_solve_fractional_truncated_vs_infinite():
    z = SpectralCoefficients.single_mode(1, 1, 2, 3.0)
    u = solve_fractional(z, 0.4)
    assert u[1, 1] == pytest.approx(3.0 / eigenvalue(1, 1) ** 0.4)
    ut = solve_fractional(z, 0.4, Y=1.0)
    assert 0 < ut[1, 1] < u[1, 1]
    assert solve_fractional(z, 0.4, Y=30.0)[1, 1] == pytest.approx(u[1, 1], rel=1e-14)


def test_exact_triple_optimality():
    params = FracParams(0.3)
    t = exact_triple(params)
    x = np.random.default_rng(1).random((2, 50))
    lam_s = eigenvalue(2, 2) ** 0.3
    # state equation and adjoint equation pointwise in the eigenbasis
    np.testing.assert_allclose(lam_s * t.u_bar(*x), t.f(*x) + t.z_bar(*x), atol=1e-13)
    np.testing.assert_allclose(lam_s * t.p_bar(*x), t.u_bar(*x) - t.u_d(*x), atol=1e-13)
    np.testing.assert_allclose(t.z_bar(*x), np.clip(-t.p_bar(*x), -0.5, 0.5))


def test_control_norm_by_adaptive_quadrature():
    t = exact_triple(FracParams(0.5))
    # one quarter-cell carries a quarter of the norm by symmetry
    val, _ = scipy.integrate.dblquad(lambda y, x: t.z_bar(x, y) ** 2, 0, 0.5, 0, 0.5, epsabs=1e-12)
    val *= 4
    c = sine_coefficients(t.z_bar, 64, quad_pts=1024)
    assert c.l2_norm() ** 2 == pytest.approx(val, rel=1e-3)
