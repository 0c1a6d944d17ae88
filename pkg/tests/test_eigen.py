import math

import numpy as np
import pytest

from freefront.eigen import (
    PeriodMap,
    critical_radius,
    lambda_infinity,
    monodromy_eigen,
    principal_eigenvalue,
    rbar,
    rstar_sweep,
)
from freefront.errors import ContractError, ConvergenceError, NoCriticalRadius
from freefront.model import MediumModel


def exact_constant(d, a0, R):
    return d * (math.pi / (2 * R)) ** 2 - a0


def test_constant_coefficient_closed_form(logistic):
    res = monodromy_eigen(logistic, 1.0, 0.0, 2.0, grid=400)
    assert res.lam == pytest.approx(math.pi**2 / 16 - 1, abs=1e-3)
    assert res.rho == pytest.approx(math.exp(-res.lam * logistic.omega), rel=1e-12)
    assert res.residual < 1e-10


@pytest.mark.parametrize("d, a0, R", [(1.0, 1.0, 0.5), (0.5, 2.0, 3.0), (2.0, 0.25, 1.0)])
def test_constant_cases(d, a0, R):
    m = MediumModel.homogeneous(a0, 1.0)
    assert principal_eigenvalue(m, d, 0.0, R, grid=200) == pytest.approx(exact_constant(d, a0, R), abs=1e-3)


@pytest.mark.parametrize("omega", [0.5, 1.0, 3.0])
def test_time_modulation_averages_out(omega):
    m = MediumModel.logistic("1 + 0.5*cos(1t)", "1", omega=omega)
    lam = principal_eigenvalue(m, 1.0, 0.0, 2.0, grid=200)
    assert lam == pytest.approx(exact_constant(1.0, 1.0, 2.0), abs=1e-3)


def test_tiny_domain_does_not_underflow(logistic):
    res = monodromy_eigen(logistic, 1.0, 0.0, 0.05, grid=64)
    assert res.lam == pytest.approx(exact_constant(1.0, 1.0, 0.05), rel=1e-3)
    assert np.min(res.psi[1:-1]) > 0


@pytest.mark.parametrize("y", [0.0, 0.7, 2.5])
def test_periodic_in_y(spatial, y):
    a = principal_eigenvalue(spatial, 1.0, y, 1.5)
    b = principal_eigenvalue(spatial, 1.0, y + spatial.L, 1.5)
    assert abs(a - b) < 1e-8


def test_strictly_decreasing_in_radius(spacetime):
    radii = [0.5, 0.8, 1.2, 2.0, 3.0]
    lams = [principal_eigenvalue(spacetime, 1.0, 0.3, R) for R in radii]
    assert all(l1 > l2 + 1e-10 for l1, l2 in zip(lams, lams[1:]))


@pytest.mark.parametrize("y", [0.0, 0.5, 1.3])
@pytest.mark.parametrize("R", [0.3, 1.0, 2.5])
def test_scaled_eigenvalue_bracket(spacetime, y, R):
    lam = principal_eigenvalue(spacetime, 1.0, y, R)
    star = math.pi**2 / 4
    assert star - R**2 * spacetime.m_upper <= R**2 * lam <= star - R**2 * spacetime.m_lower


def test_profile_positive_with_zero_walls(spatial):
    res = monodromy_eigen(spatial, 1.0, 1.0, 2.0, grid=128)
    assert res.psi[0] == 0.0 and res.psi[-1] == 0.0
    assert np.min(res.psi[1:-1]) > 0
    assert np.max(res.psi) == pytest.approx(1.0)
    assert len(res.x) == len(res.psi)


def test_second_order_grid_convergence(logistic):
    lams = [monodromy_eigen(logistic, 1.0, 0.0, 2.0, grid=n).lam for n in (50, 100, 200, 400)]
    diffs = np.abs(np.diff(lams))
    ratios = diffs[:-1] / diffs[1:]
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_arnoldi_matches_power(spacetime):
    p = monodromy_eigen(spacetime, 1.0, 0.4, 1.7, grid=128)
    a = monodromy_eigen(spacetime, 1.0, 0.4, 1.7, grid=128, method="arnoldi")
    assert a.lam == pytest.approx(p.lam, abs=1e-8)
    np.testing.assert_allclose(a.psi, p.psi, atol=1e-6)


def test_period_map_is_positive(spacetime):
    pm = PeriodMap(spacetime, 1.0, 0.0, 1.0, 64)
    rng = np.random.default_rng(3)
    v, _ = pm.apply(rng.random(63))
    assert np.all(v > 0)


def test_bad_arguments_rejected(logistic):
    with pytest.raises(ContractError):
        monodromy_eigen(logistic, 1.0, 0.0, 1.0, grid=16)
    with pytest.raises(ContractError):
        monodromy_eigen(logistic, 1.0, 0.0, -1.0)
    with pytest.raises(ContractError):
        monodromy_eigen(logistic, 1.0, 0.0, 1.0, method="qr")


def test_iteration_cap_raises_with_residual(spatial):
    with pytest.raises(ConvergenceError) as info:
        monodromy_eigen(spatial, 1.0, 0.0, 4.0, grid=128, max_iter=2)
    assert info.value.residual > 0


# ---------------------------------------------------------------- critical radius


@pytest.mark.parametrize("a0, d, expected", [(1.0, 1.0, math.pi / 2), (4.0, 1.0, math.pi / 4), (1.0, 0.25, math.pi / 4)])
def test_critical_radius_closed_form(a0, d, expected):
    m = MediumModel.homogeneous(a0, 1.0)
    assert critical_radius(m, d, tol=1e-5) == pytest.approx(expected, abs=1e-3)


def test_critical_radius_ordering(spatial):
    r0 = critical_radius(spatial, 1.0, 0.0, tol=1e-4)
    r_pi = critical_radius(spatial, 1.0, math.pi, tol=1e-4)
    assert r0 < r_pi


def test_critical_radius_sign_change(spatial):
    r = critical_radius(spatial, 1.0, 0.5, tol=1e-5)
    assert principal_eigenvalue(spatial, 1.0, 0.5, r - 1e-3) > 0 > principal_eigenvalue(spatial, 1.0, 0.5, r + 1e-3)


def test_no_critical_radius_without_growth():
    m = MediumModel.logistic("-0.5", "1", L=0.5)
    with pytest.raises(NoCriticalRadius):
        critical_radius(m, 1.0)


def test_lambda_infinity_homogeneous(logistic):
    tol = 1e-3
    res = lambda_infinity(logistic, 1.0, tol)
    assert -1.0 < float(res) < -1.0 + tol
    assert res.R == res.history[-1][0]


def test_lambda_infinity_respects_growth_bounds(spatial):
    lam = float(lambda_infinity(spatial, 1.0, 1e-3))
    assert -spatial.m_upper <= lam <= -spatial.m_lower


def test_rstar_sweep_parallel_matches_serial(spatial):
    ys = [0.0, 1.0, 2.0]
    assert rstar_sweep(spatial, 1.0, ys, tol=1e-3, workers=2) == rstar_sweep(spatial, 1.0, ys, tol=1e-3)


def test_rbar_homogeneous_equals_rstar(logistic):
    res = rbar(logistic, 1.0, tol=1e-5)
    assert res.value == pytest.approx(math.pi / 2, abs=1e-3)
    assert res.y_argmax == 0.0


def test_rbar_dominates_samples(spatial):
    res = rbar(spatial, 1.0, samples=8, tol=1e-3)
    assert all(res.value >= r for r in res.radii)
    # lowest growth sits at x = L/2
    assert res.y_argmax == pytest.approx(spatial.L / 2, abs=spatial.L / 16 + 1e-12)


def test_rbar_needs_enough_samples(spatial):
    with pytest.raises(ContractError):
        rbar(spatial, 1.0, samples=4)
