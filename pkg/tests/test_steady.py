import math
import warnings

import numpy as np
import pytest

from freefront.errors import ContractError, NotMonostable, SubcriticalDomain, TruncationWarning
from freefront.model import MediumModel
from freefront.steady import (
    cauchy_cell,
    logistic_flow,
    periodic_state_cell,
    periodic_state_dirichlet,
    periodic_state_halfline,
)


@pytest.fixture(scope="module")
def homogeneous_halfline(logistic):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return periodic_state_halfline(logistic, 1.0, -16.0, grid=256, tol=1e-8)


@pytest.mark.parametrize("u0, a, b, h", [(0.3, 1.0, 1.0, 0.5), (2.0, 1.5, 0.5, 0.1), (0.1, -0.5, 1.0, 1.0), (0.4, 0.0, 2.0, 0.3)])
def test_logistic_flow_exact(u0, a, b, h):
    expected = u0 / (1 + b * u0 * h) if a == 0 else a * u0 * math.exp(a * h) / (a + b * u0 * math.expm1(a * h))
    assert logistic_flow(np.array([u0]), a, b, h)[0] == pytest.approx(expected, rel=1e-13)


def test_homogeneous_cell_is_capacity():
    m = MediumModel.homogeneous(1.5, 0.5)
    p = periodic_state_cell(m, 1.0, grid=32)
    np.testing.assert_allclose(p.frames, 3.0, atol=1e-6)
    assert p.residual < 1e-8
    assert p.periods_used <= 20


def test_cell_independent_of_initial_data(spacetime):
    hi = periodic_state_cell(spacetime, 1.0, grid=64)
    lo = periodic_state_cell(spacetime, 1.0, grid=64, initial=0.01)
    assert np.max(np.abs(hi.frames - lo.frames)) < 1e-6


def test_cell_properties(spatial):
    p = periodic_state_cell(spatial, 1.0, grid=64)
    assert p.inf_interior > 0
    assert p.sup <= spatial.M + 1e-12
    assert 0 < np.mean(p.frames[0, :-1]) < 1.5
    np.testing.assert_allclose(p.frames[-1], p.frames[0], atol=10 * 1e-8)
    np.testing.assert_array_equal(p.frames[:, 0], p.frames[:, -1])


def test_cell_interpolation_is_periodic(spacetime):
    p = periodic_state_cell(spacetime, 1.0, grid=64)
    t = np.array([0.13, 0.71])
    x = np.array([0.2, 1.9])
    np.testing.assert_allclose(p.at(t + p.omega, x + 3 * p.L), p.at(t, x), atol=1e-12)
    assert p.at(0.0, p.x[5]) == pytest.approx(p.frames[0, 5])


def test_cell_collapse_signals_non_monostable():
    m = MediumModel.logistic("-0.5", "1")
    with pytest.raises(NotMonostable):
        periodic_state_cell(m, 1.0, grid=16, initial=0.5)


def test_cauchy_cell_approaches_periodic_state(spacetime):
    p = periodic_state_cell(spacetime, 1.0, grid=64)
    _, _, frames = cauchy_cell(spacetime, 1.0, 0.2, 20.0, grid=64)
    assert np.max(np.abs(frames[-1] - p.frames[0, :-1])) < 1e-4


def test_dirichlet_homogeneous_symmetric(logistic):
    p = periodic_state_dirichlet(logistic, 1.0, 0.0, math.pi, grid=200)
    assert p.inf_interior > 0
    assert p.sup < 1.0
    np.testing.assert_allclose(p.frames, p.frames[:, ::-1], atol=1e-8)
    assert p.frames[0, 0] == 0.0 and p.frames[0, -1] == 0.0


def test_dirichlet_vanishes_toward_critical(logistic):
    near = periodic_state_dirichlet(logistic, 1.0, 0.0, 1.6)
    further = periodic_state_dirichlet(logistic, 1.0, 0.0, 1.7)
    assert 0 < near.sup < further.sup < 0.5


def test_subcritical_domain_rejected(logistic):
    with pytest.raises(SubcriticalDomain):
        periodic_state_dirichlet(logistic, 1.0, 0.0, 1.5)


@pytest.mark.parametrize("y", [0.0, math.pi])
def test_dirichlet_domain_monotone(spatial, y):
    p1 = periodic_state_dirichlet(spatial, 1.0, y, 2.5, grid=100)
    p2 = periodic_state_dirichlet(spatial, 1.0, y, 4.0, grid=160)
    x = p1.x
    assert np.all(p2.at(p1.t[:, None], x[None, :]) >= p1.frames - 1e-6)


def test_dirichlet_uniqueness(spacetime):
    a = periodic_state_dirichlet(spacetime, 1.0, 0.3, 2.0, grid=80)
    b = periodic_state_dirichlet(spacetime, 1.0, 0.3, 2.0, grid=80, initial=0.05)
    assert np.max(np.abs(a.frames - b.frames)) < 10 * 1e-8 / (1 - 0.9)


def test_dirichlet_below_cell_state(spatial):
    p = periodic_state_cell(spatial, 1.0, grid=64)
    q = periodic_state_dirichlet(spatial, 1.0, 1.0, 5.0, grid=160)
    assert np.all(q.frames <= p.at(q.t[:, None], q.x[None, :] + 1.0) + 1e-4)


def test_residual_second_order_in_time(logistic):
    # the residual is measured with a Crank-Nicolson stencil, so it converges with dt
    res = [periodic_state_dirichlet(logistic, 1.0, 0.0, 3.0, grid=100, substeps=n).pde_residual() for n in (256, 512, 1024)]
    assert res[0] / res[1] > 3.0 and res[1] / res[2] > 3.0


def test_halfline_boundary_and_limit(homogeneous_halfline):
    p = homogeneous_halfline
    np.testing.assert_array_equal(p.frames[:, -1], 0.0)
    assert p.x[-1] == 0.0
    far = p.at(0.0, -14.0)
    assert far == pytest.approx(1.0, abs=1e-4)
    tail = p.frames[:, -4:]
    assert np.all(np.diff(tail, axis=1) < 0)


def test_halfline_truncation_recorded(homogeneous_halfline):
    assert homogeneous_halfline.params["truncation_change"] >= 0


def test_halfline_dominates_dirichlet(logistic, homogeneous_halfline):
    R, y = 3.0, -4.5
    q = periodic_state_dirichlet(logistic, 1.0, y, R, grid=120)
    assert np.all(homogeneous_halfline.at(q.t[:, None], q.x[None, :] + y) >= q.frames - 1e-4)


def test_halfline_needs_room(logistic):
    with pytest.raises(ContractError):
        periodic_state_halfline(logistic, 1.0, -2.0)
