import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freefront.errors import ContractError, FrameError
from freefront.fbsolver import (
    CosineBump,
    Plateau,
    FrontState,
    InitialData,
    Numerics,
    ProblemSpec,
    Triangle,
    boundary_gradient,
    build_approximants,
    bump_test_function,
    initial_state,
    make_initial,
    read_snapshot,
    solve,
    solve_halfline,
    stefan_functional,
    step,
    weak_residual,
    write_snapshot,
)
from freefront.model import MediumModel

INERT = MediumModel.logistic("0", "0")


def spec_for(model, init, mu=1.0, d=1.0, N=128, dt=1e-3, **kw):
    return ProblemSpec(model, d, mu, init, numerics=Numerics(N=N, dt=dt), **kw)


def state_with(w, g=-1.0, h=1.0):
    return FrontState(0.0, g, h, np.asarray(w, dtype=float))


# ---------------------------------------------------------------- initial data


@pytest.mark.parametrize("preset", ["triangle", "cosine_bump", "plateau"])
def test_presets_are_admissible(preset):
    init = make_initial(preset, -1.0, 1.0)
    v = init.validate(64)
    assert abs(v[0]) < 1e-12 and abs(v[-1]) < 1e-12


def test_unknown_preset_rejected():
    with pytest.raises(ContractError):
        make_initial("gaussian", -1, 1)


@pytest.mark.parametrize(
    "g0, h0, u0",
    [
        (1.0, -1.0, Triangle(-1, 1)),
        (-1.0, 1.0, lambda x: np.ones_like(x)),
        (-1.0, 1.0, lambda x: np.zeros_like(x)),
    ],
)
def test_bad_initial_data_rejected(g0, h0, u0):
    with pytest.raises(ContractError):
        InitialData(g0, h0, u0).validate(32)


def test_spec_preconditions():
    init = make_initial("triangle", -1, 1)
    with pytest.raises(ContractError):
        spec_for(INERT, init, mu=0.0)
    with pytest.raises(ContractError):
        spec_for(INERT, init, N=8)
    with pytest.raises(ContractError):
        spec_for(INERT, init, mode="half_line_right_front")


def test_approximants_nested_below_u0():
    init = make_initial("triangle", -1.0, 1.0)
    x = np.linspace(-1, 1, 2001)
    levels = [build_approximants(init, n).u0(x) for n in (2, 4, 8, 16)]
    assert np.all(levels[0] >= 0)
    for lo, hi in zip(levels, levels[1:]):
        assert np.all(lo <= hi + 1e-15)
    assert np.all(levels[-1] <= init.u0(x) + 1e-15)
    gaps = [np.max(np.abs(v - init.u0(x))) for v in levels]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_approximant_support_and_identity_in_core():
    init = make_initial("cosine_bump", 0.0, 4.0)
    app = build_approximants(init, 4)
    assert app.g0 == pytest.approx(0.25) and app.h0 == pytest.approx(3.75)
    core = np.linspace(0.5, 3.5, 50)
    np.testing.assert_array_equal(app.u0(core), init.u0(core))
    assert app.smoothness == init.smoothness


# ---------------------------------------------------------------- boundary gradient and functional


def test_gradient_exact_on_linear_profile():
    xi = np.linspace(-1, 1, 33)
    assert boundary_gradient(state_with(1.0 - xi), "right") == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("g, h", [(-1.0, 1.0), (0.0, 5.0), (-3.0, 0.5)])
def test_gradient_exact_on_quadratic(g, h):
    xi = np.linspace(-1, 1, 41)
    s = state_with(1.0 - xi**2, g, h)
    assert boundary_gradient(s, "right") == pytest.approx(-2.0 * 2.0 / (h - g), rel=1e-12)
    assert boundary_gradient(s, "left") == pytest.approx(2.0 * 2.0 / (h - g), rel=1e-12)


def test_gradient_second_order():
    errs = []
    for n in (32, 64, 128):
        xi = np.linspace(-1, 1, n + 1)
        w = np.sin(np.pi * (1 - xi) / 2) * np.exp(xi)
        errs.append(abs(boundary_gradient(state_with(w), "right") - (-np.pi / 2 * np.e)))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.5 < r < 5.0 for r in ratios)


def test_stefan_functional_front_term_only():
    init = make_initial("triangle", -1, 1)
    spec = spec_for(INERT, init)
    assert stefan_functional(state_with(np.zeros(33)), spec) == pytest.approx(2.0)


# ---------------------------------------------------------------- stepping


def test_zero_data_stays_put():
    init = InitialData(-1.0, 1.0, lambda x: 0.0 * np.asarray(x))
    spec = spec_for(INERT, init)
    s0 = FrontState(0.0, -1.0, 1.0, np.zeros(129))
    s1 = step(s0, spec)
    assert s1.t == pytest.approx(1e-3)
    assert (s1.g, s1.h) == (-1.0, 1.0)
    assert not np.any(s1.w)


def test_symmetric_run_keeps_center(logistic):
    init = make_initial("cosine_bump", -1.5, 2.5)
    spec = spec_for(logistic, init, dt=1e-2)
    traj = solve(spec, 2.0)
    np.testing.assert_allclose(traj.g + traj.h, 1.0, atol=1e-10)


def _explicit_oracle(u0, g, h, T, mu=1.0, d=1.0, N=512, dt=1e-6):
    """Front-fixed explicit Euler for logistic a = b = 1 with three-point Stefan fronts."""
    xi = np.linspace(-1, 1, N + 1)
    dxi = xi[1] - xi[0]
    w = u0(g + (xi + 1) * (h - g) / 2)
    for _ in range(int(round(T / dt))):
        s = (h - g) / 2
        hp = -mu / s * (3 * w[-1] - 4 * w[-2] + w[-3]) / (2 * dxi)
        gp = -mu / s * (-3 * w[0] + 4 * w[1] - w[2]) / (2 * dxi)
        v = (gp + (xi[1:-1] + 1) * (hp - gp) / 2) / s
        lap = (w[2:] - 2 * w[1:-1] + w[:-2]) / dxi**2
        adv = (w[2:] - w[:-2]) / (2 * dxi)
        w[1:-1] += dt * (d / s**2 * lap + v * adv + w[1:-1] * (1 - w[1:-1]))
        g, h = g + dt * gp, h + dt * hp
    return g, h


def test_single_step_matches_fine_explicit_oracle(logistic):
    # cos data is not second-order compatible at the front, so a sqrt(t) layer forms;
    # the step needs N = 1024 to resolve it to 1e-3
    init = make_initial("cosine_bump", -1.0, 1.0)
    spec = spec_for(logistic, init, N=1024, dt=1e-4)
    s1 = step(initial_state(spec), spec)
    _, h_ref = _explicit_oracle(init.u0, -1.0, 1.0, 1e-4, N=4096, dt=2.5e-8)
    assert s1.h > 1.0
    assert (s1.h - 1.0) == pytest.approx(h_ref - 1.0, rel=1e-3)


def test_oversized_step_rejected():
    init = make_initial("triangle", -1e-3, 1e-3)
    spec = spec_for(INERT, init, N=32)
    s = FrontState(0.0, -1e-3, 1e-3, np.r_[0.0, np.ones(31), 0.0])
    with pytest.raises(FrameError):
        step(s, spec)


# ---------------------------------------------------------------- trajectories


def test_conservation_without_reaction():
    init = make_initial("triangle", -1.0, 1.0)
    traj = solve(spec_for(INERT, init, N=256, dt=1e-3), 1.0)
    drift = np.max(np.abs(traj.stefan - traj.stefan[0])) / traj.stefan[0]
    assert drift < 1e-3


def test_logistic_functional_increases(logistic):
    init = make_initial("cosine_bump", -1.0, 1.0, amplitude=0.5)
    traj = solve(spec_for(logistic, init, dt=1e-2), 2.0)
    assert np.all(np.diff(traj.stefan) > 0)


def test_fronts_monotone_and_positive(spatial):
    init = make_initial("triangle", -1.0, 1.0)
    traj = solve(spec_for(spatial, init, dt=1e-2), 3.0)
    assert np.all(np.diff(traj.h) >= 0) and np.all(np.diff(traj.g) <= 0)
    assert all(np.min(s.w) >= 0 for s in traj.frames)
    assert all(s.w[0] == 0 and s.w[-1] == 0 for s in traj.frames)


def test_compatible_data_never_clips(logistic):
    init = make_initial("cosine_bump", -1.0, 1.0)
    traj = solve(spec_for(logistic, init, N=256, dt=1e-3), 1.0)
    assert traj.clip_count == 0


@pytest.mark.parametrize("amp", [0.3, 1.0, 2.0])
def test_growth_and_sup_bounds(spatial, amp):
    init = make_initial("cosine_bump", -1.0, 1.0, amplitude=amp)
    traj = solve(spec_for(spatial, init, dt=1e-2), 3.0)
    assert np.all(traj.umax <= amp * np.exp(spatial.K * traj.t) * (1 + 1e-6))
    assert np.all(traj.umax <= max(amp, spatial.M) + 1e-6)


def test_spreading_example(logistic):
    init = make_initial("cosine_bump", -2.0, 2.0)
    traj = solve(spec_for(logistic, init, dt=1e-2), 10.0)
    assert traj.h[-1] - traj.h[0] > 1.0


@settings(max_examples=6, deadline=None)
@given(
    shrink=st.floats(0.05, 0.5),
    scale=st.floats(0.2, 0.95),
)
def test_comparison_principle(logistic, shrink, scale):
    big = make_initial("cosine_bump", -1.0, 1.0)
    small = InitialData(-1.0 + shrink, 1.0 - shrink, CosineBump(-1.0 + shrink, 1.0 - shrink, scale), "compatible_C2")
    assert np.all(small.u0(big.nodes(400)) <= big.u0(big.nodes(400)))
    t_out = np.linspace(0, 1, 11)
    t1 = solve(spec_for(logistic, small, N=64, dt=1e-2), 1.0, t_out)
    t2 = solve(spec_for(logistic, big, N=64, dt=1e-2), 1.0, t_out)
    assert np.all(t2.h >= t1.h) and np.all(t2.g <= t1.g)
    for f1, f2 in zip(t1.frames, t2.frames):
        u2 = np.interp(f1.x, f2.x, f2.w, left=0.0, right=0.0)
        assert np.all(u2 >= f1.w - 1e-8)


def test_holder_statistic_finite_for_triangle(logistic):
    init = make_initial("triangle", -1.0, 1.0)
    traj = solve(spec_for(logistic, init, dt=1e-3), 1.0, np.linspace(0, 1, 101))
    assert 0 < traj.holder_right < 10
    assert traj.holder_left == pytest.approx(traj.holder_right, rel=1e-8)


def test_output_times_outside_range_rejected(logistic):
    init = make_initial("triangle", -1.0, 1.0)
    with pytest.raises(ContractError):
        solve(spec_for(logistic, init), 1.0, [0.0, 2.0])


def test_csv_and_snapshot_round_trip(tmp_path, logistic):
    init = make_initial("triangle", -1.0, 1.0)
    traj = solve(spec_for(logistic, init, N=64, dt=1e-2), 0.5, np.linspace(0, 0.5, 6))
    traj.to_csv(tmp_path / "traj.csv")
    data = np.loadtxt(tmp_path / "traj.csv", delimiter=",", skiprows=1)
    assert (tmp_path / "traj.csv").read_text().splitlines()[0] == "t,g,h,umax,mass,stefan_functional"
    np.testing.assert_array_equal(data[:, 2], traj.h)
    write_snapshot(tmp_path / "snap.txt", traj.frames[-1])
    back = read_snapshot(tmp_path / "snap.txt")
    assert (back.t, back.g, back.h) == (traj.frames[-1].t, traj.frames[-1].g, traj.frames[-1].h)
    np.testing.assert_array_equal(back.w, traj.frames[-1].w)


# ---------------------------------------------------------------- weak form


def test_weak_residual_small_and_zero_for_null_test(logistic):
    init = make_initial("cosine_bump", -1.0, 1.0)
    traj = solve(spec_for(logistic, init, N=64, dt=1e-2), 1.0, snapshots=True)
    res = weak_residual(traj, bump_test_function(1.0, (-3.0, 3.0)))
    assert res < 1e-2
    tf = bump_test_function(1.0, (-3.0, 3.0))
    null = type(tf)(lambda t, x: 0 * x, lambda t, x: 0 * x, lambda t, x: 0 * x, tf.box, tf.T)
    assert weak_residual(traj, null) == 0.0


def test_weak_residual_rejects_bad_box(logistic):
    init = make_initial("cosine_bump", -1.0, 1.0)
    traj = solve(spec_for(logistic, init, N=64, dt=1e-2), 1.0, snapshots=True)
    with pytest.raises(ContractError):
        weak_residual(traj, bump_test_function(1.0, (-1.0, 1.0)))


# ---------------------------------------------------------------- half line


def _halfline_spec(model, X, mu=1.0, N=512, dt=1e-2):
    init = InitialData(-2.0, 0.0, Plateau(-2.0, 0.0, 1.0, 0.5, left_open=True))
    return ProblemSpec(model, 1.0, mu, init, "half_line_right_front", Numerics(N=N, dt=dt, truncation=X))


def test_halfline_truncation_margin_enforced(logistic):
    spec = _halfline_spec(logistic, -10.0)
    with pytest.raises(ContractError):
        solve_halfline(spec, 10.0)


def test_halfline_zero_data_stays():
    init = InitialData(-1.0, 0.0, lambda x: 0.0 * np.asarray(x))
    spec = ProblemSpec(INERT, 1.0, 1.0, init, "half_line_right_front", Numerics(N=64, dt=1e-2, truncation=-20.0))
    traj = solve_halfline(spec, 1.0)
    assert np.all(traj.h == 0.0)


def test_halfline_front_speed_matches_semiwave(logistic):
    from freefront.classify import semiwave_speed

    spec = _halfline_spec(logistic, -40.0, N=640)
    tr = solve_halfline(spec, 40.0, np.linspace(0, 40, 81))
    sel = tr.t >= 20
    slope = np.polyfit(tr.t[sel], tr.h[sel], 1)[0]
    assert slope == pytest.approx(semiwave_speed(1, 1, 1, 1), rel=0.05)
    assert not tr.truncation_flag


def test_halfline_truncation_insensitive(logistic):
    # the two walls give different cell sizes, so compare the Richardson-extrapolated gap
    gaps = []
    for per_unit in (16, 32):
        h = [solve_halfline(_halfline_spec(logistic, X, N=int(-X * per_unit)), 40.0, [0, 40.0]).h[-1] for X in (-40.0, -80.0)]
        gaps.append(h[0] - h[1])
    assert abs(gaps[1] - (gaps[0] - gaps[1]) / 3.0) < 1e-4
