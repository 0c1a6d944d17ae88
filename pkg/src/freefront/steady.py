"""Positive time-periodic states of p_t = d p_xx + f(t, x, p).

Three domains: the periodic cell [0, L), bounded Dirichlet intervals (-R, R) on the
shifted medium f(t, x + y, .), and the half line (X_L, 0) with p = 0 at the wall. Each
state is found by iterating the period map from the constant M until the sup-displacement
over one period drops below ``tol``.

Time stepping is Strang splitting: the logistic reaction with frozen coefficients is
solved exactly, and diffusion uses the exact propagator of the discrete Laplacian
(FFT on the cell, DST-I with a linear wall lift on intervals). Both pieces preserve
positivity for any step.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .errors import ContractError, ConvergenceError, NotMonostable, SubcriticalDomain, TruncationWarning
from .model import MediumModel

MAX_PERIODS = 1000


def default_substeps(model: MediumModel) -> int:
    rate = max(abs(model.m_upper), abs(model.m_lower), 1e-12)
    return int(max(128, 32 * model.a.max_kt, 32 * model.b.max_kt, math.ceil(50.0 * model.omega * rate)))


def logistic_flow(u, a, b, h):
    """Exact solution at time h of u' = u (a - b u) with constant a, b (u >= 0)."""
    ah = a * h
    small = np.abs(ah) < 1e-12
    phi = np.where(small, h, np.expm1(ah) / np.where(small, 1.0, a))
    return u * np.exp(ah) / (1.0 + b * u * phi)


class _Heat:
    """Exact propagator exp(h d Delta_h) on a periodic grid or with Dirichlet walls."""

    def __init__(self, n, dx, d, h, periodic):
        self.periodic = periodic
        if periodic:
            k = np.arange(n // 2 + 1)
            sigma = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / dx ** 2
            self.n = n
        else:
            k = np.arange(1, n + 1)
            sigma = (2.0 - 2.0 * np.cos(np.pi * k / (n + 1))) / dx ** 2
        z = d * sigma * h
        self.E = np.exp(-z)
        small = z < 1e-12
        self.P1 = np.where(small, 1.0, -np.expm1(-z) / np.where(small, 1.0, z))

    def periodic_step(self, u):
        return fft.irfft(self.E * fft.rfft(u), self.n)

    def dirichlet_step(self, u, lift0, lift1):
        # u = lift + v with v = 0 on the walls; the lift is linear, so only its time change drives v
        vh = self.E * fft.dst(u - lift0, type=1, norm="ortho") - self.P1 * fft.dst(lift1 - lift0, type=1, norm="ortho")
        return lift1 + fft.idst(vh, type=1, norm="ortho")


class _Integrator:
    """Strang-split stepper on fixed nodes ``xs`` (interior nodes for Dirichlet)."""

    def __init__(self, model, d, xs, dx, n_t, periodic, walls=None, span=None):
        self.model, self.d, self.xs = model, d, xs
        self.n_t = n_t
        self.dt = model.omega / n_t
        self.periodic = periodic
        self.walls = walls
        self.heat = _Heat(len(xs), dx, d, self.dt, periodic)
        if not periodic:
            lo, hi = span
            self._s = (xs - lo) / (hi - lo)
        self._coef_cache = {}

    def _coef(self, t):
        key = t if (self.model.a.depends_on_t or self.model.b.depends_on_t) else 0.0
        c = self._coef_cache.get(key)
        if c is None:
            c = (self.model.growth(t, self.xs), self.model.capacity(t, self.xs))
            if len(self._coef_cache) < 4 * self.n_t + 8:
                self._coef_cache[key] = c
        return c

    def _lift(self, t):
        left, right = self.walls(t)
        return left + (right - left) * self._s

    def step(self, u, k):
        """Advance interior values ``u`` from t_k = k dt to t_{k+1}."""
        dt = self.dt
        t = (k % self.n_t) * dt
        a, b = self._coef(t + 0.25 * dt)
        u = logistic_flow(u, a, b, 0.5 * dt)
        if self.periodic:
            u = self.heat.periodic_step(u)
        else:
            u = self.heat.dirichlet_step(u, self._lift(t), self._lift(t + dt))
        a, b = self._coef(t + 0.75 * dt)
        return np.maximum(logistic_flow(u, a, b, 0.5 * dt), 0.0)

    def period(self, u):
        frames = [u]
        for k in range(self.n_t):
            u = self.step(u, k)
            frames.append(u)
        return np.array(frames)


@dataclass
class PeriodicState:
    """One period of a time-periodic state: ``frames[k]`` is the profile at ``t[k]`` on ``x``.

    ``x`` includes the walls (Dirichlet, half line) or both cell ends (cell, last column
    repeats the first).
    """

    tag: str
    t: np.ndarray
    x: np.ndarray
    frames: np.ndarray
    residual: float
    periods_used: int
    omega: float
    L: float
    d: float
    model: MediumModel = field(repr=False)
    params: dict = field(default_factory=dict)

    @property
    def sup(self) -> float:
        return float(np.max(self.frames))

    @property
    def inf_interior(self) -> float:
        inner = self.frames if self.tag == "cell" else self.frames[:, 1:-1]
        return float(np.min(inner))

    def at(self, t, x):
        """Bilinear interpolation; t is reduced modulo omega, x modulo L on the cell.

        Outside the stored x-range values are held at the nearest wall.
        """
        scalar = np.ndim(t) == 0 and np.ndim(x) == 0
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        tau = np.mod(t, self.omega) / self.omega * (len(self.t) - 1)
        k = np.clip(np.floor(tau).astype(int), 0, len(self.t) - 2)
        wt = tau - k
        if self.tag == "cell":
            x = np.mod(x, self.L)
        dx = self.x[1] - self.x[0]
        s = np.clip((x - self.x[0]) / dx, 0.0, len(self.x) - 1)
        j = np.clip(np.floor(s).astype(int), 0, len(self.x) - 2)
        wx = s - j
        F = self.frames
        lo = (1.0 - wx) * F[k, j] + wx * F[k, j + 1]
        hi = (1.0 - wx) * F[k + 1, j] + wx * F[k + 1, j + 1]
        out = (1.0 - wt) * lo + wt * hi
        return float(out) if scalar else out

    def pde_residual(self) -> float:
        """Sup of the Crank-Nicolson residual of p_t - d p_xx - f over the stored frames."""
        dt = self.omega / (len(self.t) - 1)
        dx = self.x[1] - self.x[0]
        shift = self.params.get("y", 0.0)
        P = self.frames[:, :-1] if self.tag == "cell" else self.frames
        if self.tag == "cell":
            lap = (np.roll(P, 1, axis=1) - 2.0 * P + np.roll(P, -1, axis=1)) / dx ** 2
            xs = self.x[:-1]
        else:
            lap = np.zeros_like(P)
            lap[:, 1:-1] = (P[:, :-2] - 2.0 * P[:, 1:-1] + P[:, 2:]) / dx ** 2
            xs = self.x
        tt = self.t[:, None]
        F = P * (self.model.growth(tt, xs + shift) - self.model.capacity(tt, xs + shift) * P)
        R = (P[1:] - P[:-1]) / dt - 0.5 * self.d * (lap[1:] + lap[:-1]) - 0.5 * (F[1:] + F[:-1])
        if self.tag != "cell":
            R = R[:, 1:-1]
        return float(np.max(np.abs(R)))


def _iterate(integ, u0, tol, max_periods, collapse):
    u = u0
    for n in range(1, max_periods + 1):
        frames = integ.period(u)
        disp = float(np.max(np.abs(frames[-1] - frames[0])))
        u = frames[-1]
        sup0, sup1 = float(np.max(frames[0])), float(np.max(u))
        if sup1 < tol:
            collapse()
        # a geometric drop of the sup means decay to 0, not a small displacement near p
        if disp < tol and sup1 >= (1.0 - 1e-3) * sup0:
            return frames, disp, n
    raise ConvergenceError(f"periodic state not reached in {max_periods} periods", disp)


def _start_level(model):
    M = model.M
    if not math.isfinite(M):
        raise ContractError("saturation level M is infinite (inf b <= 0)")
    return M


def cauchy_cell(model: MediumModel, d: float, u0, T: float, grid: int = 128, substeps: int | None = None):
    """Cauchy problem on the periodic cell from ``u0`` (callable or array on ``grid`` nodes).

    Returns ``(t, x, U)`` with one row of U per substep.
    """
    n_t = substeps or default_substeps(model)
    dx = model.L / grid
    xs = np.arange(grid) * dx
    integ = _Integrator(model, d, xs, dx, n_t, periodic=True)
    u = np.broadcast_to(np.asarray(u0(xs) if callable(u0) else u0, dtype=float), (grid,)).copy()
    n_steps = int(math.ceil(T / integ.dt - 1e-9))
    rows = [u]
    for k in range(n_steps):
        u = integ.step(u, k)
        rows.append(u)
    return np.arange(n_steps + 1) * integ.dt, xs, np.array(rows)


def periodic_state_cell(
    model: MediumModel,
    d: float,
    grid: int = 128,
    tol: float = 1e-8,
    substeps: int | None = None,
    initial: float | np.ndarray | None = None,
    max_periods: int = MAX_PERIODS,
) -> PeriodicState:
    """p(t, x), omega-periodic in t and L-periodic in x, from the constant M (or ``initial``)."""
    if grid < 8:
        raise ContractError("grid must be >= 8")
    n_t = substeps or default_substeps(model)
    dx = model.L / grid
    xs = np.arange(grid) * dx
    integ = _Integrator(model, d, xs, dx, n_t, periodic=True)
    u0 = np.full(grid, _start_level(model)) if initial is None else np.broadcast_to(np.asarray(initial, float), (grid,)).copy()

    def collapse():
        raise NotMonostable("cell state collapsed to 0: lambda_1 >= 0 for this medium")

    frames, disp, n = _iterate(integ, u0, tol, max_periods, collapse)
    frames = np.concatenate([frames, frames[:, :1]], axis=1)
    x = np.append(xs, model.L)
    return PeriodicState("cell", np.linspace(0.0, model.omega, n_t + 1), x, frames, disp, n, model.omega, model.L, d, model)


def periodic_state_dirichlet(
    model: MediumModel,
    d: float,
    y: float,
    R: float,
    grid: int = 200,
    tol: float = 1e-8,
    substeps: int | None = None,
    initial: float | np.ndarray | None = None,
    max_periods: int = MAX_PERIODS,
    check_subcritical: bool = True,
) -> PeriodicState:
    """p_{R,y} on (-R, R) with zero walls for the shifted medium f(t, x + y, .).

    Subcritical domains (lambda_1 at (y, R) >= 0) raise :class:`SubcriticalDomain`.
    """
    if not R > 0:
        raise ContractError("half-length R must be positive")
    if check_subcritical:
        from .eigen import principal_eigenvalue

        lam = principal_eigenvalue(model, d, y, R, grid=max(64, min(grid, 256)), tol=1e-9)
        if lam >= 0:
            raise SubcriticalDomain(f"R = {R} is not above R*(y={y}) (lambda = {lam:.3e} >= 0)")
    if model.depends_on_x:
        grid = max(grid, int(math.ceil(32 * 2.0 * R / model.L)))
    n_t = substeps or default_substeps(model)
    x = np.linspace(-R, R, grid + 1)
    dx = x[1] - x[0]
    shifted = _Shifted(model, y)
    integ = _Integrator(shifted, d, x[1:-1], dx, n_t, periodic=False, walls=lambda t: (0.0, 0.0), span=(-R, R))
    u0 = np.full(grid - 1, _start_level(model)) if initial is None else np.broadcast_to(np.asarray(initial, float), (grid - 1,)).copy()

    def collapse():
        raise SubcriticalDomain(f"Dirichlet state on (-{R}, {R}) at y={y} collapsed to 0")

    frames, disp, n = _iterate(integ, u0, tol, max_periods, collapse)
    frames = np.pad(frames, ((0, 0), (1, 1)))
    return PeriodicState(
        "dirichlet", np.linspace(0.0, model.omega, n_t + 1), x, frames, disp, n, model.omega, model.L, d, model, {"y": y, "R": R}
    )


class _Shifted:
    """Medium view with x replaced by x + y (only what the integrator touches)."""

    def __init__(self, model, y):
        self._m, self._y = model, y
        self.omega, self.a, self.b = model.omega, model.a, model.b
        self.m_upper, self.m_lower = model.m_upper, model.m_lower

    def growth(self, t, x):
        return self._m.growth(t, np.asarray(x) + self._y)

    def capacity(self, t, x):
        return self._m.capacity(t, np.asarray(x) + self._y)


def _halfline(model, d, X_L, grid, tol, n_t, cell, max_periods):
    n = grid or int(math.ceil(64 * abs(X_L) / model.L))
    x = np.linspace(X_L, 0.0, n + 1)
    dx = x[1] - x[0]
    far = lambda t: (float(cell.at(t, X_L)), 0.0)  # noqa: E731
    integ = _Integrator(model, d, x[1:-1], dx, n_t, periodic=False, walls=far, span=(X_L, 0.0))
    u0 = np.full(n - 1, _start_level(model))

    def collapse():
        raise NotMonostable("half-line state collapsed to 0")

    frames, disp, periods = _iterate(integ, u0, tol, max_periods, collapse)
    walls = np.array([far(t)[0] for t in np.linspace(0.0, model.omega, n_t + 1)])
    frames = np.column_stack([walls, frames, np.zeros(n_t + 1)])
    return PeriodicState(
        "half_line", np.linspace(0.0, model.omega, n_t + 1), x, frames, disp, periods, model.omega, model.L, d, model, {"X_L": X_L}
    )


def periodic_state_halfline(
    model: MediumModel,
    d: float,
    X_L: float,
    grid: int | None = None,
    tol: float = 1e-8,
    substeps: int | None = None,
    check_truncation: bool = True,
    cell: PeriodicState | None = None,
    max_periods: int = MAX_PERIODS,
) -> PeriodicState:
    """p_+ on (X_L, 0) with p_+(t, 0) = 0 and the far wall clamped to the cell state.

    With ``check_truncation`` the computation is repeated on (2 X_L, 0); a change of more
    than 1e-4 on the common interval triggers a :class:`TruncationWarning`.
    """
    if X_L > -4.0 * model.L:
        raise ContractError(f"X_L must be <= -4L = {-4.0 * model.L:g}")
    n_t = substeps or default_substeps(model)
    if cell is None:
        cell = periodic_state_cell(model, d, tol=tol, substeps=n_t)
    state = _halfline(model, d, X_L, grid, tol, n_t, cell, max_periods)
    if check_truncation:
        g2 = None if grid is None else 2 * grid
        wide = _halfline(model, d, 2.0 * X_L, g2, tol, n_t, cell, max_periods)
        change = float(np.max(np.abs(wide.at(state.t[:, None], state.x[None, :]) - state.frames)))
        state.params["truncation_change"] = change
        if change > 1e-4:
            warnings.warn(f"doubling |X_L| changed p_+ by {change:.3e} (> 1e-4)", TruncationWarning, stacklevel=2)
    return state
