"""Free boundary solver for u_t = d u_xx + f(t, x, u) on g(t) < x < h(t) with Stefan fronts.

The moving interval is mapped onto the reference interval xi in [-1, 1] through

    x = g + (xi + 1) (h - g) / 2,

so that the unknown w(t, xi) = u(t, x(xi)) solves a fixed-domain problem

    w_t = 4 d / (h - g)^2 w_xixi + V(t, xi) w_xi + f(t, x(xi), w),
    V  = [g' + (xi + 1) (h' - g') / 2] * 2 / (h - g),

with the front laws g' = -mu u_x(g), h' = -mu u_x(h). Diffusion is advanced by
Crank-Nicolson, advection and reaction explicitly, and the fronts by a Heun
predictor-corrector.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ._linalg import solve_tridiagonal
from .errors import (
    BlowUpError,
    ContractError,
    DegenerateDomainError,
    FrameError,
    TruncationWarning,
)
from .model import MediumModel

MODES = ("two_front", "half_line_left_front", "half_line_right_front", "periodic_cell")
BC_FAR = ("neumann_zero", "clamp_to_steady")
SMOOTHNESS = ("continuous", "compatible_C2")

HOLDER_LAYER_STEPS = 10
HOLDER_LAYER_SHRINK = 100.0


# ---------------------------------------------------------------- initial data
@dataclass(frozen=True)
class Triangle:
    g0: float
    h0: float
    peak: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c, half = 0.5 * (self.g0 + self.h0), 0.5 * (self.h0 - self.g0)
        return self.peak * np.clip(1.0 - np.abs(x - c) / half, 0.0, None)


@dataclass(frozen=True)
class CosineBump:
    g0: float
    h0: float
    amplitude: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c, ell = 0.5 * (self.g0 + self.h0), self.h0 - self.g0
        s = np.clip((x - c) / ell, -0.5, 0.5)
        return self.amplitude * np.cos(np.pi * s)


@dataclass(frozen=True)
class Plateau:
    """``level`` in the middle with linear shoulders of the given width at the fronts.

    With ``left_open`` the plateau extends to -infinity (right-front half-line data),
    with ``right_open`` to +infinity.
    """

    g0: float
    h0: float
    level: float = 1.0
    shoulder_width: float = 0.25
    left_open: bool = False
    right_open: bool = False

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        w = self.shoulder_width
        left = np.ones_like(x) if self.left_open else np.clip((x - self.g0) / w, 0.0, 1.0)
        right = np.ones_like(x) if self.right_open else np.clip((self.h0 - x) / w, 0.0, 1.0)
        return self.level * np.minimum(left, right)


def _smoothstep(s):
    # C2 ramp 0 -> 1 on [0, 1] with vanishing first and second derivatives at both ends
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


@dataclass(frozen=True)
class Approximant:
    """eta_n(x) u0(x) with eta_n a C2 cutoff: 0 outside [g0 + e/n, h0 - e/n], 1 on [g0 + 2e/n, h0 - 2e/n]."""

    base: Callable
    g0: float
    h0: float
    n: int

    def eta(self, x):
        x = np.asarray(x, dtype=float)
        width = 0.25 * (self.h0 - self.g0) / self.n
        left = _smoothstep((x - self.g0) / width - 1.0)
        right = _smoothstep((self.h0 - x) / width - 1.0)
        return left * right

    def __call__(self, x):
        return self.eta(x) * self.base(x)


@dataclass(frozen=True)
class InitialData:
    g0: float
    h0: float
    u0: Callable
    smoothness: str = "continuous"

    def __post_init__(self):
        if not self.g0 < self.h0:
            raise ContractError(f"initial interval must satisfy g0 < h0, got [{self.g0}, {self.h0}]")
        if self.smoothness not in SMOOTHNESS:
            raise ContractError(f"unknown smoothness tag {self.smoothness!r}")

    def nodes(self, N):
        return self.g0 + (np.arange(N + 1) / N) * (self.h0 - self.g0)

    def validate(self, N: int, require_left_zero=True, require_right_zero=True):
        """Check u0(g0) = u0(h0) = 0 and u0 > 0 at the interior grid nodes."""
        v = np.asarray(self.u0(self.nodes(N)), dtype=float)
        scale = max(float(np.max(np.abs(v))), 1.0)
        if require_left_zero and abs(v[0]) > 1e-12 * scale:
            raise ContractError(f"u0(g0) = {v[0]:.3e} must vanish")
        if require_right_zero and abs(v[-1]) > 1e-12 * scale:
            raise ContractError(f"u0(h0) = {v[-1]:.3e} must vanish")
        if not np.all(v[1:-1] > 0):
            j = int(np.argmin(v[1:-1])) + 1
            raise ContractError(f"u0 must be positive inside (g0, h0); u0({self.nodes(N)[j]:.6g}) = {v[j]:.3e}")
        return v


PRESETS = {
    "triangle": (Triangle, "continuous"),
    "cosine_bump": (CosineBump, "compatible_C2"),
    "plateau": (Plateau, "continuous"),
}


def make_initial(preset: str, g0: float, h0: float, **params) -> InitialData:
    """InitialData from a named preset: triangle(peak), cosine_bump(amplitude), plateau(level, shoulder_width)."""
    try:
        cls, smoothness = PRESETS[preset]
    except KeyError:
        raise ContractError(f"unknown u0 preset {preset!r}; choose from {sorted(PRESETS)}") from None
    try:
        u0 = cls(g0, h0, **params)
    except TypeError as exc:
        raise ContractError(f"bad parameters for preset {preset!r}: {exc}") from None
    return InitialData(g0, h0, u0, smoothness)


def build_approximants(init: InitialData, n: int) -> InitialData:
    """Compactly supported approximant u0n <= u0 on the shrunken interval.

    The support is [g0 + e/n, h0 - e/n] with e = (h0 - g0)/4, and u0n is nondecreasing
    in n (the cutoff profiles are nested). The cutoff is C2, so u0n meets the fronts
    compatibly; interior regularity is that of u0, and so is the smoothness tag.
    """
    if n < 1:
        raise ContractError("approximation level n must be >= 1")
    eps = 0.25 * (init.h0 - init.g0)
    return InitialData(
        init.g0 + eps / n,
        init.h0 - eps / n,
        Approximant(init.u0, init.g0, init.h0, n),
        init.smoothness,
    )


# ---------------------------------------------------------------- problem description
@dataclass(frozen=True)
class Numerics:
    N: int = 256
    dt: float = 1e-3
    # far wall for half-line modes: left wall for a right front, right wall for a left front
    truncation: Optional[float] = None
    bc_far: str = "neumann_zero"


@dataclass(frozen=True)
class ProblemSpec:
    model: MediumModel
    d: float
    mu: float
    init: InitialData
    mode: str = "two_front"
    numerics: Numerics = field(default_factory=Numerics)

    def __post_init__(self):
        if not self.d > 0:
            raise ContractError("diffusivity d must be positive")
        if not self.mu > 0:
            raise ContractError("Stefan coefficient mu must be positive")
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}")
        if self.numerics.N < 16:
            raise ContractError("numerics.N must be >= 16")
        if not self.numerics.dt > 0:
            raise ContractError("numerics.dt must be positive")
        if self.numerics.bc_far not in BC_FAR:
            raise ContractError(f"unknown bc_far {self.numerics.bc_far!r}")
        if self.mode.startswith("half_line") and self.numerics.truncation is None:
            raise ContractError("half-line modes need numerics.truncation")

    def with_mu(self, mu):
        return replace(self, mu=mu)


@dataclass(frozen=True)
class FrontState:
    t: float
    g: float
    h: float
    w: np.ndarray
    clipped: int = 0

    @property
    def N(self):
        return len(self.w) - 1

    @property
    def xi(self):
        return -1.0 + 2.0 * np.arange(self.N + 1) / self.N

    @property
    def x(self):
        return self.g + (self.xi + 1.0) * 0.5 * (self.h - self.g)

    @property
    def umax(self):
        return float(np.max(self.w))

    @property
    def mass(self):
        """Trapezoid approximation of the integral of u over [g, h]."""
        return float(np.trapezoid(self.w, dx=2.0 / self.N) * 0.5 * (self.h - self.g))


def _moving_ends(mode):
    # (left end moves, right end moves)
    return {
        "two_front": (True, True),
        "half_line_right_front": (False, True),
        "half_line_left_front": (True, False),
    }[mode]


def boundary_gradient(state: FrontState, side: str) -> float:
    """One-sided three-point estimate of u_x at the left or right end of the frame."""
    w, N = state.w, state.N
    if N < 3:
        raise ContractError("boundary_gradient needs N >= 3")
    dxi = 2.0 / N
    scale = 2.0 / (state.h - state.g)
    if side == "right":
        return (3.0 * w[N] - 4.0 * w[N - 1] + w[N - 2]) / (2.0 * dxi) * scale
    if side == "left":
        return (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dxi) * scale
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def front_velocities(state: FrontState, spec: ProblemSpec):
    """(g', h') from the Stefan conditions; a fixed far wall has zero velocity."""
    lmove, rmove = _moving_ends(spec.mode)
    vg = -spec.mu * boundary_gradient(state, "left") if lmove else 0.0
    vh = -spec.mu * boundary_gradient(state, "right") if rmove else 0.0
    return vg, vh


def stefan_functional(state: FrontState, spec: ProblemSpec) -> float:
    """M(t) = int_g^h u dx + (d/mu)(h - g); along exact solutions dM/dt = int_g^h f dx."""
    if spec.mode != "two_front":
        raise ContractError("stefan_functional is defined for the two-front mode")
    return state.mass + spec.d / spec.mu * (state.h - state.g)


class _Frame:
    """Per-problem constants and operators of the front-fixed scheme."""

    def __init__(self, spec: ProblemSpec, far_field: Optional[Callable] = None):
        self.spec = spec
        self.N = spec.numerics.N
        self.dxi = 2.0 / self.N
        self.xi = -1.0 + 2.0 * np.arange(self.N + 1) / self.N
        self.lmove, self.rmove = _moving_ends(spec.mode)
        self.far_field = far_field
        # boundary kind per end: "front", "neumann" or "clamp"
        far = "neumann" if spec.numerics.bc_far == "neumann_zero" else "clamp"
        self.left_kind = "front" if self.lmove else far
        self.right_kind = "front" if self.rmove else far
        if "clamp" in (self.left_kind, self.right_kind) and far_field is None:
            raise ContractError("bc_far = clamp_to_steady needs a far-field state")

    def x_of(self, g, h):
        return g + (self.xi + 1.0) * 0.5 * (h - g)

    def explicit(self, t, g, h, vg, vh, w):
        """Advection plus reaction at every node (end rows are overwritten later)."""
        ell = h - g
        V = (vg + (self.xi + 1.0) * 0.5 * (vh - vg)) * 2.0 / ell
        wx = np.zeros_like(w)
        wx[1:-1] = (w[2:] - w[:-2]) / (2.0 * self.dxi)
        # Neumann walls do not move, so V vanishes there and the ghost-node advection is zero
        return V * wx + self.spec.model.rate(t, self.x_of(g, h), w)

    def diffusion_rows(self, D, theta_dt):
        """Bands of (I - theta_dt * D * second difference) with boundary rows applied."""
        n = self.N + 1
        r = theta_dt * D / self.dxi ** 2
        diag = np.full(n, 1.0 + 2.0 * r)
        lower = np.full(n - 1, -r)
        upper = np.full(n - 1, -r)
        if self.left_kind == "neumann":
            upper[0] = -2.0 * r
        else:
            diag[0], upper[0] = 1.0, 0.0
        if self.right_kind == "neumann":
            lower[-1] = -2.0 * r
        else:
            diag[-1], lower[-1] = 1.0, 0.0
        return lower, diag, upper

    def apply_diffusion(self, w, D):
        out = np.zeros_like(w)
        out[1:-1] = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / self.dxi ** 2
        if self.left_kind == "neumann":
            out[0] = 2.0 * (w[1] - w[0]) / self.dxi ** 2
        if self.right_kind == "neumann":
            out[-1] = 2.0 * (w[-2] - w[-1]) / self.dxi ** 2
        return D * out

    def end_values(self, t, g, h):
        left = right = 0.0
        if self.left_kind == "clamp":
            left = float(self.far_field(t, g))
        if self.right_kind == "clamp":
            right = float(self.far_field(t, h))
        return left, right

    def velocities(self, g, h, w):
        st = FrontState(0.0, g, h, w)
        vg = -self.spec.mu * boundary_gradient(st, "left") if self.lmove else 0.0
        vh = -self.spec.mu * boundary_gradient(st, "right") if self.rmove else 0.0
        return vg, vh

    def pde_update(self, t, dt, g0, h0, g1, h1, w, expl):
        """Crank-Nicolson diffusion with the given explicit increment rate ``expl``."""
        d = self.spec.d
        D0 = 4.0 * d / (h0 - g0) ** 2
        D1 = 4.0 * d / (h1 - g1) ** 2
        rhs = w + 0.5 * dt * self.apply_diffusion(w, D0) + dt * expl
        left, right = self.end_values(t + dt, g1, h1)
        if self.left_kind != "neumann":
            rhs[0] = left
        if self.right_kind != "neumann":
            rhs[-1] = right
        lower, diag, upper = self.diffusion_rows(D1, 0.5 * dt)
        out = solve_tridiagonal(lower, diag, upper, rhs)
        # pinned ends exactly (the banded solve can leave roundoff there)
        if self.left_kind != "neumann":
            out[0] = left
        if self.right_kind != "neumann":
            out[-1] = right
        return out

    def advance(self, state: FrontState, dt: float) -> FrontState:
        t, g, h, w = state.t, state.g, state.h, state.w
        ell = h - g
        vg0, vh0 = self.velocities(g, h, w)
        if dt * max(abs(vg0), abs(vh0)) >= 0.25 * ell:
            raise FrameError(f"time step {dt:.3e} moves a front by more than (h-g)/4 at t={t:.6g}")
        # predictor
        gp, hp = g + dt * vg0, h + dt * vh0
        e0 = self.explicit(t, g, h, vg0, vh0, w)
        wp = self.pde_update(t, dt, g, h, gp, hp, w, e0)
        # corrector (Heun) on fronts and explicit terms
        vg1, vh1 = self.velocities(gp, hp, wp)
        g1 = g + 0.5 * dt * (vg0 + vg1)
        h1 = h + 0.5 * dt * (vh0 + vh1)
        e1 = self.explicit(t + dt, gp, hp, vg1, vh1, np.maximum(wp, 0.0))
        w1 = self.pde_update(t, dt, g, h, g1, h1, w, 0.5 * (e0 + e1))
        if not (np.all(np.isfinite(w1)) and math.isfinite(g1) and math.isfinite(h1)):
            raise BlowUpError(f"non-finite solution at t={t + dt:.6g}")
        neg = w1 < 0.0
        clipped = int(np.count_nonzero(neg))
        if clipped:
            w1 = np.where(neg, 0.0, w1)
        if h1 - g1 < 4.0 * self.min_cell:
            raise DegenerateDomainError(f"fronts collided at t={t + dt:.6g}: h-g={h1 - g1:.3e}")
        return FrontState(t + dt, g1, h1, w1, clipped)


def initial_state(spec: ProblemSpec) -> FrontState:
    init, N = spec.init, spec.numerics.N
    if spec.mode == "periodic_cell":
        raise ContractError("periodic_cell mode has no fronts; use steady.cauchy_cell")
    if spec.mode == "two_front":
        g, h = init.g0, init.h0
        w = init.validate(N)
    elif spec.mode == "half_line_right_front":
        g, h = spec.numerics.truncation, init.h0
        if not g < h:
            raise ContractError("truncation must lie left of h0")
        w = np.asarray(init.u0(g + (np.arange(N + 1) / N) * (h - g)), dtype=float)
        _check_halfline_data(w, right_front=True)
    else:
        g, h = init.g0, spec.numerics.truncation
        if not g < h:
            raise ContractError("truncation must lie right of g0")
        w = np.asarray(init.u0(g + (np.arange(N + 1) / N) * (h - g)), dtype=float)
        _check_halfline_data(w, right_front=False)
    w = np.array(w, dtype=float)
    if spec.mode == "two_front":
        w[0] = w[-1] = 0.0
    elif spec.mode == "half_line_right_front":
        w[-1] = 0.0
    else:
        w[0] = 0.0
    return FrontState(0.0, float(g), float(h), w)


def _check_halfline_data(w, right_front):
    front = w[-1] if right_front else w[0]
    if abs(front) > 1e-12 * max(1.0, float(np.max(np.abs(w)))):
        raise ContractError("u0 must vanish at the moving front")
    if np.any(w < 0):
        raise ContractError("u0 must be nonnegative")


def step(state: FrontState, spec: ProblemSpec, dt: Optional[float] = None, far_field=None) -> FrontState:
    """Advance one time step of size ``dt`` (default ``spec.numerics.dt``)."""
    frame = _Frame(spec, far_field)
    frame.min_cell = (state.h - state.g) / state.N
    return frame.advance(state, spec.numerics.dt if dt is None else dt)


# ---------------------------------------------------------------- trajectories
@dataclass
class Trajectory:
    spec: ProblemSpec
    t: np.ndarray
    g: np.ndarray
    h: np.ndarray
    umax: np.ndarray
    mass: np.ndarray
    stefan: np.ndarray
    frames: list  # FrontState at each output time
    snapshots: list = field(default_factory=list)  # every step, when requested
    clip_count: int = 0
    steps: int = 0
    holder_right: float = float("nan")
    holder_left: float = float("nan")
    truncation_flag: bool = False
    far_drift: float = 0.0

    CSV_HEADER = "t,g,h,umax,mass,stefan_functional"

    def rows(self):
        return zip(self.t, self.g, self.h, self.umax, self.mass, self.stefan)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for row in self.rows():
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @property
    def holder(self):
        return max(self.holder_right, self.holder_left)


def write_snapshot(path, state: FrontState):
    with open(path, "w") as fh:
        fh.write(f"t={state.t:.17g} g={state.g:.17g} h={state.h:.17g} N={state.N}\n")
        fh.write("xi,u\n")
        for xi, u in zip(state.xi, state.w):
            fh.write(f"{xi:.17g},{u:.17g}\n")


def read_snapshot(path) -> FrontState:
    with open(path) as fh:
        head = dict(kv.split("=") for kv in fh.readline().split())
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    w = data[:, 1]
    if len(w) != int(head["N"]) + 1:
        raise ValueError("snapshot row count does not match N")
    return FrontState(float(head["t"]), float(head["g"]), float(head["h"]), w)


def _step_sizes(spec):
    """Nominal step sequence: a geometric start-up layer for merely continuous data."""
    dt = spec.numerics.dt
    k = 0
    while True:
        if spec.init.smoothness == "continuous" and k < HOLDER_LAYER_STEPS:
            yield dt * HOLDER_LAYER_SHRINK ** (k / HOLDER_LAYER_STEPS - 1.0)
        else:
            yield dt
        k += 1


def march(spec: ProblemSpec, T: float, output_times=None, snapshots=False, far_field=None, stats=None):
    """Generator over (state, is_output) for every accepted step up to time T.

    Steps are shortened to land exactly on output times. ``stats`` (a dict) collects
    clipping counts and step counts.
    """
    if not T > 0:
        raise ContractError("final time T must be positive")
    outs = np.unique(np.asarray([0.0, T] if output_times is None else output_times, dtype=float))
    if outs.size and (outs[0] < 0 or outs[-1] > T * (1 + 1e-12)):
        raise ContractError("output times must lie in [0, T]")
    frame = _Frame(spec, far_field)
    state = initial_state(spec)
    frame.min_cell = (state.h - state.g) / frame.N
    stats = {} if stats is None else stats
    stats.setdefault("clipped", 0)
    stats.setdefault("steps", 0)
    k_out = 0
    if outs.size and outs[0] <= 0.0:
        yield state, True
        k_out = 1
    elif snapshots:
        yield state, False
    sizes = _step_sizes(spec)
    while state.t < T * (1 - 1e-13):
        dt = next(sizes)
        target = outs[k_out] if k_out < outs.size else T
        is_out = False
        if state.t + dt >= target - 1e-12 * max(1.0, target):
            dt = target - state.t
            is_out = k_out < outs.size
        state = frame.advance(state, dt)
        if is_out:
            state = replace(state, t=float(target))
            k_out += 1
        stats["clipped"] += state.clipped
        stats["steps"] += 1
        if is_out or snapshots:
            yield state, is_out


def _holder(times, fronts, origin):
    sel = (times > 0) & (times <= min(1.0, times[-1]) + 1e-14)
    if not np.any(sel):
        return float("nan")
    return float(np.max(np.abs(fronts[sel] - origin) / np.sqrt(times[sel])))


def solve(spec: ProblemSpec, T: float, output_times=None, snapshots: bool = False, far_field=None) -> Trajectory:
    """Integrate the free boundary problem up to T, recording the requested output times.

    The empirical Holder statistics ``holder_right`` = sup (h(t) - h0)/sqrt(t) and
    ``holder_left`` (same for g) are taken over output times t <= min(1, T).
    """
    if output_times is None:
        output_times = np.linspace(0.0, T, 51)
    stats = {}
    frames, snaps = [], []
    track_far = spec.mode.startswith("half_line")
    far_ref, far_drift = None, 0.0
    for state, is_out in march(spec, T, output_times, snapshots, far_field, stats):
        if snapshots:
            snaps.append(state)
        if is_out:
            frames.append(state)
        if track_far:
            ref, val = _far_probe(spec, state, far_field)
            if far_ref is None:
                far_ref = val
            drift = abs(val - (ref if ref is not None else far_ref))
            far_drift = max(far_drift, drift)
    t = np.array([s.t for s in frames])
    g = np.array([s.g for s in frames])
    h = np.array([s.h for s in frames])
    umax = np.array([s.umax for s in frames])
    mass = np.array([s.mass for s in frames])
    if spec.mode == "two_front":
        stefan = mass + spec.d / spec.mu * (h - g)
    else:
        stefan = np.full_like(mass, np.nan)
    traj = Trajectory(spec, t, g, h, umax, mass, stefan, frames, snaps, stats["clipped"], stats["steps"])
    traj.holder_right = _holder(t, h, spec.init.h0) if spec.mode != "half_line_left_front" else float("nan")
    traj.holder_left = _holder(t, g, spec.init.g0) if spec.mode != "half_line_right_front" else float("nan")
    traj.far_drift = far_drift
    traj.truncation_flag = track_far and far_drift > 1e-6
    return traj


def _far_probe(spec, state, far_field):
    # value at the far wall (Neumann) or first interior node against the clamped state
    right_front = spec.mode == "half_line_right_front"
    j = 0 if right_front else -1
    if spec.numerics.bc_far == "neumann_zero":
        return None, float(state.w[j])
    j = 1 if right_front else -2
    x = state.x[j]
    return float(far_field(state.t, x)), float(state.w[j])


def solve_halfline(spec: ProblemSpec, T: float, output_times=None, far_state=None, snapshots=False) -> Trajectory:
    """Single-front problem on (-inf, h(t)) or (g(t), inf), truncated at ``numerics.truncation``.

    The far wall carries ``bc_far``. For ``clamp_to_steady`` the wall is pinned to the
    space-time periodic state p (computed on demand when ``far_state`` is None). A
    :class:`TruncationWarning` is issued and ``truncation_flag`` set when the far-wall
    solution moves by more than 1e-6.
    """
    if not spec.mode.startswith("half_line"):
        raise ContractError("solve_halfline needs a half-line mode")
    X = spec.numerics.truncation
    margin = 4.0 * math.sqrt(spec.d * T) + spec.model.L
    if spec.mode == "half_line_right_front" and X > spec.init.g0 - margin:
        raise ContractError(f"truncation {X} must be <= g0 - {margin:.6g}")
    if spec.mode == "half_line_left_front" and X < spec.init.h0 + margin:
        raise ContractError(f"truncation {X} must be >= h0 + {margin:.6g}")
    far_field = None
    if spec.numerics.bc_far == "clamp_to_steady":
        if far_state is None:
            from .steady import periodic_state_cell

            far_state = periodic_state_cell(spec.model, spec.d)
        far_field = far_state.at
    traj = solve(spec, T, output_times, snapshots=snapshots, far_field=far_field)
    if traj.truncation_flag:
        warnings.warn(
            f"far boundary moved by {traj.far_drift:.3e} (> 1e-6); enlarge |truncation|",
            TruncationWarning,
            stacklevel=2,
        )
    return traj


# ---------------------------------------------------------------- weak form residual
@dataclass(frozen=True)
class TestFunction:
    """Test function phi(t, x) with its derivatives, vanishing at t = T and on the box walls."""

    phi: Callable
    phi_t: Callable
    phi_xx: Callable
    box: tuple
    T: float

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class _CosBump:
    T: float
    a: float
    b: float
    part: str

    def __call__(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        width = self.b - self.a
        theta = np.pi * (x - 0.5 * (self.a + self.b)) / width
        inside = (x >= self.a) & (x <= self.b)
        if self.part == "phi":
            v = (self.T - t) * np.cos(theta) ** 2
        elif self.part == "phi_t":
            v = -np.cos(theta) ** 2 + 0.0 * t
        else:
            v = -(self.T - t) * 2.0 * np.pi ** 2 / width ** 2 * np.cos(2.0 * theta)
        return np.where(inside, v, 0.0)


def bump_test_function(T: float, box) -> TestFunction:
    """phi(t, x) = (T - t) cos^2(pi (x - c)/W) on the box [a, b] (c its center, W its width)."""
    a, b = map(float, box)
    return TestFunction(_CosBump(T, a, b, "phi"), _CosBump(T, a, b, "phi_t"), _CosBump(T, a, b, "phi_xx"), (a, b), T)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _gauss(fn, lo, hi):
    if hi <= lo:
        return 0.0
    xm, xr = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return float(xr * np.dot(_GL_W, fn(xm + xr * _GL_X)))


def weak_residual(traj: Trajectory, testfn: TestFunction) -> float:
    """Absolute residual of the weak formulation of the free boundary problem.

    Evaluates

        | int_0^T int_I [d u~ phi_xx + kappa(u~) phi_t] + int_I kappa(u~_0) phi(0,.) + int_0^T int_I f(u~) phi |

    where u~ is the zero extension of u and kappa(w) = w for w > 0, w - d/mu otherwise.
    Inside [g(t), h(t)] the integrand is evaluated pointwise at the frame nodes and
    integrated by the trapezoid rule (the front nodes therefore carry the -d/mu
    offset, a first-order term in the grid spacing); outside, kappa is the constant
    -d/mu and phi_t is integrated by Gauss-Legendre quadrature. Time integration is
    trapezoidal over the stored snapshots.
    """
    spec = traj.spec
    if spec.mode != "two_front":
        raise ContractError("weak_residual is implemented for the two-front mode")
    snaps = traj.snapshots
    if len(snaps) < 2:
        raise ContractError("weak_residual needs a trajectory solved with snapshots=True")
    T = testfn.T
    a, b = testfn.box
    if abs(snaps[-1].t - T) > 1e-9 * max(1.0, T):
        raise ContractError("test function horizon T must match the trajectory end time")
    probe_x = np.linspace(a, b, 33)
    probe_t = np.linspace(0.0, T, 33)
    scale = max(1.0, float(np.max(np.abs(testfn.phi(probe_t[:, None], probe_x[None, :])))))
    if (
        np.max(np.abs(testfn.phi(T, probe_x))) > 1e-12 * scale
        or np.max(np.abs(testfn.phi(probe_t, np.full_like(probe_t, a)))) > 1e-12 * scale
        or np.max(np.abs(testfn.phi(probe_t, np.full_like(probe_t, b)))) > 1e-12 * scale
    ):
        raise ContractError("test function must vanish at t = T and on the box walls")
    if min(s.g for s in snaps) < a or max(s.h for s in snaps) > b:
        raise ContractError("test box must contain [g(t), h(t)] for all t")
    d, mu, model = spec.d, spec.mu, spec.model
    offset = d / mu

    def kappa(w):
        return np.where(w > 0, w, w - offset)

    def inside_trap(vals, s):
        return float(np.trapezoid(vals, dx=2.0 / s.N) * 0.5 * (s.h - s.g))

    times = np.array([s.t for s in snaps])
    inner = np.empty(len(snaps))
    for k, s in enumerate(snaps):
        x = s.x
        integrand = (
            d * s.w * testfn.phi_xx(s.t, x)
            + kappa(s.w) * testfn.phi_t(s.t, x)
            + model.rate(s.t, x, s.w) * testfn.phi(s.t, x)
        )
        outside = -offset * (
            _gauss(lambda z: testfn.phi_t(s.t, z), a, s.g) + _gauss(lambda z: testfn.phi_t(s.t, z), s.h, b)
        )
        inner[k] = inside_trap(integrand, s) + outside
    s0 = snaps[0]
    initial = inside_trap(kappa(s0.w) * testfn.phi(0.0, s0.x), s0) - offset * (
        _gauss(lambda z: testfn.phi(0.0, z), a, s0.g) + _gauss(lambda z: testfn.phi(0.0, z), s0.h, b)
    )
    return abs(float(np.trapezoid(inner, times)) + initial)
