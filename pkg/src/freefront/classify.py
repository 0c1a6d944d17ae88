"""Spreading or vanishing: finite-time classification, the critical Stefan coefficient mu*,
spreading-speed estimates and the homogeneous semi-wave speed."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import eigen
from .errors import ContractError, InconclusiveError, NoThreshold, SolverError
from .fbsolver import ProblemSpec, front_velocities, march, solve
from .model import validate_hypotheses

log = logging.getLogger(__name__)

SPREADING, VANISHING, UNDECIDED = "Spreading", "Vanishing", "Undecided"


@dataclass
class DichotomyVerdict:
    kind: str
    trigger_time: float | None
    front_length: float
    umax_at_decision: float
    rbar: float
    reason: str = ""
    evidence: dict = field(default_factory=dict, repr=False)

    EVIDENCE_HEADER = "t,g,h,umax,left_speed,right_speed"

    def record(self) -> str:
        """One-line verdict record ``kind,trigger_time,front_length,umax``."""
        trig = "" if self.trigger_time is None else f"{self.trigger_time:.17g}"
        return f"{self.kind},{trig},{self.front_length:.17g},{self.umax_at_decision:.17g}"

    def evidence_csv(self, path):
        ev = self.evidence
        with open(path, "w") as fh:
            fh.write(self.EVIDENCE_HEADER + "\n")
            for row in zip(ev["t"], ev["g"], ev["h"], ev["umax"], ev["left_speed"], ev["right_speed"]):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


@dataclass
class SpeedEstimate:
    c_right: float
    c_left: float
    window: tuple
    fit_residual: float


def _rbar_value(spec, rbar):
    if rbar is not None:
        return float(rbar)
    return eigen.rbar(spec.model, spec.d).value


def classify(
    spec: ProblemSpec,
    T_max: float,
    eps_v: float = 1e-4,
    margin: float = 0.5,
    rbar: float | None = None,
    check_dt: float | None = None,
) -> DichotomyVerdict:
    """Run the free boundary problem until the outcome is decided or T_max is reached.

    Spreading: front length h - g >= 2 rbar at a check time. Vanishing: umax < eps_v
    with h - g < 2 rbar + margin and both front speeds below eps_v. Checks happen every
    ``check_dt`` (default T_max / 500, at most 0.1). ``rbar`` defaults to the computed
    max of R*(y).
    """
    if spec.mode != "two_front":
        raise ContractError("classify needs the two-front mode")
    if not T_max > 0 or not eps_v > 0 or margin < 0:
        raise ContractError("need T_max > 0, eps_v > 0 and margin >= 0")
    report = validate_hypotheses(spec.model, samples=16)
    if not report.ok:
        raise ContractError(f"medium violates the monostable hypotheses: {report.violations[0]}")
    rb = _rbar_value(spec, rbar)
    step = check_dt or min(0.1, T_max / 500.0)
    outs = np.append(np.arange(0.0, T_max, step), T_max)
    ev = {k: [] for k in ("t", "g", "h", "umax", "left_speed", "right_speed")}
    kind, reason, trig = UNDECIDED, "T_max reached", None
    state = None
    for state, is_out in march(spec, T_max, outs):
        if not is_out:
            continue
        gl, hr = front_velocities(state, spec)
        for k, v in zip(ev, (state.t, state.g, state.h, state.umax, -gl, hr)):
            ev[k].append(v)
        length = state.h - state.g
        if length >= 2.0 * rb:
            kind, reason, trig = SPREADING, "front length reached 2 rbar", state.t
            break
        if state.umax < eps_v and length < 2.0 * rb + margin and max(abs(gl), abs(hr)) < eps_v:
            kind, reason, trig = VANISHING, "density below eps_v with stalled fronts", state.t
            break
    evidence = {k: np.array(v) for k, v in ev.items()}
    return DichotomyVerdict(kind, trig, state.h - state.g, state.umax, rb, reason, evidence)


def check_radius_criterion(spec: ProblemSpec, tol: float = 1e-4) -> bool:
    """(h0 - g0)/2 >= R*(y0) with y0 the midpoint of the initial range."""
    y0 = 0.5 * (spec.init.g0 + spec.init.h0)
    return 0.5 * (spec.init.h0 - spec.init.g0) >= eigen.critical_radius(spec.model, spec.d, y0, tol)


@dataclass
class MuStar:
    value: float
    lo: float
    hi: float
    history: list = field(default_factory=list)

    HISTORY_HEADER = "iter,mu_lo,mu_hi,verdict_mid"

    def __float__(self):
        return self.value

    def history_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.HISTORY_HEADER + "\n")
            for it, lo, hi, verdict in self.history:
                fh.write(f"{it},{lo:.17g},{hi:.17g},{verdict}\n")


def _verdict(spec, mu, T_max, kw):
    v = classify(spec.with_mu(mu), T_max, **kw)
    if v.kind == UNDECIDED:
        v = classify(spec.with_mu(mu), 2.0 * T_max, **kw)
    return v.kind


def mu_star(
    spec: ProblemSpec,
    bracket=(0.01, 10.0),
    tol: float = 0.05,
    T_max: float = 50.0,
    eps_v: float = 1e-4,
    margin: float = 0.5,
    rbar: float | None = None,
    max_widen: int = 10,
) -> MuStar:
    """Critical Stefan coefficient: vanishing for mu <= mu*, spreading above.

    Bisects geometrically on mu until (hi - lo) < tol * mid. The bracket is validated
    first (lo must vanish, hi must spread), halving lo or doubling hi up to
    ``max_widen`` times. An Undecided verdict is retried once at 2 T_max; if still
    undecided inside the bisection it counts as spreading (logged), at a bracket end
    it raises :class:`InconclusiveError`.
    """
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ContractError("bracket must satisfy 0 < mu_lo < mu_hi")
    if not tol > 0:
        raise ContractError("tol must be positive")
    rb = _rbar_value(spec, rbar)
    y0 = 0.5 * (spec.init.g0 + spec.init.h0)
    if 0.5 * (spec.init.h0 - spec.init.g0) >= eigen.critical_radius(spec.model, spec.d, y0, 1e-4):
        raise ContractError("initial range is not subcritical: spreading happens for every mu")
    kw = dict(eps_v=eps_v, margin=margin, rbar=rb)

    for _ in range(max_widen + 1):
        v = _verdict(spec, lo, T_max, kw)
        if v == VANISHING:
            break
        if v == UNDECIDED:
            raise InconclusiveError(f"lower end mu = {lo:g} undecided at 2 T_max", (lo, hi))
        lo *= 0.5
    else:
        raise NoThreshold(f"no vanishing mu found down to {lo:g}")
    for _ in range(max_widen + 1):
        v = _verdict(spec, hi, T_max, kw)
        if v == SPREADING:
            break
        if v == UNDECIDED:
            raise InconclusiveError(f"upper end mu = {hi:g} undecided at 2 T_max", (lo, hi))
        lo = max(lo, hi)
        hi *= 2.0
    else:
        raise NoThreshold(f"no spreading mu found up to {hi:g}")

    history = []
    it = 0
    while hi - lo >= tol * 0.5 * (lo + hi):
        it += 1
        mid = math.sqrt(lo * hi)
        v = _verdict(spec, mid, T_max, kw)
        if v == UNDECIDED:
            log.warning("mu = %.6g undecided at 2 T_max; counted as spreading", mid)
        if v == VANISHING:
            lo = mid
        else:
            hi = mid
        history.append((it, lo, hi, v))
    return MuStar(0.5 * (lo + hi), lo, hi, history)


def spreading_speed(
    spec: ProblemSpec, T: float, window_fraction: float = 0.5, rbar: float | None = None, n_out: int = 401
) -> SpeedEstimate:
    """Least-squares slopes of h(t) and -g(t) over the final ``window_fraction`` of [0, T]."""
    if not 0 < window_fraction < 1:
        raise ContractError("window_fraction must lie in (0, 1)")
    if spec.mode != "two_front":
        raise ContractError("spreading_speed needs the two-front mode")
    traj = solve(spec, T, np.linspace(0.0, T, n_out))
    rb = _rbar_value(spec, rbar)
    if traj.h[-1] - traj.g[-1] < 2.0 * rb:
        raise ContractError(f"run is not spreading: final length {traj.h[-1] - traj.g[-1]:.4g} < 2 rbar = {2 * rb:.4g}")
    t0 = (1.0 - window_fraction) * T
    sel = traj.t >= t0
    t = traj.t[sel]
    fits = []
    for y in (traj.h[sel], -traj.g[sel]):
        coef = np.polyfit(t, y, 1)
        fits.append((coef[0], float(np.sqrt(np.mean((np.polyval(coef, t) - y) ** 2)))))
    (cr, rr), (cl, rl) = fits
    return SpeedEstimate(float(cr), float(cl), (float(t0), float(T)), max(rr, rl))


@dataclass
class SemiWave:
    c: float
    q_slope: float
    residual: float


SADDLE_OFFSET = 1e-6


def _origin_slope(c, a, b, d, delta=SADDLE_OFFSET):
    """q'(0) of the semi-wave branch through the saddle (a/b, 0), traced backward to q = 0."""
    kappa = (c - math.sqrt(c * c + 4.0 * a * d)) / (2.0 * d)

    def rhs(_, y):
        q, p = y
        return [p, (c * p - q * (a - b * q)) / d]

    def hit_zero(_, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    sol = solve_ivp(rhs, (0.0, -1e4), [a / b - delta, -kappa * delta], method="DOP853", events=hit_zero, rtol=1e-11, atol=1e-13)
    if not sol.t_events[0].size:
        raise SolverError(f"semi-wave branch did not reach q = 0 (c = {c})")
    return float(sol.y_events[0][0][1])


def semiwave(a: float, b: float, d: float, mu: float, tol: float = 1e-8) -> SemiWave:
    """Speed c and slope q'(0) of the semi-wave with q(0) = 0, q(inf) = a/b, mu q'(0) = c."""
    if min(a, b, d, mu) <= 0:
        raise ContractError("a, b, d and mu must be positive")
    c_max = 2.0 * math.sqrt(a * d)

    def resid(c):
        return mu * _origin_slope(c, a, b, d) - c

    lo, hi = 1e-9 * c_max, (1.0 - 1e-9) * c_max
    if not resid(lo) > 0 > resid(hi):
        raise SolverError("semi-wave residual has no sign change in (0, 2 sqrt(a d))")
    c = brentq(resid, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    slope = _origin_slope(c, a, b, d)
    res = abs(mu * slope - c)
    if res >= tol:
        raise SolverError(f"semi-wave residual {res:.3e} above tol {tol:.1e}")
    return SemiWave(float(c), slope, res)


def semiwave_speed(a: float, b: float, d: float, mu: float, tol: float = 1e-8) -> float:
    return semiwave(a, b, d, mu, tol).c
