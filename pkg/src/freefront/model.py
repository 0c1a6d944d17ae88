"""Logistic reaction terms f(t, x, u) = u (a(t,x) - b(t,x) u) in space-time periodic media.

Coefficients are finite trigonometric sums

    a(t, x) = c + sum_k amp_k cos(2 pi kt_k t / omega + phase_t) cos(2 pi kx_k x / L + phase_x)

written in a small expression language, e.g. ``"1 + 0.5*cos(1t)*cos(2x+0.3)"``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ExpressionError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Harmonic:
    amp: float
    k_t: int = 0
    phase_t: float = 0.0
    k_x: int = 0
    phase_x: float = 0.0


def _cycle_angle(k, s, period, phase):
    # reduce s modulo the period before scaling so shifted arguments agree to rounding
    if k == 0:
        return np.full(np.shape(s), float(phase))
    r = np.fmod(np.asarray(s, dtype=float), period) / period
    return TWO_PI * k * r + phase


@dataclass(frozen=True)
class Coefficient:
    constant: float
    harmonics: tuple[Harmonic, ...] = ()

    def __call__(self, t, x, omega, L):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        out = np.full(t.shape, float(self.constant))
        for hm in self.harmonics:
            term = hm.amp * np.cos(_cycle_angle(hm.k_t, t, omega, hm.phase_t))
            out = out + term * np.cos(_cycle_angle(hm.k_x, x, L, hm.phase_x))
        return out if out.ndim else float(out)

    @property
    def lower(self) -> float:
        """Guaranteed lower bound (exact for a single harmonic)."""
        return self.constant - sum(abs(h.amp) for h in self.harmonics)

    @property
    def upper(self) -> float:
        return self.constant + sum(abs(h.amp) for h in self.harmonics)

    @property
    def depends_on_t(self) -> bool:
        return any(h.k_t != 0 and h.amp != 0 for h in self.harmonics)

    @property
    def depends_on_x(self) -> bool:
        return any(h.k_x != 0 and h.amp != 0 for h in self.harmonics)

    @property
    def max_kt(self) -> int:
        return max((abs(h.k_t) for h in self.harmonics), default=0)

    def to_expression(self) -> str:
        return serialize_coefficient(self)


def _fmt(v: float) -> str:
    return repr(float(v))


def _factor(k, var, phase):
    s = f"cos({k}{var}"
    if phase:
        s += f"+{_fmt(phase)}" if phase > 0 else f"-{_fmt(-phase)}"
    return s + ")"


def serialize_coefficient(c: Coefficient) -> str:
    parts = [_fmt(c.constant)]
    for h in c.harmonics:
        sign = "-" if h.amp < 0 else "+"
        term = _fmt(abs(h.amp))
        if h.k_t or h.phase_t:
            term += "*" + _factor(h.k_t, "t", h.phase_t)
        if h.k_x or h.phase_x:
            term += "*" + _factor(h.k_x, "x", h.phase_x)
        parts.append(f"{sign} {term}")
    return " ".join(parts)


_NUMBER = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def _skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self):
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, s):
        self._skip()
        if not self.text.startswith(s, self.pos):
            raise ExpressionError(f"expected {s!r}", self.pos)
        self.pos += len(s)

    def _number(self):
        self._skip()
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            raise ExpressionError("expected a number", self.pos)
        start = self.pos
        self.pos = m.end()
        return float(m.group(0)), m.group(0), start

    def parse(self) -> Coefficient:
        if not self.text.strip():
            raise ExpressionError("empty expression", 0)
        constant = 0.0
        harmonics = []
        sign = 1.0
        if self._peek() and self._peek() in "+-":
            sign = -1.0 if self._peek() == "-" else 1.0
            self.pos += 1
        while True:
            const, hm = self._term()
            if hm is None:
                constant += sign * const
            else:
                harmonics.append(Harmonic(sign * hm.amp, hm.k_t, hm.phase_t, hm.k_x, hm.phase_x))
            c = self._peek()
            if c == "":
                break
            if c not in "+-":
                raise ExpressionError(f"unexpected character {c!r}", self.pos)
            sign = -1.0 if c == "-" else 1.0
            self.pos += 1
        return Coefficient(constant, tuple(harmonics))

    def _term(self):
        amp = 1.0
        factors = []
        if self._peek() == "c":
            factors.append(self._cos())
        else:
            amp, _, _ = self._number()
        while self._peek() == "*":
            self.pos += 1
            factors.append(self._cos())
        if not factors:
            return amp, None
        kw = {}
        for var, k, phase, at in factors:
            if var in kw:
                raise ExpressionError(f"repeated cos factor in {var}", at)
            kw[var] = (k, phase)
        k_t, ph_t = kw.get("t", (0, 0.0))
        k_x, ph_x = kw.get("x", (0, 0.0))
        return 0.0, Harmonic(amp, k_t, ph_t, k_x, ph_x)

    def _cos(self):
        self._skip()
        at = self.pos
        self._expect("cos(")
        value, raw, kpos = self._number()
        if value != int(value) or any(ch in raw for ch in ".eE"):
            raise ExpressionError(f"harmonic index must be an integer, got {raw}", kpos)
        self._skip()
        var = self.text[self.pos:self.pos + 1]
        if var not in ("t", "x"):
            raise ExpressionError("expected 't' or 'x' after harmonic index", self.pos)
        self.pos += 1
        phase = 0.0
        c = self._peek()
        if c and c in "+-":
            self.pos += 1
            p, _, _ = self._number()
            phase = -p if c == "-" else p
        self._expect(")")
        return var, int(value), phase, at


def parse_coefficient(text: str) -> Coefficient:
    """Parse a coefficient expression.

    Grammar (whitespace ignored)::

        expr   := ['+'|'-'] term (('+'|'-') term)*
        term   := number ['*' factor ['*' factor]] | factor ['*' factor]
        factor := 'cos(' integer ('t'|'x') [('+'|'-') number] ')'

    ``cos(2x)`` means cos(2 pi * 2 x / L); frequencies are integer multiples of the
    base periods. Raises :class:`ExpressionError` carrying the character offset.
    """
    return _Parser(text).parse()


@dataclass(frozen=True)
class MediumModel:
    """Logistic nonlinearity with omega-periodic (time) and L-periodic (space) coefficients."""

    a: Coefficient
    b: Coefficient
    omega: float = 1.0
    L: float = 1.0
    kind: str = field(default="logistic")

    def __post_init__(self):
        if not (self.omega > 0 and self.L > 0):
            raise DomainError("periods omega and L must be positive")
        if self.kind not in ("logistic", "homogeneous_logistic"):
            raise DomainError(f"unknown medium kind {self.kind!r}")

    @classmethod
    def homogeneous(cls, a: float, b: float, omega: float = 1.0, L: float = 1.0) -> "MediumModel":
        return cls(Coefficient(float(a)), Coefficient(float(b)), omega, L, "homogeneous_logistic")

    @classmethod
    def logistic(cls, a, b, omega: float = 1.0, L: float = 1.0) -> "MediumModel":
        if isinstance(a, str):
            a = parse_coefficient(a)
        if isinstance(b, str):
            b = parse_coefficient(b)
        if not isinstance(a, Coefficient):
            a = Coefficient(float(a))
        if not isinstance(b, Coefficient):
            b = Coefficient(float(b))
        return cls(a, b, omega, L, "logistic")

    # -- bounds used by the hypotheses and the eigenvalue bracket
    @property
    def K(self) -> float:
        return max(self.a.upper, 0.0)

    @property
    def M(self) -> float:
        lo = self.b.lower
        return self.a.upper / lo if lo > 0 else math.inf

    @property
    def m_lower(self) -> float:
        """min of d_u f(t, x, 0) = a(t, x)."""
        return self.a.lower

    @property
    def m_upper(self) -> float:
        return self.a.upper

    @property
    def depends_on_t(self) -> bool:
        return self.a.depends_on_t or self.b.depends_on_t

    @property
    def depends_on_x(self) -> bool:
        return self.a.depends_on_x or self.b.depends_on_x

    def growth(self, t, x):
        return self.a(t, x, self.omega, self.L)

    def capacity(self, t, x):
        return self.b(t, x, self.omega, self.L)

    def rate(self, t, x, u):
        """f(t, x, u) without domain checks (hot path)."""
        return u * (self.growth(t, x) - self.capacity(t, x) * u)


def eval_f(model: MediumModel, t, x, u):
    """Reaction rate u (a - b u); ``u`` must be nonnegative."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(np.isnan(u)):
        raise DomainError("density u must be nonnegative")
    out = model.rate(t, x, u)
    return float(out) if np.ndim(out) == 0 else out


def eval_dfu0(model: MediumModel, t, x):
    """Linearization at zero, d_u f(t, x, 0) = a(t, x)."""
    return model.growth(t, x)


@dataclass
class Violation:
    hypothesis: str
    t: float
    x: float
    u: float
    detail: str = ""


@dataclass
class HypothesisReport:
    violations: list
    K: float
    M: float
    m_lower: float
    m_upper: float

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_hypotheses(model: MediumModel, samples: int = 64) -> HypothesisReport:
    """Check f(.,.,0)=0, f <= K u, f <= 0 above M, periodicity and monotonicity of f/u.

    Checks run on a (samples+1)^3 lattice of [0, omega] x [0, L] x [0, 2M] (including
    both ends so that the extrema of single harmonics are hit). Only the first witness
    of each violated hypothesis is reported.
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    n = samples + 1
    t = np.linspace(0.0, model.omega, n)
    x = np.linspace(0.0, model.L, n)
    T, X = np.meshgrid(t, x, indexing="ij")
    A = model.growth(T, X)
    B = model.capacity(T, X)
    K = float(A.max())
    M = model.M
    u_top = 2.0 * M if math.isfinite(M) and M > 0 else 2.0 * max(K, 1.0)
    u = np.linspace(0.0, u_top, n)
    violations = []

    def report(name, mask, U, F, detail):
        idx = np.argwhere(mask)
        if len(idx):
            i, j, k = idx[0]
            violations.append(Violation(name, float(t[i]), float(x[j]), float(U[k]), f"{detail}: f={F[i, j, k]:.6g}"))

    F = model.rate(T[..., None], X[..., None], u[None, None, :])
    scale = np.abs(A).max() * u_top + np.abs(B).max() * u_top ** 2 + 1e-300
    report("zero", (F[:, :, :1] != 0), u, F, "f(t,x,0) != 0")
    report("globalb", F > model.K * u[None, None, :] + 1e-12 * scale, u, F, f"f > K u with K={model.K:.6g}")
    if math.isfinite(M):
        above = u[None, None, :] >= M
        report("hyp2", (F > 1e-12 * scale) & above, u, F, f"f > 0 for u >= M={M:.6g}")
    else:
        violations.append(Violation("hyp2", 0.0, 0.0, u_top, "inf b <= 0: no saturation level M"))
    Ft = model.rate(T[..., None] + model.omega, X[..., None], u[None, None, :])
    Fx = model.rate(T[..., None], X[..., None] + model.L, u[None, None, :])
    tol = 1e-12 * scale
    report("period", (np.abs(Ft - F) > tol) | (np.abs(Fx - F) > tol), u, F, "f not periodic")
    up = u[1:]
    ratio = A[..., None] - B[..., None] * up[None, None, :]
    report("hyp1", ~(np.diff(ratio, axis=2) < 0), up, F[:, :, 1:], "f/u not strictly decreasing")
    return HypothesisReport(violations, K, M, float(A.min()), float(A.max()))
