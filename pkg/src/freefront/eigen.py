"""Principal eigenvalues of the time-periodic Dirichlet problem

    psi_t - d psi_xx - a(t, x + y) psi = lambda psi  on (-R, R),  psi(t, +-R) = 0,

computed from the period (monodromy) map by power iteration: rho = e^{-lambda omega}.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from ._linalg import Tridiagonal, laplacian_apply
from .errors import ContractError, ConvergenceError, NoCriticalRadius
from .model import MediumModel

POINTS_PER_PERIOD = 32


@dataclass
class EigenResult:
    y: float
    R: float
    lam: float
    rho: float
    psi: np.ndarray
    x: np.ndarray
    iters: int
    residual: float


def default_substeps(model: MediumModel, d: float, R: float) -> int:
    """Substeps per period: resolve the time harmonics and keep |sigma dt| small for the principal mode."""
    sigma = d * (math.pi / (2.0 * R)) ** 2 + max(abs(model.m_upper), abs(model.m_lower))
    return int(max(256, 64 * model.a.max_kt, math.ceil(20.0 * model.omega * sigma)))


def effective_grid(model: MediumModel, R: float, grid: int) -> int:
    if model.depends_on_x:
        return max(grid, int(math.ceil(POINTS_PER_PERIOD * 2.0 * R / model.L)))
    return grid


GAMMA = 2.0 - math.sqrt(2.0)


class PeriodMap:
    """Linear period map of phi_t = d phi_xx + a(t, x + y) phi with Dirichlet walls at +-R.

    Each substep freezes the coefficient at its midpoint and takes a TR-BDF2 step: a
    trapezoidal (Crank-Nicolson) stage to t + GAMMA dt followed by a BDF2 stage. Plain
    Crank-Nicolson keeps stiff modes at |factor| ~ 1, and their rounding noise swamps a
    strongly decaying principal mode; the BDF2 stage removes them every substep.
    """

    def __init__(self, model, d, y, R, grid, substeps=None):
        self.model, self.d, self.y, self.R = model, d, y, R
        self.x = np.linspace(-R, R, grid + 1)
        self.xi = self.x[1:-1]
        self.dx = 2.0 * R / grid
        self.n = substeps or default_substeps(model, d, R)
        self.dt = model.omega / self.n
        self._cache = {}
        self._time_dependent = model.a.depends_on_t

    def _solver(self, k, stage, h):
        key = (k if self._time_dependent else 0, stage)
        fac = self._cache.get(key)
        if fac is None:
            t = (k + 0.5) * self.dt if self._time_dependent else 0.0
            a = self.model.growth(t, self.xi + self.y)
            r = h * self.d / self.dx ** 2
            off = np.full(len(self.xi) - 1, -r)
            fac = (Tridiagonal(off, 1.0 + 2.0 * r - h * a, off), a)
            self._cache[key] = fac
        return fac

    def apply(self, phi, rescale=True):
        """One period applied to interior values ``phi``.

        Returns ``(v, log_scale)`` with the true image equal to ``v * exp(log_scale)``;
        rescaling inside the period keeps very fast decay from underflowing.
        """
        dt, g = self.dt, GAMMA
        h1 = 0.5 * g * dt
        h2 = (1.0 - g) / (2.0 - g) * dt
        c1 = 1.0 / (g * (2.0 - g))
        c0 = (1.0 - g) ** 2 / (g * (2.0 - g))
        v = phi
        log_scale = 0.0
        for k in range(self.n):
            s1, a = self._solver(k, 1, h1)
            s2, _ = self._solver(k, 2, h2)
            mid = s1.solve(v + h1 * (self.d * laplacian_apply(v, self.dx) + a * v))
            v = s2.solve(c1 * mid - c0 * v)
            peak = np.max(np.abs(v))
            if rescale and 0.0 < peak < 1e-100:
                v = v / peak
                log_scale += math.log(peak)
        return v, log_scale


def monodromy_eigen(
    model: MediumModel,
    d: float,
    y: float,
    R: float,
    grid: int = 200,
    tol: float = 1e-10,
    max_iter: int = 20000,
    substeps: int | None = None,
    seed: np.ndarray | None = None,
    method: str = "power",
) -> EigenResult:
    """Principal eigenpair via power iteration on the period map.

    Starts from the half-wave cos(pi x / 2R); stops when the sup-distance between
    consecutive sup-normalized iterates is below ``tol`` and the multiplier has
    settled to relative accuracy ``tol``.

    ``method="arnoldi"`` hands the same period map to ARPACK instead; the spectral gap
    shrinks like 1/R^2, so this is the practical route for R spanning many periods.
    """
    if not R > 0:
        raise ContractError("half-length R must be positive")
    if grid < 32:
        raise ContractError("grid must be >= 32")
    if not tol > 0:
        raise ContractError("tol must be positive")
    pm = PeriodMap(model, d, y, R, grid, substeps)
    phi = np.cos(np.pi * pm.xi / (2.0 * R)) if seed is None else np.asarray(seed, dtype=float)[1:-1].copy()
    phi /= np.max(np.abs(phi))
    if method == "arnoldi":
        return _arnoldi(pm, phi, tol, max_iter)
    if method != "power":
        raise ContractError(f"unknown eigen method {method!r}")
    log_rho_prev = math.nan
    residual = math.inf
    for it in range(1, max_iter + 1):
        v, log_scale = pm.apply(phi)
        peak = float(np.max(np.abs(v)))
        if not (peak > 0 and v[np.argmax(np.abs(v))] > 0):
            raise ConvergenceError(f"period map lost positivity (y={y}, R={R})", residual)
        v /= peak
        log_rho = math.log(peak) + log_scale
        residual = float(np.max(np.abs(v - phi)))
        phi = v
        if residual < tol and abs(log_rho - log_rho_prev) < tol:
            break
        log_rho_prev = log_rho
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} periods (y={y}, R={R})", residual)
    psi = np.concatenate(([0.0], np.maximum(phi, 0.0), [0.0]))
    lam = -log_rho / model.omega
    return EigenResult(float(y), float(R), lam, math.exp(log_rho), psi, pm.x, it, residual)


def _arnoldi(pm, phi, tol, max_iter):
    n = len(phi)
    count = [0]

    def matvec(v):
        count[0] += 1
        return pm.apply(np.ravel(v), rescale=False)[0]

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    try:
        vals, vecs = eigs(op, k=1, which="LR", v0=phi, tol=tol, maxiter=max_iter)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"Arnoldi iteration did not converge (y={pm.y}, R={pm.R})", math.inf) from exc
    rho = float(vals[0].real)
    vec = vecs[:, 0].real
    vec = vec / vec[np.argmax(np.abs(vec))]
    if not rho > 0:
        raise ConvergenceError(f"period map lost positivity (y={pm.y}, R={pm.R})", math.inf)
    image, _ = pm.apply(vec, rescale=False)
    residual = float(np.max(np.abs(image / rho - vec)))
    psi = np.concatenate(([0.0], np.maximum(vec, 0.0), [0.0]))
    lam = -math.log(rho) / pm.model.omega
    return EigenResult(float(pm.y), float(pm.R), lam, rho, psi, pm.x, count[0], residual)


def principal_eigenvalue(model, d, y, R, grid=128, tol=1e-10, **kw) -> float:
    return monodromy_eigen(model, d, y, R, effective_grid(model, R, grid), tol, **kw).lam


def critical_radius(
    model: MediumModel,
    d: float,
    y: float = 0.0,
    tol: float = 1e-6,
    grid: int = 128,
    eig_tol: float = 1e-10,
) -> float:
    """Half-length R* with lambda(R*) = 0, by bisection on the sign of lambda.

    The bracket is found by doubling R from 0.1 until lambda < 0. Finding such an R
    also certifies lambda_1(L) < 0, since lambda(R) decreases to lambda_1(L).
    ``tol`` is the final bracket width in length units.
    """
    if not tol > 0:
        raise ContractError("tol must be positive")

    def lam(R):
        return principal_eigenvalue(model, d, y, R, grid, eig_tol)

    R = 0.1
    if lam(R) < 0:
        hi = R
        while True:
            R *= 0.5
            if R < 1e-8:
                raise NoCriticalRadius("lambda stays negative as R -> 0")
            if lam(R) >= 0:
                lo = R
                break
    else:
        lo = R
        while True:
            R *= 2.0
            if R > 64.0 * model.L:
                raise NoCriticalRadius(f"no sign change of lambda up to R = 64 L = {64.0 * model.L:g}")
            if lam(R) < 0:
                hi = R
                break
            lo = R
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if lam(mid) < 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class LambdaInfinity:
    value: float
    R: float
    history: list = field(default_factory=list)

    def __float__(self):
        return self.value


def lambda_infinity(model: MediumModel, d: float, tol: float = 1e-3, y: float = 0.0, grid: int = 128) -> LambdaInfinity:
    """Large-R limit of lambda(R) on R = 2^k L, k = 2, 3, ..., stopped by a Cauchy test.

    The returned value is an upper bound on lambda_1(L) (lambda decreases in R).
    """
    if not tol > 0:
        raise ContractError("tol must be positive")
    history = []
    prev = None
    for k in range(2, 11):
        R = 2.0 ** k * model.L
        lam = principal_eigenvalue(model, d, y, R, grid, tol=min(1e-8, 1e-3 * tol), method="arnoldi")
        history.append((R, lam))
        if prev is not None and abs(lam - prev) < tol:
            return LambdaInfinity(lam, R, history)
        prev = lam
    raise ConvergenceError("lambda(R) not settled at R = 2^10 L", abs(history[-1][1] - history[-2][1]))


def _rstar_job(args):
    model, d, y, tol, grid = args
    return critical_radius(model, d, y, tol, grid)


def rstar_sweep(model, d, ys, tol=1e-4, grid=128, workers=1):
    """R*(y) for every y in ``ys`` (results in input order)."""
    jobs = [(model, d, float(y), tol, grid) for y in ys]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_rstar_job, jobs))
    return [_rstar_job(j) for j in jobs]


@dataclass
class RbarResult:
    value: float
    y_argmax: float
    ys: list
    radii: list

    def __float__(self):
        return self.value


def rbar(model: MediumModel, d: float, samples: int = 8, tol: float = 1e-4, grid: int = 128, workers: int = 1) -> RbarResult:
    """max over y of R*(y): lattice of ``samples`` points on [0, L) plus one refinement around the argmax.

    Ties go to the smaller y. A medium without x-dependence has a y-independent R*.
    """
    if samples < 8:
        raise ContractError("samples must be >= 8")
    if not model.depends_on_x:
        r = critical_radius(model, d, 0.0, tol, grid)
        return RbarResult(r, 0.0, [0.0], [r])
    h = model.L / samples
    ys = [i * h for i in range(samples)]
    radii = rstar_sweep(model, d, ys, tol, grid, workers)
    i = int(np.argmax(radii))
    extra = [ys[i] - 0.5 * h, ys[i] + 0.5 * h]
    radii_extra = rstar_sweep(model, d, extra, tol, grid, workers)
    ys_all = ys + extra
    radii_all = list(radii) + list(radii_extra)
    best = max(radii_all)
    cands = [yy % model.L for yy, r in zip(ys_all, radii_all) if r == best]
    return RbarResult(best, min(cands), ys_all, radii_all)
