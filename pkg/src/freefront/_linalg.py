"""Tridiagonal and circulant solves used by the parabolic steppers."""
import numpy as np
from scipy.linalg import lapack, solve_banded


def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower``/``upper`` have length n-1."""
    n = len(diag)
    ab = np.empty((3, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, overwrite_ab=True, check_finite=False)


class Tridiagonal:
    """LU-factored tridiagonal matrix for repeated solves (LAPACK gttrf/gttrs)."""

    def __init__(self, lower, diag, upper):
        dl, d, du, du2, ipiv, info = lapack.dgttrf(
            np.array(lower, dtype=float), np.array(diag, dtype=float), np.array(upper, dtype=float)
        )
        if info != 0:
            raise np.linalg.LinAlgError(f"singular tridiagonal matrix (info={info})")
        self._lu = (dl, d, du, du2, ipiv)

    def solve(self, rhs):
        x, info = lapack.dgttrs(*self._lu, rhs)
        if info != 0:
            raise np.linalg.LinAlgError(f"gttrs failed (info={info})")
        return x


def laplacian_apply(v, dx):
    """Second difference of interior values ``v`` with zero Dirichlet walls."""
    out = -2.0 * v
    out[1:] += v[:-1]
    out[:-1] += v[1:]
    return out / (dx * dx)


def periodic_laplacian_apply(v, dx):
    return (np.roll(v, 1) - 2.0 * v + np.roll(v, -1)) / (dx * dx)


def periodic_helmholtz_solve(rhs, coef, dx):
    """Solve (I - coef * Laplacian_periodic) u = rhs by FFT (circulant matrix)."""
    n = len(rhs)
    k = np.arange(n // 2 + 1)
    symbol = 1.0 + coef * (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / (dx * dx)
    return np.fft.irfft(np.fft.rfft(rhs) / symbol, n)
