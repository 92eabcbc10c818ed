"""Linear solvers for the frozen-coefficient diffusion operator."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solveh_banded

from .errors import SolverError


def pcg(A, b, diag, x0=None, rtol=1e-10, maxiter=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||r|| <= rtol * ||b||``.  Raises :class:`SolverError` if that
    is not reached within ``maxiter`` iterations.
    """
    n = b.size
    maxiter = maxiter or 10 * n
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), 0
    inv = 1.0 / diag
    z = inv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        q = A @ p
        alpha = rz / (p @ q)
        x += alpha * p
        r -= alpha * q
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, it
        z = inv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not reach rtol={rtol:g} in {maxiter} iterations")


def solve_tridiagonal_spd(main, off, b):
    """Solve a symmetric positive-definite tridiagonal system.

    ``main`` is the diagonal, ``off`` the super-diagonal (length n - 1).
    """
    ab = np.zeros((2, main.size))
    ab[0, 1:] = off
    ab[1] = main
    try:
        return solveh_banded(ab, b, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"banded Cholesky failed: {exc}") from exc
