"""Radial shooting for ``-lap u = lam u e^{u^2}`` on ``B_R``.

The ODE ``u'' + u'/r + lam u e^{u^2} = 0`` is integrated in ``t = log r``,
where it reads ``u_tt = -r^2 lam u e^{u^2}`` with no singular coefficient.
Classical RK4 runs on a uniform ``t`` mesh from a tiny ``r0``, reached by
the Taylor series about the origin.  A uniform ``t`` mesh gives every
length scale the same relative resolution, which keeps the solver accurate
for concentrated (large ``a``) solutions as well.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .energy import EXP_GUARD
from .errors import BlowupOverflow, BracketError, SolverError

log = logging.getLogger(__name__)


def _series_coeffs(lam, a):
    """Even Taylor coefficients ``u = a + c2 r^2 + c4 r^4 + c6 r^6``."""
    ea = math.exp(a * a)
    f0 = lam * a * ea
    f1 = lam * ea * (1 + 2 * a * a)
    f2 = lam * ea * (6 * a + 4 * a ** 3)
    c2 = -f0 / 4
    c4 = -f1 * c2 / 16
    c6 = -(f1 * c4 + 0.5 * f2 * c2 * c2) / 36
    return c2, c4, c6


def core_scale(lam, a):
    """Length over which the solution leaves its central value."""
    return 1.0 / math.sqrt(lam * math.exp(min(a * a, EXP_GUARD)) * (1 + 2 * a * a))


@dataclass
class ShootResult:
    """A shooting trajectory on ``[0, R]``.

    ``r, u, du`` are samples on the geometric integration mesh (``r[0] > 0``
    is the series start).  ``residual`` is ``|u(R)|``.
    """

    lam: float
    a: float
    R: float
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    iterations: int = 0
    converged: bool = False

    @property
    def terminal(self):
        return float(self.u[-1])

    @property
    def slope(self):
        return float(self.du[-1])

    @property
    def residual(self):
        return abs(self.terminal)

    def __call__(self, r):
        """Evaluate ``u`` at radii ``r`` (cubic Hermite; series near 0)."""
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r < self.r[0]
        if self.a == 0:
            return np.zeros_like(r)
        c2, c4, c6 = _series_coeffs(self.lam, self.a)
        ri = r[inner]
        out[inner] = self.a + ri ** 2 * (c2 + ri ** 2 * (c4 + c6 * ri ** 2))
        spline = CubicHermiteSpline(self.r, self.u, self.du)
        out[~inner] = spline(np.minimum(r[~inner], self.R))
        return out

    def on_grid(self, grid):
        """Nodal values on a radial grid of the same radius (zero boundary)."""
        from .grid import Field
        v = self(grid.coords)
        v[grid.boundary] = 0.0
        return Field(grid, v)

    def dirichlet_energy(self):
        # r u'^2 r dr = (r u')^2 dt on the log mesh
        t = np.log(self.r)
        return 2 * math.pi * _simpson((self.r * self.du) ** 2, t)

    def mt_energy(self):
        t = np.log(self.r)
        core = 0.5 * math.pi * self.r[0] ** 2 * math.expm1(self.a ** 2)
        return core + math.pi * _simpson(np.expm1(self.u ** 2) * self.r ** 2, t)


def _simpson(y, x):
    from scipy.integrate import simpson
    return float(simpson(y, x=x))


def shoot(lam, a, R, n=4000):
    """Integrate from ``u(0) = a, u'(0) = 0`` out to ``r = R`` with ``n`` RK4 steps."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    if a < 0:
        raise ValueError("a must be non-negative")
    if a * a > EXP_GUARD:
        raise BlowupOverflow("central value beyond the overflow guard")
    if a == 0:
        r = np.geomspace(R * 1e-6, R, n + 1)
        z = np.zeros(n + 1)
        return ShootResult(lam, 0.0, R, r, z, z.copy(), converged=True)

    r0 = min(R, core_scale(lam, a)) * 1e-3
    c2, c4, c6 = _series_coeffs(lam, a)
    u = a + r0 ** 2 * (c2 + r0 ** 2 * (c4 + c6 * r0 ** 2))
    p = r0 ** 2 * (2 * c2 + r0 ** 2 * (4 * c4 + 6 * c6 * r0 ** 2))  # r u'
    t0, t1 = math.log(r0), math.log(R)
    dt = (t1 - t0) / n
    t = t0 + dt * np.arange(n + 1)
    t[-1] = t1
    us = np.empty(n + 1)
    ps = np.empty(n + 1)
    us[0], ps[0] = u, p

    def acc(tt, uu):
        if uu * uu > EXP_GUARD:
            raise BlowupOverflow("trajectory exceeded the overflow guard")
        return -lam * math.exp(2 * tt + uu * uu) * uu

    for k in range(n):
        tk = t[k]
        k1u, k1p = p, acc(tk, u)
        k2u, k2p = p + 0.5 * dt * k1p, acc(tk + 0.5 * dt, u + 0.5 * dt * k1u)
        k3u, k3p = p + 0.5 * dt * k2p, acc(tk + 0.5 * dt, u + 0.5 * dt * k2u)
        k4u, k4p = p + dt * k3p, acc(tk + dt, u + dt * k3u)
        u += dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        p += dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        us[k + 1], ps[k + 1] = u, p
    r = np.exp(t)
    r[-1] = R
    return ShootResult(lam, a, R, r, us, ps / r)


def solve_dirichlet(lam, R, a_bracket, n=4000, rtol=1e-8):
    """Find ``a`` in ``a_bracket`` with ``u(R) = 0`` (Brent's secant/bisection).

    Converged when ``|u(R)| <= rtol * a``.  Raises :class:`BracketError` if
    ``u(R)`` does not change sign over the bracket.
    """
    lo, hi = a_bracket
    calls = 0

    def f(a):
        nonlocal calls
        calls += 1
        return shoot(lam, a, R, n).terminal

    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise BracketError(f"u(R) has no sign change on [{lo}, {hi}] at lam={lam}")
    a = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    res = shoot(lam, a, R, n)
    res.iterations = calls
    res.converged = res.residual <= rtol * a and bool(np.all(res.u[:-1] > 0))
    if not res.converged:
        raise SolverError(f"shooting did not converge to a positive solution (|u(R)|={res.residual:.2e})")
    return res


def first_zero(a, n=4000, s_max=50.0):
    """First zero of the ``lam = 1`` solution with ``v(0) = a``.

    By scaling, the Dirichlet problem on ``B_R`` has the solution with
    central value ``a`` exactly when ``lam = (first_zero(a) / R)^2``.
    """
    res = shoot(1.0, a, s_max, n)
    sign = np.flatnonzero(res.u <= 0)
    if sign.size == 0:
        raise SolverError(f"no zero below s={s_max} for a={a}")
    k = sign[0]
    spline = CubicHermiteSpline(res.r[k - 1:k + 1], res.u[k - 1:k + 1], res.du[k - 1:k + 1])
    return brentq(spline, res.r[k - 1], res.r[k], xtol=1e-15)


@dataclass
class BranchRow:
    lam: float
    a: float
    dirichlet_energy: float
    mt_energy: float
    u_terminal_residual: float

    FIELDS = ("lambda", "a", "dirichlet_energy", "mt_energy", "u_terminal_residual")

    def as_tuple(self):
        return (self.lam, self.a, self.dirichlet_energy, self.mt_energy,
                self.u_terminal_residual)


def branch(lams, R=1.0, n=4000, a_start=None):
    """Continue the positive solution branch along the multiplier values ``lams``.

    ``lams`` should be ordered from the linear limit downwards (the branch
    leaves ``a = 0`` at the first Dirichlet eigenvalue and ``a`` grows as
    ``lam`` decreases).  Each solve is warm-started from the previous ``a``
    with an expanding bracket.  Returns ``(rows, complete)``; ``complete`` is
    False if continuation was lost, in which case ``rows`` is the partial
    table up to that point.
    """
    rows = []
    a_prev = a_start if a_start is not None else 1e-3
    for lam in lams:
        res = None
        width = max(0.05, 0.1 * a_prev)
        for _ in range(40):
            lo, hi = max(a_prev - width, 1e-6), a_prev + width
            try:
                res = solve_dirichlet(lam, R, (lo, hi), n)
                break
            except BracketError:
                width *= 1.6
            except (SolverError, BlowupOverflow):
                break
        if res is None:
            log.warning("branch continuation lost at lam=%g", lam)
            return rows, False
        rows.append(BranchRow(lam, res.a, res.dirichlet_energy(), res.mt_energy(), res.residual))
        a_prev = res.a
    return rows, True


def a_for_lambda(lam, R=1.0, n=4000, a_max=12.0):
    """Central value of the lower-branch solution on ``B_R`` with multiplier ``lam``.

    Inverts ``lam = (first_zero(a) / R)^2``, which decreases from the first
    Dirichlet eigenvalue as ``a`` grows.  Returns ``a`` to shooting accuracy;
    polish with :func:`solve_dirichlet` for a converged trajectory.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")

    def f(a):
        return math.log(first_zero(a, n) / R) * 2 - math.log(lam)

    lo, hi = 1e-4, 0.5
    if f(lo) <= 0:
        raise BracketError(f"lam={lam} is at or above the first eigenvalue of B_{R}")
    while f(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > a_max:
            raise BracketError(f"no solution with a <= {a_max} for lam={lam}")
    return brentq(f, lo, hi, xtol=1e-14)


def solve_for_lambda(lam, R=1.0, n=4000):
    """Converged lower-branch solution for ``lam`` (no bracket needed)."""
    a = a_for_lambda(lam, R, n)
    width = 1e-3 * max(a, 1e-3)
    for _ in range(20):
        try:
            return solve_dirichlet(lam, R, (max(a - width, 1e-8), a + width), n)
        except BracketError:
            width *= 4
    raise BracketError(f"could not bracket the solution near a={a}")


def dirichlet_energy_at(a, n=4000):
    """Dirichlet energy of the branch solution with central value ``a``.

    The energy is invariant under the scaling that maps the ``lam = 1``
    solution on ``B_{first_zero(a)}`` to any ball, so it depends on ``a`` only.
    """
    s = first_zero(a, n)
    return shoot(1.0, a, s, n).dirichlet_energy()


def solutions_at_energy(alpha, rows, R=1.0, n=4000, tol=1e-2):
    """All branch solutions with Dirichlet energy ``alpha``.

    Sign changes of ``D - alpha`` between consecutive branch ``rows`` are
    refined by Brent's method in ``a``; each root is re-solved with
    :func:`solve_dirichlet` and kept if its energy is within ``tol`` of
    ``alpha``.  Returns converged :class:`ShootResult` objects ordered by ``a``.
    """
    rows = sorted(rows, key=lambda r: r.a)
    out = []
    for r0, r1 in zip(rows, rows[1:]):
        f0, f1 = r0.dirichlet_energy - alpha, r1.dirichlet_energy - alpha
        if f0 == 0 or f0 * f1 < 0:
            a = r0.a if f0 == 0 else brentq(lambda a: dirichlet_energy_at(a, n) - alpha,
                                             r0.a, r1.a, xtol=1e-12)
            lam = (first_zero(a, n) / R) ** 2
            res = solve_dirichlet(lam, R, (0.99 * a, 1.01 * a), n)
            if abs(res.dirichlet_energy() - alpha) <= tol:
                out.append(res)
    return out
