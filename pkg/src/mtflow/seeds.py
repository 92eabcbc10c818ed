"""Initial data: Moser functions, the Coron family, energy normalisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import EXP_GUARD
from .errors import BlowupOverflow, DegenerateState, GridError, SolverError
from .grid import RADIAL, Field

SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class MoserParams:
    rho: float
    R: float
    x0: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not 0 < self.rho < self.R:
            raise ValueError(f"Moser function needs 0 < rho < R, got rho={self.rho}, R={self.R}")


def moser_profile(r, rho, R):
    """Radial profile of the Moser function ``m_{rho,R}`` (unit Dirichlet energy)."""
    r = np.asarray(r, dtype=float)
    L = math.log(R / rho)
    out = np.where(r <= rho, math.sqrt(L),
                   np.log(R / np.maximum(r, rho)) / math.sqrt(L))
    return np.where(r >= R, 0.0, out) / SQRT_2PI


def _radii(grid, x0):
    x0 = np.asarray(x0, dtype=float)
    if grid.kind == RADIAL:
        if np.any(x0 != 0):
            raise GridError("radial grids only support functions centred at the origin")
        return grid.coords
    return np.hypot(grid.coords[:, 0] - x0[0], grid.coords[:, 1] - x0[1])


def moser_function(p: MoserParams, grid) -> Field:
    """``m_{rho,R}`` centred at ``p.x0``; values outside the domain are dropped."""
    v = moser_profile(_radii(grid, p.x0), p.rho, p.R)
    v[grid.boundary] = 0.0
    return Field(grid, v)


def _ramp(t):
    # C^2 smoothstep 0 -> 1 on [0, 1]
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def cutoff_profile(r, R2):
    return 1.0 - _ramp((np.asarray(r, dtype=float) - R2) / R2)


def cutoff(R2, R, grid) -> Field:
    """Radial bump about the origin: 1 on ``B_{R2}``, 0 outside ``B_{2 R2}``."""
    if not 0 < R2 < R / 2:
        raise ValueError(f"cutoff needs 0 < R2 < R/2, got R2={R2}, R={R}")
    r = grid.coords if grid.kind == RADIAL else np.hypot(grid.coords[:, 0], grid.coords[:, 1])
    return Field(grid, cutoff_profile(r, R2), h10=False)


@dataclass(frozen=True)
class CoronParams:
    """Parameters of ``v_{s,x0} = m_{s rho, R, (1-s) x0} (1 - tau_{R2})``."""

    s: float
    x0: tuple
    R: float
    rho: float
    R2: float
    c0: float | None = None

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ValueError("s must lie in (0, 1]")
        if not 0 < self.R2 < self.R / 2:
            raise ValueError("need 0 < R2 < R/2")
        if not 0 < self.rho < self.R:
            raise ValueError("need 0 < rho < R")
        if abs(math.hypot(*self.x0) - 3 * self.R) > 1e-12:
            raise ValueError("|x0| must equal 3R")

    @classmethod
    def at_angle(cls, s, angle, R, rho, R2, c0=None):
        x0 = (3 * R * math.cos(angle), 3 * R * math.sin(angle))
        return cls(s, x0, R, rho, R2, c0)


def _contains_annulus(grid, R1, R2, samples=64):
    theta = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    radii = np.linspace(R2, R1, 16)[1:-1]
    rr, tt = np.meshgrid(radii, theta)
    pts = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    return bool(grid.domain.contains(pts).all())


def coron_field(p: CoronParams, grid) -> Field:
    """Shifted Moser function at scale ``s rho`` cut off around the origin."""
    if grid.kind == RADIAL:
        raise GridError("the Coron family needs a Cartesian grid")
    R1 = 4 * p.R
    if not _contains_annulus(grid, R1, p.R2):
        raise GridError(f"domain does not contain the annulus B_{R1} \\ B_{p.R2}")
    center = ((1 - p.s) * p.x0[0], (1 - p.s) * p.x0[1])
    m = moser_profile(_radii(grid, center), p.s * p.rho, p.R)
    r = np.hypot(grid.coords[:, 0], grid.coords[:, 1])
    v = m * (1.0 - cutoff_profile(r, p.R2))
    v[grid.boundary] = 0.0
    return Field(grid, v)


def normalize_alpha(v: Field, c0: float, rtol=1e-12):
    """Find ``alpha > 0`` with ``E(sqrt(alpha) v) = c0``.

    ``alpha -> E(sqrt(alpha) v)`` is smooth, convex and strictly increasing,
    so a doubling bracket, bisection to width ``1e-3`` and a safeguarded
    Newton polish suffice.  Returns ``(alpha, sqrt(alpha) v)``.
    """
    if not c0 > 0:
        raise ValueError("c0 must be positive")
    w = v.grid.weights
    v2 = v.values ** 2
    vmax2 = v2.max()
    if vmax2 == 0:
        raise DegenerateState("cannot normalise the zero field")

    def phi(a):
        if a * vmax2 > EXP_GUARD:
            raise BlowupOverflow(f"c0={c0} is not reachable before the overflow guard")
        return 0.5 * np.dot(w, np.expm1(a * v2)) - c0

    lo, hi = 0.0, 1.0
    while phi(hi) < 0:
        lo, hi = hi, 2 * hi
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        if phi(mid) < 0:
            lo = mid
        else:
            hi = mid
    a = hi
    for _ in range(200):
        val = phi(a)
        if abs(val) <= rtol * c0:
            break
        if val > 0:
            hi = a
        else:
            lo = a
        deriv = 0.5 * np.dot(w, v2 * np.exp(a * v2))
        a_new = a - val / deriv
        if not lo <= a_new <= hi:
            a_new = 0.5 * (lo + hi)
        if a_new == a:
            break
        a = a_new
    else:
        raise SolverError("normalize_alpha did not converge")
    return a, v.scaled(math.sqrt(a))


def center_of_mass(u: Field):
    """Dirichlet-density-weighted barycentre ``int x |grad u|^2 / int |grad u|^2``.

    The density of each edge is placed at its midpoint.  Radial fields are
    centred at the origin by symmetry.
    """
    g = u.grid
    e = g.edge_energy(u.values)
    total = e.sum()
    if total <= 0:
        raise DegenerateState("center of mass of a field with zero Dirichlet energy")
    if g.kind == RADIAL:
        return np.zeros(2)
    return e @ g.edge_midpoints / total
