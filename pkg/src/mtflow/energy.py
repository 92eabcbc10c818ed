"""Scalar functionals of a field: Moser-Trudinger energy, multipliers, bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowupOverflow, DegenerateState, NotApplicable
from .grid import Field, dirichlet_energy, same_grid

# exp(700) ~ 1e304 is the last comfortably finite power
EXP_GUARD = 700.0


@dataclass(frozen=True)
class Volume:
    """Fixed Moser-Trudinger energy ``E(u) = c0``."""

    c0: float

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError(f"volume constraint needs c0 > 0, got {self.c0!r}")

    @property
    def target(self):
        return self.c0

    name = "volume"


@dataclass(frozen=True)
class Dirichlet:
    """Fixed Dirichlet energy ``int |grad u|^2 = Lambda0``."""

    Lambda0: float

    def __post_init__(self):
        if not self.Lambda0 > 0:
            raise ValueError(f"Dirichlet constraint needs Lambda0 > 0, got {self.Lambda0!r}")

    @property
    def target(self):
        return self.Lambda0

    name = "dirichlet"


ConstraintKind = Volume | Dirichlet


def exp_u2(values):
    """``exp(u^2)`` with the overflow guard."""
    u2 = np.square(values)
    if u2.size and u2.max() > EXP_GUARD:
        raise BlowupOverflow(f"u^2 = {u2.max():.1f} exceeds the guard {EXP_GUARD}")
    return np.exp(u2)


def expm1_u2(values):
    u2 = np.square(values)
    if u2.size and u2.max() > EXP_GUARD:
        raise BlowupOverflow(f"u^2 = {u2.max():.1f} exceeds the guard {EXP_GUARD}")
    return np.expm1(u2)


def mt_energy(u: Field) -> float:
    """``E(u) = 1/2 int (exp(u^2) - 1)``."""
    return 0.5 * u.grid.integrate_values(expm1_u2(u.values))


def weighted_mass(u: Field) -> float:
    """``int u^2 exp(u^2)``."""
    v = u.values
    return u.grid.integrate_values(v * v * exp_u2(v))


def lambda_volume(u: Field) -> float:
    """Multiplier keeping ``E`` fixed: ``int |grad u|^2 / int u^2 exp(u^2)``."""
    denom = weighted_mass(u)
    if denom <= 0:
        raise DegenerateState("lambda_volume is undefined for u == 0")
    return dirichlet_energy(u.grid, u) / denom


def lambda_dirichlet(u: Field) -> float:
    """Multiplier keeping the Dirichlet energy fixed.

    ``int |lap u|^2 exp(-u^2) / int |grad u|^2`` with the grid's own Laplacian.
    """
    g = u.grid
    D = dirichlet_energy(g, u)
    if D <= 0:
        raise DegenerateState("lambda_dirichlet is undefined for u == 0")
    lap = g.laplacian_values(u.values)
    return g.integrate_values(lap * lap * np.exp(-np.square(u.values))) / D


def lambda_upper_bound(c, Lambda0):
    """A-priori bound ``2 Lambda0 / c0`` on the volume-mode multiplier."""
    if not isinstance(c, Volume):
        raise NotApplicable("the per-time multiplier bound holds in volume mode only")
    if not Lambda0 > 0:
        raise ValueError("Lambda0 must be positive")
    return 2.0 * Lambda0 / c.c0


@dataclass(frozen=True)
class LowerBoundReport:
    mass: float      # int u^2 exp(u^2)
    half_energy: float  # E(u) / 2
    ok: bool


def check_lower_bound(u: Field) -> LowerBoundReport:
    """Check ``int u^2 exp(u^2) >= E(u) / 2``."""
    mass = weighted_mass(u)
    half = 0.5 * mt_energy(u)
    return LowerBoundReport(mass, half, bool(mass >= half - 1e-10))


def kinetic(u: Field, u_t: Field) -> float:
    """``int u_t^2 exp(u^2)``."""
    g = same_grid(u, u_t)
    return g.integrate_values(u_t.values ** 2 * exp_u2(u.values))


@dataclass(frozen=True)
class EnergyLedgerRow:
    t: float
    E: float
    D: float
    lam: float
    u_max: float
    kinetic: float
    constraint_residual: float

    FIELDS = ("t", "E", "D", "lambda", "u_max", "kinetic", "constraint_residual")

    def as_tuple(self):
        return (self.t, self.E, self.D, self.lam, self.u_max, self.kinetic,
                self.constraint_residual)
