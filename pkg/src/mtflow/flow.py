"""Time integration of the constrained flow ``u_t e^{u^2} = lap u + lam u e^{u^2}``.

Each step is backward Euler in the diffusion with the coefficient
``e^{-u_n^2}`` frozen at the old level and ``lam u_n`` explicit::

    (I - dt e^{-u_n^2} lap) u+ = (1 + dt lam) u_n

The left operator does not depend on ``lam``, so ``u+(lam) = (1 + dt lam) z``
with ``z`` from a single linear solve; ``lam`` is then fixed by a scalar
equation that enforces the constraint on ``u+`` exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import (Dirichlet, EnergyLedgerRow, Volume, exp_u2, lambda_dirichlet,
                     lambda_volume, mt_energy)
from .errors import BlowupOverflow, DegenerateState, SolverError
from .grid import RADIAL, Field, dirichlet_energy
from .linalg import pcg, solve_tridiagonal_spd

log = logging.getLogger(__name__)

# relative accuracy of the scalar projection
PROJECTION_RTOL = 1e-13
# negative values above -CLIP_RTOL * max u are solver roundoff
CLIP_RTOL = 1e-8


@dataclass(frozen=True)
class FlowState:
    """The evolving object: time, field, multiplier, constraint and step size.

    ``kinetic`` and ``clipped`` describe the step that produced this state
    (``int u_t^2 e^{u^2}`` from the difference quotient, and the number of
    nodes clipped back to zero).
    """

    t: float
    u: Field
    lam: float
    constraint: Volume | Dirichlet
    dt: float
    kinetic: float = 0.0
    clipped: int = 0

    def quantity(self):
        """The constrained quantity of the current field."""
        return constrained_quantity(self.u, self.constraint)

    def residual(self):
        q = self.constraint.target
        return abs(self.quantity() - q) / q


def constrained_quantity(u, constraint):
    if isinstance(constraint, Volume):
        return mt_energy(u)
    return dirichlet_energy(u.grid, u)


def initial_state(u0, mode="volume", target=None, dt=1e-3):
    """Flow state at ``t = 0``; ``target`` defaults to ``u0``'s own value."""
    if mode == "volume":
        c = Volume(mt_energy(u0) if target is None else target)
        lam = lambda_volume(u0)
    elif mode == "dirichlet":
        c = Dirichlet(dirichlet_energy(u0.grid, u0) if target is None else target)
        lam = lambda_dirichlet(u0)
    else:
        raise ValueError(f"unknown constraint mode {mode!r}")
    return FlowState(0.0, u0, lam, c, dt)


def frozen_solve(grid, u, dt):
    """Solve ``(I - dt e^{-u^2} lap) z = u`` with ``z = 0`` on the boundary.

    Multiplying through by ``W e^{u^2}`` gives the SPD system
    ``(W e^{u^2} + dt K) z = W e^{u^2} u`` on the interior nodes.
    """
    e = exp_u2(u)
    idx = grid.interior_index
    mass = grid.weights[idx] * e[idx]
    rhs = mass * u[idx]
    z = np.zeros_like(u)
    if grid.kind == RADIAL:
        # interior nodes are 0..n-1 and edge i joins i and i+1
        c = grid.conductance
        main = mass + dt * (np.concatenate([[0.0], c[:-1]]) + c)
        z[idx] = solve_tridiagonal_spd(main, -dt * c[:-1], rhs)
    else:
        K = grid.interior_stiffness
        A = K * dt
        A.setdiag(A.diagonal() + mass)
        z[idx], _ = pcg(A, rhs, A.diagonal(), x0=u[idx], rtol=1e-10)
    return z


def _project_volume(grid, z, c0):
    """Find ``s > 0`` with ``E(s z) = c0``; the map is convex and increasing."""
    w = grid.weights
    z2 = z * z
    zmax2 = z2.max()
    if zmax2 == 0:
        raise DegenerateState("frozen solve returned zero")

    def energy(s):
        if s * s * zmax2 > 700.0:
            raise BlowupOverflow("projection needs u^2 beyond the guard")
        return 0.5 * np.dot(w, np.expm1(s * s * z2))

    # Newton from the right of the root converges monotonically for a convex
    # increasing function; bisection keeps the iterate inside the bracket.
    lo, hi = 0.0, 1.0
    while energy(hi) < c0:
        lo, hi = hi, 2.0 * hi
    s = hi
    for _ in range(200):
        val = energy(s) - c0
        if abs(val) <= PROJECTION_RTOL * c0:
            return s
        if val > 0:
            hi = s
        else:
            lo = s
        deriv = s * np.dot(w, z2 * np.exp(s * s * z2))
        s_new = s - val / deriv if deriv > 0 else 0.5 * (lo + hi)
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) <= 1e-16 * s:
            return s_new
        s = s_new
    raise SolverError("volume projection did not converge")


def step(s: FlowState) -> FlowState:
    """Advance one semi-implicit step with exact constraint projection."""
    if not s.dt > 0:
        raise ValueError("dt must be positive")
    grid = s.u.grid
    un = s.u.values
    z = frozen_solve(grid, un, s.dt)
    if isinstance(s.constraint, Volume):
        scale = _project_volume(grid, z, s.constraint.c0)
    else:
        Dz = grid.dirichlet_values(z)
        if Dz <= 0:
            raise DegenerateState("frozen solve returned zero")
        # D(s z) = s^2 D(z) is quadratic in the scale
        scale = math.sqrt(s.constraint.Lambda0 / Dz)
    lam = (scale - 1.0) / s.dt
    new = scale * z
    # negatives at the level of the iterative solver tolerance are roundoff;
    # only larger ones are counted as clips
    clipped = int((new < -CLIP_RTOL * new.max()).sum())
    np.maximum(new, 0.0, out=new)
    new[grid.boundary] = 0.0
    ut = (new - un) / s.dt
    kin = grid.integrate_values(ut * ut * exp_u2(un))
    return FlowState(s.t + s.dt, Field(grid, new), lam, s.constraint, s.dt, kin, clipped)


def residual(u: Field, lam: float) -> Field:
    """Instantaneous ``u_t = e^{-u^2} lap u + lam u``."""
    v = u.values
    return Field(u.grid, np.exp(-v * v) * u.grid.laplacian_values(v) + lam * v, h10=False)


@dataclass
class StopConfig:
    """Stopping and step-size controls for :func:`run`.

    ``eps_steady`` defaults to ``1e-8`` times the initial Dirichlet energy.
    ``monotone_tol`` is the per-step slack allowed in the energy law (``D``
    non-increasing in volume mode, ``E`` non-decreasing in Dirichlet mode);
    a step breaking it is retried with half the step size.
    """

    eps_steady: float | None = None
    blowup_u_max: float = 12.0
    dt_min: float = 1e-12
    dt_max: float = 1.0
    grow_after: int = 10
    grow_factor: float = 1.2
    max_steps: int = 10_000_000
    monotone_tol: float = 5e-9


@dataclass
class StopReport:
    reason: str  # steady | time-limit | blowup-threshold | overflow | step-failure
    t_final: float
    steps: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"reason": self.reason, "t_final": self.t_final, "steps": self.steps,
                "diagnostics": self.diagnostics}


def ledger_row(s: FlowState, Q0=None) -> EnergyLedgerRow:
    u = s.u
    E = mt_energy(u)
    D = dirichlet_energy(u.grid, u)
    q = E if isinstance(s.constraint, Volume) else D
    target = s.constraint.target
    return EnergyLedgerRow(s.t, E, D, s.lam, u.sup, s.kinetic, abs(q - target) / target)


def run(s0: FlowState, t_max: float, cfg: StopConfig | None = None, callback=None):
    """Integrate until steady, ``t_max``, or the blow-up threshold.

    Step size is halved on a failed step and grown by ``grow_factor`` after
    ``grow_after`` consecutive accepted steps, always within
    ``[dt_min, dt_max]``.  ``callback(state, row)`` is called for every
    accepted step.  Returns ``(rows, StopReport)``; ``rows[0]`` describes the
    initial state.
    """
    cfg = cfg or StopConfig()
    volume = isinstance(s0.constraint, Volume)
    row = ledger_row(s0)
    rows = [row]
    eps = cfg.eps_steady if cfg.eps_steady is not None else 1e-8 * row.D
    state = replace(s0, dt=min(max(s0.dt, cfg.dt_min), cfg.dt_max))
    clean = 0
    steps = 0
    clipped_total = 0
    rejected = 0
    last_error = None

    def report(reason):
        diag = {"u_max": float(state.u.sup), "lambda": float(state.lam), "dt": float(state.dt),
                "clipped": clipped_total, "rejected": rejected,
                "E": float(rows[-1].E), "D": float(rows[-1].D),
                "kinetic": float(rows[-1].kinetic)}
        if last_error:
            diag["last_error"] = last_error
        return rows, StopReport(reason, state.t, steps, diag)

    while True:
        if state.t >= t_max:
            return report("time-limit")
        if steps >= cfg.max_steps:
            return report("time-limit")
        dt = min(state.dt, t_max - state.t)
        try:
            new = step(replace(state, dt=dt))
            new_row = ledger_row(new)
            if volume:
                ok = new_row.D <= rows[-1].D + cfg.monotone_tol
            else:
                ok = new_row.E >= rows[-1].E - cfg.monotone_tol
            if not ok:
                raise SolverError("energy law violated; step too large")
        except (SolverError, BlowupOverflow, DegenerateState) as exc:
            last_error = f"{type(exc).__name__}: {exc}"
            rejected += 1
            clean = 0
            state = replace(state, dt=0.5 * dt)
            if state.dt < cfg.dt_min:
                return report("overflow" if isinstance(exc, BlowupOverflow) else "step-failure")
            continue
        steps += 1
        clipped_total += new.clipped
        # keep the controller's step size when dt was clamped to hit t_max
        state = replace(new, dt=state.dt)
        rows.append(new_row)
        if callback is not None:
            callback(state, new_row)
        clean += 1
        if clean >= cfg.grow_after:
            state = replace(state, dt=min(state.dt * cfg.grow_factor, cfg.dt_max))
            clean = 0
        measure = new_row.kinetic if volume else new_row.kinetic / max(new.lam, 1e-300)
        if measure <= eps:
            return report("steady")
        if new_row.u_max >= cfg.blowup_u_max:
            return report("blowup-threshold")


@dataclass(frozen=True)
class MaxPrincipleReport:
    worst_margin: float  # max over pairs of m(t) / (exp(int lam) m(t0)) - 1
    ok: bool
    worst_pair: tuple


def max_principle_check(rows, tol=1e-4) -> MaxPrincipleReport:
    """Check ``m(t) <= exp(int_{t0}^t lam) m(t0)`` for every pair of rows.

    With ``g = log m - int lam`` the worst pair is the largest rise of ``g``
    over its running minimum, so the scan is linear in the ledger length.
    """
    if len(rows) < 2:
        raise ValueError("need at least two ledger rows")
    t = np.array([r.t for r in rows])
    lam = np.array([r.lam for r in rows])
    m = np.array([r.u_max for r in rows])
    cum = np.concatenate([[0.0], np.cumsum(lam[1:] * np.diff(t))])
    with np.errstate(divide="ignore"):
        g = np.log(m) - cum
    worst, pair = -np.inf, (0, 0)
    imin = 0
    for k in range(1, len(g)):
        rise = g[k] - g[imin]
        if rise > worst:
            worst, pair = rise, (imin, k)
        if g[k] < g[imin]:
            imin = k
    margin = float(np.expm1(worst))
    return MaxPrincipleReport(margin, bool(margin <= tol), pair)
