"""Quick invariant corpus run by ``mtflow selftest``.

Each check is a small closed-form or cross-module consistency test that
runs in well under a second; together they exercise every module.
"""

from __future__ import annotations

import math

import numpy as np

from .bubbles import bubble_scale, liouville_mass, quantize
from .energy import check_lower_bound, lambda_volume, mt_energy
from .flow import StopConfig, initial_state, max_principle_check, run
from .grid import Domain, Field, build_masked_grid, build_radial_grid, dirichlet_energy, integrate
from .seeds import MoserParams, moser_function, normalize_alpha
from .stationary import solve_for_lambda


def _area():
    g = build_radial_grid(1.0, 128)
    val = integrate(g, Field.from_function(g, lambda r: np.ones_like(r), h10=False))
    return abs(val - math.pi) / math.pi < 1e-2, f"sum w = {val:.6f}"


def _laplacian():
    g = build_radial_grid(1.0, 128)
    u = Field.from_function(g, lambda r: 1 - r * r)
    err = np.max(np.abs(g.laplacian_values(u.values)[g.interior] + 4))
    return err < 1e-8, f"max |lap(1-r^2) + 4| = {err:.2e}"


def _sbp():
    g = build_masked_grid(Domain.annulus(1.0, 0.3), 1 / 32)
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal((2, g.size))
    u[g.boundary] = v[g.boundary] = 0
    a = g.integrate_values(v * g.laplacian_values(u))
    b = g.integrate_values(u * g.laplacian_values(v))
    scale = np.sqrt(g.integrate_values(u * u) * g.integrate_values(v * v))
    return abs(a - b) <= 1e-10 * scale, f"asymmetry {abs(a - b):.2e}"


def _moser():
    g = build_radial_grid(1.0, 1024)
    d = dirichlet_energy(g, moser_function(MoserParams(1 / math.e, 1.0), g))
    return abs(d - 1) < 0.02, f"|grad m|^2 = {d:.5f}"


def _normalize():
    g = build_radial_grid(1.0, 256)
    v = moser_function(MoserParams(1 / math.e, 1.0), g)
    a, w = normalize_alpha(v, mt_energy(v))
    return abs(a - 1) < 1e-8, f"fixed point alpha = {a:.12f}"


def _lower_bound():
    g = build_radial_grid(1.0, 256)
    rep = check_lower_bound(moser_function(MoserParams(1 / math.e, 1.0), g).scaled(2.0))
    return rep.ok, f"{rep.mass:.4f} >= {rep.half_energy:.4f}"


def _liouville():
    ok = abs(liouville_mass(1.0) - 2 * math.pi) < 1e-12 and liouville_mass(math.inf) == 4 * math.pi
    r = bubble_scale(1.0, 4.0)
    return ok and abs(r - math.exp(-0.5)) < 1e-14, f"r(1, 4) = {r:.8f}"


def _quantize():
    l, dev, verdict = quantize(25.3, 0.1)
    return (l, verdict) == (2, "quantized"), f"25.3 -> l={l}, dev={dev:.3f}"


def _oracle():
    g = build_radial_grid(1.0, 512)
    res = solve_for_lambda(4.0)
    lam = lambda_volume(res.on_grid(g))
    return abs(lam - 4.0) < 1e-3, f"lambda_volume = {lam:.6f}"


def _flow():
    g = build_radial_grid(1.0, 256)
    u = moser_function(MoserParams(1 / math.e, 1.0), g).scaled(0.8)
    s0 = initial_state(u, "volume", dt=1e-3)
    rows, rep = run(s0, 0.2, StopConfig())
    drift = max(r.constraint_residual for r in rows)
    mono = all(b.D <= a.D + 1e-8 for a, b in zip(rows, rows[1:]))
    mp = max_principle_check(rows)
    return drift < 1e-8 and mono and mp.ok, f"drift {drift:.1e}, {len(rows) - 1} steps"


CHECKS = [
    ("grid: quadrature area", _area),
    ("grid: radial Laplacian of 1-r^2", _laplacian),
    ("grid: summation by parts", _sbp),
    ("seeds: Moser function energy", _moser),
    ("seeds: normalisation fixed point", _normalize),
    ("energy: lower bound", _lower_bound),
    ("bubbles: Liouville mass and scale", _liouville),
    ("bubbles: quantization", _quantize),
    ("stationary: multiplier identity", _oracle),
    ("flow: conservation and monotonicity", _flow),
]


def run_selftest(out=print):
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort the corpus
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    return failures
