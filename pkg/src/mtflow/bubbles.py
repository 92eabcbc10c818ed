"""Concentration analysis of a field snapshot.

A bubble at a peak ``x_k`` with value ``a = u(x_k)`` has scale ``r_k`` fixed
by ``lam r_k^2 a^2 e^{a^2} = 4``.  The rescaled profile
``eta_k(x) = a (u(x_k + r_k x) - a)`` is compared with the Liouville
profile ``eta_0 = -log(1 + |x|^2)``, and the local energy
``lam int_{B_{L r_k}} u^2 e^{u^2}`` with its limit ``4 pi``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .energy import exp_u2
from .errors import DegenerateState, UnderResolved
from .grid import RADIAL, Field

FOUR_PI = 4 * math.pi


# ---------------------------------------------------------------------------
# Liouville reference


def liouville_profile(x):
    """``eta_0 = log(1 / (1 + |x|^2))`` for radii or ``(N, 2)`` points."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1) if x.ndim == 2 else x * x
    return -np.log1p(r2)


def liouville_mass(L):
    """``int_{B_L} 4 e^{2 eta_0} = 4 pi L^2 / (1 + L^2)``; ``L = inf`` gives ``4 pi``."""
    if math.isinf(L):
        return FOUR_PI
    return FOUR_PI * L * L / (1 + L * L)


def bubble_scale(u_peak, lam):
    """Scale ``r`` with ``lam r^2 u^2 e^{u^2} = 4``."""
    if not (u_peak > 0 and lam > 0):
        raise ValueError("bubble_scale needs u_peak > 0 and lam > 0")
    return 2.0 / (math.sqrt(lam) * u_peak * math.exp(0.5 * u_peak * u_peak))


def energy_density(u: Field, lam):
    """``e = lam u^2 e^{u^2}`` per node."""
    v = u.values
    return lam * v * v * exp_u2(v)


# ---------------------------------------------------------------------------
# peaks


@dataclass
class Peak:
    index: int
    x: np.ndarray
    u_peak: float
    r: float


def detect_peaks(u: Field, lam, nu_peak=1.0, merge_factor=5.0, max_peaks=16):
    """Greedy peak extraction.

    The first peak is the global maximum.  Further candidates maximise
    ``lam inf_j |x - x_j|^2 u^2 e^{u^2}`` and are accepted while that value
    exceeds ``nu_peak``; a candidate closer than ``merge_factor`` times the
    larger of the two bubble scales to an accepted peak is merged into it.
    On a radial grid only the global maximum is returned: any other
    maximiser is a ring, not a point concentration.
    """
    v = u.values
    g = u.grid
    if v.size == 0 or v.max() <= 0:
        return []
    e = energy_density(u, lam)
    i0 = int(np.argmax(v))
    peaks = [Peak(i0, g.points[i0].copy(), float(v[i0]), bubble_scale(v[i0], lam))]
    if g.kind == RADIAL:
        return peaks
    dmin2 = g.distances(g.points[i0]) ** 2
    excluded = np.zeros(v.size, dtype=bool)
    excluded[i0] = True
    for _ in range(v.size):
        if len(peaks) >= max_peaks:
            break
        q = np.where(excluded, -np.inf, dmin2 * e)
        k = int(np.argmax(q))
        if not q[k] > nu_peak:
            break
        rk = bubble_scale(v[k], lam) if v[k] > 0 else 0.0
        xk = g.points[k]
        near = [p for p in peaks
                if np.hypot(*(xk - p.x)) < merge_factor * max(rk, p.r)]
        if near:
            # merged into an existing peak; retire the node and its core
            excluded |= g.distances(xk) < max(rk, g.h)
            excluded[k] = True
            continue
        peaks.append(Peak(k, xk.copy(), float(v[k]), rk))
        dmin2 = np.minimum(dmin2, g.distances(xk) ** 2)
        excluded[k] = True
    return peaks


def pointwise_bound(u: Field, lam, peaks):
    """Empirical constant ``max_x lam inf_i |x - x_i|^2 u^2 e^{u^2}``."""
    if not peaks:
        raise ValueError("pointwise_bound needs at least one peak")
    g = u.grid
    d2 = np.min([g.distances(p.x) ** 2 for p in peaks], axis=0)
    return float(np.max(d2 * energy_density(u, lam)))


def oscillation_stat(u: Field, peaks, n_y=256, n_z=32):
    """``max |u(y) - u(z)| u(y)`` over ``z`` in ``B_{R(y)/2}(y)``, ``R(y) = inf_j |y - x_j|``.

    ``y`` runs over an evenly strided subset of the nodes and ``z`` over an
    evenly strided subset of the nodes in each ball.
    """
    if not peaks:
        raise ValueError("oscillation_stat needs at least one peak")
    g = u.grid
    v = u.values
    ys = np.unique(np.linspace(0, g.size - 1, min(n_y, g.size)).astype(int))
    pts = g.points
    best = 0.0
    for y in ys:
        Ry = min(np.hypot(*(pts[y] - p.x)) for p in peaks)
        if Ry == 0:
            continue
        ball = np.flatnonzero(g.distances(pts[y]) < 0.5 * Ry)
        if ball.size == 0:
            continue
        zs = ball[np.unique(np.linspace(0, ball.size - 1, min(n_z, ball.size)).astype(int))]
        best = max(best, float(np.max(np.abs(v[y] - v[zs])) * abs(v[y])))
    return best


# ---------------------------------------------------------------------------
# profiles


@dataclass
class Profile:
    """Rescaled profile samples: ``x`` radii (radial) or points, ``eta`` values."""

    x: np.ndarray
    eta: np.ndarray
    L: float

    @property
    def reference(self):
        return liouville_profile(self.x)

    def rows(self):
        """``(x, eta_k, eta_0, diff)`` rows; ``x`` is the radius ``|x|``."""
        r = self.x if self.x.ndim == 1 else np.hypot(self.x[:, 0], self.x[:, 1])
        ref = self.reference
        return np.column_stack([r, self.eta, ref, self.eta - ref])


def local_spacing(grid, c, r):
    """Largest node spacing within distance ``r`` of radius ``c`` (lattice step if Cartesian)."""
    if grid.kind != RADIAL:
        return grid.h
    rr = grid.coords
    k = min(np.searchsorted(rr, c + r, side="right"), rr.size - 1)
    lo = max(np.searchsorted(rr, c - r, side="left") - 1, 0)
    return float(np.max(np.diff(rr[lo:k + 1]))) if k > lo else float(rr[1] - rr[0])


def sample(u: Field, pts):
    """Interpolate ``u`` at plane points (linear in ``r`` or bilinear); 0 outside."""
    g = u.grid
    pts = np.atleast_2d(pts)
    if g.kind == RADIAL:
        r = np.hypot(pts[:, 0], pts[:, 1])
        return np.interp(r, g.coords, u.values, right=0.0)
    imap = g.index_map
    i0, j0 = g.lattice.min(axis=0)
    fx = pts[:, 0] / g.h - i0
    fy = pts[:, 1] / g.h - j0
    ix = np.floor(fx).astype(int)
    iy = np.floor(fy).astype(int)
    tx, ty = fx - ix, fy - iy
    vals = np.append(u.values, 0.0)  # index -1 -> 0 outside the domain

    def at(a, b):
        ok = (a >= 0) & (a < imap.shape[0]) & (b >= 0) & (b < imap.shape[1])
        idx = np.full(a.shape, -1)
        idx[ok] = imap[a[ok], b[ok]]
        return vals[idx]

    return ((1 - tx) * (1 - ty) * at(ix, iy) + tx * (1 - ty) * at(ix + 1, iy)
            + (1 - tx) * ty * at(ix, iy + 1) + tx * ty * at(ix + 1, iy + 1))


def rescale_profile(u: Field, x_k, r_k, L=4.0, density=64, u_peak=None):
    """Sample ``eta_k(x) = a (u(x_k + r_k x) - a)`` on a lattice over ``B_L``.

    ``a`` defaults to ``u(x_k)``.  Radial grids sample radii ``j / density``;
    Cartesian grids sample the square lattice of the same spacing inside
    ``B_L``.  Raises :class:`UnderResolved` when ``r_k`` is below four local
    grid spacings.
    """
    g = u.grid
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    if x_k.size == 1:
        x_k = np.array([x_k[0], 0.0])
    spacing = local_spacing(g, float(np.hypot(*x_k)), r_k)
    if r_k < 4 * spacing:
        raise UnderResolved(f"bubble scale {r_k:.3g} below 4 grid spacings ({4 * spacing:.3g})")
    a = float(sample(u, x_k[None])[0]) if u_peak is None else u_peak
    m = int(round(L * density))
    if g.kind == RADIAL:
        if np.hypot(*x_k) > spacing:
            raise ValueError("radial profiles are taken about the origin")
        xs = np.arange(m + 1) / density
        vals = sample(u, np.column_stack([r_k * xs, np.zeros_like(xs)]))
    else:
        k = np.arange(-m, m + 1) / density
        X, Y = np.meshgrid(k, k, indexing="ij")
        inside = X ** 2 + Y ** 2 <= L * L
        xs = np.column_stack([X[inside], Y[inside]])
        vals = sample(u, x_k + r_k * xs)
    return Profile(xs, a * (vals - a), L)


def profile_error(profile: Profile):
    """Sup-distance of the sampled profile to ``eta_0``."""
    return float(np.max(np.abs(profile.eta - profile.reference)))


# ---------------------------------------------------------------------------
# energies


def local_energy(u: Field, lam, center, r):
    """``lam int_{B_r(center)} u^2 e^{u^2}`` over nodes with distance ``<= r``."""
    if not r > 0:
        raise ValueError("radius must be positive")
    g = u.grid
    inside = g.distances(center) <= r
    return float(np.dot(g.weights[inside], energy_density(u, lam)[inside]))


@dataclass
class NeckScan:
    radii: np.ndarray   # geometric shell radii t_0 = s < ... < t_m = t
    N: np.ndarray       # energy in (t_j, t_{j+1}]
    P: np.ndarray       # flux density t dN/dt at each radius
    w: np.ndarray       # a (u(t_j) - a) at each radius
    b: float            # fitted decay exponent

    def to_dict(self):
        return {"radii": self.radii.tolist(), "N": self.N.tolist(), "P": self.P.tolist(),
                "w": self.w.tolist(), "b": self.b}


def _shell_mean(g, values, center, radius, width):
    d = g.distances(center)
    sel = np.abs(d - radius) <= 0.5 * width
    if not sel.any():
        raise DegenerateState(f"no nodes on the shell of radius {radius:.3g}")
    return float(np.mean(values[sel]))


def neck_scan(u: Field, lam, center, s, t, m=8, r_k=None, u_peak=None):
    """Annular energies, flux densities and tail decay between radii ``s`` and ``t``.

    ``P(t_j) = 2 pi lam t_j^2 u^2 e^{u^2}`` (the radial derivative of the
    energy in ``B_t`` times ``t``), shell-averaged on Cartesian grids.  The
    exponent ``b`` is the least-squares slope of ``w = a (u - a)`` against
    ``log(r_k / r)`` over the shell radii.
    """
    if not 0 < s < t:
        raise ValueError("need 0 < s < t")
    if m < 4:
        raise ValueError("need at least 4 shells")
    g = u.grid
    radii = s * (t / s) ** (np.arange(m + 1) / m)
    d = g.distances(center)
    e = energy_density(u, lam) * g.weights
    N = np.empty(m)
    for j in range(m):
        sel = (d > radii[j]) & (d <= radii[j + 1])
        if g.kind != RADIAL and not sel.any():
            raise DegenerateState(f"empty shell ({radii[j]:.3g}, {radii[j + 1]:.3g}]")
        N[j] = e[sel].sum()
    c = np.asarray(center, dtype=float).reshape(-1)
    a = u_peak if u_peak is not None else float(sample(u, c[None] if c.size == 2 else [[c[0], 0.0]])[0])
    if g.kind == RADIAL:
        uv = np.interp(radii, g.coords, u.values)
        dens = lam * uv * uv * np.exp(uv * uv)
    else:
        dens = np.array([_shell_mean(g, energy_density(u, lam), c, r, g.h) for r in radii])
        uv = np.array([_shell_mean(g, u.values, c, r, g.h) for r in radii])
    P = 2 * math.pi * radii ** 2 * dens
    w = a * (uv - a)
    rk = r_k if r_k is not None else (bubble_scale(a, lam) if a > 0 and lam > 0 else 1.0)
    x = np.log(rk / radii)
    if np.ptp(w) == 0:
        b = 0.0
    else:
        b = float(np.polyfit(x, w, 1)[0])
    return NeckScan(radii, N, P, w, b)


def quantize(Lambda_local, tol_frac=0.1):
    """Nearest multiple of ``4 pi``: ``(l, deviation, verdict)``."""
    if Lambda_local < 0:
        raise ValueError("local energy must be non-negative")
    l = int(round(Lambda_local / FOUR_PI))
    dev = abs(Lambda_local - FOUR_PI * l)
    if l == 0:
        verdict = "non-concentrating"
    elif dev <= tol_frac * FOUR_PI:
        verdict = "quantized"
    else:
        verdict = "anomalous"
    return l, dev, verdict


# ---------------------------------------------------------------------------
# full report


@dataclass
class AnalysisConfig:
    L_profile: float = 4.0      # profile sampled on B_L
    L_energy: float = 20.0      # local energy on B_{L r_k}
    L_error: float = 2.0        # profile error measured on B_L
    tol_frac: float = 0.1
    nu_peak: float = 1.0
    merge_factor: float = 5.0
    density: int = 64
    neck: tuple = (4.0, 16.0)   # neck scan on [4 r_k, 16 r_k]
    neck_shells: int = 8

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "neck" in d:
            d["neck"] = tuple(d["neck"])
        return cls(**d)


@dataclass
class BubbleReport:
    x_k: list
    u_peak: float
    r_k: float
    profile_err: float | None
    lambda_local: float
    l_nearest: int
    deviation: float
    verdict: str
    separation: float
    scale_residual: float
    neck: dict | None = None
    note: str = ""

    def to_dict(self):
        return asdict(self)


def _boundary_distance(g, x):
    if g.kind == RADIAL:
        return g.coords[-1] - float(np.hypot(*x))
    bnd = g.points[g.boundary]
    return float(np.min(np.hypot(bnd[:, 0] - x[0], bnd[:, 1] - x[1])))


@dataclass
class SnapshotAnalysis:
    lam: float
    u_max: float
    bubbles: list = field(default_factory=list)
    pointwise_C: float | None = None
    oscillation: float | None = None
    profiles: list = field(default_factory=list)

    def to_dict(self):
        return {"lambda": self.lam, "u_max": self.u_max,
                "bubbles": [b.to_dict() for b in self.bubbles],
                "pointwise_C": self.pointwise_C, "oscillation": self.oscillation}


def analyze(u: Field, lam, cfg: AnalysisConfig | None = None):
    """Peak detection plus a :class:`BubbleReport` per peak."""
    cfg = cfg or AnalysisConfig()
    g = u.grid
    out = SnapshotAnalysis(float(lam), u.sup)
    peaks = detect_peaks(u, lam, cfg.nu_peak, cfg.merge_factor)
    if not peaks:
        return out
    out.pointwise_C = pointwise_bound(u, lam, peaks)
    out.oscillation = oscillation_stat(u, peaks)
    for p in peaks:
        others = [np.hypot(*(p.x - q.x)) for q in peaks if q is not p]
        sep = min(others + [_boundary_distance(g, p.x)]) / p.r
        resid = abs(lam * p.r ** 2 * p.u_peak ** 2 * math.exp(p.u_peak ** 2) / 4 - 1)
        Lam = local_energy(u, lam, p.x, cfg.L_energy * p.r)
        l, dev, verdict = quantize(Lam, cfg.tol_frac)
        err, note, neck, prof = None, "", None, None
        try:
            prof = rescale_profile(u, p.x, p.r, max(cfg.L_profile, cfg.L_error), cfg.density,
                                   u_peak=p.u_peak)
            r = prof.x if prof.x.ndim == 1 else np.hypot(prof.x[:, 0], prof.x[:, 1])
            sel = r <= cfg.L_error
            err = float(np.max(np.abs(prof.eta[sel] - prof.reference[sel])))
        except (UnderResolved, ValueError) as exc:
            note = str(exc)
        try:
            s, t = cfg.neck
            if t * p.r < _boundary_distance(g, p.x):
                neck = neck_scan(u, lam, p.x, s * p.r, t * p.r, cfg.neck_shells,
                                 r_k=p.r, u_peak=p.u_peak).to_dict()
        except DegenerateState as exc:
            note = (note + "; " if note else "") + str(exc)
        out.bubbles.append(BubbleReport(p.x.tolist(), p.u_peak, p.r, err, Lam, l, dev, verdict,
                                        float(sep), resid, neck, note))
        out.profiles.append(prof)
    return out
