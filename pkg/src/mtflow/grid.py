"""Discrete geometry: radial and masked-Cartesian grids, fields, and calculus.

Both grid kinds are built from the same ingredients: node coordinates,
positive quadrature weights ``w``, and a list of edges with conductances
``c``.  The Dirichlet form is ``sum_e c_e (u_a - u_b)^2`` and the discrete
Laplacian is ``W^{-1}`` times the (negative) edge graph Laplacian, so that
``-<u, lap u>_W`` equals the Dirichlet form for zero-boundary fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import BoundaryFlagError, GridError, GridMismatch

RADIAL = "radial"
CARTESIAN = "cartesian"


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Domain:
    """Planar domain descriptor: ``ball``, ``annulus`` or ``rectangle``.

    ``params`` holds the shape parameters: ``R`` for a ball, ``R1``/``R2``
    (outer/inner radius) for an annulus, ``xmin, xmax, ymin, ymax`` and an
    optional list of circular ``holes`` ``(x, y, r)`` for a rectangle.
    Balls and annuli are centred at the origin.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.kind == "ball":
            if not p.get("R", 0) > 0:
                raise GridError("ball domain needs R > 0")
        elif self.kind == "annulus":
            if not 0 < p.get("R2", 0) < p.get("R1", 0):
                raise GridError("annulus domain needs 0 < R2 < R1")
        elif self.kind == "rectangle":
            if not (p["xmin"] < p["xmax"] and p["ymin"] < p["ymax"]):
                raise GridError("rectangle domain has empty extent")
            for hole in p.get("holes", []):
                if len(hole) != 3 or hole[2] <= 0:
                    raise GridError(f"bad hole {hole!r}")
        else:
            raise GridError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def ball(cls, R):
        return cls("ball", {"R": float(R)})

    @classmethod
    def annulus(cls, R1, R2):
        return cls("annulus", {"R1": float(R1), "R2": float(R2)})

    @classmethod
    def rectangle(cls, xmin, xmax, ymin, ymax, holes=()):
        holes = [tuple(float(v) for v in hole) for hole in holes]
        return cls("rectangle", {"xmin": float(xmin), "xmax": float(xmax),
                                 "ymin": float(ymin), "ymax": float(ymax),
                                 "holes": holes})

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        if kind == "rectangle":
            return cls.rectangle(**d)
        return cls(kind, {k: float(v) for k, v in d.items()})

    def to_dict(self):
        d = {"kind": self.kind}
        for k, v in self.params.items():
            d[k] = [list(h) for h in v] if k == "holes" else v
        return d

    def contains(self, pts):
        """Strict interior test for an ``(N, 2)`` array of points."""
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        r2 = x * x + y * y
        p = self.params
        if self.kind == "ball":
            return r2 < p["R"] ** 2
        if self.kind == "annulus":
            return (r2 < p["R1"] ** 2) & (r2 > p["R2"] ** 2)
        inside = (x > p["xmin"]) & (x < p["xmax"]) & (y > p["ymin"]) & (y < p["ymax"])
        for hx, hy, hr in p.get("holes", []):
            inside &= (x - hx) ** 2 + (y - hy) ** 2 > hr * hr
        return inside

    def area(self):
        p = self.params
        if self.kind == "ball":
            return math.pi * p["R"] ** 2
        if self.kind == "annulus":
            return math.pi * (p["R1"] ** 2 - p["R2"] ** 2)
        a = (p["xmax"] - p["xmin"]) * (p["ymax"] - p["ymin"])
        return a - sum(math.pi * h[2] ** 2 for h in p.get("holes", []))

    def bounds(self):
        p = self.params
        if self.kind == "ball":
            return -p["R"], p["R"], -p["R"], p["R"]
        if self.kind == "annulus":
            return -p["R1"], p["R1"], -p["R1"], p["R1"]
        return p["xmin"], p["xmax"], p["ymin"], p["ymax"]

    def encode(self):
        """Compact ``kind;k=v;...`` form used in snapshot headers (no commas)."""
        parts = [self.kind]
        for k, v in self.params.items():
            if k == "holes":
                v = "|".join(":".join(repr(c) for c in hole) for hole in v)
            else:
                v = repr(v)
            parts.append(f"{k}={v}")
        return ";".join(parts)

    @classmethod
    def decode(cls, text):
        kind, *items = text.split(";")
        params = {}
        for item in items:
            k, v = item.split("=", 1)
            if k == "holes":
                params[k] = [tuple(float(c) for c in h.split(":")) for h in v.split("|") if h]
            else:
                params[k] = float(v)
        return cls(kind, params)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable discrete domain.

    Attributes
    ----------
    kind : ``"radial"`` or ``"cartesian"``
    coords : radii ``(N,)`` for radial grids, points ``(N, 2)`` otherwise
    weights : quadrature weight (area) of each node
    boundary : mask of nodes carrying the homogeneous Dirichlet condition
    h : nominal spacing (``R/n`` radial, lattice spacing Cartesian)
    domain : the continuous domain being discretised
    edges, conductance : edge list ``(E, 2)`` and coefficients ``c_e``
    """

    kind: str
    coords: np.ndarray
    weights: np.ndarray
    boundary: np.ndarray
    h: float
    domain: Domain
    edges: np.ndarray
    conductance: np.ndarray
    n: int = 0
    stretch: float = 0.0
    lattice: np.ndarray | None = None  # integer (i, j) per node, Cartesian only

    @property
    def size(self):
        return self.weights.size

    @property
    def interior(self):
        return ~self.boundary

    @cached_property
    def interior_index(self):
        return np.flatnonzero(~self.boundary)

    @cached_property
    def points(self):
        """Node positions as ``(N, 2)`` points (radial nodes on the x-axis)."""
        if self.kind == RADIAL:
            return np.column_stack([self.coords, np.zeros_like(self.coords)])
        return self.coords

    @cached_property
    def stiffness(self):
        """Edge graph Laplacian ``K`` with ``u.K.u = sum_e c_e (u_a - u_b)^2``."""
        a, b = self.edges[:, 0], self.edges[:, 1]
        c = self.conductance
        rows = np.concatenate([a, b, a, b])
        cols = np.concatenate([a, b, b, a])
        vals = np.concatenate([c, c, -c, -c])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))

    @cached_property
    def laplacian_matrix(self):
        """``-W^{-1} K`` with boundary rows zeroed."""
        scale = np.where(self.boundary, 0.0, -1.0 / self.weights)
        return sp.diags(scale) @ self.stiffness

    @cached_property
    def interior_stiffness(self):
        idx = self.interior_index
        return self.stiffness[idx][:, idx].tocsr()

    @cached_property
    def edge_midpoints(self):
        p = self.points
        return 0.5 * (p[self.edges[:, 0]] + p[self.edges[:, 1]])

    @cached_property
    def index_map(self):
        """Dense lattice array of node indices (-1 where absent), Cartesian only."""
        if self.lattice is None:
            raise GridError("index_map is defined for Cartesian grids only")
        i0, j0 = self.lattice.min(axis=0)
        shape = tuple(self.lattice.max(axis=0) - (i0, j0) + 1)
        m = -np.ones(shape, dtype=np.int64)
        m[self.lattice[:, 0] - i0, self.lattice[:, 1] - j0] = np.arange(self.size)
        return m

    # calculus on raw arrays -------------------------------------------------

    def laplacian_values(self, u):
        return self.laplacian_matrix @ u

    def integrate_values(self, f):
        return float(np.dot(self.weights, f))

    def dirichlet_values(self, u):
        d = u[self.edges[:, 0]] - u[self.edges[:, 1]]
        return float(np.dot(self.conductance, d * d))

    def edge_energy(self, u):
        d = u[self.edges[:, 0]] - u[self.edges[:, 1]]
        return self.conductance * d * d

    def distances(self, center):
        """Euclidean distance of every node from ``center`` (a point)."""
        c = np.asarray(center, dtype=float).reshape(-1)
        if c.size == 1:
            c = np.array([c[0], 0.0])
        return np.hypot(self.points[:, 0] - c[0], self.points[:, 1] - c[1])

    def describe(self):
        """``(kind, n-or-h, domain-params)`` triple used in snapshot headers."""
        if self.kind == RADIAL:
            return RADIAL, str(self.n), f"{self.domain.encode()};stretch={self.stretch!r}"
        return CARTESIAN, repr(self.h), self.domain.encode()


def _sinh_nodes(R, n, stretch):
    xi = np.arange(n + 1) / n
    if stretch == 0:
        return R * xi
    r = R * np.sinh(stretch * xi) / math.sinh(stretch)
    r[-1] = R
    return r


def build_radial_grid(R, n, stretch=0.0):
    """Radial grid on the ball ``B_R`` with ``n + 1`` nodes ``r_0 = 0 .. r_n = R``.

    With ``stretch = 0`` the nodes are uniform, ``r_i = i R / n``.  A positive
    ``stretch`` maps a uniform parameter through ``R sinh(k xi) / sinh(k)``,
    clustering nodes at the origin while staying smooth; this is what makes
    concentrating bubbles resolvable at a fixed node count.

    Weights are the areas of the control annuli bounded by the edge midpoints,
    which for uniform nodes gives ``2 pi r_i h`` in the interior and
    ``pi h^2 / 4`` at the origin.
    """
    if not R > 0:
        raise GridError(f"radius must be positive, got {R!r}")
    if n < 16:
        raise GridError(f"radial grid needs n >= 16 nodes, got {n!r}")
    if stretch < 0:
        raise GridError("stretch must be non-negative")
    r = _sinh_nodes(float(R), int(n), float(stretch))
    mid = 0.5 * (r[1:] + r[:-1])
    faces = np.concatenate([[0.0], mid, [r[-1]]])
    weights = math.pi * (faces[1:] ** 2 - faces[:-1] ** 2)
    edges = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    conductance = 2 * math.pi * mid / np.diff(r)
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[-1] = True
    return Grid(RADIAL, r, weights, boundary, float(R) / n, Domain.ball(R),
                edges, conductance, n=int(n), stretch=float(stretch))


def build_masked_grid(domain, h):
    """Uniform Cartesian lattice ``h Z^2`` masked to ``domain``.

    Nodes strictly inside the domain are kept; a kept node with any of its
    four lattice neighbours outside is flagged as boundary.  Every node gets
    weight ``h^2``.
    """
    if not h > 0:
        raise GridError(f"lattice spacing must be positive, got {h!r}")
    if isinstance(domain, dict):
        domain = Domain.from_dict(domain)
    xmin, xmax, ymin, ymax = domain.bounds()
    i = np.arange(math.floor(xmin / h) - 1, math.ceil(xmax / h) + 2)
    j = np.arange(math.floor(ymin / h) - 1, math.ceil(ymax / h) + 2)
    I, J = np.meshgrid(i, j, indexing="ij")
    inside = domain.contains(np.column_stack([I.ravel() * h, J.ravel() * h])).reshape(I.shape)
    if not inside.any():
        raise GridError("no lattice node falls inside the domain")
    nbr_in = np.ones_like(inside)
    nbr_in[1:-1, 1:-1] = inside[2:, 1:-1] & inside[:-2, 1:-1] & inside[1:-1, 2:] & inside[1:-1, :-2]
    if not (inside & nbr_in).any():
        raise GridError("domain has no interior nodes at this resolution")

    index = -np.ones(I.shape, dtype=np.int64)
    index[inside] = np.arange(inside.sum())
    lattice = np.column_stack([I[inside], J[inside]])
    coords = lattice * h
    boundary = ~nbr_in[inside]

    edges = []
    for di, dj in ((1, 0), (0, 1)):
        a = index[: I.shape[0] - di, : I.shape[1] - dj]
        b = index[di:, dj:]
        ok = (a >= 0) & (b >= 0)
        edges.append(np.column_stack([a[ok], b[ok]]))
    edges = np.concatenate(edges)
    n_nodes = coords.shape[0]
    return Grid(CARTESIAN, coords.astype(float), np.full(n_nodes, h * h), boundary,
                float(h), domain, edges, np.ones(edges.shape[0]), lattice=lattice)


def grid_from_spec(spec):
    """Build a grid from a config mapping (see the scenario format)."""
    spec = dict(spec)
    kind = spec.get("kind")
    if kind == RADIAL:
        return build_radial_grid(spec["R"], int(spec["n"]), spec.get("stretch", 0.0))
    if kind == CARTESIAN:
        return build_masked_grid(Domain.from_dict(spec["domain"]), spec["h"])
    raise GridError(f"unknown grid kind {kind!r}")


def grid_from_header(kind, n_or_h, params):
    if kind == RADIAL:
        domain_text, _, stretch = params.rpartition(";stretch=")
        domain = Domain.decode(domain_text)
        return build_radial_grid(domain.params["R"], int(n_or_h), float(stretch))
    if kind == CARTESIAN:
        return build_masked_grid(Domain.decode(params), float(n_or_h))
    raise GridError(f"unknown grid kind {kind!r}")


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values on a grid.

    ``h10`` marks a field representing an ``H^1_0`` member; such a field must
    vanish exactly on the boundary nodes.
    """

    grid: Grid
    values: np.ndarray
    h10: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise GridMismatch(f"field has shape {v.shape}, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.h10 and np.any(v[self.grid.boundary] != 0.0):
            raise BoundaryFlagError("h10 field must vanish on boundary nodes")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, f, h10=True):
        """Sample ``f`` at the nodes; ``f`` receives radii (radial) or ``(x, y)``."""
        if grid.kind == RADIAL:
            v = np.asarray(f(grid.coords), dtype=float)
        else:
            v = np.asarray(f(grid.coords[:, 0], grid.coords[:, 1]), dtype=float)
        v = np.broadcast_to(v, (grid.size,)).copy()
        if h10:
            v[grid.boundary] = 0.0
        return cls(grid, v, h10)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.size), True)

    def with_values(self, values, h10=None):
        return Field(self.grid, values, self.h10 if h10 is None else h10)

    def scaled(self, factor):
        return Field(self.grid, factor * self.values, self.h10)

    @property
    def sup(self):
        return float(np.max(np.abs(self.values)))


def _check(g, u):
    if u.grid is not g:
        raise GridMismatch("field lives on a different grid")


def same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        _check(g, f)
    return g


def laplacian(g, u):
    """Second-order discrete Laplacian; zero on boundary nodes."""
    _check(g, u)
    return Field(g, g.laplacian_values(u.values), h10=False)


def integrate(g, f):
    """Quadrature ``sum_i w_i f_i``."""
    _check(g, f)
    return g.integrate_values(f.values)


def dirichlet_energy(g, u):
    """Discrete ``int |grad u|^2`` as the edge quadratic form."""
    _check(g, u)
    if not u.h10:
        raise BoundaryFlagError("Dirichlet energy is defined for zero-boundary fields")
    return g.dirichlet_values(u.values)
