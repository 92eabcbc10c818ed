import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_h10
from mtflow.errors import BoundaryFlagError, GridError, GridMismatch
from mtflow.grid import (Domain, Field, build_masked_grid, build_radial_grid, dirichlet_energy,
                         grid_from_header, grid_from_spec, integrate, laplacian)


def ones(g):
    return Field(g, np.ones(g.size), h10=False)


class TestRadialGrid:
    def test_unit_disc_area(self):
        g = build_radial_grid(1.0, 128)
        assert abs(integrate(g, ones(g)) - math.pi) < 0.01 * math.pi

    def test_area_scaling(self):
        g = build_radial_grid(2.0, 64)
        assert integrate(g, ones(g)) == pytest.approx(4 * math.pi, rel=0.01)

    @pytest.mark.parametrize("R, n", [(1.0, 0), (1.0, 15), (0.0, 64), (-1.0, 64)])
    def test_rejects_bad_input(self, R, n):
        with pytest.raises(GridError):
            build_radial_grid(R, n)

    def test_nodes_and_weights(self):
        g = build_radial_grid(1.0, 64)
        h = 1 / 64
        assert np.allclose(g.coords, np.arange(65) * h)
        assert g.weights[0] == pytest.approx(math.pi * h * h / 4)
        assert np.allclose(g.weights[1:-1], 2 * math.pi * g.coords[1:-1] * h)
        assert g.boundary.tolist() == [False] * 64 + [True]
        assert np.all(g.weights > 0)

    def test_stretched_grid_clusters_at_origin(self):
        g = build_radial_grid(1.0, 256, stretch=10.0)
        dr = np.diff(g.coords)
        assert np.all(np.diff(dr) > 0)
        assert g.coords[-1] == 1.0
        assert integrate(g, ones(g)) == pytest.approx(math.pi, rel=1e-12)


class TestMaskedGrid:
    def test_disc_area_pixel_count(self):
        g = build_masked_grid(Domain.ball(1.0), 1 / 64)
        assert g.size * (1 / 64) ** 2 == pytest.approx(math.pi, rel=0.02)

    def test_annulus_area(self):
        g = build_masked_grid(Domain.annulus(0.5, 0.25), 1 / 128)
        assert integrate(g, ones(g)) == pytest.approx(math.pi * (0.25 - 0.0625), rel=0.03)

    @pytest.mark.parametrize("h", [0.0, -0.1])
    def test_rejects_bad_spacing(self, h):
        with pytest.raises(GridError):
            build_masked_grid(Domain.ball(1.0), h)

    def test_empty_interior(self):
        with pytest.raises(GridError):
            build_masked_grid(Domain.ball(0.1), 1.0)

    def test_boundary_flags(self, disc64):
        g = disc64
        inside = Domain.ball(1.0).contains
        h = g.h
        for k in np.flatnonzero(g.boundary)[:50]:
            x, y = g.coords[k]
            nbrs = np.array([[x + h, y], [x - h, y], [x, y + h], [x, y - h]])
            assert not inside(nbrs).all()
        for k in np.flatnonzero(~g.boundary)[:50]:
            x, y = g.coords[k]
            nbrs = np.array([[x + h, y], [x - h, y], [x, y + h], [x, y - h]])
            assert inside(nbrs).all()

    def test_rectangle_with_hole(self):
        d = Domain.rectangle(-1, 1, -1, 1, holes=[(0.0, 0.0, 0.25)])
        g = build_masked_grid(d, 1 / 64)
        assert integrate(g, ones(g)) == pytest.approx(4 - math.pi / 16, rel=0.03)
        assert not np.any(np.hypot(g.coords[:, 0], g.coords[:, 1]) <= 0.25)


class TestLaplacian:
    def test_parabola_radial(self):
        # 1 - r^2 has Laplacian -4; the finite-volume stencil is exact on quadratics
        for n in (64, 128, 256):
            g = build_radial_grid(1.0, n)
            u = Field.from_function(g, lambda r: 1 - r * r)
            err = np.max(np.abs(laplacian(g, u).values[g.interior] + 4))
            assert err <= (1.0 / n) ** 2

    def test_origin_stencil(self):
        g = build_radial_grid(1.0, 32)
        u = Field.from_function(g, lambda r: np.cos(r), h10=False)
        h = 1 / 32
        assert laplacian(g, u).values[0] == pytest.approx(4 * (u.values[1] - u.values[0]) / h ** 2)

    def test_constant_gives_zero(self, disc64, ball256):
        for g in (disc64, ball256):
            lap = laplacian(g, ones(g)).values
            assert np.max(np.abs(lap)) < 1e-9

    def test_paraboloid_cartesian(self, disc64):
        g = disc64
        u = Field.from_function(g, lambda x, y: x * x + y * y, h10=False)
        lap = laplacian(g, u).values
        assert np.max(np.abs(lap[g.interior] - 4)) < 1e-8
        assert np.all(lap[g.boundary] == 0)

    def test_smooth_second_order(self):
        # u = cos(pi r / 2): lap u = -(pi/2)^2 cos - (pi/2) sin / r
        errs = []
        for n in (64, 128, 256):
            g = build_radial_grid(1.0, n)
            u = Field.from_function(g, lambda r: np.cos(np.pi * r / 2))
            r = g.coords[1:-1]
            exact = -(np.pi / 2) ** 2 * np.cos(np.pi * r / 2) - (np.pi / 2) * np.sin(np.pi * r / 2) / r
            errs.append(np.max(np.abs(laplacian(g, u).values[1:-1] - exact)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.9)

    def test_summation_by_parts(self, annulus32):
        g = annulus32
        for seed in range(3):
            u = random_h10(g, seed)
            v = random_h10(g, seed + 10)
            a = g.integrate_values(v * g.laplacian_values(u))
            b = g.integrate_values(u * g.laplacian_values(v))
            norm = math.sqrt(g.integrate_values(u * u) * g.integrate_values(v * v))
            assert abs(a - b) <= 1e-10 * norm

    def test_grid_mismatch(self, ball256, disc64):
        with pytest.raises(GridMismatch):
            laplacian(disc64, ones(ball256))


class TestIntegrateAndEnergy:
    def test_integrals(self):
        g = build_radial_grid(1.0, 1024)
        assert integrate(g, ones(g)) == pytest.approx(math.pi, rel=0.01)
        f = Field.from_function(g, lambda r: 1 - r * r, h10=False)
        assert integrate(g, f) == pytest.approx(math.pi / 2, rel=0.01)
        assert integrate(g, Field.zeros(g)) == 0.0

    def test_dirichlet_energy_parabola(self):
        g = build_radial_grid(1.0, 1024)
        u = Field.from_function(g, lambda r: 1 - r * r)
        assert dirichlet_energy(g, u) == pytest.approx(2 * math.pi, rel=0.01)

    def test_dirichlet_energy_zero(self, ball256):
        assert dirichlet_energy(ball256, Field.zeros(ball256)) == 0.0

    def test_needs_boundary_flag(self, ball256):
        with pytest.raises(BoundaryFlagError):
            dirichlet_energy(ball256, ones(ball256))

    def test_quadratic_form_identity(self, disc64):
        g = disc64
        u = random_h10(g, 3)
        D = g.dirichlet_values(u)
        assert D == pytest.approx(-g.integrate_values(u * g.laplacian_values(u)), rel=1e-10)

    def test_area_converges(self):
        errs = [abs(integrate(g, ones(g)) - math.pi)
                for g in (build_masked_grid(Domain.ball(1.0), h) for h in (1 / 16, 1 / 32, 1 / 64))]
        assert errs[-1] < errs[0]
        assert errs[-1] < 2 * math.pi * (1 / 64)  # O(h) perimeter bound


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["radial", "cartesian"]))
def test_dirichlet_energy_positive(seed, kind):
    g = build_radial_grid(1.0, 32) if kind == "radial" else build_masked_grid(Domain.ball(1.0), 0.2)
    u = random_h10(g, seed)
    assert dirichlet_energy(g, Field(g, u)) > 0


class TestField:
    def test_rejects_nonfinite(self, ball256):
        v = np.zeros(ball256.size)
        v[3] = np.nan
        with pytest.raises(ValueError):
            Field(ball256, v)

    def test_rejects_wrong_shape(self, ball256):
        with pytest.raises(GridMismatch):
            Field(ball256, np.zeros(3))

    def test_boundary_must_vanish(self, ball256):
        with pytest.raises(BoundaryFlagError):
            Field(ball256, np.ones(ball256.size))
        Field(ball256, np.ones(ball256.size), h10=False)


class TestDescriptors:
    @pytest.mark.parametrize("spec", [
        {"kind": "radial", "R": 2.0, "n": 64, "stretch": 3.0},
        {"kind": "cartesian", "h": 0.1, "domain": {"kind": "annulus", "R1": 1.0, "R2": 0.3}},
        {"kind": "cartesian", "h": 0.1,
         "domain": {"kind": "rectangle", "xmin": -1, "xmax": 1, "ymin": 0, "ymax": 1,
                    "holes": [[0.0, 0.5, 0.2]]}},
    ])
    def test_header_round_trip(self, spec):
        g = grid_from_spec(spec)
        h = grid_from_header(*g.describe())
        assert h.kind == g.kind and h.size == g.size
        assert np.array_equal(h.coords, g.coords)
        assert np.array_equal(h.weights, g.weights)
        assert "," not in g.describe()[2]

    def test_domain_validation(self):
        with pytest.raises(GridError):
            Domain.annulus(0.5, 1.0)
        with pytest.raises(GridError):
            Domain("triangle", {})
