import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E_MOSER, E_PARABOLA, MASS_MOSER, MASS_PARABOLA, random_h10
from mtflow.energy import (EXP_GUARD, Dirichlet, EnergyLedgerRow, Volume, check_lower_bound,
                           kinetic, lambda_dirichlet, lambda_upper_bound, lambda_volume, mt_energy,
                           weighted_mass)
from mtflow.errors import BlowupOverflow, DegenerateState, GridMismatch, NotApplicable
from mtflow.flow import initial_state, step
from mtflow.grid import Field, build_radial_grid
from mtflow.seeds import MoserParams, moser_function
from mtflow.stationary import solve_for_lambda


@pytest.fixture(scope="module")
def parabola(ball1024):
    return Field.from_function(ball1024, lambda r: 1 - r * r)


@pytest.fixture(scope="module")
def stationary_pair():
    g = build_radial_grid(1.0, 1024)
    res = solve_for_lambda(3.0)
    return 3.0, res.on_grid(g)


class TestMTEnergy:
    def test_zero(self, ball256):
        assert mt_energy(Field.zeros(ball256)) == 0.0

    def test_unit_field(self, ball1024):
        u = Field(ball1024, np.ones(ball1024.size), h10=False)
        assert mt_energy(u) == pytest.approx(0.5 * (math.e - 1) * math.pi, rel=1e-12)

    def test_parabola_matches_quadrature_oracle(self, parabola):
        assert mt_energy(parabola) == pytest.approx(E_PARABOLA, rel=5e-3)

    def test_small_values_no_cancellation(self, ball256):
        u = Field(ball256, np.full(ball256.size, 1e-9), h10=False)
        assert mt_energy(u) == pytest.approx(0.5 * 1e-18 * math.pi, rel=1e-9)

    def test_overflow_guard(self, ball256):
        v = np.zeros(ball256.size)
        v[0] = math.sqrt(EXP_GUARD) + 0.01
        with pytest.raises(BlowupOverflow):
            mt_energy(Field(ball256, v))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.0, 3.0), st.floats(0.01, 1.0))
    def test_monotone_in_amplitude(self, a, da):
        g = build_radial_grid(1.0, 64)
        m = moser_function(MoserParams(1 / math.e, 1.0), g)
        assert mt_energy(m.scaled(a + da)) > mt_energy(m.scaled(a))


class TestMultipliers:
    def test_lambda_volume_on_stationary(self, stationary_pair):
        lam, u = stationary_pair
        assert lambda_volume(u) == pytest.approx(lam, abs=1e-3)

    def test_lambda_dirichlet_on_stationary(self, stationary_pair):
        lam, u = stationary_pair
        assert lambda_dirichlet(u) == pytest.approx(lam, abs=1e-3)

    def test_lambda_volume_ratio(self, ball1024, parabola):
        D = ball1024.dirichlet_values(parabola.values)
        assert lambda_volume(parabola) == pytest.approx(D / weighted_mass(parabola), rel=1e-14)
        assert lambda_volume(parabola) == pytest.approx(2 * math.pi / MASS_PARABOLA, rel=0.01)

    def test_zero_field_is_degenerate(self, ball256):
        with pytest.raises(DegenerateState):
            lambda_volume(Field.zeros(ball256))
        with pytest.raises(DegenerateState):
            lambda_dirichlet(Field.zeros(ball256))

    def test_dirichlet_multiplier_not_scale_invariant(self, parabola):
        assert lambda_dirichlet(parabola.scaled(2.0)) != pytest.approx(lambda_dirichlet(parabola))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_positive(self, seed):
        g = build_radial_grid(1.0, 32)
        u = Field(g, 0.5 * random_h10(g, seed))
        assert lambda_volume(u) > 0
        assert lambda_dirichlet(u) > 0


class TestBounds:
    def test_upper_bound(self):
        assert lambda_upper_bound(Volume(1.0), 4 * math.pi) == pytest.approx(8 * math.pi)
        assert lambda_upper_bound(Volume(2.0), 2.0) == 2.0

    def test_upper_bound_not_applicable(self):
        with pytest.raises(NotApplicable):
            lambda_upper_bound(Dirichlet(1.0), 1.0)

    def test_constraint_targets_positive(self):
        with pytest.raises(ValueError):
            Volume(0.0)
        with pytest.raises(ValueError):
            Dirichlet(-1.0)

    def test_lower_bound_zero(self, ball256):
        rep = check_lower_bound(Field.zeros(ball256))
        assert (rep.mass, rep.half_energy, rep.ok) == (0.0, 0.0, True)

    def test_lower_bound_parabola(self, parabola):
        rep = check_lower_bound(parabola)
        assert rep.ok
        assert rep.mass == pytest.approx(MASS_PARABOLA, rel=5e-3)
        assert rep.half_energy == pytest.approx(E_PARABOLA / 2, rel=5e-3)

    def test_lower_bound_moser(self, ball1024):
        rep = check_lower_bound(moser_function(MoserParams(1 / math.e, 1.0), ball1024))
        assert rep.ok
        assert rep.mass == pytest.approx(MASS_MOSER, rel=0.01)
        assert rep.half_energy == pytest.approx(E_MOSER / 2, rel=0.01)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 4.0))
    def test_lower_bound_corpus(self, seed, amp):
        g = build_radial_grid(1.0, 32)
        v = random_h10(g, seed)
        u = Field(g, amp * v / np.max(np.abs(v)))
        assert check_lower_bound(u).ok


class TestKinetic:
    def test_zero_rate(self, parabola):
        assert kinetic(parabola, Field.zeros(parabola.grid)) == 0.0

    def test_unit_rate(self, ball1024):
        one = Field(ball1024, np.ones(ball1024.size), h10=False)
        assert kinetic(Field.zeros(ball1024), one) == pytest.approx(math.pi, rel=1e-12)

    def test_grid_mismatch(self, ball256, ball1024):
        with pytest.raises(GridMismatch):
            kinetic(Field.zeros(ball256), Field.zeros(ball1024))

    def test_dirichlet_flow_energy_rate(self, ball1024):
        # in Dirichlet mode dE/dt = lambda^{-1} int u_t^2 e^{u^2}
        u = moser_function(MoserParams(1 / math.e, 1.0), ball1024).scaled(2.0)
        s = step(initial_state(u, "dirichlet", dt=1e-3))
        for _ in range(20):
            s = step(s)
        s1 = step(s)
        ut = (s1.u.values - s.u.values) / s.dt
        kin = kinetic(s.u, Field(ball1024, ut))
        rate = s1.lam * (mt_energy(s1.u) - mt_energy(s.u)) / s.dt
        assert kin == pytest.approx(rate, rel=0.1)


def test_ledger_row_schema():
    row = EnergyLedgerRow(0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    assert EnergyLedgerRow.FIELDS == ("t", "E", "D", "lambda", "u_max", "kinetic",
                                      "constraint_residual")
    assert row.as_tuple() == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
