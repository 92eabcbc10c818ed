import math

import numpy as np
import pytest
from scipy.special import j0, jn_zeros

from conftest import FOUR_PI
from mtflow.energy import lambda_volume
from mtflow.errors import BracketError
from mtflow.flow import residual
from mtflow.grid import build_radial_grid
from mtflow.stationary import (a_for_lambda, branch, dirichlet_energy_at, first_zero, shoot,
                               solve_dirichlet, solve_for_lambda, solutions_at_energy)

J01 = jn_zeros(0, 1)[0]


class TestShoot:
    def test_zero_amplitude(self):
        res = shoot(2.0, 0.0, 1.0)
        assert np.all(res.u == 0)

    def test_linear_regime(self):
        # a = 1e-3: the trajectory is a J0(sqrt(lam) r) to relative O(a^2)
        lam, a, R = 1.0, 1e-3, 1.0
        res = shoot(lam, a, R, 4000)
        assert res.terminal == pytest.approx(a * j0(math.sqrt(lam) * R), rel=1e-6)

    def test_fourth_order(self):
        ref = shoot(3.0, 1.0, 1.0, 6400).terminal
        errs = [abs(shoot(3.0, 1.0, 1.0, n).terminal - ref) for n in (100, 200, 400)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 3.7)

    def test_regular_start(self):
        # u = a - lam a e^{a^2} r^2 / 4 + O(r^4) near the origin
        lam, a = 2.0, 1.5
        res = shoot(lam, a, 1.0)
        r0 = res.r[0]
        assert res.du[0] == pytest.approx(-0.5 * lam * a * math.exp(a * a) * r0, rel=1e-6)
        assert res(np.array([0.0]))[0] == 1.5

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            shoot(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            shoot(1.0, -1.0, 1.0)


class TestSolveDirichlet:
    def test_converged_solution(self):
        res = solve_dirichlet(4.0, 1.0, (0.1, 1.5))
        assert res.converged
        assert res.residual <= 1e-8 * res.a
        assert np.all(res.u[:-1] > 0)

    def test_empty_bracket(self):
        with pytest.raises(BracketError):
            solve_dirichlet(4.0, 1.0, (2.0, 2.5))

    def test_small_amplitude_near_eigenvalue(self):
        a = a_for_lambda(J01 ** 2 * (1 - 1e-4))
        assert a < 0.05

    def test_lambda_volume_identity(self):
        g = build_radial_grid(1.0, 1024)
        res = solve_for_lambda(2.5)
        assert lambda_volume(res.on_grid(g)) == pytest.approx(2.5, abs=1e-3)

    def test_discrete_residual_second_order(self):
        lam = 2.0
        res = solve_for_lambda(lam, n=20000)
        errs = []
        for n in (256, 512, 1024):
            g = build_radial_grid(1.0, n)
            u = res.on_grid(g)
            errs.append(np.max(np.abs(residual(u, lam).values[g.interior])))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.9)

    def test_scaling_law(self):
        a = 1.2
        lam = (first_zero(a) / 2.0) ** 2
        res = solve_dirichlet(lam, 2.0, (1.1, 1.3))
        assert res.a == pytest.approx(a, rel=1e-7)


@pytest.fixture(scope="module")
def table():
    return branch(np.linspace(5.7, 2.0, 12), 1.0)


class TestBranch:
    def test_complete_and_ordered(self, table):
        rows, complete = table
        assert complete
        a = [r.a for r in rows]
        assert np.all(np.diff(a) > 0)

    def test_small_data_limit(self, table):
        rows, _ = table
        assert rows[0].dirichlet_energy < 0.1 * rows[-1].dirichlet_energy
        D = [dirichlet_energy_at(a) for a in (1e-3, 1e-2)]
        assert D[1] < 1e-3 and D[0] < D[1]

    def test_rows_revalidated(self, table):
        rows, _ = table
        for r in rows[::4]:
            res = solve_dirichlet(r.lam, 1.0, (0.5 * r.a, 1.5 * r.a))
            assert res.a == pytest.approx(r.a, abs=1e-6)
            assert r.u_terminal_residual <= 1e-8 * r.a

    def test_continuation_loss_is_partial(self):
        rows, complete = branch([4.0, 3.0, 100.0], 1.0)
        assert not complete
        assert len(rows) == 2

    def test_energy_scale_invariant(self):
        res = solve_for_lambda(1.0, R=1.0)
        res2 = solve_for_lambda(0.25, R=2.0)
        assert res2.a == pytest.approx(res.a, rel=1e-7)
        assert res2.dirichlet_energy() == pytest.approx(res.dirichlet_energy(), rel=1e-7)
        assert res.dirichlet_energy() == pytest.approx(dirichlet_energy_at(res.a), rel=1e-8)


def test_solutions_at_energy_synthetic_fold():
    # branch rows straddling the energy maximum near a = 4
    from mtflow.stationary import BranchRow
    rows = []
    for a in (2.5, 4.0, 5.5):
        rows.append(BranchRow((first_zero(a)) ** 2, a, dirichlet_energy_at(a), 0.0, 0.0))
    alpha = FOUR_PI * 1.005
    sols = solutions_at_energy(alpha, rows)
    assert len(sols) == 2
    assert sols[1].a - sols[0].a > 0.5
    for s in sols:
        assert s.dirichlet_energy() == pytest.approx(alpha, abs=1e-2)
