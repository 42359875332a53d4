import numpy as np
import pytest

from flexbal.errors import ValidationError
from flexbal.lp import LpStatus, solve_lp

from oracles import enumerate_lp_max


class TestBasics:
    def test_single_variable(self):
        sol = solve_lp([1.0], A_ub=[[1.0]], b_ub=[1.0])
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == pytest.approx(1.0)
        assert sol.x[0] == pytest.approx(1.0)

    def test_two_variables(self):
        sol = solve_lp([1.0, 1.0], A_ub=[[1.0, 1.0]], b_ub=[1.0])
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == pytest.approx(1.0)

    def test_equality(self):
        sol = solve_lp([0.0, -1.0], A_eq=[[1.0, 1.0]], b_eq=[1.0])
        assert sol.status is LpStatus.OPTIMAL
        assert sol.x[0] == pytest.approx(1.0)

    def test_infeasible(self):
        sol = solve_lp([1.0], A_eq=[[1.0]], b_eq=[-1.0])
        assert sol.status is LpStatus.INFEASIBLE

    def test_unbounded(self):
        sol = solve_lp([1.0], A_ub=[[0.0]], b_ub=[1.0])
        assert sol.status is LpStatus.UNBOUNDED

    def test_redundant_rows(self):
        sol = solve_lp(
            [1.0, 0.0],
            A_eq=[[1.0, 1.0], [2.0, 2.0]],
            b_eq=[1.0, 2.0],
            A_ub=[[1.0, 0.0]],
            b_ub=[0.75],
        )
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == pytest.approx(0.75)

    def test_validates_shapes(self):
        with pytest.raises(ValidationError):
            solve_lp([1.0, 2.0], A_ub=[[1.0]], b_ub=[1.0])
        with pytest.raises(ValidationError):
            solve_lp([1.0])

    def test_feasibility_residuals_certified(self):
        sol = solve_lp(
            [3.0, 1.0, 0.5],
            A_eq=[[1.0, 2.0, -1.0]],
            b_eq=[0.5],
            A_ub=[[1.0, 1.0, 1.0]],
            b_ub=[2.0],
        )
        assert sol.status is LpStatus.OPTIMAL
        assert sol.residual <= 1e-7


class TestAgainstEnumeration:
    def test_random_instances(self, rng):
        mismatches = 0
        for _ in range(120):
            n = int(rng.integers(2, 6))
            m_ub = int(rng.integers(1, 3))
            m_eq = int(rng.integers(0, 2))
            c = rng.normal(size=n)
            A_ub = np.vstack([rng.normal(size=(m_ub, n)), np.ones((1, n))])
            b_ub = np.concatenate([rng.uniform(0.2, 2.0, m_ub), [4.0]])
            A_eq = rng.normal(size=(m_eq, n)) if m_eq else None
            b_eq = rng.uniform(-0.5, 0.5, m_eq) if m_eq else None
            sol = solve_lp(c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub)
            ref = enumerate_lp_max(c, A_eq, b_eq, A_ub, b_ub)
            if ref is None:
                mismatches += sol.status is not LpStatus.INFEASIBLE
            else:
                ok = sol.status is LpStatus.OPTIMAL and sol.objective == pytest.approx(
                    ref, abs=1e-7 * (1 + abs(ref))
                )
                mismatches += not ok
        assert mismatches == 0

    def test_degenerate_rhs(self, rng):
        # Fully degenerate equality system (b = 0) stays solvable.
        for _ in range(20):
            A_eq = rng.normal(size=(3, 4))
            sol = solve_lp(
                -np.ones(4), A_eq=A_eq, b_eq=np.zeros(3),
                A_ub=np.ones((1, 4)), b_ub=[1.0],
            )
            assert sol.status is LpStatus.OPTIMAL
            assert sol.objective == pytest.approx(0.0, abs=1e-9)
