import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexbal.core import SimplexWeights
from flexbal.divergence import (
    DivergenceKind,
    DivergenceSpec,
    cbps_f,
    conjugate,
    conjugate_shift_check,
    conjugate_with_argmax,
    divergence,
    divergence_array,
)
from flexbal.errors import ValidationError

from oracles import brute_force_conjugate

ALL_SPECS = [
    ("kl", DivergenceSpec.kl()),
    ("chi2", DivergenceSpec.chi_squared()),
    ("cbps", DivergenceSpec.cbps()),
]


class TestDivergenceValues:
    @pytest.mark.parametrize("n", [2, 3, 7])
    def test_kl_zero_at_uniform(self, n):
        assert divergence(DivergenceSpec.kl(), SimplexWeights.uniform(n)) == 0.0

    def test_kl_point_mass_is_log_n(self):
        w = SimplexWeights([1.0, 0.0, 0.0, 0.0])
        assert divergence(DivergenceSpec.kl(), w) == pytest.approx(math.log(4))

    def test_chi2_direct_formula(self):
        w = SimplexWeights([0.5, 0.5, 0.0, 0.0])
        assert divergence(DivergenceSpec.chi_squared(), w) == pytest.approx(0.25)

    def test_cbps_zero_weight_is_infinite(self):
        w = SimplexWeights([0.5, 0.5, 0.0])
        assert divergence(DivergenceSpec.cbps(), w) == math.inf

    @pytest.mark.parametrize("name,spec", ALL_SPECS)
    @pytest.mark.parametrize("n", [2, 4, 9])
    def test_zero_at_uniform(self, name, spec, n):
        val = divergence(spec, SimplexWeights.uniform(n))
        assert val == pytest.approx(0.0, abs=1e-12)

    @settings(deadline=None, max_examples=40)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 10), st.sampled_from([0, 1, 2]))
    def test_nonnegative(self, seed, n, which):
        spec = ALL_SPECS[which][1]
        w = SimplexWeights(np.random.default_rng(seed).dirichlet(np.full(n, 0.7)))
        assert divergence(spec, w) >= 0.0


class TestCbpsGenerator:
    @pytest.mark.parametrize("n", [2, 5, 50])
    def test_value_at_one_is_exactly_zero(self, n):
        assert cbps_f(1.0, n) == 0.0

    def test_domain_error(self):
        with pytest.raises(ValidationError):
            cbps_f(-0.1, 5)
        with pytest.raises(ValidationError):
            cbps_f(5.1, 5)

    def test_infinite_at_zero(self):
        assert cbps_f(0.0, 5) == math.inf
        assert cbps_f(1e-12, 5) > 1e10

    @pytest.mark.parametrize("n", [2, 5, 50])
    def test_convexity_scan(self, n):
        # Nonnegative second differences on an interior grid.
        t = np.linspace(1e-3 * n, n - 1e-9, 401)
        f = np.array([cbps_f(x, n) for x in t])
        second = f[2:] - 2 * f[1:-1] + f[:-2]
        assert second.min() >= -1e-9 * max(1.0, np.abs(f).max())


class TestConjugates:
    def test_kl_constant_vector(self):
        assert conjugate(DivergenceSpec.kl(), [2.5, 2.5, 2.5]) == pytest.approx(2.5)

    def test_kl_two_point(self):
        got = conjugate(DivergenceSpec.kl(), [math.log(2.0), 0.0])
        assert got == pytest.approx(math.log(1.5))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValidationError):
            conjugate(DivergenceSpec.kl(), [np.inf, 0.0])

    @pytest.mark.parametrize("name,spec", ALL_SPECS)
    def test_at_least_mean(self, name, spec, rng):
        for _ in range(10):
            z = rng.normal(size=5)
            assert conjugate(spec, z) >= z.mean() - 1e-9

    @pytest.mark.parametrize("name,spec,tol", [
        ("kl", DivergenceSpec.kl(), 1e-6),
        ("chi2", DivergenceSpec.chi_squared(), 1e-6),
        ("cbps", DivergenceSpec.cbps(), 1e-5),
    ])
    def test_matches_brute_force(self, name, spec, tol, rng):
        for n in range(2, 7):
            for rep in range(3):
                z = rng.normal(scale=1.5, size=n)
                assert conjugate(spec, z) == pytest.approx(
                    brute_force_conjugate(spec, z, seed=rep), abs=tol
                )

    def test_chi2_maximizer_is_projection(self, rng):
        z = rng.normal(size=6)
        val, w = conjugate_with_argmax(DivergenceSpec.chi_squared(), z)
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
        direct = float(z @ w) - float(np.sum((w - 1 / 6) ** 2))
        assert val == pytest.approx(direct, abs=1e-12)


class TestFenchelAndShift:
    @pytest.mark.parametrize("name,spec", ALL_SPECS)
    def test_fenchel_inequality(self, name, spec, rng):
        for _ in range(25):
            n = int(rng.integers(2, 9))
            w = rng.dirichlet(np.full(n, 0.8))
            z = rng.normal(scale=2.0, size=n)
            lhs = float(z @ w)
            rhs = divergence_array(spec, w) + conjugate(spec, z)
            assert lhs <= rhs + 1e-7

    @pytest.mark.parametrize("name,spec", ALL_SPECS)
    def test_shift_property(self, name, spec, rng):
        for _ in range(15):
            n = int(rng.integers(2, 8))
            z = rng.normal(scale=1.5, size=n)
            c0 = float(rng.normal(scale=3.0))
            a, b = conjugate_shift_check(spec, z, c0)
            assert a == pytest.approx(b, abs=1e-7)

    def test_shift_identity_cases(self):
        spec = DivergenceSpec.kl()
        a, b = conjugate_shift_check(spec, [0.3, -0.2], 0.0)
        assert a == b
        a, b = conjugate_shift_check(spec, [0.0, 0.0], 5.0)
        assert a == pytest.approx(5.0) and b == pytest.approx(5.0)


class TestCustomF:
    def test_quadratic_custom_matches_chi2_shape(self):
        n = 4
        spec = DivergenceSpec.custom(
            f=lambda t: (t - 1.0) ** 2 / n, fprime=lambda t: 2.0 * (t - 1.0) / n,
            domain=n,
        )
        w = SimplexWeights([0.5, 0.5, 0.0, 0.0])
        assert divergence(spec, w) == pytest.approx(0.25)

    def test_rejects_nonconvex(self):
        with pytest.raises(ValidationError):
            DivergenceSpec.custom(f=lambda t: -((t - 1.0) ** 2), domain=4)

    def test_rejects_f1_nonzero(self):
        with pytest.raises(ValidationError):
            DivergenceSpec.custom(f=lambda t: (t - 1.0) ** 2 + 1e-6, domain=4)

    def test_group_size_enforced(self):
        spec = DivergenceSpec.custom(f=lambda t: (t - 1.0) ** 2, domain=4)
        with pytest.raises(ValidationError):
            divergence(spec, SimplexWeights.uniform(5))

    def test_numeric_conjugate_no_derivative(self, rng):
        n = 4
        spec = DivergenceSpec.custom(f=lambda t: (t - 1.0) ** 2 / n, domain=n)
        z = rng.normal(size=n)
        exact = conjugate(DivergenceSpec.chi_squared(), z)
        assert conjugate(spec, z) == pytest.approx(exact, abs=1e-6)


class TestKind:
    def test_builders(self):
        assert DivergenceSpec.kl().kind is DivergenceKind.KL
        assert DivergenceSpec.chi_squared().kind is DivergenceKind.CHI_SQUARED
        assert DivergenceSpec.cbps().kind is DivergenceKind.CBPS
