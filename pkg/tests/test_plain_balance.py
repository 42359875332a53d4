import numpy as np
import pytest
from scipy.special import xlogy

from flexbal.core import BalanceProblem, SimplexWeights, imbalance
from flexbal.divergence import DivergenceSpec, divergence_array
from flexbal.errors import ValidationError
from flexbal.plain_balance import (
    PlainBalanceConfig,
    _SmoothedObjective,
    solve_plain,
    sweep_lambda,
)

from conftest import random_problem
from oracles import central_difference

KL = DivergenceSpec.kl()


def kl_config(lam, **kw):
    return PlainBalanceConfig(divergence=KL, lam=lam, **kw)


class TestSolvePlain:
    def test_flat_covariates_keep_uniform(self):
        # Every row already matches the target: uniform is globally optimal.
        p = BalanceProblem(X=[[2.0]] * 3, Y=[0.0, 1.0, 2.0], target=[2.0],
                           conc_radius=0.1, k=1.0)
        res = solve_plain(p, kl_config(0.7))
        assert res.objective == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(res.weights.w, 1 / 3, atol=1e-9)

    def test_huge_lam_pins_uniform(self, rng):
        p = random_problem(rng, n=6, d=3, linear=False)
        res = solve_plain(p, kl_config(1e6))
        assert np.abs(res.weights.w - 1 / 6).max() < 1e-3

    def test_small_lam_matches_grid_search(self):
        p = BalanceProblem(X=[[0.0], [0.0], [3.0]], Y=[0.0, 0.0, 1.0], target=[1.0],
                           conc_radius=0.1, k=1.0)
        res = solve_plain(p, kl_config(1e-6))

        # Grid-search oracle over the 2-simplex at 1e-3 resolution.
        g = np.arange(0.0, 1.0005, 1e-3)
        w1, w2 = np.meshgrid(g, g)
        w3 = 1.0 - w1 - w2
        ok = w3 >= 0
        kl = np.where(
            ok, xlogy(w1, 3 * w1) + xlogy(w2, 3 * w2) + xlogy(np.maximum(w3, 0.0), 3 * np.maximum(w3, 0.0)), np.inf
        )
        obj = np.abs(3 * np.maximum(w3, 0.0) - 1.0) + 1e-6 * kl
        best = float(np.min(np.where(ok, obj, np.inf)))
        assert res.objective <= best + 1e-4
        assert res.weights.w[2] == pytest.approx(1 / 3, abs=5e-3)

    @pytest.mark.parametrize("spec", [DivergenceSpec.kl(), DivergenceSpec.chi_squared(), DivergenceSpec.cbps()])
    def test_returned_objective_consistent(self, spec, rng):
        p = random_problem(rng, n=12, d=4, linear=False)
        res = solve_plain(p, PlainBalanceConfig(divergence=spec, lam=0.3, max_iters=2000))
        recomputed = imbalance(p, res.weights).max_abs + 0.3 * divergence_array(
            spec, res.weights.w
        )
        assert res.objective == pytest.approx(recomputed, abs=1e-8)

    @pytest.mark.parametrize("spec", [DivergenceSpec.kl(), DivergenceSpec.chi_squared(), DivergenceSpec.cbps()])
    def test_never_worse_than_uniform(self, spec, rng):
        for _ in range(3):
            p = random_problem(rng, n=9, d=5, linear=False)
            res = solve_plain(p, PlainBalanceConfig(divergence=spec, lam=0.5, max_iters=1500))
            at_uniform = imbalance(p, SimplexWeights.uniform(9)).max_abs
            assert res.objective <= at_uniform + 1e-12

    def test_iteration_cap_returns_result(self, rng):
        p = random_problem(rng, n=10, d=6, linear=False)
        res = solve_plain(p, kl_config(1e-3, max_iters=5))
        assert res.iterations <= 5
        assert isinstance(res.converged, bool)

    def test_lambda_validation(self):
        with pytest.raises(ValidationError):
            kl_config(0.0)
        with pytest.raises(ValidationError):
            kl_config(1.0, max_iters=0)

    def test_objective_linear_in_lambda_at_fixed_weights(self, rng):
        p = random_problem(rng, n=8, d=3, linear=False)
        w = SimplexWeights(rng.dirichlet(np.ones(8)))
        imb = imbalance(p, w).max_abs
        div = divergence_array(KL, w.w)
        for lam in (0.1, 1.0, 10.0):
            assert imb + lam * div == pytest.approx(imb + lam * div)
        # two-point linearity check
        v1 = imb + 0.5 * div
        v2 = imb + 1.5 * div
        assert imb + 1.0 * div == pytest.approx((v1 + v2) / 2)

    def test_warm_start(self, rng):
        p = random_problem(rng, n=10, d=4, linear=False)
        cold = solve_plain(p, kl_config(0.01, max_iters=2500))
        warm = solve_plain(p, kl_config(0.01, max_iters=2500),
                           init_wt=np.log(cold.weights.w))
        assert warm.objective <= cold.objective + 1e-9

    def test_bad_init_shape(self, rng):
        p = random_problem(rng, n=5, d=3)
        with pytest.raises(ValidationError):
            solve_plain(p, kl_config(1.0), init_wt=np.zeros(4))


class TestSmoothedGradient:
    @pytest.mark.parametrize("spec", [DivergenceSpec.kl(), DivergenceSpec.chi_squared(), DivergenceSpec.cbps()])
    def test_matches_central_differences(self, spec, rng):
        # Analytic gradient of the tau-smoothed search objective.
        p = random_problem(rng, n=9, d=4, linear=False)
        obj = _SmoothedObjective(p, spec, lam=0.4)
        for tau in (0.3, 0.02):
            wt = rng.normal(scale=0.5, size=9)
            grad = obj.gradient(obj.evaluate(wt, tau), tau)
            fd = central_difference(lambda v: obj.evaluate(v, tau).value, wt)
            rel = np.abs(fd - grad).max() / max(1.0, np.abs(fd).max())
            assert rel < 1e-5

    def test_envelope_bounds_exact_max(self, rng):
        p = random_problem(rng, n=7, d=5, linear=False)
        obj = _SmoothedObjective(p, KL, lam=0.4)
        wt = rng.normal(size=7)
        tau = 0.05
        st = obj.evaluate(wt, tau)
        assert st.amax <= st.smax <= st.amax + tau * np.log(2 * p.d) + 1e-12


class TestSweep:
    def test_orders_and_warm_agreement(self, rng):
        p = random_problem(rng, n=8, d=3, linear=False)
        lams = [0.01, 0.1, 1.0]
        cold = sweep_lambda(p, lams, kl_config(1.0, max_iters=3000))
        warm = sweep_lambda(p, lams, kl_config(1.0, max_iters=3000), warm=True)
        assert [lam for lam, _ in cold] == lams
        assert [lam for lam, _ in warm] == lams
        for (_, a), (_, b) in zip(cold, warm):
            assert b.objective <= a.objective + 1e-3
