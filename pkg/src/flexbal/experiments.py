"""Reusable experiment drivers behind the command line.

Each driver is deterministic given its seed: per-replication seeds are
spawned from one root sequence, and results are keyed by replication
index, so scheduling plays no role in the output.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import weighted_estimate
from .divergence import DivergenceSpec
from .fbal import FbalConfig, solve_fbal
from .inference import estimate_ate, select_k
from .plain_balance import PlainBalanceConfig, solve_plain, sweep_lambda
from .simgen import SimData, SimKind, SimSpec, generate

DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
DEFAULT_BUDGET_GRID = tuple(np.geomspace(0.01, 30.0, 32))

METHOD_DIVERGENCES = {
    "ebal": DivergenceSpec.kl,
    "sbw": DivergenceSpec.chi_squared,
    "ncbps": DivergenceSpec.cbps,
}


def _rep_seeds(seed: int, reps: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(reps)]


def _with_selected_budgets(sim: SimData, budget_grid) -> SimData:
    """Re-budget both sides by the residual bend on their own data.

    The frozen target object is passed through both constructors, so the
    rebudgeted problems still share it.
    """
    from .core import BalanceProblem

    def rebudget(problem):
        k = select_k(problem.X, problem.Y, budget_grid).k
        return BalanceProblem(
            X=problem.X, Y=problem.Y, target=problem.target,
            conc_radius=problem.conc_radius, k=k, alpha=problem.alpha,
        )

    return SimData(
        treated=rebudget(sim.treated), control=rebudget(sim.control), ate=sim.ate,
        mu1=sim.mu1, mu0=sim.mu0, extras=sim.extras,
    )


def replicate_run(
    sim_kind: str,
    n: int,
    d: int,
    reps: int,
    seed: int,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    methods: Sequence[str] = ("ebal", "sbw", "ncbps"),
    include_fbal: bool = True,
    plain_max_iters: int = 3000,
    fbal_max_iters: int = 3000,
    alpha: float = 0.05,
    budget_grid: Sequence[float] = DEFAULT_BUDGET_GRID,
) -> list[dict]:
    """Estimate-error table across methods, regularization values and
    replications; one row per (method, lambda, rep)."""
    unknown = [m for m in methods if m not in METHOD_DIVERGENCES]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    kind = SimKind(sim_kind)
    rows: list[dict] = []
    for rep, rep_seed in enumerate(_rep_seeds(seed, reps)):
        sim = generate(SimSpec(kind=kind, n=n, d=d, seed=rep_seed, alpha=alpha))
        for method in methods:
            cfg = PlainBalanceConfig(
                divergence=METHOD_DIVERGENCES[method](),
                lam=1.0,
                max_iters=plain_max_iters,
            )
            treated_sweep = dict(sweep_lambda(sim.treated, lambda_grid, cfg, warm=True))
            control_sweep = dict(sweep_lambda(sim.control, lambda_grid, cfg, warm=True))
            for lam in lambda_grid:
                est = weighted_estimate(
                    sim.treated, treated_sweep[float(lam)].weights
                ) - weighted_estimate(sim.control, control_sweep[float(lam)].weights)
                rows.append(
                    {
                        "method": method,
                        "lambda": float(lam),
                        "rep": rep,
                        "estimate": est,
                        "abs_error": abs(est - sim.ate),
                    }
                )
        if include_fbal:
            sim_b = _with_selected_budgets(sim, budget_grid)
            report = estimate_ate(
                sim_b.treated,
                sim_b.control,
                FbalConfig(max_iters=fbal_max_iters),
            )
            rows.append(
                {
                    "method": "fbal",
                    "lambda": None,
                    "rep": rep,
                    "estimate": report.ate_hat,
                    "abs_error": abs(report.ate_hat - sim.ate),
                }
            )
    return rows


def adaptivity_summary(rows: list[dict]) -> dict:
    """Median |error| per (method, lambda) cell."""
    cells: dict[tuple, list[float]] = {}
    for row in rows:
        cells.setdefault((row["method"], row["lambda"]), []).append(row["abs_error"])
    return {key: float(np.median(v)) for key, v in cells.items()}


def coverage_run(
    n: int,
    d: int,
    k_true: float,
    alpha: float,
    reps: int,
    seed: int,
    fbal_max_iters: int = 2000,
) -> dict:
    """Empirical coverage of |estimate - truth| <= nu on the exactly
    linear generative process (treated side)."""
    covered = 0
    radii = []
    errors = []
    for rep_seed in _rep_seeds(seed, reps):
        sim = generate(
            SimSpec(
                kind=SimKind.LINEAR_SPARSE, n=n, d=d, seed=rep_seed,
                alpha=alpha, k_true=k_true,
            )
        )
        sol = solve_fbal(sim.treated, FbalConfig(max_iters=fbal_max_iters))
        err = abs(weighted_estimate(sim.treated, sol.weights) - sim.mu1)
        covered += err <= sol.nu
        radii.append(sol.nu)
        errors.append(err)
    return {
        "reps": reps,
        "coverage": covered / reps,
        "mean_radius": float(np.mean(radii)),
        "mean_abs_error": float(np.mean(errors)),
        "alpha": alpha,
        "n": n,
        "d": d,
        "k_true": k_true,
    }


def consistency_run(
    n_grid: Sequence[int],
    d: int,
    reps_per_point: int,
    seed: int,
    k_true: float = 3.0,
    fbal_max_iters: int = 2500,
) -> list[dict]:
    """Median treated-side error across growing sample sizes, with the
    naive-to-certificate radius ratio re-checked at each point."""
    out = []
    for idx, n in enumerate(n_grid):
        errs = []
        ratios = []
        for rep_seed in _rep_seeds(seed + idx, reps_per_point):
            sim = generate(
                SimSpec(kind=SimKind.LINEAR_SPARSE, n=int(n), d=d, seed=rep_seed,
                        k_true=k_true)
            )
            sol = solve_fbal(sim.treated, FbalConfig(max_iters=fbal_max_iters))
            errs.append(abs(weighted_estimate(sim.treated, sol.weights) - sim.mu1))
            from .inference import naive_radius

            ratios.append(naive_radius(sim.treated, sol.weights) / max(sol.nu, 1e-300))
        out.append(
            {
                "n": int(n),
                "median_abs_error": float(np.median(errs)),
                "min_naive_to_nu_ratio": float(np.min(ratios)),
            }
        )
    return out
