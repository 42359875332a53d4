"""Estimates, intervals and supporting diagnostics.

Builds point estimates for the treatment-specific means from balancing
weights, wraps them with certified confidence radii, combines both sides
into a treatment-effect report, selects the l1 outcome budget from a
lasso regularization path ("residual bend"), and provides a Monte Carlo
sweep checking that errors shrink with sample size.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from sklearn.linear_model import lasso_path

from .core import (
    BalanceProblem,
    SimplexWeights,
    effective_sample_size,
    imbalance,
    weighted_estimate,
)
from .divergence import divergence_array
from .errors import ValidationError
from .fbal import FbalConfig, asymmetric_interval, solve_fbal
from .plain_balance import BalanceResult

_JSON_SCHEMA_VERSION = 1


class EstimateMethod(enum.Enum):
    NAIVE = "naive"
    FBAL_SYMMETRIC = "fbal_symmetric"
    FBAL_ASYMMETRIC = "fbal_asymmetric"
    PLAIN_WITH_CERTIFICATE = "plain_with_certificate"


@dataclass(frozen=True)
class EstimateReport:
    mu_hat: float
    radius: float
    interval: tuple[float, float]
    method: EstimateMethod
    diagnostics: dict

    def to_json_dict(self) -> dict:
        return {
            "mu_hat": self.mu_hat,
            "radius": self.radius,
            "interval": list(self.interval),
            "method": self.method.value,
            "diagnostics": dict(self.diagnostics),
        }


@dataclass(frozen=True)
class AteReport:
    ate_hat: float
    radius: float
    mu1_report: EstimateReport
    mu0_report: EstimateReport

    def to_json_dict(self) -> dict:
        return {
            "ate_hat": self.ate_hat,
            "radius": self.radius,
            "interval": [self.ate_hat - self.radius, self.ate_hat + self.radius],
            "mu1_report": self.mu1_report.to_json_dict(),
            "mu0_report": self.mu0_report.to_json_dict(),
        }


def naive_radius(problem: BalanceProblem, weights: SimplexWeights) -> float:
    """k * (sup-norm imbalance + concentration radius): the certificate
    that ignores the divergence machinery entirely."""
    return problem.k * (imbalance(problem, weights).max_abs + problem.conc_radius)


def _diagnostics(problem, weights, lam=None, delta=None) -> dict:
    return {
        "imbalance_max": imbalance(problem, weights).max_abs,
        "divergence": None,
        "ess": effective_sample_size(weights),
        "lambda": lam,
        "delta": delta,
    }


def naive_report(problem: BalanceProblem, weights: SimplexWeights) -> EstimateReport:
    mu = weighted_estimate(problem, weights)
    radius = naive_radius(problem, weights)
    return EstimateReport(
        mu_hat=mu,
        radius=radius,
        interval=(mu - radius, mu + radius),
        method=EstimateMethod.NAIVE,
        diagnostics=_diagnostics(problem, weights),
    )


def plain_report(
    problem: BalanceProblem, result: BalanceResult, lam: float
) -> EstimateReport:
    """Plain-balancing weights with the pessimistic certified radius.

    Any fixed feasible (lam, delta) yields a valid certificate; the
    (delta=0, lam->0) member of that family is the naive radius, which
    needs no further solve and is used here.
    """
    mu = weighted_estimate(problem, result.weights)
    radius = naive_radius(problem, result.weights)
    diag = _diagnostics(problem, result.weights, lam=lam)
    diag["divergence"] = result.divergence_value
    return EstimateReport(
        mu_hat=mu,
        radius=radius,
        interval=(mu - radius, mu + radius),
        method=EstimateMethod.PLAIN_WITH_CERTIFICATE,
        diagnostics=diag,
    )


def fbal_report(
    problem: BalanceProblem,
    config: FbalConfig | None = None,
    solution=None,
) -> EstimateReport:
    """Symmetric certified interval from the joint solver.

    Pass ``solution`` to wrap an existing solve instead of re-running.
    """
    sol = solution if solution is not None else solve_fbal(problem, config)
    mu = weighted_estimate(problem, sol.weights)
    diag = _diagnostics(problem, sol.weights, lam=sol.lam, delta=sol.delta)
    diag["divergence"] = divergence_array(
        (config or FbalConfig()).divergence, sol.weights.w
    )
    diag["betas"] = {str(z): b for z, b in sol.betas.items()}
    diag["converged"] = sol.converged
    return EstimateReport(
        mu_hat=mu,
        radius=sol.nu,
        interval=(mu - sol.nu, mu + sol.nu),
        method=EstimateMethod.FBAL_SYMMETRIC,
        diagnostics=diag,
    )


def fbal_asymmetric_report(
    problem: BalanceProblem,
    config: FbalConfig | None = None,
    interval=None,
) -> EstimateReport:
    if interval is None:
        interval = asymmetric_interval(problem, config)
    mid = 0.5 * (interval.lower + interval.upper)
    diag = {
        "crossed": interval.crossed,
        "nu_plus": interval.nu_plus,
        "nu_minus": interval.nu_minus,
        "mu_plus": interval.mu_plus,
        "mu_minus": interval.mu_minus,
    }
    return EstimateReport(
        mu_hat=mid,
        radius=0.5 * (interval.upper - interval.lower),
        interval=(interval.lower, interval.upper),
        method=EstimateMethod.FBAL_ASYMMETRIC,
        diagnostics=diag,
    )


def estimate_ate(
    problem_treated: BalanceProblem,
    problem_control: BalanceProblem,
    config: FbalConfig | None = None,
) -> AteReport:
    """Certified treatment-effect report from two one-sided solves.

    Both problems must reference the *same* target vector object and
    share the concentration radius: the concentration event is invoked
    once, jointly, so the combined radius is simply the sum.
    """
    if problem_treated.target is not problem_control.target:
        raise ValidationError(
            "treated and control problems must share one target vector object"
        )
    if problem_treated.conc_radius != problem_control.conc_radius:
        raise ValidationError("both problems must share the concentration radius")
    rep1 = fbal_report(problem_treated, config)
    rep0 = fbal_report(problem_control, config)
    return AteReport(
        ate_hat=rep1.mu_hat - rep0.mu_hat,
        radius=rep1.radius + rep0.radius,
        mu1_report=rep1,
        mu0_report=rep0,
    )


@dataclass(frozen=True)
class SelectKResult:
    k: float
    path: tuple[tuple[float, float], ...]
    bend_found: bool
    threshold: float


def select_k(
    X,
    Y,
    grid: Sequence[float],
    bend_threshold: float = 0.01,
    n_alphas: int = 100,
    eps: float = 1e-4,
) -> SelectKResult:
    """Pick the l1 outcome budget at the residual bend of a lasso path.

    Fits an l1-penalized least-squares path (coordinate descent over a
    decreasing penalty grid), records (l1 norm, training MSE) pairs, and
    returns the smallest grid value whose best achievable MSE is at most
    ``bend_threshold`` relative to Var(Y).  If no grid value qualifies,
    the largest is returned with ``bend_found=False``.

    No intercept is fitted; include a constant column in X if the
    outcomes need an offset (the ingest pipeline adds one).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    grid = [float(g) for g in grid]
    if len(grid) < 1 or any(b <= 0 for b in grid) or any(
        grid[i] >= grid[i + 1] for i in range(len(grid) - 1)
    ):
        raise ValidationError("grid must be strictly increasing and positive")
    _, coefs, _ = lasso_path(X, Y, n_alphas=n_alphas, eps=eps)
    norms = np.abs(coefs).sum(axis=0)
    residuals = Y[:, None] - X @ coefs
    mses = np.mean(residuals**2, axis=0)
    # Include the empty model (norm 0) explicitly.
    norms = np.concatenate([[0.0], norms])
    mses = np.concatenate([[float(np.mean(Y**2))], mses])
    path = tuple(zip(norms.tolist(), mses.tolist()))

    var_y = float(np.var(Y))
    for b in grid:
        reachable = mses[norms <= b]
        best = float(reachable.min()) if reachable.size else math.inf
        ok = best <= bend_threshold * var_y if var_y > 0 else best <= 1e-18
        if ok:
            return SelectKResult(k=b, path=path, bend_found=True, threshold=bend_threshold)
    return SelectKResult(k=grid[-1], path=path, bend_found=False, threshold=bend_threshold)


def consistency_sweep(
    dgp: Callable[[int, int], tuple[BalanceProblem, float]],
    n_grid: Sequence[int],
    reps_per_point: int = 100,
    base_seed: int = 0,
    config: FbalConfig | None = None,
) -> list[tuple[int, float]]:
    """Median |estimate - truth| across a grid of sample sizes.

    ``dgp(n, seed)`` must return a treated-side problem and the true
    treatment-specific mean.  On a well-specified generative process the
    medians decrease as n grows.
    """
    out = []
    seed_root = np.random.SeedSequence(base_seed)
    seeds = seed_root.spawn(len(n_grid))
    for n, seq in zip(n_grid, seeds):
        child = seq.generate_state(reps_per_point)
        errs = []
        for r in range(reps_per_point):
            problem, mu_true = dgp(int(n), int(child[r]))
            sol = solve_fbal(problem, config)
            errs.append(abs(weighted_estimate(problem, sol.weights) - mu_true))
        out.append((int(n), float(np.median(errs))))
    return out
