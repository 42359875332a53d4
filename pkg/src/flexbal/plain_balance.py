"""Penalized covariate balancing with a fixed regularization weight.

Minimizes   max_j | (X^T w)_j - target_j |  +  lam * D(w || uniform)
over the simplex, which covers entropy balancing (KL), stable balancing
weights (chi-squared) and normalized inverse-propensity balancing (CBPS)
depending on the divergence.

The weights are reparameterized as w = softmax(wt) and optimized by
gradient descent with a backtracking Armijo line search.  The kinked max
term is searched through its smooth upper envelope

    S_tau(t) = tau * log sum_j [exp(t_j/tau) + exp(-t_j/tau)]
             in [max_j |t_j|,  max_j |t_j| + tau log 2d]

with a continuation schedule driving tau down to
``smoothing / log(2d)``, so the final search objective sits within
``smoothing`` of the exact one.  (A plain subgradient step at the argmax
coordinate stalls far from the optimum on these problems: it improves
one coordinate of the max per step and zigzags when many are active.)
The returned weights are the accepted iterate with the best exact
objective, and all reported values are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    BalanceProblem,
    ImbalanceReport,
    SimplexWeights,
    max_abs_entry,
)
from .divergence import (
    DivergenceKind,
    DivergenceSpec,
    divergence_array,
    divergence_grad_array,
)
from .errors import SolverFailure, ValidationError

_ARMIJO_C = 1e-4
_BACKTRACK = 0.5
_MAX_HALVINGS = 60
_TAU_SHRINK = 5.0


@dataclass(frozen=True)
class PlainBalanceConfig:
    """Solver settings; ``lam`` is the regularization weight (> 0) and
    ``smoothing`` the additive accuracy of the smoothed max at the final
    continuation stage."""

    divergence: DivergenceSpec
    lam: float
    max_iters: int = 20_000
    step_size: float = 1.0
    grad_tolerance: float = 1e-7
    smoothing: float = 1e-4

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam <= 0:
            raise ValidationError("lam must be finite and positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.smoothing > 0:
            raise ValidationError("smoothing must be positive")


@dataclass(frozen=True)
class BalanceResult:
    weights: SimplexWeights
    objective: float
    imbalance: ImbalanceReport
    divergence_value: float
    iterations: int
    converged: bool


class _State:
    __slots__ = ("w", "log_w", "gap", "amax", "j", "smax", "div", "value")


class _SmoothedObjective:
    """S_tau(imbalance) + lam * divergence in softmax coordinates."""

    def __init__(self, problem: BalanceProblem, spec: DivergenceSpec, lam: float):
        self.p = problem
        self.spec = spec
        self.lam = lam
        self.is_kl = spec.kind is DivergenceKind.KL
        self.Xt = np.ascontiguousarray(problem.X.T)
        self.log_n = math.log(problem.n_g)

    def evaluate(self, wt: np.ndarray, tau: float) -> _State:
        st = _State()
        m = float(wt.max())
        e = np.exp(wt - m)
        total = float(e.sum())
        st.w = e / total
        st.log_w = wt - (m + math.log(total))
        st.gap = self.Xt @ st.w - self.p.target
        st.amax, st.j = max_abs_entry(st.gap)
        a = np.abs(st.gap)
        peak = st.amax / tau
        st.smax = st.amax + tau * math.log(
            float(np.sum(np.exp(a / tau - peak) + np.exp(-a / tau - peak)))
        )
        if self.is_kl:
            st.div = max(0.0, float(st.w @ st.log_w) + self.log_n)
        else:
            st.div = divergence_array(self.spec, st.w)
        st.value = st.smax + self.lam * st.div
        return st

    def gradient(self, st: _State, tau: float) -> np.ndarray:
        # Softmax weights over the 2d signed coordinates of the gap.
        a = st.gap / tau
        peak = float(np.abs(a).max())
        e_plus = np.exp(a - peak)
        e_minus = np.exp(-a - peak)
        norm = float(e_plus.sum() + e_minus.sum())
        coef = (e_plus - e_minus) / norm
        if self.is_kl:
            div_grad = st.log_w + (self.log_n + 1.0)
        else:
            div_grad = divergence_grad_array(self.spec, st.w)
        g_w = self.p.X @ coef + self.lam * div_grad
        return st.w * (g_w - float(g_w @ st.w))


def _descend(objective, wt, tau, state, budget, step, grad_tol):
    """Armijo descent at fixed tau; returns updated point and step."""
    used = 0
    converged = False
    while used < budget:
        grad = objective.gradient(state, tau)
        if float(np.abs(grad).max()) < grad_tol:
            converged = True
            break
        sq = float(grad @ grad)
        s = step
        accepted = False
        for _ in range(_MAX_HALVINGS):
            cand = wt - s * grad
            cand_state = objective.evaluate(cand, tau)
            if math.isnan(cand_state.value):
                raise SolverFailure("non-finite objective during optimization")
            if cand_state.value <= state.value - _ARMIJO_C * s * sq:
                accepted = True
                break
            s *= _BACKTRACK
        used += 1
        if not accepted:
            converged = True  # no descent at machine resolution
            break
        wt, state = cand, cand_state
        step = min(s * 2.0, 1e6)
    return wt, state, step, used, converged


def solve_plain(
    problem: BalanceProblem,
    config: PlainBalanceConfig,
    init_wt: np.ndarray | None = None,
) -> BalanceResult:
    """Run the fixed-lam balancing solve.

    Starts from uniform weights (``wt = 0``) unless ``init_wt`` carries a
    warm start (softmax logits), as in descending-lam sweeps.  The
    returned objective never exceeds the objective at the starting point;
    if the iteration cap is hit the best iterate so far is still returned
    with ``converged=False`` (any feasible point is a meaningful
    solution).
    """
    n = problem.n_g
    two_d = 2.0 * problem.d
    obj = _SmoothedObjective(problem, config.divergence, config.lam)
    if init_wt is None:
        wt = np.zeros(n)
    else:
        wt = np.asarray(init_wt, dtype=float).copy()
        if wt.shape != (n,):
            raise ValidationError("init_wt must have one entry per group row")

    tau_floor = config.smoothing / math.log(two_d)
    state = obj.evaluate(wt, tau_floor)
    if not math.isfinite(state.value):
        raise SolverFailure("non-finite objective at initialization")
    tau = max(state.amax, config.smoothing) / math.log(two_d)
    best_exact = state.amax + config.lam * state.div
    best = (wt.copy(), state)

    iterations = 0
    step = config.step_size
    converged = False
    while iterations < config.max_iters:
        state = obj.evaluate(wt, tau)
        budget = min(config.max_iters - iterations, max(200, config.max_iters // 8))
        grad_tol = max(config.grad_tolerance, 1e-4 * tau)
        wt, state, step, used, stage_done = _descend(
            obj, wt, tau, state, budget, step, grad_tol
        )
        iterations += used
        exact = state.amax + config.lam * state.div
        if exact < best_exact:
            best_exact = exact
            best = (wt.copy(), state)
        if tau <= tau_floor:
            converged = stage_done
            break
        tau = max(tau / _TAU_SHRINK, tau_floor)

    wt, state = best
    return BalanceResult(
        weights=SimplexWeights(state.w),
        objective=state.amax + config.lam * state.div,
        imbalance=ImbalanceReport(
            per_covariate=state.gap, max_abs=state.amax, argmax_j=state.j
        ),
        divergence_value=state.div,
        iterations=iterations,
        converged=converged,
    )


def sweep_lambda(
    problem: BalanceProblem,
    lambdas,
    config: PlainBalanceConfig,
    warm: bool = False,
) -> list[tuple[float, BalanceResult]]:
    """Solves over a grid of regularization weights.

    With ``warm`` the grid is processed in descending order and each
    solve starts from the previous solution's logits (solutions deform
    continuously as lam shrinks, so this saves most of the descent);
    results are returned in the input order either way.
    """
    lambdas = [float(lam) for lam in lambdas]
    if not warm:
        return [
            (lam, solve_plain(problem, replace(config, lam=lam))) for lam in lambdas
        ]
    out = {}
    wt = None
    for lam in sorted(lambdas, reverse=True):
        result = solve_plain(problem, replace(config, lam=lam), init_wt=wt)
        out[lam] = result
        wt = np.log(result.weights.w)
    return [(lam, out[lam]) for lam in lambdas]
