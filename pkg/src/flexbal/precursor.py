"""Per-sign budget bound on the target-mean outcome level.

For each sign z in {-1, +1} the quantity beta_z bounds how large the
(unseen) target-population outcome level could be, given that the
outcome-generating coefficients must reproduce the observed outcomes
exactly and carry l1 norm at most k.  After eliminating the unknown true
mean analytically, the bound is the value of the linear program

    maximize  ( k * conc_radius  -  z * sum_j target_j (u_j - w_j) ) / ||target||_inf
    s.t.      sum_j (u_j + w_j) <= k,   u, w >= 0,
              (u - w) . X_i = Y_i   for every row i of the group,

with v = u - w.  The l1 budget replaces ||v||_1 in the objective, which
makes the program an upper bound on the exact value; the bound is tight
whenever the budget constraint is active, and a warning is emitted when
it is not.

The equality block is presolved by an SVD rank reduction (the system
X v = Y has at most rank(X) independent rows), which both detects
inconsistency early and keeps the LP small when the group is larger than
the covariate dimension.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import BalanceProblem
from .errors import DegenerateTargetError, ValidationError
from .lp import LpSolution, LpStatus, solve_lp

_TARGET_EPS = 1e-12
_CONSISTENCY_RTOL = 1e-8


@dataclass(frozen=True)
class BetaInputs:
    problem: BalanceProblem
    z: int

    def __post_init__(self):
        if self.z not in (-1, 1):
            raise ValidationError("z must be -1 or +1")
        if float(np.abs(self.problem.target).max()) < _TARGET_EPS:
            raise DegenerateTargetError(
                "target vector has zero sup-norm; add a constant covariate"
            )


@dataclass(frozen=True)
class BetaResult:
    """Outcome of the budget LP.

    ``beta`` is the optimal value clamped below at zero (only meaningful
    when ``lp_status`` is OPTIMAL); ``v_star`` the maximizing coefficient
    vector; ``budget_slack`` how far the l1 budget was from active;
    ``relaxation_eps`` the fit tolerance used (zero for the exact
    equality-constrained program).
    """

    beta: float
    v_star: np.ndarray
    lp_status: LpStatus
    budget_slack: float = 0.0
    relaxation_eps: float = 0.0


def _reduced_equalities(X: np.ndarray, Y: np.ndarray):
    """Rank-reduced equivalent of X v = Y, or None if inconsistent."""
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    if S.size == 0 or S[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(S > max(X.shape) * np.finfo(float).eps * S[0]))
    coords = U[:, :rank].T @ Y
    residual = float(np.abs(Y - U[:, :rank] @ coords).max()) if Y.size else 0.0
    if residual > _CONSISTENCY_RTOL * (1.0 + float(np.abs(Y).max(initial=0.0))):
        return None
    A = S[:rank, None] * Vt[:rank]
    return A, coords


def _assemble(problem: BalanceProblem, z: int):
    target = problem.target
    norm_inf = float(np.abs(target).max())
    d = problem.d
    c = np.concatenate([-z * target, z * target]) / norm_inf
    const = problem.k * problem.conc_radius / norm_inf
    budget_row = np.ones((1, 2 * d))
    return c, const, budget_row, norm_inf


def _finish(
    problem: BalanceProblem, sol: LpSolution, const: float, eps: float
) -> BetaResult:
    d = problem.d
    if sol.status is not LpStatus.OPTIMAL:
        return BetaResult(
            beta=float("nan"),
            v_star=np.zeros(d),
            lp_status=sol.status,
            relaxation_eps=eps,
        )
    u, w = sol.x[:d], sol.x[d:]
    v_star = u - w
    slack = problem.k - float(u.sum() + w.sum())
    if slack > 1e-7 * (1.0 + problem.k):
        warnings.warn(
            "l1 budget inactive at the optimum: the budget-based program "
            "over-estimates the exact value (the bound stays valid)",
            stacklevel=3,
        )
    beta = max(0.0, const + float(sol.objective))
    return BetaResult(
        beta=beta,
        v_star=v_star,
        lp_status=sol.status,
        budget_slack=max(0.0, slack),
        relaxation_eps=eps,
    )


def compute_beta(inputs: BetaInputs) -> BetaResult:
    """Solve the budget LP with exact data-consistency constraints.

    Infeasibility (no coefficient vector reproduces the outcomes within
    the l1 budget) is reported through ``lp_status``, never converted.
    """
    problem, z = inputs.problem, inputs.z
    c, const, budget_row, _ = _assemble(problem, z)
    reduced = _reduced_equalities(problem.X, problem.Y)
    if reduced is None:
        return BetaResult(
            beta=float("nan"),
            v_star=np.zeros(problem.d),
            lp_status=LpStatus.INFEASIBLE,
        )
    A_red, b_red = reduced
    sol = solve_lp(
        c,
        A_eq=np.hstack([A_red, -A_red]) if A_red.shape[0] else None,
        b_eq=b_red if A_red.shape[0] else None,
        A_ub=budget_row,
        b_ub=np.array([problem.k]),
    )
    return _finish(problem, sol, const, eps=0.0)


_ROWGEN_BATCH = 40
_ROWGEN_ROUNDS = 400


def _solve_with_row_generation(problem: BalanceProblem, c_vw, extra_var: bool, eps=None):
    """Cutting-plane loop over the fit rows |(X v - Y)_i| <= eps.

    Most fit rows are slack at the optimum, so the LP is solved on an
    active subset and violated rows are added until none remain; a
    subset optimum feasible for every row is optimal for the full
    program.  ``extra_var`` appends the scalar eps as a decision variable
    (the fit-radius program); otherwise ``eps`` is the fixed tolerance of
    the budget program.
    """
    X, Y, k = problem.X, problem.Y, problem.k
    n, d = problem.n_g, problem.d
    budget = np.concatenate([np.ones(2 * d), [0.0] if extra_var else []])
    # Tiny l1 pull on (u, w): breaks the massive dual degeneracy of the
    # fit band (the objective is otherwise flat in v at the optimum) so
    # both the pivoting and the cut loop settle fast.  The reported value
    # is read off the unperturbed objective at the returned point.
    mu = 1e-7 * max(1.0, float(np.abs(c_vw).max()))
    c_used = c_vw - mu * budget

    order = np.argsort(-np.abs(Y), kind="stable")
    active: list[tuple[int, int]] = [(int(i), s) for i in order[:8] for s in (1, -1)]
    seen = set(active)

    sol = None
    for _ in range(_ROWGEN_ROUNDS):
        rows = []
        rhs = []
        for i, s in active:
            row = np.concatenate([s * X[i], -s * X[i], [-1.0] if extra_var else []])
            rows.append(row)
            rhs.append(s * Y[i] + (0.0 if extra_var else eps))
        A_ub = np.vstack(rows + [budget[None, :]])
        b_ub = np.asarray(rhs + [k])
        sol = solve_lp(c_used, A_ub=A_ub, b_ub=b_ub)
        if sol.status is not LpStatus.OPTIMAL:
            return sol
        v = sol.x[:d] - sol.x[d : 2 * d]
        cur_eps = sol.x[2 * d] if extra_var else eps
        resid = X @ v - Y
        tol = 1e-9 * (1.0 + float(np.abs(Y).max(initial=0.0)))
        viol = np.maximum(np.abs(resid) - cur_eps, 0.0)
        candidates = np.argsort(-viol, kind="stable")
        added = 0
        for i in candidates:
            if viol[i] <= tol or added >= _ROWGEN_BATCH:
                break
            s = 1 if resid[i] > 0 else -1
            if (int(i), s) not in seen:
                seen.add((int(i), s))
                active.append((int(i), s))
                added += 1
        if added == 0:
            return LpSolution(
                status=sol.status,
                x=sol.x,
                objective=float(c_vw @ sol.x),
                iterations=sol.iterations,
                residual=sol.residual,
            )
    raise SolverFailure(
        "row generation did not settle",
        diagnostics={"active_rows": len(active), "n": n},
    )


def min_linf_fit_radius(problem: BalanceProblem) -> float:
    """Smallest achievable sup-norm residual of X v = Y at the l1 budget.

    Always finite: v = 0 achieves max |Y_i|.
    """
    d = problem.d
    c = np.concatenate([np.zeros(2 * d), [-1.0]])
    sol = _solve_with_row_generation(problem, c, extra_var=True)
    if sol.status is not LpStatus.OPTIMAL:
        raise ValidationError("fit-radius LP unexpectedly not optimal")
    return max(0.0, -float(sol.objective))


def compute_beta_relaxed(
    problem: BalanceProblem, z: int, fit_radius: float | None = None
) -> BetaResult:
    """Budget LP with the equality constraints relaxed to the smallest
    achievable sup-norm fit residual.

    Used when the exact program is infeasible (outcomes not exactly
    linear in the covariates at the budget).  With feasible data the fit
    radius is zero and this coincides with :func:`compute_beta`.
    ``fit_radius`` short-circuits the radius computation when the caller
    already solved it for this problem.
    """
    if z not in (-1, 1):
        raise ValidationError("z must be -1 or +1")
    if float(np.abs(problem.target).max()) < _TARGET_EPS:
        raise DegenerateTargetError(
            "target vector has zero sup-norm; add a constant covariate"
        )
    eps = min_linf_fit_radius(problem) if fit_radius is None else fit_radius
    eps_used = eps + 1e-7 * (1.0 + float(np.abs(problem.Y).max(initial=0.0)))
    c, const, _, _ = _assemble(problem, z)
    sol = _solve_with_row_generation(problem, c, extra_var=False, eps=eps_used)
    return _finish(problem, sol, const, eps=eps_used)
