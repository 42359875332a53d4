"""Flexible covariate balancing: weights and regularization optimized
jointly, with a certificate.

The solver minimizes, over weights w on the simplex, lam > 0 and
delta in [0, 1], the worst case over z in {-1, +1} of

    ((1-delta) k + delta beta_z) * max_j |(X^T w)_j - target_j|
  + (1-delta) * k * conc_radius
  + lam * D(w || uniform)
  + lam * D*((delta/lam) [z Y_i - Yhat_i(z)] || uniform)

where beta_z comes from the budget LP and Yhat(z) is the auxiliary
outcome built from the dominant target coordinate
(j* = argmax_j |target_j|, s = sign(target_{j*}),
Yhat_i = -s beta_z X_{i j*}).

The objective value nu at ANY feasible (w, lam, delta) is a valid
confidence radius for the weighted estimate at the problem's confidence
level, so early stopping degrades interval width, never validity.  The
pessimistic limit (delta = 0, lam -> 0) recovers the naive radius
k * (imbalance + conc_radius); the solver always evaluates that limit at
its best weights and keeps whichever certificate is smaller, so the
returned nu never exceeds the naive radius at the returned weights.

Optimization follows the reparameterization w = softmax(wt),
lam = softplus(lt), delta = sigmoid(dt), initialized at wt = 0, lt = 1,
dt = 0, with subgradient descent and a backtracking Armijo line search.
The outer max over z descends the active branch's gradient (average on
ties).  With the KL divergence both the divergence and its conjugate
have closed forms that reuse the softmax normalizer, so an iteration
costs two exponentials and a matrix-vector product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .core import (
    BalanceProblem,
    SimplexWeights,
    max_abs_entry,
)
from .divergence import (
    DivergenceKind,
    DivergenceSpec,
    conjugate_with_argmax,
    divergence_array,
    divergence_grad_array,
)
from .errors import (
    DegenerateTargetError,
    PrecursorInfeasibleError,
    SolverFailure,
    ValidationError,
)
from .lp import LpStatus
from .precursor import BetaInputs, compute_beta, compute_beta_relaxed

_ARMIJO_C = 1e-4
_MAX_HALVINGS = 60
_Z_TIE_TOL = 1e-12


def _softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


@dataclass(frozen=True)
class FbalConfig:
    """Joint-solver settings.

    ``fixed_z`` restricts the outer max to one sign (for one-sided
    intervals); ``fixed_lambda`` / ``fixed_delta`` pin those parameters,
    which recovers certified plain balancing.  When the budget LP is
    infeasible (outcomes not exactly linear at the budget) and
    ``relax_infeasible_beta`` is set, beta is recomputed from the
    fit-relaxed program instead of raising.
    """

    divergence: DivergenceSpec = field(default_factory=DivergenceSpec.kl)
    max_iters: int = 50_000
    step_size: float = 1.0
    grad_tolerance: float = 1e-7
    fixed_z: int | None = None
    fixed_lambda: float | None = None
    fixed_delta: float | None = None
    relax_infeasible_beta: bool = True
    lambda_floor: float = 1e-10
    smoothing: float = 1e-4
    center_search: bool = True

    def __post_init__(self):
        if self.fixed_z is not None and self.fixed_z not in (-1, 1):
            raise ValidationError("fixed_z must be -1 or +1")
        if self.fixed_lambda is not None and not self.fixed_lambda > 0:
            raise ValidationError("fixed_lambda must be positive")
        if self.fixed_delta is not None and not 0.0 <= self.fixed_delta <= 1.0:
            raise ValidationError("fixed_delta must lie in [0, 1]")
        if not self.smoothing > 0:
            raise ValidationError("smoothing must be positive")


@dataclass(frozen=True)
class PerZTerms:
    imbalance_term: float
    concentration_term: float
    divergence_term: float
    conjugate_term: float

    @property
    def total(self) -> float:
        return (
            self.imbalance_term
            + self.concentration_term
            + self.divergence_term
            + self.conjugate_term
        )


@dataclass(frozen=True)
class FbalSolution:
    weights: SimplexWeights
    lam: float
    delta: float
    nu: float
    per_z_terms: dict[int, PerZTerms]
    trace: tuple[float, ...]
    betas: dict[int, float]
    iterations: int
    converged: bool


def fulcrum(problem: BalanceProblem, beta_z: float) -> np.ndarray:
    """Auxiliary outcomes -s * beta_z * X_{i j*} from the dominant target
    coordinate (ties on |target| broken by lowest index)."""
    amax, j_star = max_abs_entry(problem.target)
    if amax < 1e-12:
        raise DegenerateTargetError(
            "target vector has zero sup-norm; add a constant covariate"
        )
    if not (math.isfinite(beta_z) and beta_z >= 0):
        raise ValidationError("beta_z must be finite and nonnegative")
    s = math.copysign(1.0, problem.target[j_star])
    return -s * beta_z * problem.X[:, j_star]


def fbal_objective(
    problem: BalanceProblem,
    divergence: DivergenceSpec,
    weights: SimplexWeights,
    lam: float,
    delta: float,
    beta: float,
    z: int,
) -> float:
    """Four-term certificate value for one sign z at given parameters."""
    if z not in (-1, 1):
        raise ValidationError("z must be -1 or +1")
    if not (math.isfinite(lam) and lam > 0):
        raise ValidationError("lam must be finite and positive")
    if not 0.0 <= delta <= 1.0:
        raise ValidationError("delta must lie in [0, 1]")
    w = weights.w
    if w.size != problem.n_g:
        raise ValidationError("weights do not match the problem size")
    gap = problem.X.T @ w - problem.target
    amax, _ = max_abs_entry(gap)
    r = z * problem.Y - fulcrum(problem, beta)
    conj, _ = conjugate_with_argmax(divergence, (delta / lam) * r)
    return (
        ((1.0 - delta) * problem.k + delta * beta) * amax
        + (1.0 - delta) * problem.k * problem.conc_radius
        + lam * divergence_array(divergence, w)
        + lam * conj
    )


def resolve_betas(
    problem: BalanceProblem, config: FbalConfig, zs
) -> dict[int, float]:
    """Budget bounds per sign, relaxing infeasible fits when configured.

    The fit radius of the relaxation does not depend on the sign, so it
    is solved at most once per problem.
    """
    from .precursor import min_linf_fit_radius

    betas: dict[int, float] = {}
    fit_radius: float | None = None
    for z in zs:
        result = compute_beta(BetaInputs(problem=problem, z=z))
        if result.lp_status is not LpStatus.OPTIMAL:
            if not config.relax_infeasible_beta:
                raise PrecursorInfeasibleError(
                    f"budget LP {result.lp_status.value} for z={z}",
                    diagnostics={"z": z, "status": result.lp_status.value},
                )
            if fit_radius is None:
                fit_radius = min_linf_fit_radius(problem)
            result = compute_beta_relaxed(problem, z, fit_radius=fit_radius)
            if result.lp_status is not LpStatus.OPTIMAL:
                raise PrecursorInfeasibleError(
                    f"relaxed budget LP {result.lp_status.value} for z={z}",
                    diagnostics={"z": z, "status": result.lp_status.value},
                )
        betas[z] = result.beta
    return betas


class _EvalState:
    """Everything computed at one parameter point; gradients are
    assembled from this without re-evaluating."""

    __slots__ = (
        "w", "log_w", "lam", "delta", "gap", "amax", "j", "smax",
        "div", "value", "exact", "exact_search", "per_z", "conj", "p_star",
        "lt_active",
    )


class _JointObjective:
    """Worst-z certificate and its gradients in the reparameterized
    coordinates (wt, lt, dt).

    Two search conveniences steer descent without touching the reported
    certificate, which stays exact at every point:

    * the imbalance term is searched through the smooth upper envelope
      S_tau (see plain_balance);
    * when ``center_search`` is on, the conjugate argument is centered to
      group mean zero inside the search objective only.  By the shift
      property of restricted conjugates, the exact conjugate term equals
      the centered one plus delta times the mean residual, so the valid
      certificate is recovered at zero extra cost.
    """

    def __init__(self, problem: BalanceProblem, config: FbalConfig, betas):
        self.p = problem
        self.cfg = config
        self.spec = config.divergence
        self.zs = (config.fixed_z,) if config.fixed_z is not None else (1, -1)
        self.betas = betas
        raw = {z: z * problem.Y - fulcrum(problem, betas[z]) for z in self.zs}
        if config.center_search:
            self.res_means = {z: float(raw[z].mean()) for z in self.zs}
        else:
            self.res_means = {z: 0.0 for z in self.zs}
        self.residuals = {z: raw[z] - self.res_means[z] for z in self.zs}
        self.warm: dict[int, np.ndarray | None] = {z: None for z in self.zs}
        self.kl = self.spec.kind is DivergenceKind.KL
        self.chi2 = self.spec.kind is DivergenceKind.CHI_SQUARED
        self.Xt = np.ascontiguousarray(problem.X.T)

    def _conjugate(self, z: int, u: np.ndarray):
        if self.kl:
            m = float(u.max())
            e = np.exp(u - m)
            s = float(e.sum())
            return m + math.log(s / u.size), e / s
        if self.chi2:
            n = u.size
            from .core import project_to_simplex

            w = project_to_simplex(1.0 / n + 0.5 * u)
            return float(u @ w) - float(np.sum((w - 1.0 / n) ** 2)), w
        val, w = conjugate_with_argmax(self.spec, u, warm_start=self.warm[z])
        self.warm[z] = w
        return val, w

    def evaluate(self, theta: np.ndarray, tau: float) -> _EvalState:
        p, cfg = self.p, self.cfg
        n = p.n_g
        st = _EvalState()
        wt = theta[:n]
        m = float(wt.max())
        e = np.exp(wt - m)
        total = float(e.sum())
        st.w = e / total
        lse = m + math.log(total)
        st.log_w = wt - lse
        if cfg.fixed_lambda is not None:
            st.lam, st.lt_active = cfg.fixed_lambda, False
        else:
            raw = _softplus(theta[n])
            st.lam = max(raw, cfg.lambda_floor)
            st.lt_active = raw > cfg.lambda_floor
        st.delta = (
            cfg.fixed_delta
            if cfg.fixed_delta is not None
            else float(expit(theta[n + 1]))
        )
        st.gap = self.Xt @ st.w - p.target
        st.amax, st.j = max_abs_entry(st.gap)
        a = np.abs(st.gap)
        peak = st.amax / tau
        st.smax = st.amax + tau * math.log(
            float(np.sum(np.exp(a / tau - peak) + np.exp(-a / tau - peak)))
        )
        if self.kl:
            st.div = max(0.0, float(st.w @ st.log_w) + math.log(n))
        else:
            st.div = divergence_array(self.spec, st.w)
        k, rho = p.k, p.conc_radius
        st.per_z = {}
        st.conj = {}
        st.p_star = {}
        scale = st.delta / st.lam
        value = -math.inf
        exact = -math.inf
        exact_search = -math.inf
        for z in self.zs:
            conj, p_star = self._conjugate(z, scale * self.residuals[z])
            st.conj[z] = conj
            st.p_star[z] = p_star
            beta = self.betas[z]
            coef = (1.0 - st.delta) * k + st.delta * beta
            # Exact conjugate term via the shift property: the centered
            # argument differs from the true one by a constant vector.
            conj_exact = st.lam * conj + st.delta * self.res_means[z]
            rest_search = (1.0 - st.delta) * k * rho + st.lam * st.div + st.lam * conj
            st.per_z[z] = PerZTerms(
                imbalance_term=coef * st.amax,
                concentration_term=(1.0 - st.delta) * k * rho,
                divergence_term=st.lam * st.div,
                conjugate_term=conj_exact,
            )
            value = max(value, coef * st.smax + rest_search)
            exact = max(exact, st.per_z[z].total)
            exact_search = max(exact_search, coef * st.amax + rest_search)
        st.value = value
        st.exact = exact
        st.exact_search = exact_search
        return st

    def gradient(self, theta: np.ndarray, st: _EvalState, tau: float) -> np.ndarray:
        p, cfg = self.p, self.cfg
        n = p.n_g
        k, rho = p.k, p.conc_radius
        if self.kl:
            div_grad = st.log_w + (math.log(n) + 1.0)
        else:
            div_grad = divergence_grad_array(self.spec, st.w)
        a = st.gap / tau
        peak = float(np.abs(a).max())
        e_plus = np.exp(a - peak)
        e_minus = np.exp(-a - peak)
        norm = float(e_plus.sum() + e_minus.sum())
        smax_grad_t = (e_plus - e_minus) / norm

        searched = {
            z: ((1.0 - st.delta) * k + st.delta * self.betas[z]) * st.smax
            + st.per_z[z].concentration_term
            + st.per_z[z].divergence_term
            + st.lam * st.conj[z]
            for z in self.zs
        }
        best = st.value
        active = [
            z for z in self.zs if searched[z] >= best - _Z_TIE_TOL * (1.0 + abs(best))
        ]
        imb_grad_w = p.X @ smax_grad_t
        g_w = np.zeros(n)
        g_lam = 0.0
        g_delta = 0.0
        for z in active:
            beta = self.betas[z]
            r = self.residuals[z]
            pr = float(st.p_star[z] @ r)
            coef = (1.0 - st.delta) * k + st.delta * beta
            g_w += coef * imb_grad_w + st.lam * div_grad
            g_lam += st.div + st.conj[z] - (st.delta / st.lam) * pr
            g_delta += (beta - k) * st.smax - k * rho + pr
        g_w /= len(active)
        g_lam /= len(active)
        g_delta /= len(active)

        grad = np.zeros(n + 2)
        grad[:n] = st.w * (g_w - float(g_w @ st.w))
        if cfg.fixed_lambda is None and st.lt_active:
            grad[n] = g_lam * float(expit(theta[n]))
        if cfg.fixed_delta is None:
            grad[n + 1] = g_delta * st.delta * (1.0 - st.delta)
        return grad


def _lambda_line_search(obj: "_JointObjective", wt: np.ndarray, n: int, tau: float):
    """Golden-section over log lam of the search certificate at delta ~ 1.

    The search objective is convex in lam for fixed weights and delta, so
    a one-dimensional bracket suffices.  Returns (theta, state) or None.
    """

    def at(log_lam: float):
        theta = np.concatenate([wt, [0.0], [40.0]])  # sigmoid(40) ~ 1
        lam = math.exp(log_lam)
        # softplus^{-1}(lam); for large lam softplus is the identity.
        theta[n] = lam if lam > 30 else math.log(math.expm1(lam))
        return theta, obj.evaluate(theta, tau)

    lo, hi = math.log(1e-5), math.log(1e7)
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - phi * (b - a)
    c2 = a + phi * (b - a)
    f1 = at(c1)[1].exact_search
    f2 = at(c2)[1].exact_search
    for _ in range(40):
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - phi * (b - a)
            f1 = at(c1)[1].exact_search
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + phi * (b - a)
            f2 = at(c2)[1].exact_search
    theta, state = at((a + b) / 2.0)
    if not math.isfinite(state.exact_search):
        return None
    return theta, state


def solve_fbal(
    problem: BalanceProblem,
    config: FbalConfig | None = None,
    betas: dict[int, float] | None = None,
) -> FbalSolution:
    """Jointly optimize (w, lam, delta); return the best feasible iterate.

    ``betas`` may carry precomputed budget bounds per sign; otherwise they
    are solved internally.
    """
    config = config or FbalConfig()
    zs = (config.fixed_z,) if config.fixed_z is not None else (1, -1)
    if betas is None:
        betas = resolve_betas(problem, config, zs)
    else:
        missing = [z for z in zs if z not in betas]
        if missing:
            raise ValidationError(f"betas missing signs {missing}")

    obj = _JointObjective(problem, config, betas)
    n = problem.n_g
    theta = np.zeros(n + 2)
    theta[n] = 1.0  # softplus(1), the standard initialization

    two_d = 2.0 * problem.d
    tau_floor = config.smoothing / math.log(two_d)
    state = obj.evaluate(theta, tau_floor)
    if not math.isfinite(state.value):
        raise SolverFailure("non-finite certificate at initialization")
    tau = max(state.amax, config.smoothing) / math.log(two_d)
    state = obj.evaluate(theta, tau)
    trace = [state.value]
    best_theta, best_state = theta.copy(), state
    step = config.step_size
    converged = False
    iterations = 0
    while iterations < config.max_iters:
        state = obj.evaluate(theta, tau)
        stage_budget = min(
            config.max_iters - iterations, max(200, config.max_iters // 8)
        )
        grad_tol = max(config.grad_tolerance, 1e-4 * tau)
        stage_done = False
        for _ in range(stage_budget):
            grad = obj.gradient(theta, state, tau)
            if float(np.abs(grad).max()) < grad_tol:
                stage_done = True
                break
            sq = float(grad @ grad)
            s = step
            accepted = False
            for _ in range(_MAX_HALVINGS):
                cand = theta - s * grad
                cand_state = obj.evaluate(cand, tau)
                if math.isnan(cand_state.value):
                    raise SolverFailure(
                        "non-finite certificate during optimization",
                        diagnostics={"iteration": iterations},
                    )
                if cand_state.value <= state.value - _ARMIJO_C * s * sq:
                    accepted = True
                    break
                s *= 0.5
            iterations += 1
            if not accepted:
                stage_done = True
                break
            theta, state = cand, cand_state
            trace.append(state.value)
            if state.exact_search < best_state.exact_search:
                best_state, best_theta = state, theta.copy()
            step = min(s * 2.0, 1e6)
        if tau <= tau_floor:
            converged = stage_done
            break
        tau = max(tau / 5.0, tau_floor)

    # Candidate sweep: the near-uniform branch needs lam on the scale of
    # the residual variance, which plain descent may not reach within the
    # budget.  Evaluating extra feasible points is always legitimate, so
    # probe delta ~ 1 at uniform weights (and at the incumbent weights)
    # with a one-dimensional golden-section search over log lam.
    if config.fixed_lambda is None and config.fixed_delta is None:
        for w_cand in (np.zeros(n), best_theta[:n].copy()):
            cand = _lambda_line_search(obj, w_cand, n, tau_floor)
            if cand is not None and cand[1].exact_search < best_state.exact_search:
                best_theta, best_state = cand

    # The pessimistic limit at the best weights is also feasible; keep the
    # smaller certificate so nu never exceeds the naive radius at w.
    w = best_state.w
    lam, delta = best_state.lam, best_state.delta
    per_z = dict(best_state.per_z)
    nu = best_state.exact
    floor = config.lambda_floor
    naive_value = (
        problem.k * (best_state.amax + problem.conc_radius) + floor * best_state.div
    )
    if (
        naive_value < nu
        and config.fixed_lambda is None
        and config.fixed_delta is None
    ):
        lam, delta = floor, 0.0
        per_z = {
            z: PerZTerms(
                imbalance_term=problem.k * best_state.amax,
                concentration_term=problem.k * problem.conc_radius,
                divergence_term=floor * best_state.div,
                conjugate_term=0.0,
            )
            for z in zs
        }
        nu = max(t.total for t in per_z.values())

    return FbalSolution(
        weights=SimplexWeights(w),
        lam=lam,
        delta=delta,
        nu=nu,
        per_z_terms=per_z,
        trace=tuple(trace),
        betas=dict(betas),
        iterations=iterations,
        converged=converged,
    )


@dataclass(frozen=True)
class AsymmetricInterval:
    """One-sided certificates combined into a two-sided interval.

    ``crossed`` flags lower > upper, which signals optimizer failure or
    misspecification; the crossed endpoints are reported as computed.
    """

    lower: float
    upper: float
    crossed: bool
    nu_plus: float
    nu_minus: float
    mu_plus: float
    mu_minus: float
    weights_plus: SimplexWeights
    weights_minus: SimplexWeights


def asymmetric_interval(
    problem: BalanceProblem, config: FbalConfig | None = None
) -> AsymmetricInterval:
    """Two independent one-sided solves (z fixed to +1 and -1).

    The z=+1 solve bounds the estimate from above the truth, giving the
    lower endpoint; the z=-1 solve gives the upper endpoint.
    """
    from .core import weighted_estimate

    config = config or FbalConfig()
    sol_plus = solve_fbal(problem, replace(config, fixed_z=1))
    sol_minus = solve_fbal(problem, replace(config, fixed_z=-1))
    mu_plus = weighted_estimate(problem, sol_plus.weights)
    mu_minus = weighted_estimate(problem, sol_minus.weights)
    lower = mu_plus - sol_plus.nu
    upper = mu_minus + sol_minus.nu
    return AsymmetricInterval(
        lower=lower,
        upper=upper,
        crossed=lower > upper,
        nu_plus=sol_plus.nu,
        nu_minus=sol_minus.nu,
        mu_plus=mu_plus,
        mu_minus=mu_minus,
        weights_plus=sol_plus.weights,
        weights_minus=sol_minus.weights,
    )
