"""Domain types and shared numeric primitives.

A :class:`BalanceProblem` bundles everything needed to reweight one group
(treated or control): the group's covariate rows ``X``, its observed
outcomes ``Y``, the target mean vector the weighted covariate means should
match, a concentration radius for how far that empirical target may sit
from the truth, and an l1 budget ``k`` on the linear coefficients assumed
to generate the outcomes.

All types are immutable after construction and all operations here are
pure functions, so everything in this module is safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError

SIMPLEX_ATOL = 1e-9


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.flags.writeable:
        # Copy-and-freeze; an already-frozen array passes through so that
        # problems can share one target object (checked by identity in
        # the joint-effect report).
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


def _require_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")


def hoeffding_radius(d: int, n: int, alpha: float) -> float:
    """Default concentration radius for covariates bounded in [-1, 1].

    A union bound over ``d`` coordinate means of ``n`` independent samples
    gives sup-norm deviation at most sqrt(2 log(2 d / alpha) / n) with
    probability 1 - alpha.
    """
    if d < 1 or n < 1:
        raise ValidationError("d and n must be positive")
    if not 0.0 < alpha < 0.5:
        raise ValidationError("alpha must lie in (0, 1/2)")
    return math.sqrt(2.0 * math.log(2.0 * d / alpha) / n)


def log_mean_exp(z: np.ndarray) -> float:
    """Stable log((1/n) sum_i exp z_i)."""
    z = np.asarray(z, dtype=float)
    return float(logsumexp(z) - math.log(z.size))


def max_abs_entry(v: np.ndarray) -> tuple[float, int]:
    """Return (max_j |v_j|, argmax j); ties broken by lowest index."""
    j = int(np.argmax(np.abs(v)))
    return float(abs(v[j])), j


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Sort-based algorithm; deterministic for fixed input.
    """
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    cond = u + (1.0 - css) / idx > 0
    rho = int(np.nonzero(cond)[0][-1]) + 1
    theta = (1.0 - css[rho - 1]) / rho
    return np.maximum(v + theta, 0.0)


@dataclass(frozen=True)
class SimplexWeights:
    """A probability distribution over the rows of one group.

    Construction validates nonnegativity and that the entries sum to one
    within an absolute tolerance of 1e-9.  Use :meth:`normalized` to
    renormalize explicitly; operations never renormalize silently.
    """

    w: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.w)
        if arr.ndim != 1 or arr.size < 1:
            raise ValidationError("weights must be a nonempty 1-d vector")
        _require_finite("weights", arr)
        if np.any(arr < 0):
            raise ValidationError("weights must be nonnegative")
        if abs(float(arr.sum()) - 1.0) > SIMPLEX_ATOL:
            raise ValidationError(
                f"weights sum to {arr.sum():.12g}, outside tolerance {SIMPLEX_ATOL}"
            )
        object.__setattr__(self, "w", arr)

    @classmethod
    def uniform(cls, n: int) -> "SimplexWeights":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, v) -> "SimplexWeights":
        """Explicitly renormalize a nonnegative vector onto the simplex."""
        arr = np.asarray(v, dtype=float)
        _require_finite("weights", arr)
        if np.any(arr < 0):
            raise ValidationError("weights must be nonnegative")
        total = float(arr.sum())
        if total <= 0:
            raise ValidationError("weights must have positive sum")
        return cls(arr / total)

    @property
    def n(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class BalanceProblem:
    """One group's reweighting problem.

    Fields
    ------
    X : (n_g, d) covariate matrix of the group being reweighted.
    Y : (n_g,) observed outcomes of that group.
    target : (d,) target mean vector the weighted covariate means chase.
    conc_radius : sup-norm radius within which the empirical target is
        assumed to concentrate around the truth (with the problem's
        confidence level).  Use :func:`hoeffding_radius` for the default.
    k : l1 budget on the coefficient vector assumed to generate Y.
    alpha : one minus the confidence level, in (0, 1/2).
    """

    X: np.ndarray
    Y: np.ndarray
    target: np.ndarray
    conc_radius: float
    k: float
    alpha: float = 0.05

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        Y = Y if Y.ndim == 1 else Y.ravel()
        target = np.asarray(self.target, dtype=float)
        target = target if target.ndim == 1 else target.ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValidationError("X must be a nonempty 2-d matrix")
        if Y.size != X.shape[0]:
            raise ValidationError(
                f"Y has length {Y.size}, expected {X.shape[0]} (rows of X)"
            )
        if target.size != X.shape[1]:
            raise ValidationError(
                f"target has length {target.size}, expected {X.shape[1]} (columns of X)"
            )
        for name, arr in (("X", X), ("Y", Y), ("target", target)):
            _require_finite(name, arr)
        if not math.isfinite(self.conc_radius) or self.conc_radius < 0:
            raise ValidationError("conc_radius must be finite and nonnegative")
        if not math.isfinite(self.k) or self.k <= 0:
            raise ValidationError("k must be finite and positive")
        if not 0.0 < self.alpha < 0.5:
            raise ValidationError("alpha must lie in (0, 1/2)")
        X = X.copy()
        X.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", _frozen_array(Y))
        object.__setattr__(self, "target", _frozen_array(target))

    @classmethod
    def from_sample(
        cls,
        X,
        Y,
        target,
        k: float,
        alpha: float = 0.05,
        target_n: int | None = None,
        conc_radius: float | None = None,
    ) -> "BalanceProblem":
        """Build a problem, filling in the Hoeffding default radius.

        ``target_n`` is the number of samples averaged into ``target``
        (for the usual combined-sample target, the total of both groups).
        """
        target = np.asarray(target, dtype=float).ravel()
        if conc_radius is None:
            if target_n is None:
                raise ValidationError(
                    "provide conc_radius explicitly or target_n for the default"
                )
            conc_radius = hoeffding_radius(target.size, target_n, alpha)
        return cls(X=X, Y=Y, target=target, conc_radius=conc_radius, k=k, alpha=alpha)

    @property
    def n_g(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ImbalanceReport:
    """Per-covariate gaps between weighted means and the target."""

    per_covariate: np.ndarray
    max_abs: float
    argmax_j: int

    def __post_init__(self):
        object.__setattr__(self, "per_covariate", _frozen_array(self.per_covariate))


def _check_weights(problem: BalanceProblem, weights: SimplexWeights) -> np.ndarray:
    if weights.n != problem.n_g:
        raise ValidationError(
            f"weights have length {weights.n}, expected {problem.n_g}"
        )
    return weights.w


def weighted_mean(problem: BalanceProblem, weights: SimplexWeights) -> np.ndarray:
    """Weighted covariate means X^T w of the reweighted group."""
    w = _check_weights(problem, weights)
    return problem.X.T @ w


def imbalance(problem: BalanceProblem, weights: SimplexWeights) -> ImbalanceReport:
    """Gap between the weighted covariate means and the target."""
    gap = weighted_mean(problem, weights) - problem.target
    max_abs, j = max_abs_entry(gap)
    return ImbalanceReport(per_covariate=gap, max_abs=max_abs, argmax_j=j)


def weighted_estimate(problem: BalanceProblem, weights: SimplexWeights) -> float:
    """Weighted outcome mean sum_i w_i Y_i of the group."""
    w = _check_weights(problem, weights)
    return float(w @ problem.Y)


def effective_sample_size(weights: SimplexWeights) -> float:
    """1 / sum_i w_i^2, a diagnostic of weight concentration in [1, n]."""
    return float(1.0 / np.sum(weights.w**2))
