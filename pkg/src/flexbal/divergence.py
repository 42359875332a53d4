"""f-divergences from uniform and their restricted convex conjugates.

For a convex f on [0, n] with f(1) = 0, the divergence of weights w from
the uniform distribution over a group of size n is

    D_f(w) = (1/n) * sum_i f(n * w_i)

and the restricted conjugate of a score vector z is the supremum of
z.w - D_f(w) over probability distributions w (not over all nonnegative
measures; restricting to the simplex gives tighter values).

Closed forms implemented here:

* KL (f = t log t):  D = sum_i w_i log(n w_i); conjugate = logmeanexp(z),
  maximizer softmax(z).
* chi-squared (f = (t-1)^2 / n):  D = sum_i (w_i - 1/n)^2.  Completing the
  square shows z.w - D = -||w - a||^2 + ||a||^2 - 1/n with a = 1/n + z/2,
  so the restricted conjugate is attained at the Euclidean projection of
  a onto the simplex and is available exactly.  Note this differs from
  the unrestricted textbook form mean(z) - Var(z)/4: the restriction to
  the simplex and the active nonnegativity constraints matter, and the
  Fenchel inequality only holds with the genuine restricted value.
* CBPS (f from the inverse-propensity objective, below) and custom f:
  no closed form; the conjugate is computed by projected gradient ascent
  over the simplex, which is a concave maximization on a compact set.

Everything here is pure and safe for concurrent use.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import softmax, xlogy

from .core import SimplexWeights, log_mean_exp, project_to_simplex
from .errors import SolverFailure, ValidationError

# Stopping rule for the numeric conjugate: objective improvement below
# this over PGA_PATIENCE iterations counts as converged.
PGA_IMPROVEMENT_TOL = 1e-10
PGA_PATIENCE = 50
PGA_MAX_ITERS = 10_000


class DivergenceKind(enum.Enum):
    KL = "kl"
    CHI_SQUARED = "chi_squared"
    CBPS = "cbps"
    CUSTOM_F = "custom_f"


def cbps_f(t: float, n_g: int) -> float:
    """The convex generator behind normalized inverse-propensity balancing.

    f(t) = (n/t - 1) log(n/t - 1) - n/t + c  on (0, n], with
    c = -(n-1) log(n-1) + n chosen so that f(1) = 0 exactly.
    f(0) is the limit +inf.
    """
    n = float(n_g)
    if n < 2:
        raise ValidationError("CBPS generator needs group size >= 2")
    if not 0.0 <= t <= n:
        raise ValidationError(f"t={t} outside the domain [0, {n}]")
    if t == 0.0:
        return math.inf
    if t == 1.0:
        return 0.0
    s = n / t - 1.0
    c = -(n - 1.0) * math.log(n - 1.0) + n
    return float(xlogy(s, s) - s - 1.0 + c)


def _cbps_f_array(t: np.ndarray, n: float) -> np.ndarray:
    out = np.full(t.shape, math.inf)
    pos = t > 0
    s = n / t[pos] - 1.0
    c = -(n - 1.0) * math.log(n - 1.0) + n
    out[pos] = xlogy(s, s) - s - 1.0 + c
    out[t == 1.0] = 0.0
    return out


def _cbps_fprime_array(t: np.ndarray, n: float) -> np.ndarray:
    # f'(t) = -(n/t^2) log(n/t - 1); steep at both ends of (0, n).
    return -(n / t**2) * (np.log(n - t) - np.log(t))


@dataclass(frozen=True)
class DivergenceSpec:
    """Which f-divergence to use, with hooks for a custom generator.

    For ``CUSTOM_F`` supply ``f`` (scalar, convex on [0, domain] with
    f(1) = 0), optionally its derivative ``fprime``, and the group size
    ``domain`` the generator was built for.  Construction verifies
    f(1) = 0 within 1e-12 and midpoint convexity on a fixed 64-point grid.
    """

    kind: DivergenceKind
    f: Callable[[float], float] | None = None
    fprime: Callable[[float], float] | None = None
    domain: float | None = None

    def __post_init__(self):
        if self.kind is DivergenceKind.CUSTOM_F:
            if self.f is None or self.domain is None:
                raise ValidationError("CustomF needs f and its domain [0, n_g]")
            if abs(float(self.f(1.0))) > 1e-12:
                raise ValidationError("custom f must satisfy f(1) = 0 within 1e-12")
            grid = np.linspace(0.0, float(self.domain), 64)
            vals = np.array([float(self.f(t)) for t in grid])
            for i in range(64):
                for j in range(i + 1, 64):
                    if not np.isfinite(vals[i]) or not np.isfinite(vals[j]):
                        continue
                    mid = float(self.f((grid[i] + grid[j]) / 2.0))
                    if mid > (vals[i] + vals[j]) / 2.0 + 1e-9:
                        raise ValidationError(
                            "custom f fails the midpoint convexity test at "
                            f"({grid[i]:.6g}, {grid[j]:.6g})"
                        )

    @classmethod
    def kl(cls) -> "DivergenceSpec":
        return cls(kind=DivergenceKind.KL)

    @classmethod
    def chi_squared(cls) -> "DivergenceSpec":
        return cls(kind=DivergenceKind.CHI_SQUARED)

    @classmethod
    def cbps(cls) -> "DivergenceSpec":
        return cls(kind=DivergenceKind.CBPS)

    @classmethod
    def custom(cls, f, fprime=None, domain=None) -> "DivergenceSpec":
        return cls(kind=DivergenceKind.CUSTOM_F, f=f, fprime=fprime, domain=domain)

    def _check_group_size(self, n: int) -> None:
        if self.kind is DivergenceKind.CUSTOM_F and n != int(self.domain):
            raise ValidationError(
                f"custom f built for group size {self.domain}, called with {n}"
            )


def _custom_f_array(spec: DivergenceSpec, t: np.ndarray) -> np.ndarray:
    return np.array([float(spec.f(ti)) for ti in t])


def _custom_fprime_array(spec: DivergenceSpec, t: np.ndarray) -> np.ndarray:
    if spec.fprime is not None:
        return np.array([float(spec.fprime(ti)) for ti in t])
    h = 1e-6 * np.maximum(1.0, np.abs(t))
    lo = np.maximum(t - h, 1e-12)
    hi = np.minimum(t + h, float(spec.domain) - 1e-12)
    return (_custom_f_array(spec, hi) - _custom_f_array(spec, lo)) / (hi - lo)


def divergence_array(spec: DivergenceSpec, w: np.ndarray) -> float:
    """Divergence of a weight array from uniform (no simplex re-check)."""
    n = w.size
    spec._check_group_size(n)
    if spec.kind is DivergenceKind.KL:
        val = float(np.sum(xlogy(w, n * w)))
    elif spec.kind is DivergenceKind.CHI_SQUARED:
        val = float(np.sum((w - 1.0 / n) ** 2))
    elif spec.kind is DivergenceKind.CBPS:
        if np.any(w == 0.0):
            return math.inf
        val = float(np.mean(_cbps_f_array(n * w, float(n))))
    else:
        val = float(np.mean(_custom_f_array(spec, n * w)))
    return max(0.0, val)


def divergence(spec: DivergenceSpec, weights: SimplexWeights) -> float:
    """f-divergence of ``weights`` from the uniform distribution.

    Zero exactly at uniform.  For CBPS a zero weight yields +inf (the
    generator diverges at 0); for KL the 0 log 0 limit contributes 0.
    """
    return divergence_array(spec, weights.w)


def divergence_grad_array(spec: DivergenceSpec, w: np.ndarray) -> np.ndarray:
    """Gradient of the divergence in w; requires strictly positive w for
    KL and CBPS."""
    n = w.size
    spec._check_group_size(n)
    if spec.kind is DivergenceKind.KL:
        return np.log(n * w) + 1.0
    if spec.kind is DivergenceKind.CHI_SQUARED:
        return 2.0 * (w - 1.0 / n)
    if spec.kind is DivergenceKind.CBPS:
        return _cbps_fprime_array(n * w, float(n))
    return _custom_fprime_array(spec, n * w)


def _pga_conjugate(
    spec: DivergenceSpec, z: np.ndarray, warm_start: np.ndarray | None
) -> tuple[float, np.ndarray]:
    """Projected gradient ascent for sup_w z.w - D(w) when no closed form."""
    n = z.size

    def value(w: np.ndarray) -> float:
        return float(z @ w) - divergence_array(spec, w)

    w = np.full(n, 1.0 / n) if warm_start is None else warm_start.copy()
    obj = value(w)
    history = [obj]
    step = 1.0
    for iteration in range(PGA_MAX_ITERS):
        grad = z - divergence_grad_array(spec, np.maximum(w, 1e-300))
        accepted = False
        s = step
        for _ in range(60):
            w_new = project_to_simplex(w + s * grad)
            gain_lin = float(grad @ (w_new - w))
            obj_new = value(w_new)
            if np.isfinite(obj_new) and obj_new >= obj + 1e-4 * gain_lin and obj_new > obj:
                accepted = True
                break
            s *= 0.5
        if accepted:
            w, obj = w_new, obj_new
            step = min(s * 2.0, 1e6)
        history.append(obj)
        if len(history) > PGA_PATIENCE and history[-1] - history[-1 - PGA_PATIENCE] < PGA_IMPROVEMENT_TOL:
            return obj, w
        if not accepted:
            # No ascent direction at machine resolution: stationary.
            return obj, w
    raise SolverFailure(
        "numeric conjugate did not converge",
        diagnostics={
            "iterations": PGA_MAX_ITERS,
            "objective": obj,
            "last_improvement": history[-1] - history[-1 - PGA_PATIENCE],
            "group_size": n,
        },
    )


def conjugate_with_argmax(
    spec: DivergenceSpec, z: np.ndarray, warm_start: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Restricted conjugate value together with its maximizing weights."""
    z = np.asarray(z, dtype=float).ravel()
    if z.size < 1:
        raise ValidationError("z must be a nonempty vector")
    if not np.all(np.isfinite(z)):
        raise ValidationError("z contains non-finite values")
    spec._check_group_size(z.size)
    if spec.kind is DivergenceKind.KL:
        return log_mean_exp(z), softmax(z)
    if spec.kind is DivergenceKind.CHI_SQUARED:
        n = z.size
        a = 1.0 / n + z / 2.0
        w = project_to_simplex(a)
        val = float(z @ w) - float(np.sum((w - 1.0 / n) ** 2))
        return val, w
    return _pga_conjugate(spec, z, warm_start)


def conjugate(spec: DivergenceSpec, z) -> float:
    """sup over probability distributions w of z.w - divergence(w)."""
    val, _ = conjugate_with_argmax(spec, z)
    return val


def conjugate_shift_check(spec: DivergenceSpec, z, c0: float) -> tuple[float, float]:
    """Return (conjugate(z + c0*1), c0 + conjugate(z)).

    Adding a constant to every score shifts the restricted conjugate by
    exactly that constant, because weights sum to one; the two returned
    numbers agree within 1e-7 for all supported divergences.
    """
    z = np.asarray(z, dtype=float).ravel()
    return conjugate(spec, z + c0), c0 + conjugate(spec, z)
