"""Dense linear programming kernel.

Solves   maximize c.x   s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0
by a two-phase revised simplex with an explicit basis inverse, periodic
refactorization, and Bland's rule as an anti-cycling fallback.  Problem
sizes here are desk scale (hundreds of rows), so a dense deterministic
method is preferred over speed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import SolverFailure, ValidationError

_REDCOST_TOL = 1e-9
_PIVOT_TOL = 1e-10
_RATIO_TOL = 1e-9  # entering-direction positivity threshold (>= pivot tol)
_FEAS_TOL = 1e-7
_REFRESH_EVERY = 100
_STALL_BEFORE_BLAND = 2000


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float | None
    iterations: int
    residual: float


class _Tableau:
    """Equality-form simplex state: A x = b, x >= 0, maximize c.x."""

    def __init__(self, A: np.ndarray, b: np.ndarray):
        self.A = A
        self.b = b
        self.m, self.N = A.shape
        self.basis: np.ndarray = np.arange(0)
        self.B_inv: np.ndarray = np.eye(0)
        self.iterations = 0

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        try:
            self.B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(
                "singular basis during refactorization",
                diagnostics={"iterations": self.iterations},
            ) from exc

    def x_basic(self) -> np.ndarray:
        return self.B_inv @ self.b

    def pivot(self, enter: int, leave_row: int, u: np.ndarray) -> None:
        piv = u[leave_row]
        if abs(piv) < _PIVOT_TOL:
            raise SolverFailure(
                "vanishing pivot element",
                diagnostics={"iterations": self.iterations, "pivot": float(piv)},
            )
        self.B_inv[leave_row, :] /= piv
        others = u.copy()
        others[leave_row] = 0.0
        self.B_inv -= np.outer(others, self.B_inv[leave_row, :])
        self.basis[leave_row] = enter
        self.iterations += 1
        if self.iterations % _REFRESH_EVERY == 0:
            self.refactor()

    def run(self, c: np.ndarray, allowed: np.ndarray, max_iters: int) -> str:
        """Maximize c.x from the current basis.  Returns 'optimal' or
        'unbounded'."""
        stall = 0
        bland = False
        last_obj = -np.inf
        for _ in range(max_iters):
            x_b = self.x_basic()
            obj = float(c[self.basis] @ x_b)
            if obj <= last_obj + 1e-12:
                stall += 1
                if stall > _STALL_BEFORE_BLAND:
                    bland = True
            else:
                stall = 0
            last_obj = obj

            y = c[self.basis] @ self.B_inv
            reduced = c - y @ self.A
            reduced[self.basis] = 0.0
            candidates = np.flatnonzero(allowed & (reduced > _REDCOST_TOL * (1.0 + np.abs(c).max())))
            if candidates.size == 0:
                return "optimal"
            if bland:
                enter = int(candidates[0])
            else:
                enter = int(candidates[np.argmax(reduced[candidates])])

            u = self.B_inv @ self.A[:, enter]
            pos = u > _RATIO_TOL
            if not np.any(pos):
                return "unbounded"
            ratios = np.full(self.m, np.inf)
            ratios[pos] = np.maximum(x_b[pos], 0.0) / u[pos]
            best = ratios.min()
            tied = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + abs(best)))
            if bland:
                # Bland's anti-cycling rule: smallest basis variable index.
                leave_row = int(tied[np.argmin(self.basis[tied])])
            else:
                # Stability: largest pivot magnitude among tied ratios.
                leave_row = int(tied[np.argmax(u[tied])])
            self.pivot(enter, leave_row, u)
        raise SolverFailure(
            "simplex iteration cap exceeded (cycling guard)",
            diagnostics={"iterations": self.iterations, "objective": last_obj},
        )


def solve_lp(
    c,
    A_eq=None,
    b_eq=None,
    A_ub=None,
    b_ub=None,
) -> LpSolution:
    """Maximize ``c.x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub``,
    ``x >= 0``.

    Returns an :class:`LpSolution`; infeasibility and unboundedness are
    reported through ``status``, never silently.  Feasibility of an
    optimal point is certified to residuals <= 1e-7 against the original
    (unscaled) data.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    if n < 1:
        raise ValidationError("objective vector must be nonempty")

    def as_matrix(A, b, what):
        if A is None:
            return np.zeros((0, n)), np.zeros(0)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float)).ravel()
        if A.shape[1] != n or A.shape[0] != b.size:
            raise ValidationError(f"{what} constraint dimensions do not match")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValidationError(f"{what} constraints contain non-finite values")
        return A, b

    Aeq, beq = as_matrix(A_eq, b_eq, "equality")
    Aub, bub = as_matrix(A_ub, b_ub, "inequality")
    m_eq, m_ub = Aeq.shape[0], Aub.shape[0]
    m = m_eq + m_ub
    if m == 0:
        raise ValidationError("at least one constraint is required")

    # Equality form with slacks on the inequality rows.
    N = n + m_ub
    A = np.zeros((m, N))
    A[:m_eq, :n] = Aeq
    A[m_eq:, :n] = Aub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([beq, bub])

    # Row scaling, then sign flips so b >= 0.
    scale = np.maximum(np.abs(A).max(axis=1), 1e-12)
    A = A / scale[:, None]
    b = b / scale
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    max_iters = 2000 + 60 * (m + N)

    # Crash basis: unflipped inequality rows start on their own slack;
    # only the remaining rows need artificials for phase 1.
    art_rows = [i for i in range(m) if i < m_eq or flip[i]]
    n_art = len(art_rows)
    art_cols = np.zeros((m, n_art))
    for col, row in enumerate(art_rows):
        art_cols[row, col] = 1.0
    t = _Tableau(np.hstack([A, art_cols]), b)
    basis = np.empty(m, dtype=int)
    for i in range(m):
        basis[i] = n + (i - m_eq)  # slack column of ub row i
    for col, row in enumerate(art_rows):
        basis[row] = N + col
    t.basis = basis
    t.B_inv = np.eye(m)

    if n_art:
        c1 = np.concatenate([np.zeros(N), -np.ones(n_art)])
        allowed = np.ones(N + n_art, dtype=bool)
        outcome = t.run(c1, allowed, max_iters)
        phase1 = float(c1[t.basis] @ t.x_basic())
        if outcome != "optimal" or phase1 < -1e-8 * (1.0 + np.abs(b).max()):
            return LpSolution(LpStatus.INFEASIBLE, None, None, t.iterations, np.inf)

    # Drive artificials out of the basis; drop rows that prove redundant.
    keep = np.ones(m, dtype=bool)
    for row in range(m):
        if t.basis[row] < N:
            continue
        coeffs = t.B_inv[row, :] @ t.A[:, :N]
        in_basis = np.zeros(N, dtype=bool)
        in_basis[t.basis[t.basis < N]] = True
        options = np.flatnonzero((np.abs(coeffs) > 1e-9) & ~in_basis)
        if options.size:
            enter = int(options[0])
            u = t.B_inv @ t.A[:, enter]
            t.pivot(enter, row, u)
        else:
            keep[row] = False
    if not np.all(keep):
        A = A[keep]
        b = b[keep]
        t2 = _Tableau(np.hstack([A, np.eye(int(keep.sum()))]), b)
        t2.basis = t.basis[keep].copy()
        t2.iterations = t.iterations
        t2.refactor()
        t = t2
        m = int(keep.sum())
    # Phase 2 prices only structural and slack columns.
    c2 = np.concatenate([c, np.zeros(t.A.shape[1] - n)])
    allowed2 = np.zeros(t.A.shape[1], dtype=bool)
    allowed2[:N] = True
    outcome = t.run(c2, allowed2, max_iters)
    if outcome == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, None, None, t.iterations, np.inf)

    x_full = np.zeros(t.A.shape[1])
    x_full[t.basis] = np.maximum(t.x_basic(), 0.0)
    if np.any((t.basis >= N) & (x_full[t.basis] > 1e-8)):
        return LpSolution(LpStatus.INFEASIBLE, None, None, t.iterations, np.inf)
    x = x_full[:n]

    res_eq = 0.0 if m_eq == 0 else float(np.abs(Aeq @ x - beq).max())
    res_ub = 0.0 if m_ub == 0 else float(np.maximum(Aub @ x - bub, 0.0).max())
    residual = max(res_eq, res_ub)
    if residual > _FEAS_TOL * (1.0 + float(np.abs(b).max())):
        raise SolverFailure(
            "optimal basis fails feasibility certification",
            diagnostics={"residual": residual, "iterations": t.iterations},
        )
    return LpSolution(
        LpStatus.OPTIMAL, x, float(c @ x), t.iterations, residual
    )
