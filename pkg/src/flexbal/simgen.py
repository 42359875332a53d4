"""Synthetic data generators.

Three generative processes, all deterministic given a seed (PCG64 with
one spawned stream per covariate column, so column content is stable
under changes elsewhere):

* subgroup: a binary trait, encoded +/-10, drives the outcome under
  treatment (+1 / -1); the treated group is 95/5 on the trait, the
  control group 5/95, the population 50/50, so the true effect is zero
  and heavy reweighting of the minority subgroup is the right call.
* celebrity: 5% of rows in each group sit exactly at the zero vector
  (matching the true covariate mean) and carry an atypical +1 effect;
  the rest are noisy with a mildly negative effect that cancels it.
  Chasing imbalance by upweighting the zero rows backfires; near-uniform
  weights are the right call.  Outcomes are intentionally not linear in
  the covariates here.
* linear sparse: exactly linear outcomes from l1-bounded coefficients
  with confounded-but-overlapping assignment; the well-specified setting
  for coverage and consistency checks.

Group problems returned by one call share a single target vector object
and concentration radius, as the joint-effect report requires.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import BalanceProblem, hoeffding_radius
from .errors import ValidationError


class SimKind(enum.Enum):
    SUBGROUP = "subgroup"
    CELEBRITY = "celebrity"
    LINEAR_SPARSE = "linear_sparse"


@dataclass(frozen=True)
class SimSpec:
    """Generator settings; kind-specific fields keep their standard
    defaults (trait encoding +/-10, 95/5 group mixes, Uniform(-1,1)
    nuisance covariates, Uniform(-10,10) celebrity-population covariates,
    celebrity effect +1 against -0.05/0.95 for the rest)."""

    kind: SimKind
    n: int
    d: int
    seed: int
    alpha: float = 0.05
    treated_fraction: float = 0.5
    minority_fraction: float = 0.05
    trait_scale: float = 10.0
    noise_half_width: float = 1.0
    celeb_cov_scale: float = 10.0
    celeb_effect: float = 1.0
    general_effect: float = -0.05 / 0.95
    k_override: float | None = None
    # linear-sparse parameters
    k_true: float = 3.0
    support_size: int = 5
    logit_scale: float = 1.0
    center_scale: float = 0.3
    column_half_width: float = 0.7
    share_coefficients: bool = False

    def __post_init__(self):
        if self.n < 2 or self.d < 1:
            raise ValidationError("need n >= 2 and d >= 1")
        if self.kind in (SimKind.SUBGROUP, SimKind.CELEBRITY):
            if self.n % 2 != 0:
                raise ValidationError("n must be even for exact group fractions")
        if not 0.0 <= self.minority_fraction <= 1.0:
            raise ValidationError("fractions must lie in [0, 1]")
        if not 0.0 < self.treated_fraction < 1.0:
            raise ValidationError("treated_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class SimData:
    treated: BalanceProblem
    control: BalanceProblem
    ate: float
    mu1: float
    mu0: float
    extras: dict = field(default_factory=dict)


def _column_streams(seed: int, count: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _minority_count(n_g: int, fraction: float) -> int:
    count = int(round(fraction * n_g))
    if count < 1 or count >= n_g:
        raise ValidationError(
            f"group size {n_g} too small for an exact {fraction:.0%} split"
        )
    return count


def _shared_problems(X_t, Y_t, X_c, Y_c, k_t, k_c, alpha, n_total):
    target = np.vstack([X_t, X_c]).mean(axis=0)
    rho = hoeffding_radius(X_t.shape[1], n_total, alpha)
    treated = BalanceProblem(
        X=X_t, Y=Y_t, target=target, conc_radius=rho, k=k_t, alpha=alpha
    )
    control = BalanceProblem(
        X=X_c, Y=Y_c, target=treated.target, conc_radius=rho, k=k_c, alpha=alpha
    )
    return treated, control


def gen_subgroup(spec: SimSpec) -> SimData:
    if spec.kind is not SimKind.SUBGROUP:
        raise ValidationError("spec.kind must be SUBGROUP")
    n1 = int(round(spec.n * spec.treated_fraction))
    n0 = spec.n - n1
    minority_t = _minority_count(n1, spec.minority_fraction)
    majority_c = _minority_count(n0, spec.minority_fraction)

    streams = _column_streams(spec.seed, 2 * spec.d)

    def group(n_g, n_plus_trait, offset):
        X = np.empty((n_g, spec.d))
        trait = np.concatenate(
            [
                np.full(n_plus_trait, spec.trait_scale),
                np.full(n_g - n_plus_trait, -spec.trait_scale),
            ]
        )
        X[:, 0] = trait
        for j in range(1, spec.d):
            X[:, j] = streams[offset + j].uniform(
                -spec.noise_half_width, spec.noise_half_width, size=n_g
            )
        return X, trait

    X_t, trait_t = group(n1, n1 - minority_t, 0)
    X_c, _ = group(n0, majority_c, spec.d)
    Y1_t = np.sign(trait_t)
    Y0_c = np.zeros(n0)

    k = spec.k_override if spec.k_override is not None else 1.0 / spec.trait_scale
    treated, control = _shared_problems(
        X_t, Y1_t, X_c, Y0_c, k, k, spec.alpha, spec.n
    )
    return SimData(
        treated=treated,
        control=control,
        ate=0.0,
        mu1=0.0,
        mu0=0.0,
        extras={"v_star_l1": 1.0 / spec.trait_scale},
    )


def gen_celebrity(spec: SimSpec) -> SimData:
    if spec.kind is not SimKind.CELEBRITY:
        raise ValidationError("spec.kind must be CELEBRITY")
    n1 = int(round(spec.n * spec.treated_fraction))
    n0 = spec.n - n1
    celebs_t = _minority_count(n1, spec.minority_fraction)
    celebs_c = _minority_count(n0, spec.minority_fraction)

    streams = _column_streams(spec.seed, 2 * spec.d)

    def group(n_g, n_celebs, offset):
        X = np.zeros((n_g, spec.d))
        n_general = n_g - n_celebs
        for j in range(spec.d):
            X[:n_general, j] = streams[offset + j].uniform(
                -spec.celeb_cov_scale, spec.celeb_cov_scale, size=n_general
            )
        # Rows n_general.. stay exactly zero: the celebrity block.
        y1 = np.concatenate(
            [np.full(n_general, spec.general_effect), np.full(n_celebs, spec.celeb_effect)]
        )
        return X, y1

    X_t, Y1_t = group(n1, celebs_t, 0)
    X_c, _ = group(n0, celebs_c, spec.d)
    Y0_c = np.zeros(n0)

    frac = spec.minority_fraction
    mu1 = (1.0 - frac) * spec.general_effect + frac * spec.celeb_effect
    k = spec.k_override if spec.k_override is not None else 1.0
    treated, control = _shared_problems(
        X_t, Y1_t, X_c, Y0_c, k, k, spec.alpha, spec.n
    )
    return SimData(
        treated=treated,
        control=control,
        ate=mu1,
        mu1=mu1,
        mu0=0.0,
        extras={"celebrities_treated": celebs_t, "celebrities_control": celebs_c},
    )


def _sparse_coefficients(rng: np.random.Generator, d: int, support: int, l1: float):
    idx = rng.choice(d, size=min(support, d), replace=False)
    signs = rng.choice([-1.0, 1.0], size=idx.size)
    raw = rng.random(idx.size) + 1e-3
    mags = l1 * raw / raw.sum()
    v = np.zeros(d)
    v[idx] = signs * mags
    return v


def gen_linear_sparse(spec: SimSpec) -> SimData:
    """Exactly linear outcomes, bounded covariates, overlapping
    confounded assignment.  Column 0 is a constant 1."""
    if spec.kind is not SimKind.LINEAR_SPARSE:
        raise ValidationError("spec.kind must be LINEAR_SPARSE")
    if spec.d < 4:
        raise ValidationError("linear-sparse generator needs d >= 4")
    if spec.k_true <= 0:
        raise ValidationError("k_true must be positive")
    streams = _column_streams(spec.seed, spec.d + 3)
    centers_rng, coef_rng, assign_rng = streams[spec.d], streams[spec.d + 1], streams[spec.d + 2]

    centers = np.concatenate(
        [[1.0], centers_rng.uniform(-spec.center_scale, spec.center_scale, size=spec.d - 1)]
    )
    X = np.empty((spec.n, spec.d))
    X[:, 0] = 1.0
    for j in range(1, spec.d):
        X[:, j] = streams[j].uniform(
            centers[j] - spec.column_half_width,
            centers[j] + spec.column_half_width,
            size=spec.n,
        )

    v_star = _sparse_coefficients(coef_rng, spec.d, spec.support_size, spec.k_true)
    u_star = (
        v_star
        if spec.share_coefficients
        else _sparse_coefficients(coef_rng, spec.d, spec.support_size, spec.k_true)
    )
    Y1 = X @ v_star
    Y0 = X @ u_star

    logits = spec.logit_scale * (X[:, 1] - X[:, 2] + 0.5 * X[:, 3])
    propensity = expit(logits)
    T = (assign_rng.random(spec.n) < propensity).astype(int)
    if T.sum() < 2 or T.sum() > spec.n - 2:
        raise ValidationError("degenerate assignment draw; choose another seed")

    mu1 = float(v_star @ centers)
    mu0 = float(u_star @ centers)
    treated_rows = T == 1
    target = X.mean(axis=0)
    rho = hoeffding_radius(spec.d, spec.n, spec.alpha)
    k = spec.k_override if spec.k_override is not None else spec.k_true
    treated = BalanceProblem(
        X=X[treated_rows], Y=Y1[treated_rows], target=target,
        conc_radius=rho, k=k, alpha=spec.alpha,
    )
    control = BalanceProblem(
        X=X[~treated_rows], Y=Y0[~treated_rows], target=treated.target,
        conc_radius=rho, k=k, alpha=spec.alpha,
    )
    bound = spec.logit_scale * (
        np.abs(centers[1]) + np.abs(centers[2]) + 0.5 * np.abs(centers[3])
        + 2.5 * spec.column_half_width
    )
    return SimData(
        treated=treated,
        control=control,
        ate=mu1 - mu0,
        mu1=mu1,
        mu0=mu0,
        extras={
            "v_star": v_star,
            "u_star": u_star,
            "k_true": spec.k_true,
            "population_mean": centers,
            "propensity": propensity,
            "overlap_gamma": float(expit(-bound)),
        },
    )


def generate(spec: SimSpec) -> SimData:
    if spec.kind is SimKind.SUBGROUP:
        return gen_subgroup(spec)
    if spec.kind is SimKind.CELEBRITY:
        return gen_celebrity(spec)
    return gen_linear_sparse(spec)


def dump_csv(sim: SimData, path) -> None:
    """Write the generated sample in the ingestion CSV schema
    (covariate columns x0..x{d-1}, then outcome, then treatment)."""
    d = sim.treated.d
    names = [f"x{j}" for j in range(d)] + ["outcome", "treatment"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for problem, flag in ((sim.treated, 1), (sim.control, 0)):
            for i in range(problem.n_g):
                writer.writerow(
                    [repr(float(x)) for x in problem.X[i]]
                    + [repr(float(problem.Y[i])), flag]
                )
