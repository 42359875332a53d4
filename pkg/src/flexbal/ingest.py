"""Dataset ingestion: CSV loading, standardization to [-1, 1], target
construction, and random Fourier feature expansion."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DataError, ValidationError

logger = logging.getLogger(__name__)

CONSTANT_COLUMN = "_const"


@dataclass(frozen=True)
class CsvSchema:
    covariates: tuple[str, ...]
    outcome: str
    treatment: str

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if len(self.covariates) < 1:
            raise ValidationError("schema needs at least one covariate column")


@dataclass(frozen=True)
class RawDataset:
    X: np.ndarray
    y: np.ndarray
    t: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if self.X.shape != (self.y.size, len(self.covariate_names)):
            raise ValidationError("dataset arrays are inconsistent")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.X.shape[1]


def load_csv(path, schema: CsvSchema) -> RawDataset:
    """Parse a UTF-8 CSV with a header row against ``schema``.

    Missing or non-numeric cells raise :class:`DataError` naming the file
    line and column; there is no imputation.  The treatment column must
    be binary.
    """
    rows_X: list[list[float]] = []
    rows_y: list[float] = []
    rows_t: list[int] = []
    wanted = list(schema.covariates) + [schema.outcome, schema.treatment]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing_cols = [c for c in wanted if c not in header]
        if missing_cols:
            raise DataError(f"columns missing from {path}: {missing_cols}")
        for line_no, record in enumerate(reader, start=2):
            def cell(name):
                raw = record.get(name)
                if raw is None or raw.strip() == "":
                    raise DataError(
                        f"missing value at line {line_no}, column '{name}'"
                    )
                try:
                    return float(raw)
                except ValueError:
                    raise DataError(
                        f"non-numeric value '{raw}' at line {line_no}, column '{name}'"
                    ) from None

            rows_X.append([cell(c) for c in schema.covariates])
            rows_y.append(cell(schema.outcome))
            t_val = cell(schema.treatment)
            if t_val not in (0.0, 1.0):
                raise DataError(
                    f"treatment must be 0 or 1, got {t_val} at line {line_no}"
                )
            rows_t.append(int(t_val))
    if not rows_y:
        raise DataError(f"no data rows in {path}")
    X = np.asarray(rows_X, dtype=float)
    ds = RawDataset(
        X=X,
        y=np.asarray(rows_y, dtype=float),
        t=np.asarray(rows_t, dtype=int),
        covariate_names=schema.covariates,
    )
    logger.info(
        "loaded %d rows from %s; per-column ranges: %s",
        ds.n,
        path,
        {name: (float(X[:, j].min()), float(X[:, j].max()))
         for j, name in enumerate(schema.covariates)},
    )
    return ds


@dataclass(frozen=True)
class ColumnTransform:
    name: str
    lo: float
    hi: float
    constant: bool


@dataclass(frozen=True)
class StandardizeRecord:
    columns: tuple[ColumnTransform, ...]
    appended_constant: bool

    def apply(self, X: np.ndarray) -> np.ndarray:
        cols = []
        for j, ct in enumerate(self.columns):
            if ct.constant:
                cols.append(X[:, j])
            else:
                cols.append(2.0 * (X[:, j] - ct.lo) / (ct.hi - ct.lo) - 1.0)
        out = np.column_stack(cols)
        if self.appended_constant:
            out = np.column_stack([out, np.ones(X.shape[0])])
        return out

    def invert(self, X_std: np.ndarray) -> np.ndarray:
        width = len(self.columns)
        cols = []
        for j, ct in enumerate(self.columns):
            if ct.constant:
                cols.append(X_std[:, j])
            else:
                cols.append((X_std[:, j] + 1.0) * (ct.hi - ct.lo) / 2.0 + ct.lo)
        return np.column_stack(cols)[:, :width]


def standardize(ds: RawDataset, add_constant: bool = True):
    """Affinely map each covariate to [-1, 1] by its min/max over the
    full sample.

    Constant columns pass through unchanged and are flagged.  A constant
    covariate equal to one is appended (unless one named ``_const`` is
    already present), which keeps the target vector away from zero
    sup-norm.  Returns the new dataset and the invertible transform
    record.
    """
    transforms = []
    cols = []
    flagged = []
    for j, name in enumerate(ds.covariate_names):
        col = ds.X[:, j]
        lo, hi = float(col.min()), float(col.max())
        if hi - lo < 1e-300:
            transforms.append(ColumnTransform(name, lo, hi, constant=True))
            cols.append(col)
            flagged.append(name)
        else:
            transforms.append(ColumnTransform(name, lo, hi, constant=False))
            cols.append(2.0 * (col - lo) / (hi - lo) - 1.0)
    names = list(ds.covariate_names)
    append = add_constant and CONSTANT_COLUMN not in names
    if append:
        cols.append(np.ones(ds.n))
        names.append(CONSTANT_COLUMN)
    if flagged:
        logger.info("constant columns passed through: %s", flagged)
    record = StandardizeRecord(columns=tuple(transforms), appended_constant=append)
    out = RawDataset(
        X=np.column_stack(cols), y=ds.y, t=ds.t, covariate_names=tuple(names)
    )
    return out, record


@dataclass(frozen=True)
class RffConfig:
    """Random Fourier feature settings.

    ``bandwidth`` is the Gaussian kernel lengthscale, or the string
    ``"median"`` for the median pairwise distance over at most 2000
    subsampled rows (seeded).
    """

    out_dim: int
    bandwidth: float | str = "median"
    seed: int = 0

    def __post_init__(self):
        if self.out_dim < 1:
            raise ValidationError("out_dim must be >= 1")
        if not isinstance(self.bandwidth, str) and not self.bandwidth > 0:
            raise ValidationError("bandwidth must be positive or 'median'")


def median_heuristic_bandwidth(X: np.ndarray, seed: int, subsample: int = 2000) -> float:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if X.shape[0] > subsample:
        idx = rng.choice(X.shape[0], size=subsample, replace=False)
        X = X[idx]
    dists = pdist(X)
    med = float(np.median(dists)) if dists.size else 1.0
    return med if med > 0 else 1.0


def draw_rff_params(cfg: RffConfig, d_in: int, bandwidth: float):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    omega = rng.normal(0.0, 1.0 / bandwidth, size=(d_in, cfg.out_dim))
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=cfg.out_dim)
    return omega, offsets


def apply_rff(X: np.ndarray, omega: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """sqrt(2/D) cos(X omega + b); all outputs lie in [-sqrt(2/D), sqrt(2/D)]."""
    D = omega.shape[1]
    return np.sqrt(2.0 / D) * np.cos(X @ omega + offsets)


def rff_expand(ds: RawDataset, cfg: RffConfig):
    """Replace covariates with random cosine features approximating a
    Gaussian kernel; a constant column named ``_const`` is carried over
    (and appended if absent).

    Returns the expanded dataset and a metadata dict recording the
    resolved bandwidth and seed.
    """
    names = list(ds.covariate_names)
    feature_cols = [j for j, n in enumerate(names) if n != CONSTANT_COLUMN]
    X_in = ds.X[:, feature_cols]
    if isinstance(cfg.bandwidth, str):
        if cfg.bandwidth != "median":
            raise ValidationError("bandwidth must be a number or 'median'")
        bandwidth = median_heuristic_bandwidth(X_in, cfg.seed)
    else:
        bandwidth = float(cfg.bandwidth)
    omega, offsets = draw_rff_params(cfg, X_in.shape[1], bandwidth)
    feats = apply_rff(X_in, omega, offsets)
    out_names = [f"rff{r}" for r in range(cfg.out_dim)] + [CONSTANT_COLUMN]
    out = RawDataset(
        X=np.column_stack([feats, np.ones(ds.n)]),
        y=ds.y,
        t=ds.t,
        covariate_names=tuple(out_names),
    )
    meta = {"bandwidth": bandwidth, "seed": cfg.seed, "out_dim": cfg.out_dim}
    return out, meta


def build_target(
    ds: RawDataset | None = None,
    external_target=None,
    external_n: int | None = None,
    d: int | None = None,
):
    """Target mean vector and the sample count behind it.

    Combined-sample mode averages all rows of ``ds``; external-summary
    mode passes a supplied (vector, n) through verbatim, validating arity
    when the expected dimension is known.
    """
    if ds is not None:
        return ds.X.mean(axis=0), ds.n
    if external_target is None or external_n is None:
        raise ValidationError("provide a dataset or (external_target, external_n)")
    target = np.asarray(external_target, dtype=float).ravel()
    if d is not None and target.size != d:
        raise ValidationError(
            f"external target has length {target.size}, expected {d}"
        )
    if external_n < 1:
        raise ValidationError("external_n must be positive")
    return target, int(external_n)


def split_problems(ds: RawDataset, k: float, alpha: float = 0.05):
    """Treated/control problems from a dataset, sharing one combined
    target object and the default concentration radius."""
    from .core import BalanceProblem, hoeffding_radius

    target, n = build_target(ds)
    rho = hoeffding_radius(ds.d, n, alpha)
    treated_mask = ds.t == 1
    if treated_mask.sum() == 0 or treated_mask.sum() == ds.n:
        raise DataError("dataset needs both treated and control rows")
    treated = BalanceProblem(
        X=ds.X[treated_mask], Y=ds.y[treated_mask], target=target,
        conc_radius=rho, k=k, alpha=alpha,
    )
    control = BalanceProblem(
        X=ds.X[~treated_mask], Y=ds.y[~treated_mask], target=treated.target,
        conc_radius=rho, k=k, alpha=alpha,
    )
    return treated, control
