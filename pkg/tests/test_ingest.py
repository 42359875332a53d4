import numpy as np
import pytest

from flexbal.errors import DataError, ValidationError
from flexbal.ingest import (
    CONSTANT_COLUMN,
    CsvSchema,
    RawDataset,
    RffConfig,
    apply_rff,
    build_target,
    draw_rff_params,
    load_csv,
    median_heuristic_bandwidth,
    rff_expand,
    split_problems,
    standardize,
)

SCHEMA = CsvSchema(covariates=("a", "b"), outcome="y", treatment="t")


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def toy_dataset(rng, n=10, d=3):
    return RawDataset(
        X=rng.uniform(-2.0, 3.0, size=(n, d)),
        y=rng.normal(size=n),
        t=(rng.random(n) < 0.5).astype(int),
        covariate_names=tuple(f"c{j}" for j in range(d)),
    )


class TestLoadCsv:
    def test_three_row_toy(self, tmp_path):
        path = write(tmp_path, "a,b,y,t\n1,2,0.5,1\n3,4,0.25,0\n5,6,-1,1\n")
        ds = load_csv(path, SCHEMA)
        assert ds.n == 3
        assert np.allclose(ds.X, [[1, 2], [3, 4], [5, 6]])
        assert np.allclose(ds.y, [0.5, 0.25, -1.0])
        assert list(ds.t) == [1, 0, 1]

    def test_non_numeric_cell_named(self, tmp_path):
        path = write(tmp_path, "a,b,y,t\n1,oops,0.5,1\n")
        with pytest.raises(DataError, match="line 2, column 'b'"):
            load_csv(path, SCHEMA)

    def test_missing_value_named(self, tmp_path):
        path = write(tmp_path, "a,b,y,t\n1,2,0.5,1\n1,,0.5,0\n")
        with pytest.raises(DataError, match="line 3, column 'b'"):
            load_csv(path, SCHEMA)

    def test_missing_column(self, tmp_path):
        path = write(tmp_path, "a,y,t\n1,0.5,1\n")
        with pytest.raises(DataError, match="columns missing"):
            load_csv(path, SCHEMA)

    def test_nonbinary_treatment(self, tmp_path):
        path = write(tmp_path, "a,b,y,t\n1,2,0.5,2\n")
        with pytest.raises(DataError, match="treatment"):
            load_csv(path, SCHEMA)

    def test_nine_covariate_layout(self, tmp_path):
        names = [f"v{j}" for j in range(9)]
        header = ",".join(names + ["income", "treat"])
        row = ",".join(["1.0"] * 9 + ["100.0", "0"])
        path = write(tmp_path, header + "\n" + row + "\n" + row + "\n")
        schema = CsvSchema(covariates=tuple(names), outcome="income", treatment="treat")
        ds = load_csv(path, schema)
        assert ds.d == 9


class TestStandardize:
    def test_halves_symmetric_range(self, rng):
        ds = RawDataset(
            X=np.array([[-2.0], [2.0], [1.0]]),
            y=np.zeros(3),
            t=np.array([0, 1, 0]),
            covariate_names=("a",),
        )
        out, record = standardize(ds)
        assert np.allclose(out.X[:, 0], [-1.0, 1.0, 0.5])
        assert out.covariate_names == ("a", CONSTANT_COLUMN)

    def test_constant_column_passthrough(self):
        ds = RawDataset(
            X=np.array([[3.0, 1.0], [3.0, 2.0]]),
            y=np.zeros(2),
            t=np.array([0, 1]),
            covariate_names=("c", "a"),
        )
        out, record = standardize(ds)
        assert np.allclose(out.X[:, 0], 3.0)
        assert record.columns[0].constant

    def test_round_trip(self, rng):
        ds = toy_dataset(rng)
        out, record = standardize(ds)
        recovered = record.invert(out.X)
        assert np.allclose(recovered, ds.X, atol=1e-12)

    def test_idempotent(self, rng):
        ds = toy_dataset(rng)
        once, _ = standardize(ds)
        twice, record2 = standardize(once)
        assert twice.covariate_names == once.covariate_names
        assert np.allclose(twice.X, once.X, atol=1e-12)

    def test_output_in_unit_box(self, rng):
        out, _ = standardize(toy_dataset(rng, n=30))
        assert out.X.min() >= -1.0 - 1e-12
        assert out.X.max() <= 1.0 + 1e-12


class TestRff:
    def test_zero_input_zero_offsets(self):
        omega = np.ones((3, 8))
        feats = apply_rff(np.zeros((2, 3)), omega, np.zeros(8))
        assert np.allclose(feats, np.sqrt(2.0 / 8))

    def test_bounded(self, rng):
        ds, _ = standardize(toy_dataset(rng, n=20))
        out, meta = rff_expand(ds, RffConfig(out_dim=16, bandwidth=1.0, seed=1))
        without_const = out.X[:, :-1]
        assert np.abs(without_const).max() <= np.sqrt(2.0 / 16) + 1e-12

    def test_deterministic(self, rng):
        ds, _ = standardize(toy_dataset(rng))
        a, _ = rff_expand(ds, RffConfig(out_dim=8, bandwidth=2.0, seed=5))
        b, _ = rff_expand(ds, RffConfig(out_dim=8, bandwidth=2.0, seed=5))
        assert np.array_equal(a.X, b.X)

    def test_kernel_approximation(self, rng):
        d_in, D, bw = 4, 4096, 1.5
        cfg = RffConfig(out_dim=D, bandwidth=bw, seed=3)
        omega, offsets = draw_rff_params(cfg, d_in, bw)
        X = rng.normal(size=(100, d_in))
        Y = rng.normal(size=(100, d_in))
        fx = apply_rff(X, omega, offsets)
        fy = apply_rff(Y, omega, offsets)
        dots = np.sum(fx * fy, axis=1)
        kernel = np.exp(-np.sum((X - Y) ** 2, axis=1) / (2 * bw**2))
        assert np.abs(dots - kernel).max() < 0.05

    def test_median_heuristic_positive(self, rng):
        bw = median_heuristic_bandwidth(rng.normal(size=(50, 3)), seed=0)
        assert bw > 0


class TestBuildTarget:
    def test_combined_mode(self, rng):
        ds = toy_dataset(rng, n=4)
        target, n = build_target(ds)
        assert n == 4
        assert np.allclose(target, ds.X.mean(axis=0))

    def test_external_mode(self):
        target, n = build_target(external_target=[0.5, -0.5], external_n=77)
        assert n == 77
        assert np.allclose(target, [0.5, -0.5])

    def test_modes_agree(self, rng):
        ds = toy_dataset(rng, n=6)
        t1, n1 = build_target(ds)
        t2, n2 = build_target(external_target=ds.X.mean(axis=0), external_n=ds.n)
        assert np.allclose(t1, t2) and n1 == n2

    def test_arity_checked(self):
        with pytest.raises(ValidationError):
            build_target(external_target=[1.0], external_n=5, d=2)

    def test_combined_target_within_column_ranges(self, rng):
        ds, _ = standardize(toy_dataset(rng, n=25))
        target, _ = build_target(ds)
        assert np.all(target >= ds.X.min(axis=0) - 1e-12)
        assert np.all(target <= ds.X.max(axis=0) + 1e-12)


class TestSplitProblems:
    def test_shares_target_object(self, rng):
        ds, _ = standardize(toy_dataset(rng, n=20))
        treated, control = split_problems(ds, k=1.0)
        assert treated.target is control.target
        assert treated.n_g + control.n_g == 20

    def test_needs_both_groups(self, rng):
        ds = toy_dataset(rng, n=5)
        ds = RawDataset(X=ds.X, y=ds.y, t=np.ones(5, dtype=int),
                        covariate_names=ds.covariate_names)
        with pytest.raises(DataError):
            split_problems(ds, k=1.0)
