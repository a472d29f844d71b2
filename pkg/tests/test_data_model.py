import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from effnoise.data_model import (
    DataError,
    Dataset,
    RngSpec,
    draw_standard_normal,
    load_csv,
    make_grid,
    standardize,
    write_csv,
)


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv_three_by_three(tmp_path):
    path = _write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    d = load_csv(path, response_column="y")
    assert (d.n, d.p) == (3, 2)
    assert d.names == ("a", "b")
    np.testing.assert_array_equal(d.Y, [3, 6, 9])
    np.testing.assert_array_equal(d.X[:, 1], [2, 5, 8])


def test_load_csv_reports_bad_cell(tmp_path):
    path = _write(tmp_path, "a,b,y\nabc,2,3\n4,5,6\n")
    with pytest.raises(DataError) as err:
        load_csv(path, response_column="y")
    assert (err.value.row, err.value.column) == (2, 1)
    assert "row 2" in str(err.value) and "column 1" in str(err.value)


def test_load_csv_without_header_names_predictors(tmp_path):
    path = _write(tmp_path, "1,2,3,4\n5,6,7,8\n")
    d = load_csv(path, has_header=False, response_column=0)
    assert d.names == ("x1", "x2", "x3")
    np.testing.assert_array_equal(d.Y, [1, 5])


@pytest.mark.parametrize(
    "text",
    ["", "a,b\n", "a,b,y\n1,2\n", "a,y\n1,2\n3,4,5\n"],
    ids=["empty", "header-only", "short-row", "long-row"],
)
def test_load_csv_rejects_malformed(tmp_path, text):
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, text), response_column=0)


def test_load_csv_unknown_response(tmp_path):
    with pytest.raises(DataError, match="not in header"):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), response_column="y")


def test_load_csv_rejects_nonfinite(tmp_path):
    with pytest.raises(DataError, match="finite"):
        load_csv(_write(tmp_path, "y,a\n1,nan\n2,3\n"))


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.ones((3, 2)), np.ones(4))
    with pytest.raises(DataError):
        Dataset(np.ones(3), np.ones(3))
    with pytest.raises(DataError):
        Dataset(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(DataError):
        Dataset(np.ones((2, 2)), np.ones(2), column_names=("a",))


def test_dataset_is_read_only():
    d = Dataset(np.ones((3, 2)), np.ones(3))
    with pytest.raises(ValueError):
        d.X[0, 0] = 5.0
    assert d.X.flags.f_contiguous


@settings(max_examples=30, deadline=None)
@given(
    hnp.arrays(
        np.float64,
        hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
        elements=st.floats(-1e12, 1e12, allow_nan=False, allow_subnormal=False),
    )
)
def test_csv_round_trip_is_exact(tmp_path_factory, table):
    d = Dataset(table, table[:, 0] * 0.5 - 1.0)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, path)
    back = load_csv(path, response_column="y")
    np.testing.assert_array_equal(back.X, d.X)
    np.testing.assert_array_equal(back.Y, d.Y)
    assert back.names == d.names


def test_standardize_moments():
    rng = np.random.default_rng(0)
    X = rng.normal(3.0, 2.0, (50, 4))
    X[:, 2] = 1.5  # constant column stays finite
    d = standardize(Dataset(X, rng.standard_normal(50)))
    np.testing.assert_allclose(d.X.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(np.mean(d.X[:, [0, 1, 3]] ** 2, axis=0), 1, rtol=1e-12)
    np.testing.assert_array_equal(d.X[:, 2], 0)


def test_make_grid_examples():
    np.testing.assert_array_equal(make_grid(4.0, 4).lambdas, [1.0, 2.0, 3.0, 4.0])
    g = make_grid(0.0, 100)
    assert g.degenerate and not np.any(g.lambdas)
    with pytest.raises(ValueError):
        make_grid(1.0, 0)
    with pytest.raises(ValueError):
        make_grid(-1.0, 5)


def test_make_grid_matches_equidistant_lambda_bar_grid():
    rng = np.random.default_rng(1)
    X, Y = rng.standard_normal((30, 10)), rng.standard_normal(30)
    lb = 2 * np.max(np.abs(X.T @ Y)) / 30
    g = make_grid(lb, 100)
    expected = np.array([m * lb / 100 for m in range(1, 101)])
    np.testing.assert_allclose(g.lambdas, expected, rtol=1e-15)
    assert g.lambdas[-1] == lb


@given(st.floats(1e-6, 1e6), st.integers(1, 500))
def test_grid_is_equidistant(lb, M):
    g = make_grid(lb, M)
    assert g.lambdas[-1] == lb
    steps = np.diff(np.concatenate([[0.0], g.lambdas]))
    np.testing.assert_allclose(steps, lb / M, rtol=1e-12)
    assert np.all(np.diff(g.lambdas) > 0)


def test_draws_are_reproducible_and_distinct():
    rng = RngSpec(42)
    a = draw_standard_normal(rng, "multiplier", 3, 16)
    np.testing.assert_array_equal(a, draw_standard_normal(RngSpec(42), "multiplier", 3, 16))
    assert np.any(a != draw_standard_normal(rng, "multiplier", 4, 16))
    assert np.any(a != draw_standard_normal(rng, "design", 3, 16))
    assert np.any(a != draw_standard_normal(RngSpec(43), "multiplier", 3, 16))
    assert draw_standard_normal(rng, "x", 0, 0).shape == (0,)


def test_draws_do_not_depend_on_evaluation_order():
    rng = RngSpec(5)
    forward = [draw_standard_normal(rng, "m", i, 8) for i in range(5)]
    backward = [draw_standard_normal(rng, "m", i, 8) for i in reversed(range(5))][::-1]
    for a, b in zip(forward, backward):
        np.testing.assert_array_equal(a, b)


def test_child_streams_are_distinct():
    rng = RngSpec(9)
    a = rng.child("bootstrap", 0).generator("multiplier", 0).standard_normal(8)
    b = rng.child("bootstrap", 1).generator("multiplier", 0).standard_normal(8)
    assert np.any(a != b)


def test_draw_mean_monte_carlo():
    z = draw_standard_normal(RngSpec(2024), "mc", 0, 1_000_000)
    assert abs(z.mean()) <= 0.005
    assert abs(z.var() - 1.0) <= 0.01
