"""Piling, sufficient statistics and dataset file format tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tslocaldag.data import (DataError, ParseError, TimeSeriesDataset,
                             load_dataset, pile, save_dataset_csv,
                             save_dataset_json, sufficient_stats)


def make_dataset(lengths, p, seed=0):
    rng = np.random.default_rng(seed)
    reps = [rng.standard_normal((n, p)) for n in lengths]
    return TimeSeriesDataset(replicates=reps, variable_names=[f"X{i}" for i in range(p)])


# ---------------------------------------------------------------------------
# dataset validation

def test_dataset_rejects_wrong_width():
    with pytest.raises(DataError):
        TimeSeriesDataset(replicates=[np.zeros((5, 3))], variable_names=["A", "B"])


def test_dataset_rejects_nan():
    bad = np.zeros((4, 2))
    bad[1, 1] = np.nan
    with pytest.raises(DataError):
        TimeSeriesDataset(replicates=[bad], variable_names=["A", "B"])


def test_dataset_rejects_empty():
    with pytest.raises(DataError):
        TimeSeriesDataset(replicates=[], variable_names=["A"])


# ---------------------------------------------------------------------------
# piling

def test_pile_shapes_and_layout():
    ds = make_dataset([6, 5], p=2)
    pm = pile(ds, q=1)
    assert pm.N == (6 - 1) + (5 - 1)
    assert pm.data.shape == (9, 4)
    assert pm.segment_lengths == [5, 4]
    # column (q - l) * p + g holds variable g at lag l
    np.testing.assert_array_equal(pm.data[:5, 0], ds.replicates[0][:5, 0])
    np.testing.assert_array_equal(pm.data[:5, 2], ds.replicates[0][1:6, 0])


def test_pile_q0_is_identity():
    ds = make_dataset([4, 3], p=3)
    pm = pile(ds, q=0)
    assert pm.N == 7
    np.testing.assert_array_equal(pm.data, np.vstack(ds.replicates))


def test_pile_tcell_shape():
    ds = make_dataset([10] * 44, p=58, seed=1)
    pm = pile(ds, q=1)
    assert pm.data.shape == (396, 116)


def test_pile_alarm_shape():
    ds = make_dataset([500], p=37, seed=2)
    pm = pile(ds, q=1)
    assert pm.data.shape == (499, 74)


def test_pile_excludes_short_replicates_with_warning():
    ds = make_dataset([6, 2, 5], p=2)
    with pytest.warns(UserWarning, match="excluded"):
        pm = pile(ds, q=2)
    assert pm.segment_lengths == [4, 3]


def test_pile_all_too_short_is_error():
    ds = make_dataset([2, 2], p=2)
    with pytest.warns(UserWarning):
        with pytest.raises(DataError):
            pile(ds, q=3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(2, 30), min_size=1, max_size=6),
       st.integers(1, 4), st.integers(0, 2))
def test_pile_row_count_property(lengths, p, q):
    usable = [n for n in lengths if n >= q + 1]
    if not usable:
        return
    ds = make_dataset(lengths, p)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pm = pile(ds, q)
    assert pm.N == sum(usable) - q * len(usable)
    assert pm.data.shape[1] == p * (q + 1)


# ---------------------------------------------------------------------------
# sufficient statistics

def test_sufficient_stats_matches_numpy():
    ds = make_dataset([50, 40], p=3, seed=3)
    pm = pile(ds, q=1)
    stats = sufficient_stats(pm, center=True)
    np.testing.assert_allclose(stats.means, pm.data.mean(axis=0), atol=1e-12)
    expected = np.cov(pm.data, rowvar=False, bias=True)
    np.testing.assert_allclose(stats.covariance, expected, atol=1e-12)


def test_sufficient_stats_uncentered():
    ds = make_dataset([30], p=2, seed=4)
    pm = pile(ds, q=0)
    stats = sufficient_stats(pm, center=False)
    expected = pm.data.T @ pm.data / pm.N
    np.testing.assert_allclose(stats.covariance, expected, atol=1e-12)


def test_sufficient_stats_replicate_order_invariant():
    ds = make_dataset([20, 31, 17], p=3, seed=5)
    rev = TimeSeriesDataset(replicates=list(reversed(ds.replicates)),
                            variable_names=ds.variable_names)
    s1 = sufficient_stats(pile(ds, 1))
    s2 = sufficient_stats(pile(rev, 1))
    # bit-identical, not merely close
    assert np.array_equal(s1.covariance, s2.covariance)
    assert np.array_equal(s1.means, s2.means)


def test_ar1_cross_lag_covariance_block():
    # X_t = b X_{t-1} + eps: Var = 1/(1-b^2), Cov(X_t, X_{t-1}) = b/(1-b^2)
    b = 0.6
    rng = np.random.default_rng(6)
    n = 200_000
    x = np.zeros(n)
    for t in range(1, n):
        x[t] = b * x[t - 1] + rng.standard_normal()
    ds = TimeSeriesDataset(replicates=[x[1000:, None]], variable_names=["X"])
    stats = sufficient_stats(pile(ds, q=1))
    var = 1.0 / (1.0 - b * b)
    se = 3 * var / np.sqrt(n)  # crude 3-sigma band
    assert abs(stats.covariance[0, 0] - var) < 3 * se
    assert abs(stats.covariance[0, 1] - b * var) < 3 * se


# ---------------------------------------------------------------------------
# file formats

def test_csv_round_trip_bit_exact(tmp_path):
    ds = make_dataset([7, 5], p=3, seed=7)
    path = tmp_path / "d.csv"
    save_dataset_csv(ds, path)
    back = load_dataset(path)
    assert back.variable_names == ds.variable_names
    assert len(back.replicates) == 2
    for a, b in zip(ds.replicates, back.replicates):
        assert np.array_equal(a, b)


def test_json_round_trip(tmp_path):
    ds = make_dataset([4], p=2, seed=8)
    path = tmp_path / "d.json"
    save_dataset_json(ds, path)
    back = load_dataset(path)
    assert np.array_equal(back.replicates[0], ds.replicates[0])


def test_csv_rows_sorted_by_replicate_and_time(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("replicate,time,A\n"
                    "1,1,4.0\n"
                    "0,1,2.0\n"
                    "1,0,3.0\n"
                    "0,0,1.0\n")
    ds = load_dataset(path)
    np.testing.assert_array_equal(ds.replicates[0].ravel(), [1.0, 2.0])
    np.testing.assert_array_equal(ds.replicates[1].ravel(), [3.0, 4.0])


def test_csv_parse_error_reports_location(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("replicate,time,A\n0,0,1.0\n0,1,oops\n")
    with pytest.raises(ParseError, match="row 3"):
        load_dataset(path)


def test_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("rep,t,A\n0,0,1.0\n")
    with pytest.raises(ParseError, match="header"):
        load_dataset(path)


def test_csv_rejects_ragged_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("replicate,time,A,B\n0,0,1.0\n")
    with pytest.raises(ParseError, match="row 2"):
        load_dataset(path)


def test_empty_csv_is_parse_error(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ParseError):
        load_dataset(path)
