import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medianfit.errors import DataError
from medianfit.interpret import (
    LearntCurve,
    curve_spread,
    curve_vs_median,
    extract_curve,
    input_mode,
    mode_sweep,
    write_curves_csv,
    write_spread_csv,
)
from medianfit.metrics import (
    ConditionalMedianTable,
    conditional_median_table,
    mean_fit_to_median_error,
)
from medianfit.nn_core import NetworkConfig, init_network


def test_mode_constant_column():
    assert input_mode(np.full((10, 1), 0.4), 0) == 0.4


def test_mode_dense_cluster():
    rng = np.random.default_rng(0)
    x = np.concatenate([0.8 + rng.uniform(-0.001, 0.001, 90), rng.uniform(0, 1, 10)])
    x[-2:] = [0.0, 1.0]
    mode = input_mode(x.reshape(-1, 1), 0)
    # bins are 0.02 wide; the cluster (half-width 0.001) may straddle an edge
    assert abs(mode - 0.8) <= 0.01 + 0.001 + 1e-12


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_mode_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((200, 2))
    assert input_mode(X, 1) == input_mode(X[rng.permutation(200)], 1)


def test_mode_ties_prefer_lower_bin():
    x = np.array([0.0, 0.0, 1.0, 1.0]).reshape(-1, 1)
    assert input_mode(x, 0, n_bins=2) == 0.25


def _linear_model(j, slope=2.0, intercept=1.0, dim=5):
    cfg = NetworkConfig(1, (1,), "relu", input_dim=dim)
    m = init_network(cfg, 0)
    m.params[:] = 0
    W1 = np.zeros(dim)
    W1[j] = 1.0
    # relu is the identity on the nonnegative normalised inputs
    m.params[:dim] = W1
    m.params[dim + 1] = slope
    m.params[dim + 2] = intercept
    return m


def test_extract_linear_curve():
    rng = np.random.default_rng(1)
    X = rng.random((500, 5))
    c = extract_curve(_linear_model(2), X, 2)
    assert len(c.xs) == 150
    assert c.xs[0] == X[:, 2].min() and c.xs[-1] == X[:, 2].max()
    assert (np.diff(c.xs) > 0).all()
    assert np.allclose(c.ys, 2 * c.xs + 1, atol=1e-14)


def test_extract_constant_model_and_determinism():
    X = np.random.default_rng(2).random((100, 5))
    m = init_network(NetworkConfig(1, (3,), "tanh", dropout_rate=0.5), 0)
    m.params[:] = 0
    m.params[-1] = 0.3
    c = extract_curve(m, X, 0)
    assert (c.ys == 0.3).all()
    m2 = init_network(NetworkConfig(2, (6, 6), "elu", dropout_rate=0.5), 4)
    assert np.array_equal(extract_curve(m2, X, 1).ys, extract_curve(m2, X, 1).ys)


def _curve(ys, j=0):
    ys = np.asarray(ys, dtype=float)
    return LearntCurve(j, np.linspace(0, 1, len(ys)), ys)


def test_spread_examples():
    assert curve_spread([_curve(np.ones(5)), _curve(np.ones(5))]).average_spread == 0
    rep = curve_spread([_curve(np.full(5, 0.9)), _curve(np.full(5, 1.0))])
    assert np.allclose(rep.per_point, 100 * 0.1 / 0.95)
    assert rep.average_spread == pytest.approx(10.526315789473685)
    assert rep.n_networks == 2


def test_spread_recompute_oracle():
    rng = np.random.default_rng(3)
    curves = [_curve(rng.uniform(0.5, 1.5, 150)) for _ in range(5)]
    rep = curve_spread(curves)
    for p in range(150):
        vals = [c.ys[p] for c in curves]
        want = 100 * (max(vals) - min(vals)) / (sum(vals) / 5)
        assert abs(rep.per_point[p] - want) < 1e-12
    assert rep.average_spread >= 0


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_spread_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    curves = [_curve(rng.uniform(0.5, 1.5, 20)) for _ in range(4)]
    a = curve_spread(curves).average_spread
    b = curve_spread([curves[i] for i in rng.permutation(4)]).average_spread
    assert a == pytest.approx(b, rel=1e-12)


def test_spread_errors():
    with pytest.raises(ValueError):
        curve_spread([_curve([1, 2])])
    with pytest.raises(ValueError):
        curve_spread([_curve([1, 2]), _curve([1, 2, 3])])


def test_curve_vs_median_examples():
    table = ConditionalMedianTable(0, np.array([0.0, 1.0]), np.array([2.0]), np.array([30]), 20)
    assert curve_vs_median(_curve(np.full(10, 3.0)), table) == pytest.approx(50.0)
    assert curve_vs_median(_curve(np.full(10, 2.0)), table) == 0
    empty = ConditionalMedianTable(0, np.array([0.0, 1.0]), np.array([np.nan]), np.array([3]), 20)
    with pytest.raises(DataError):
        curve_vs_median(_curve(np.ones(3)), empty)


def test_mfme_is_mean_of_curve_vs_median():
    rng = np.random.default_rng(5)
    X = rng.random((4000, 5))
    y = 0.1 + X[:, 0] ** 3 + 0.2 * X[:, 3]
    tables = [conditional_median_table(X, y, j) for j in range(5)]
    sweep = mode_sweep(X)
    m = init_network(NetworkConfig(2, (8, 8), "softplus"), 3)
    mfme = mean_fit_to_median_error(m, X, tables, sweep)
    parts = [curve_vs_median(extract_curve(m, X, j, sweep), tables[j]) for j in range(5)]
    assert abs(mfme - np.mean(parts)) < 1e-12


def test_csv_writers(tmp_path):
    curves = [LearntCurve(0, np.array([0.0, 0.5]), np.array([1.0, 2.0]), "a"),
              LearntCurve(0, np.array([0.0, 0.5]), np.array([1.5, 2.5]), "b")]
    p = write_curves_csv(curves, tmp_path / "c.csv", ["speed"])
    rows = list(csv.DictReader(open(p)))
    assert len(rows) == 4 and rows[0] == {"variable_id": "speed", "network_id": "a", "x": "0.0", "y": "1.0"}
    s = write_spread_csv(curve_spread(curves), tmp_path / "s.csv")
    rows = list(csv.DictReader(open(s)))
    assert [r["point"] for r in rows] == ["0", "1", "average"]
