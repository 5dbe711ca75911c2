import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medianfit.data import (
    FIELDS,
    INPUT_FIELDS,
    Records,
    ScalingManifest,
    SyntheticConfig,
    clean,
    generate_synthetic,
    load_csv,
    normalize,
    prepare,
    split,
    subsample,
    subsample_indices,
    write_csv,
)
from medianfit.errors import ConfigError, DataError

GOOD = [18.0, 5.0, 90.0, 10.0, 0.2, 0.6]


def recs(rows, status=None):
    return Records(np.array(rows, dtype=float), status)


def random_records(n, seed=0):
    rng = np.random.default_rng(seed)
    v = np.column_stack([rng.uniform(5, 22, n), rng.uniform(0, 20, n), rng.uniform(0, 359, n),
                         rng.uniform(9, 12, n), rng.normal(0, 0.5, n), rng.uniform(0.05, 1, n)])
    return Records(v)


# ---------------------------------------------------------------- clean

def test_clean_drops_low_power_and_missing():
    low = GOOD[:-1] + [0.04]
    missing = GOOD.copy()
    missing[3] = np.nan
    out = clean(recs([GOOD, low, missing]))
    assert len(out) == 1 and list(out.values[0]) == GOOD


@pytest.mark.parametrize("col,value", [(0, 0.0), (0, 36.0), (1, -1.0), (2, 360.0), (2, -0.1),
                                       (3, 0.0), (5, 1.5), (4, np.inf)])
def test_clean_drops_non_physical(col, value):
    row = GOOD.copy()
    row[col] = value
    assert len(clean(recs([GOOD, row]))) == 1


def test_clean_drops_unknown_status():
    assert len(clean(recs([GOOD, GOOD], np.array(["off", "maybe"], dtype=object)))) == 1


def test_clean_keeps_valid_set_in_order():
    r = random_records(200)
    assert clean(r) == r


def test_clean_everything_removed_is_error():
    with pytest.raises(DataError):
        clean(recs([GOOD[:-1] + [0.0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_clean_idempotent(seed):
    r = random_records(300, seed)
    r.values[::7, 5] = 0.01
    r.values[::11, 0] = np.nan
    once = clean(r)
    assert clean(once) == once


# ---------------------------------------------------------------- normalize

def test_normalize_endpoints_and_target_scaling():
    r = recs([[2, 1, 10, 9, 0, 0.4], [4, 3, 20, 11, 1, 0.8]])
    out, m = normalize(r)
    assert list(out.values[:, 0]) == [0, 1]
    assert list(out.values[:, 5]) == [0.5, 1.0]


def test_normalize_round_trip_and_constant_field():
    r = random_records(100)
    r.values[:, 4] = 0.25
    out, m = normalize(r)
    assert m.constant[4] and (out.values[:, 4] == 0.5).all()
    assert np.abs(m.invert(out).values - r.values).max() < 1e-12
    assert np.abs(m.invert_target(out.target) - r.target).max() < 1e-12


def test_manifest_reuse_and_json():
    r = random_records(100, 3)
    _, m = normalize(r)
    unseen = random_records(5, 4)
    unseen.values[0] = r.values[np.argmin(r.values[:, 0])]
    assert m.apply(unseen).values[0, 0] == 0.0
    back = ScalingManifest.from_json(m.to_json())
    assert back == m


def test_after_clean_and_normalize_ranges():
    _, m = normalize(clean(random_records(500)))
    out = m.apply(clean(random_records(500)))
    assert (out.inputs >= 0).all() and (out.inputs <= 1).all()
    assert (out.target > 0).all() and (out.target <= 1).all()
    assert out.target.min() >= 0.05 / clean(random_records(500)).target.max() - 1e-15


# ---------------------------------------------------------------- split / subsample

def test_split_proportions_and_partition():
    r = random_records(1000)
    s = split(r, 5)
    assert s.sizes() == (700, 150, 150)
    merged = Records.concat([s.train, s.validation, s.test])
    key = lambda v: sorted(map(tuple, v))  # noqa: E731
    assert key(merged.values) == key(r.values)
    assert len({tuple(x) for x in merged.values}) == 1000


def test_split_determinism():
    r = random_records(1000)
    assert split(r, 1).train == split(r, 1).train
    assert not (split(r, 1).train == split(r, 2).train)


@given(st.integers(10, 3000))
def test_split_sizes_within_one(n):
    s = split(random_records(n), 0)
    a, b, c = s.sizes()
    assert a + b + c == n
    assert abs(a - 0.7 * n) <= 1 and abs(b - 0.15 * n) <= 1 and abs(c - 0.15 * n) <= 1


def test_split_needs_ten():
    with pytest.raises(DataError):
        split(random_records(9), 0)


def test_subsample_sizes():
    idx = subsample_indices((100_000, 20_000, 20_000), 3)
    assert [len(i) for i in idx] == [35_000, 7_500, 7_500]
    for i, n in zip(idx, (100_000, 20_000, 20_000)):
        assert len(set(i.tolist())) == len(i) and i.min() >= 0 and i.max() < n
    small = subsample(split(random_records(1400), 0), 3)
    assert small.sizes() == (980, 210, 210)
    assert [len(i) for i in subsample_indices((1000, 200, 200), 1)] == [1000, 200, 200]


# ---------------------------------------------------------------- synthetic

def test_noise_free_generator_is_cubic():
    cfg = SyntheticConfig(n_points=500, noise_scale=0, idiosyncratic_fraction=0, wind_coefficient=0,
                          draught_coefficient=0, trim_coefficient=0, seed=4)
    r = generate_synthetic(cfg)
    ratio = r.target / r.column("speed_through_water") ** 3
    assert np.ptp(ratio) < 1e-15 * ratio.max() * 10


def test_generator_deterministic():
    a = generate_synthetic(SyntheticConfig(n_points=2000, seed=9))
    assert a == generate_synthetic(SyntheticConfig(n_points=2000, seed=9))
    assert not (a == generate_synthetic(SyntheticConfig(n_points=2000, seed=10)))


@pytest.mark.parametrize("kw", [dict(speed_mixture=(0.5, 0.6)), dict(noise_scale=-1),
                                dict(n_points=0), dict(tail_speed_range=(10, 40))])
def test_synthetic_config_validation(kw):
    with pytest.raises(ConfigError):
        SyntheticConfig(**kw)


def half_knot_shares(speed):
    bins = np.floor(speed / 0.5).astype(int)
    return np.bincount(bins) / len(speed)


def residual_variance_ratio(speed, power):
    """Top vs bottom speed quartile variance of residuals about half-knot bin medians."""
    bins = np.floor(speed / 0.5).astype(int)
    med = np.empty_like(power)
    for b in np.unique(bins):
        m = bins == b
        med[m] = np.median(power[m])
    res = power - med
    q1, q3 = np.quantile(speed, [0.25, 0.75])
    return res[speed >= q3].var() / res[speed <= q1].var()


@pytest.mark.parametrize("seed", [0, 5])
def test_generator_distribution_facts(seed):
    r = generate_synthetic(SyntheticConfig(n_points=100_000, seed=seed))
    v = r.column("speed_through_water")
    shares = half_knot_shares(v)
    assert shares.max() >= 0.09
    assert shares[:32].max() < 0.008
    assert residual_variance_ratio(v, r.target) >= 3.0


# ---------------------------------------------------------------- CSV

def test_csv_round_trip(tmp_path):
    r = random_records(50)
    r.values[3, 2] = np.nan
    r.status[4] = "on"
    back, skipped = load_csv(write_csv(r, tmp_path / "d.csv"))
    assert skipped == 0 and back == r


def test_csv_skips_text_rows_and_maps_columns(tmp_path):
    path = tmp_path / "d.csv"
    header = ["stw"] + list(FIELDS[1:])
    lines = [",".join(header), ",".join(map(str, GOOD)), "fast," + ",".join(map(str, GOOD[1:])),
             ",".join(map(str, GOOD))]
    path.write_text("\n".join(lines) + "\n")
    r, skipped = load_csv(path, {"speed_through_water": "stw"})
    assert len(r) == 2 and skipped == 1
    assert (r.status == "off").all()


def test_csv_missing_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("speed_through_water,draught\n1,2\n")
    with pytest.raises(DataError, match="relative_wind_speed"):
        load_csv(path)


def test_prepare_pipeline():
    r = generate_synthetic(SyntheticConfig(n_points=3000, system_on_fraction=0.3, seed=1))
    p = prepare(r, 0)
    assert p.source_rows == len(r)
    n_off = int((r.status == "off").sum())
    assert sum(p.split.sizes()) == len(clean(r.with_status("off")))
    assert sum(p.split.sizes()) <= n_off
    assert p.split.train.inputs.shape[1] == len(INPUT_FIELDS)
    assert math.isclose(max(p.split.train.target.max(), p.split.validation.target.max(),
                            p.split.test.target.max()), 1.0)
