import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spodrom.data import (
    SnapshotMatrix,
    build_spherical_weights,
    build_uniform_weights,
    load_snapshot_matrix,
    save_snapshot_matrix,
    split_train_test,
    subtract_temporal_mean,
)
from spodrom.datasets import uniform_latlon_grid
from spodrom.exceptions import ConfigError, DataError, FileMissingError, NonFiniteError, ShapeMismatchError


def test_raw_column_major_layout(tmp_path):
    p = tmp_path / "q.bin"
    np.array([1.0, 2.0, 3.0, 4.0]).astype("<f8").tofile(p)
    q = load_snapshot_matrix(p, {"shape": [2, 2], "order": "F", "dtype": "f8"})
    np.testing.assert_array_equal(q.values, [[1, 3], [2, 4]])
    assert q.mean is None


def test_raw_sidecar_and_npy_roundtrip(tmp_path, rng):
    q = SnapshotMatrix(rng.standard_normal((6, 9)))
    for name in ("a.npy", "b.raw"):
        save_snapshot_matrix(q, tmp_path / name)
        back = load_snapshot_matrix(tmp_path / name)
        np.testing.assert_array_equal(back.values, q.values)
    assert json.loads((tmp_path / "b.raw.json").read_text())["shape"] == [6, 9]


def test_csv_load(tmp_path):
    p = tmp_path / "q.csv"
    p.write_text("1,2,3\n4,5,6\n")
    np.testing.assert_array_equal(load_snapshot_matrix(p).values, [[1, 2, 3], [4, 5, 6]])


def test_load_errors(tmp_path):
    with pytest.raises(FileMissingError):
        load_snapshot_matrix(tmp_path / "nope.npy")
    p = tmp_path / "q.bin"
    np.arange(5, dtype="<f8").tofile(p)
    with pytest.raises(ShapeMismatchError):
        load_snapshot_matrix(p, {"shape": [2, 2], "order": "C", "dtype": "f8"})
    bad = np.ones((2, 3))
    bad[1, 2] = np.nan
    np.save(tmp_path / "nan.npy", bad)
    with pytest.raises(NonFiniteError):
        load_snapshot_matrix(tmp_path / "nan.npy")


def test_n_vars_must_divide_rows():
    with pytest.raises(ShapeMismatchError):
        SnapshotMatrix(np.zeros((5, 3)), n_vars=2)
    assert SnapshotMatrix(np.zeros((6, 3)), n_vars=2).n_space == 3


def test_subtract_mean_examples():
    q = subtract_temporal_mean(SnapshotMatrix(np.array([[1.0, 3.0], [2.0, 2.0]])))
    np.testing.assert_array_equal(q.mean, [2, 2])
    np.testing.assert_array_equal(q.values, [[-1, 1], [0, 0]])
    const = subtract_temporal_mean(SnapshotMatrix(np.full((3, 7), 4.2)))
    assert np.all(const.values == 0)
    with pytest.raises(DataError):
        subtract_temporal_mean(SnapshotMatrix(np.ones((3, 1))))


def test_subtract_mean_random(rng):
    q = subtract_temporal_mean(SnapshotMatrix(rng.standard_normal((5, 50))))
    assert np.max(np.abs(q.values.mean(axis=1))) < 1e-12
    np.testing.assert_allclose(q.restored(), q.values + q.mean[:, None])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 30)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_centered_rows_sum_to_zero(a):
    q = subtract_temporal_mean(SnapshotMatrix(a))
    scale = np.abs(a).max(axis=1) + 1.0
    assert np.all(np.abs(q.values.sum(axis=1)) <= 1e-10 * a.shape[1] * scale)


def test_uniform_weights():
    np.testing.assert_array_equal(build_uniform_weights(5), np.ones(5))
    assert build_uniform_weights(1936).shape == (1936,)
    with pytest.raises(ConfigError):
        build_uniform_weights(0)


def test_spherical_weights_shape_and_limits():
    lats = np.array([-89.5, -45.0, 0.0, 45.0, 89.5])
    lons = np.arange(0.0, 360.0, 30.0)
    w = build_spherical_weights(lats, lons).reshape(5, 12)
    dlat, dlon = np.deg2rad(45.0), np.deg2rad(30.0)
    np.testing.assert_allclose(w[2], dlat * dlon)
    assert np.all(w[2] == w.max())
    assert np.all(w[[0, -1]] < 0.01 * w[2])
    assert build_spherical_weights(lats, lons, n_vars=3).size == 3 * 60


def test_spherical_weights_sphere_area():
    lats, lons = uniform_latlon_grid(241, 480)
    w = build_spherical_weights(lats, lons)
    assert abs(w.sum() - 4 * np.pi) < 0.01 * 4 * np.pi
    assert np.all(w >= 0)


def test_spherical_weights_non_monotone():
    with pytest.raises(DataError):
        build_spherical_weights([0.0, 10.0, 5.0], [0.0, 10.0])


def test_split_uses_train_mean(rng):
    raw = rng.standard_normal((4, 100)) + 3.0
    tr, te = split_train_test(SnapshotMatrix(raw), 0.8)
    assert tr.n_time == 80 and te.n_time == 20
    mean = raw[:, :80].mean(axis=1)
    np.testing.assert_allclose(tr.mean, mean)
    np.testing.assert_allclose(te.values, raw[:, 80:] - mean[:, None])
    np.testing.assert_allclose(tr.values.mean(axis=1), 0, atol=1e-12)


def test_split_errors():
    q = SnapshotMatrix(np.ones((2, 10)))
    with pytest.raises(ConfigError):
        split_train_test(q, 1.0)
    with pytest.raises(DataError):
        split_train_test(q, 0.05)
