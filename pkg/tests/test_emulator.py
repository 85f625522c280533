import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spodrom.emulator import (
    FeatureScaler,
    Hyperparams,
    LstmModel,
    complexify_features,
    decomplexify_features,
    fit_scaler,
    init_lstm,
    load_ensemble,
    lstm_forward,
    lstm_loss_and_grads,
    lstm_train,
    make_windows,
    predict_over_test,
    save_ensemble,
    train_ensemble,
)
from spodrom.exceptions import ConfigError, DataError, DivergenceError
from spodrom.latent import CoeffMatrix


def _model(seed, F=2, O=2, H=3, dropout=0.0):
    return LstmModel(init_lstm(F, O, H, np.random.default_rng(seed)), dropout=dropout, seed=seed)


def _ar_series(n, d, seed=0, complex_=True):
    r = np.random.default_rng(seed)
    x = np.zeros((d, n), dtype=complex if complex_ else float)
    rot = np.exp(1j * 0.3) if complex_ else 0.9
    for t in range(1, n):
        noise = r.standard_normal(d) + (1j * r.standard_normal(d) if complex_ else 0)
        x[:, t] = 0.9 * rot * x[:, t - 1] + 0.1 * noise
    return x


# -- features and scaling ----------------------------------------------------

def test_complexify_interleaves():
    a = np.array([[1 + 2j, 3 - 1j], [0.5j, 4.0]])
    f = complexify_features(a)
    np.testing.assert_array_equal(f, [[1, 3], [2, -1], [0, 4], [0.5, 0]])
    np.testing.assert_array_equal(decomplexify_features(f), a)
    r = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(complexify_features(r), r)
    assert complexify_features(np.zeros((330, 5), complex)).shape == (660, 5)


def test_scaler_examples():
    sc = fit_scaler(np.array([[0.0], [5.0], [10.0]]))
    np.testing.assert_allclose(sc.apply(np.array([[0.0], [5.0], [10.0]])).ravel(), [-0.1, 0.0, 0.1])
    flat = fit_scaler(np.full((4, 1), 3.0))
    np.testing.assert_array_equal(flat.apply(np.full((2, 1), 3.0)), 0.0)
    np.testing.assert_array_equal(flat.invert(np.zeros((2, 1))), 3.0)
    back = FeatureScaler.from_dict(sc.to_dict())
    np.testing.assert_array_equal(back.data_min, sc.data_min)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_scaler_round_trip(x):
    sc = fit_scaler(x)
    y = sc.apply(x)
    assert np.all(y >= -0.1 - 1e-12) and np.all(y <= 0.1 + 1e-12)
    scale = np.maximum(np.abs(x).max(), 1.0)
    assert np.max(np.abs(sc.invert(y) - x)) <= 1e-12 * scale


def test_windows_counts_and_layout():
    x = np.arange(810.0)[:, None]
    ds = make_windows(x, 60, 1)
    assert ds.n_samples == 750
    assert make_windows(np.zeros((61, 1)), 60, 1).n_samples == 1
    z = np.arange(20.0).reshape(10, 2)
    d3 = make_windows(z, 4, 3)
    assert d3.n_samples == 4
    np.testing.assert_array_equal(d3.inputs[1], z[1:5])
    np.testing.assert_array_equal(d3.targets[1], z[5:8].ravel())
    with pytest.raises(DataError):
        make_windows(np.zeros((60, 1)), 60, 1)
    with pytest.raises(ConfigError):
        make_windows(np.zeros((60, 1)), 0, 1)


# -- LSTM core ---------------------------------------------------------------

def test_zero_parameters_give_zero_output():
    m = LstmModel(init_lstm(66, 33, 25, None, zeros=True))
    x = np.random.default_rng(0).standard_normal((60, 66))
    np.testing.assert_array_equal(lstm_forward(m, x), np.zeros(33))


def test_output_width():
    m = LstmModel(init_lstm(66, 66, 25, np.random.default_rng(0)))
    assert lstm_forward(m, np.zeros((60, 66))).shape == (66,)
    assert lstm_forward(m, np.zeros((4, 60, 66))).shape == (4, 66)


def test_init_conventions():
    p = init_lstm(4, 2, 5, np.random.default_rng(0))
    np.testing.assert_allclose(p["Wh"] @ p["Wh"].T, np.eye(5), atol=1e-12)
    np.testing.assert_array_equal(p["b"][5:10], 1.0)
    assert np.all(p["b"][:5] == 0) and np.all(p["b"][10:] == 0)


def test_dropout_inference_transparent():
    m = _model(3, dropout=0.5)
    x = np.random.default_rng(1).standard_normal((8, 6, 2))
    a = lstm_forward(m, x, "infer", np.random.default_rng(0))
    b = lstm_forward(m, x, "infer", np.random.default_rng(99))
    np.testing.assert_array_equal(a, b)
    t1 = lstm_forward(m, x, "train", np.random.default_rng(0))
    assert not np.allclose(t1, a)


def _numeric_grads(m, x, y, h=1e-5):
    out = {}
    for k, v in m.params.items():
        g = np.empty_like(v)
        for i in np.ndindex(v.shape):
            old = v[i]
            v[i] = old + h
            lp, _ = lstm_loss_and_grads(m, x, y)
            v[i] = old - h
            lm, _ = lstm_loss_and_grads(m, x, y)
            v[i] = old
            g[i] = (lp - lm) / (2 * h)
        out[k] = g
    return out


@pytest.mark.parametrize("seed", range(10))
def test_bptt_matches_finite_differences(seed):
    r = np.random.default_rng(seed)
    m = LstmModel(init_lstm(2, 2, 3, r))
    for v in m.params.values():
        v += 0.3 * r.standard_normal(v.shape)  # move the biases off their initial values
    x = r.standard_normal((5, 4, 2))
    y = r.standard_normal((5, 2))
    _, g = lstm_loss_and_grads(m, x, y)
    num = _numeric_grads(m, x, y)
    for k in g:
        err = np.max(np.abs(g[k] - num[k])) / np.max(np.abs(num[k]))
        assert err < 1e-5, (k, err)


# -- training ----------------------------------------------------------------

def _hp(**kw):
    base = dict(n_cells=6, epochs=3, batch_size=16, dropout=0.1, seed=0)
    base.update(kw)
    return Hyperparams(**base)


def test_constant_target_zero_init():
    ds = make_windows(np.full((70, 1), 0.05), 6, 1)
    init = LstmModel(init_lstm(1, 1, 4, None, zeros=True))
    hp = Hyperparams(n_cells=4, epochs=10, batch_size=32, dropout=0.0, clip_norm=None)
    m = lstm_train(ds, hp, init=init)
    loss = m.history["loss"]
    assert np.all(np.diff(loss) < 0)
    m = lstm_train(ds, Hyperparams(n_cells=4, epochs=150, batch_size=32, dropout=0.0, clip_norm=None), init=init)
    assert abs(lstm_forward(m, ds.inputs[0])[0] - 0.05) < 1e-2


def test_training_reduces_loss_and_is_deterministic():
    x = complexify_features(_ar_series(200, 2)).T
    ds = make_windows(fit_scaler(x).apply(x), 10, 1)
    a = lstm_train(ds, _hp(epochs=5))
    b = lstm_train(ds, _hp(epochs=5))
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    assert a.history["loss"][-1] < a.history["initial_loss"]
    c = lstm_train(ds, _hp(epochs=5, seed=1))
    assert not np.array_equal(a.params["Wx"], c.params["Wx"])


def test_epochs_zero_warns():
    ds = make_windows(np.zeros((20, 1)), 5, 1)
    with pytest.warns(UserWarning, match="epochs=0"):
        lstm_train(ds, _hp(epochs=0))


def test_divergence_detected():
    x = np.random.default_rng(0).standard_normal((60, 1))
    ds = make_windows(x, 5, 1)
    with pytest.raises(DivergenceError):
        lstm_train(ds, _hp(epochs=3, lr=1e200, clip_norm=None, dropout=0.0))


def test_ensemble_layout_and_forecast_alignment():
    a = CoeffMatrix(_ar_series(120, 6), [(j, k) for k in range(3) for j in range(2)], "spod-time")
    e = train_ensemble(a, _hp(epochs=2), n_tauP=8, n_tauF=3)
    assert e.n_networks == 2
    assert [m.n_features for m in e.models] == [6, 6]
    assert [m.seed for m in e.models] == [0, 1]
    test = CoeffMatrix(_ar_series(40, 6, seed=5), a.index, a.kind)
    p = predict_over_test(e, test)
    assert p.t0 == 8 + 3 - 1 and p.n_time == 40 - 8 - 3 + 1
    p1 = predict_over_test(e, test, lead=1)
    assert p1.t0 == 8 and p1.n_time == p.n_time
    with pytest.raises(ConfigError):
        train_ensemble(a, _hp(), 8, 1, groups=[[0, 1, 2]])


def test_ensemble_networks_are_independent():
    a = CoeffMatrix(_ar_series(100, 4, complex_=False), [(j, -1) for j in range(4)], "pod")
    hp = _hp(epochs=2)
    e = train_ensemble(a, hp, 6, 1)
    # Training network 2 on its own with the same seed gives the same parameters.
    x = a.values[2:3].T
    sc = fit_scaler(x)
    solo = lstm_train(make_windows(sc.apply(x), 6, 1), Hyperparams(**{**hp.__dict__, "seed": hp.seed + 2}))
    for k in solo.params:
        np.testing.assert_allclose(e.models[2].params[k], solo.params[k], rtol=0, atol=1e-12)
    # Changing another mode's data leaves network 2 untouched.
    other = a.values.copy()
    other[0] *= -3.0
    e2 = train_ensemble(CoeffMatrix(other, a.index, a.kind), hp, 6, 1)
    for k in solo.params:
        np.testing.assert_allclose(e2.models[2].params[k], e.models[2].params[k], rtol=0, atol=1e-12)


def test_checkpoint_restores_forecasts_exactly(tmp_path):
    a = CoeffMatrix(_ar_series(90, 4), [(j, k) for k in range(2) for j in range(2)], "spod-time")
    e = train_ensemble(a, _hp(epochs=2), 6, 2)
    save_ensemble(e, tmp_path / "m")
    back, _ = load_ensemble(tmp_path / "m")
    np.testing.assert_array_equal(predict_over_test(back, a).values, predict_over_test(e, a).values)
    assert (tmp_path / "m" / "hyperparams.json").exists() and (tmp_path / "m" / "scaler.json").exists()


def test_scaling_sandwich():
    a = CoeffMatrix(_ar_series(60, 2), [(0, 0), (0, 1)], "spod-time")
    e = train_ensemble(a, _hp(epochs=1), 5, 1)
    feats = complexify_features(a).T
    sc, m = e.scalers[0], e.models[0]
    manual = sc.invert(lstm_forward(m, sc.apply(feats)[3:8])[None])[0]
    pred = predict_over_test(e, a)
    np.testing.assert_allclose(complexify_features(pred.values[:, 3:4]).ravel(), manual, rtol=0, atol=1e-14)
