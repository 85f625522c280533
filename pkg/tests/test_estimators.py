import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from spodrom import POD, SPOD, LatentForecaster, SpodEmulator
from spodrom.datasets import make_wavepacket_field
from spodrom.exceptions import ConfigError


@pytest.fixture(scope="module")
def X():
    return make_wavepacket_field(n_x=12, n_r=4, n_time=360, seed=1).values.T


def test_params_and_clone():
    est = SPOD(n_modes=3, n_fft=32, flb=1, fub=4)
    c = clone(est)
    assert c.get_params() == est.get_params()
    c.set_params(n_modes=5)
    assert c.n_modes == 5 and est.n_modes == 3
    emu = SpodEmulator(POD(2), LatentForecaster(n_tauP=5))
    assert emu.get_params()["forecaster__n_tauP"] == 5


def test_pod_transform_inverse(X):
    pod = POD(n_modes=X.shape[1]).fit(X)
    np.testing.assert_allclose(pod.inverse_transform(pod.transform(X)), X, atol=1e-10)
    small = POD(n_modes=3).fit(X)
    assert small.transform(X).shape == (X.shape[0], 3)
    assert small.components_.shape == (3, X.shape[1])
    assert np.all(np.diff(small.eigvals_) <= 0)


def test_spod_transform_shapes(X):
    s = SPOD(n_modes=2, n_fft=32, flb=0, fub=5).fit(X)
    A = s.transform(X)
    assert A.shape == (X.shape[0], 12) and np.iscomplexobj(A)
    assert s.inverse_transform(A).shape == X.shape
    assert len(s.feature_groups_) == 2
    assert s.eigvals_.shape == (17, s.basis_.n_modes)
    with pytest.raises(ConfigError):
        SPOD(n_modes=1000, n_fft=32).fit(X)


def test_not_fitted(X):
    with pytest.raises(NotFittedError):
        POD().transform(X)
    with pytest.raises(NotFittedError):
        LatentForecaster().predict(X)


def test_forecaster_and_emulator(X):
    f = LatentForecaster(n_tauP=6, n_tauF=2, n_cells=4, epochs=2, random_state=3)
    A = POD(3).fit(X).transform(X)
    f.fit(A[:250], A_val=A[250:])
    assert f.predict(A[250:]).shape == (110 - 6 - 2 + 1, 3)
    assert len(f.loss_history_) == 3 and len(f.loss_history_[0]["val_loss"]) == 2
    assert np.isfinite(f.score(A[250:]))
    emu = SpodEmulator(SPOD(n_modes=2, n_fft=32, fub=3), LatentForecaster(n_tauP=6, n_cells=4, epochs=2))
    emu.fit(X[:250])
    assert emu.offset_ == 6
    pred = emu.predict(X[250:])
    assert pred.shape == (110 - 6, X.shape[1])
    rep = emu.error_report(X[250:])
    assert rep.n_snapshots == 104 and rep.triangle_ok
    assert emu.score(X[250:]) == -rep.total["L2"]
