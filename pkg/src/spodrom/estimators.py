"""scikit-learn style wrappers around the core routines.

``POD`` and ``SPOD`` are transformers from snapshots to latent coefficients,
``LatentForecaster`` is a regressor over latent series and ``SpodEmulator``
chains a reducer and a forecaster into a field-to-field emulator.

All estimators take ``X`` with one snapshot per row.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from . import decomposition as dec
from . import emulator as emu
from . import latent as lat
from ._validation import check_latent, check_positive_int, check_snapshots, check_weights
from .exceptions import ConfigError
from .metrics import error_report

__all__ = ["POD", "SPOD", "LatentForecaster", "SpodEmulator"]


class _ReducerMixin(TransformerMixin):
    """Shared centering, projection and reconstruction."""

    def _center(self, X):
        return (X - self.mean_).T

    def transform(self, X):
        """Latent coefficients, one row per snapshot."""
        check_is_fitted(self, "basis_")
        X = check_snapshots(X, min_samples=1, n_features=self.mean_.size)
        return self._project(self._center(X)).values.T

    def inverse_transform(self, A):
        """Snapshots (mean restored) from latent coefficients."""
        check_is_fitted(self, "basis_")
        A = check_latent(A, n_features=self.reduced_basis_.d)
        return lat.reconstruct_time_domain(self.reduced_basis_, A.T, self.mean_).values.T

    def _project(self, q):
        return lat.oblique_project(self.reduced_basis_, self.weights_, q)

    @property
    def feature_groups_(self):
        check_is_fitted(self, "basis_")
        return self.reduced_basis_.feature_groups()


class POD(_ReducerMixin, BaseEstimator):
    """Proper orthogonal decomposition by the method of snapshots.

    Parameters
    ----------
    n_modes : int, default 10
        Number of retained modes.
    weights : array_like, optional
        Spatial quadrature weights (uniform when omitted).

    Attributes
    ----------
    mean_ : ndarray (n_points,)
    basis_ : PodBasis
    reduced_basis_ : ReducedBasis
    components_ : ndarray (n_modes, n_points)
    eigvals_ : ndarray (n_modes,)
    """

    def __init__(self, n_modes=10, weights=None):
        self.n_modes = n_modes
        self.weights = weights

    def fit(self, X, y=None):
        X = check_snapshots(X)
        n_modes = check_positive_int(self.n_modes, "n_modes")
        self.weights_ = check_weights(self.weights, X.shape[1])
        self.mean_ = X.mean(axis=0)
        q = self._center(X)
        self.basis_ = dec.compute_pod(q, self.weights_, min(n_modes, *q.shape))
        self.reduced_basis_ = dec.select_band(self.basis_, min(n_modes, self.basis_.n_modes))
        self.components_ = self.basis_.modes.T
        self.eigvals_ = self.basis_.eigvals
        return self

    def _project(self, q):
        return lat.pod_project(self.basis_, q, self.reduced_basis_.L_r)


class SPOD(_ReducerMixin, BaseEstimator):
    """Spectral POD with a time-domain (oblique) latent space.

    Parameters
    ----------
    n_modes : int, default 10
        Modes kept per frequency (``L_r``).
    n_fft : int, default 64
    overlap : float, default 0.5
    window : {"hamming", "boxcar"}
    flb, fub : int, optional
        Inclusive frequency-bin band of the latent space (full band by default).
    weights : array_like, optional
    dt : float, default 1.0

    Attributes
    ----------
    mean_, basis_ (SpodBasis), reduced_basis_, eigvals_ ((n_freq, L)), freqs_
    """

    def __init__(self, n_modes=10, n_fft=64, overlap=0.5, window="hamming", flb=None, fub=None,
                 weights=None, dt=1.0):
        self.n_modes = n_modes
        self.n_fft = n_fft
        self.overlap = overlap
        self.window = window
        self.flb = flb
        self.fub = fub
        self.weights = weights
        self.dt = dt

    def fit(self, X, y=None):
        X = check_snapshots(X)
        n_modes = check_positive_int(self.n_modes, "n_modes")
        welch = dec.WelchParams(check_positive_int(self.n_fft, "n_fft", 2), self.overlap, self.window)
        self.weights_ = check_weights(self.weights, X.shape[1])
        self.mean_ = X.mean(axis=0)
        self.basis_ = dec.compute_spod(self._center(X), welch, self.weights_, dt=self.dt)
        if n_modes > self.basis_.n_modes:
            raise ConfigError(f"n_modes={n_modes} exceeds the {self.basis_.n_modes} available blocks")
        self.reduced_basis_ = dec.select_band(self.basis_, n_modes, self.flb, self.fub)
        self.eigvals_ = self.basis_.eigvals
        self.freqs_ = self.basis_.freqs
        return self


class LatentForecaster(RegressorMixin, BaseEstimator):
    """Per-group LSTM forecaster of a latent series.

    ``fit(A)`` trains on the series itself (windows of ``n_tauP`` past rows
    predict the next ``n_tauF``); ``predict(A)`` returns, for every full
    window of ``A``, the row ``n_tauF`` steps past the window, i.e. forecasts
    for rows ``n_tauP + n_tauF - 1`` onwards.

    Parameters
    ----------
    n_tauP, n_tauF : int
    n_cells, epochs, batch_size, learning_rate, dropout, clip_norm :
        Network and optimizer settings.
    groups : sequence of index arrays, optional
        Partition of the columns of ``A`` into networks. One network per
        column by default.
    random_state : int
        Network ``n`` is seeded with ``random_state + n``.
    """

    def __init__(self, n_tauP=60, n_tauF=1, n_cells=25, epochs=130, batch_size=32, learning_rate=1e-3,
                 dropout=0.15, clip_norm=1.0, groups=None, random_state=0):
        self.n_tauP = n_tauP
        self.n_tauF = n_tauF
        self.n_cells = n_cells
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.dropout = dropout
        self.clip_norm = clip_norm
        self.groups = groups
        self.random_state = random_state

    def _hyperparams(self):
        return emu.Hyperparams(
            n_cells=check_positive_int(self.n_cells, "n_cells"),
            epochs=check_positive_int(self.epochs, "epochs", 0),
            batch_size=check_positive_int(self.batch_size, "batch_size"),
            lr=float(self.learning_rate),
            dropout=float(self.dropout),
            seed=int(self.random_state),
            clip_norm=None if self.clip_norm is None else float(self.clip_norm),
        )

    def fit(self, A, y=None, A_val=None):
        n_tauP = check_positive_int(self.n_tauP, "n_tauP")
        n_tauF = check_positive_int(self.n_tauF, "n_tauF")
        A = check_latent(A, min_samples=n_tauP + n_tauF)
        d = A.shape[1]
        groups = [np.array([i]) for i in range(d)] if self.groups is None else self.groups
        index = [(i, -1) for i in range(d)]
        kind = "spod-time" if np.iscomplexobj(A) else "pod"
        val = None
        if A_val is not None:
            A_val = check_latent(A_val, n_features=d)
            val = lat.CoeffMatrix(A_val.T, index, kind)
        self.ensemble_ = emu.train_ensemble(
            lat.CoeffMatrix(A.T, index, kind), self._hyperparams(), n_tauP, n_tauF, groups=groups, validation=val
        )
        self.n_features_in_ = d
        return self

    def predict(self, A):
        check_is_fitted(self, "ensemble_")
        A = check_latent(A, min_samples=self.n_tauP + self.n_tauF, n_features=self.n_features_in_)
        return emu.predict_over_test(self.ensemble_, A.T).values.T

    def score(self, A, y=None):
        """Coefficient of determination of the forecasts against the true rows."""
        pred = self.predict(A)
        A = np.asarray(A)
        truth = A[self.n_tauP + self.n_tauF - 1 :]
        ss_res = np.sum(np.abs(truth - pred) ** 2)
        ss_tot = np.sum(np.abs(truth - truth.mean(axis=0)) ** 2)
        return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0

    @property
    def loss_history_(self):
        check_is_fitted(self, "ensemble_")
        return [m.history for m in self.ensemble_.models]


class SpodEmulator(BaseEstimator):
    """Reducer plus per-mode forecaster: snapshots in, forecast snapshots out.

    Parameters
    ----------
    reducer : POD or SPOD
    forecaster : LatentForecaster
        Its ``groups`` are replaced by the reducer's per-mode grouping.
    """

    def __init__(self, reducer=None, forecaster=None):
        self.reducer = reducer
        self.forecaster = forecaster

    def fit(self, X, y=None, X_val=None):
        self.reducer_ = clone(self.reducer if self.reducer is not None else SPOD())
        self.reducer_.fit(X)
        self.forecaster_ = clone(self.forecaster if self.forecaster is not None else LatentForecaster())
        self.forecaster_.set_params(groups=self.reducer_.feature_groups_)
        A_val = self.reducer_.transform(X_val) if X_val is not None else None
        self.forecaster_.fit(self.reducer_.transform(X), A_val=A_val)
        return self

    @property
    def offset_(self) -> int:
        """Index of the first snapshot that receives a forecast."""
        return self.forecaster_.n_tauP + self.forecaster_.n_tauF - 1

    def predict(self, X):
        """Forecast snapshots ``offset_`` onwards of ``X`` from true past windows."""
        check_is_fitted(self, "forecaster_")
        return self.reducer_.inverse_transform(self.forecaster_.predict(self.reducer_.transform(X)))

    def error_report(self, X):
        """Projection, learning and total errors over the forecast window of ``X``."""
        check_is_fitted(self, "forecaster_")
        X = check_snapshots(X)
        A = self.reducer_.transform(X)
        proj = self.reducer_.inverse_transform(A)[self.offset_ :]
        pred = self.reducer_.inverse_transform(self.forecaster_.predict(A))
        return error_report(X[self.offset_ :].T, proj.T, pred.T)

    def score(self, X, y=None):
        """Negative total L2 error (higher is better)."""
        return -self.error_report(X).total["L2"]
