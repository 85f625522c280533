"""Reduced-order emulation of stationary fields in SPOD and POD latent spaces."""

from .data import (
    SnapshotMatrix,
    build_spherical_weights,
    build_uniform_weights,
    load_snapshot_matrix,
    split_train_test,
    subtract_temporal_mean,
)
from .decomposition import PodBasis, ReducedBasis, SpodBasis, WelchParams, compute_pod, compute_spod, select_band
from .emulator import EmulatorEnsemble, Hyperparams, predict_over_test, train_ensemble
from .estimators import POD, SPOD, LatentForecaster, SpodEmulator
from .exceptions import (
    ConfigError,
    DataError,
    DivergenceError,
    NumericalError,
    ProvenanceError,
    RankWarning,
    SpodRomError,
)
from .latent import CoeffMatrix, oblique_project, pod_project, reconstruct_time_domain
from .metrics import ErrorReport, error_report, summarize

__version__ = "0.1.0"

__all__ = [
    "SnapshotMatrix",
    "build_spherical_weights",
    "build_uniform_weights",
    "load_snapshot_matrix",
    "split_train_test",
    "subtract_temporal_mean",
    "PodBasis",
    "ReducedBasis",
    "SpodBasis",
    "WelchParams",
    "compute_pod",
    "compute_spod",
    "select_band",
    "EmulatorEnsemble",
    "Hyperparams",
    "predict_over_test",
    "train_ensemble",
    "POD",
    "SPOD",
    "LatentForecaster",
    "SpodEmulator",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "NumericalError",
    "ProvenanceError",
    "RankWarning",
    "SpodRomError",
    "CoeffMatrix",
    "oblique_project",
    "pod_project",
    "reconstruct_time_domain",
    "ErrorReport",
    "error_report",
    "summarize",
]
