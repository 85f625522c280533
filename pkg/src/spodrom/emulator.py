"""LSTM emulation of latent coefficient dynamics.

One single-layer LSTM per retained mode maps a window of ``n_tauP`` past
coefficient vectors to the next ``n_tauF`` ones. The networks are
independent; for speed, networks with the same shapes are trained together
as a stack (leading axis = network), each with its own random stream,
optimizer state and gradient clipping, so stacking does not couple them.

Arrays in this module are time-major, ``(n_time, n_features)``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigError, DataError, DivergenceError, NumericalError
from .latent import CoeffMatrix

logger = logging.getLogger(__name__)

__all__ = [
    "FeatureScaler",
    "WindowedDataset",
    "Hyperparams",
    "LstmModel",
    "EmulatorEnsemble",
    "complexify_features",
    "decomplexify_features",
    "fit_scaler",
    "make_windows",
    "init_lstm",
    "lstm_forward",
    "lstm_loss_and_grads",
    "lstm_train",
    "train_ensemble",
    "predict_over_test",
    "save_ensemble",
    "load_ensemble",
]

PARAM_NAMES = ("Wx", "Wh", "b", "Wy", "by")


# ---------------------------------------------------------------------------
# Feature plumbing


def complexify_features(a) -> np.ndarray:
    """Real feature rows from coefficient rows.

    Complex input row ``i`` becomes rows ``2i`` (real part) and ``2i+1``
    (imaginary part); real input passes through unchanged.
    """
    vals = a.values if isinstance(a, CoeffMatrix) else np.asarray(a)
    if not np.iscomplexobj(vals):
        return np.asarray(vals, dtype=np.float64)
    out = np.empty((2 * vals.shape[0],) + vals.shape[1:])
    out[0::2] = vals.real
    out[1::2] = vals.imag
    return out


def decomplexify_features(features: np.ndarray, is_complex: bool = True) -> np.ndarray:
    """Inverse of :func:`complexify_features`."""
    features = np.asarray(features, dtype=np.float64)
    if not is_complex:
        return features
    if features.shape[0] % 2:
        raise DataError("complex feature matrix needs an even number of rows")
    return features[0::2] + 1j * features[1::2]


@dataclass
class FeatureScaler:
    """Per-feature affine map of the training range onto ``[lo, hi]``.

    Constant features map to the midpoint of the interval.
    """

    data_min: np.ndarray
    data_max: np.ndarray
    lo: float = -0.1
    hi: float = 0.1

    def _scale(self):
        span = self.data_max - self.data_min
        flat = span == 0
        return np.where(flat, 0.0, (self.hi - self.lo) / np.where(flat, 1.0, span)), flat

    def apply(self, x: np.ndarray) -> np.ndarray:
        s, flat = self._scale()
        y = self.lo + (x - self.data_min) * s
        return np.where(flat, 0.5 * (self.lo + self.hi), y)

    def invert(self, y: np.ndarray) -> np.ndarray:
        s, flat = self._scale()
        x = self.data_min + (y - self.lo) / np.where(flat, 1.0, s)
        return np.where(flat, self.data_min, x)

    def to_dict(self) -> dict:
        return {"data_min": self.data_min.tolist(), "data_max": self.data_max.tolist(),
                "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(np.asarray(d["data_min"], dtype=np.float64),
                   np.asarray(d["data_max"], dtype=np.float64), d["lo"], d["hi"])


def fit_scaler(features: np.ndarray, train_span: Optional[slice] = None,
               lo: float = -0.1, hi: float = 0.1) -> FeatureScaler:
    """Fit a :class:`FeatureScaler` on ``features[train_span]`` (time-major)."""
    x = np.asarray(features, dtype=np.float64)
    if train_span is not None:
        x = x[train_span]
    if x.shape[0] == 0:
        raise DataError("empty training span for the scaler")
    return FeatureScaler(x.min(axis=0), x.max(axis=0), lo, hi)


@dataclass
class WindowedDataset:
    """Sliding windows: ``inputs[s] = x[s:s+P]``, ``targets[s] = x[s+P:s+P+F]`` flattened time-major."""

    inputs: np.ndarray
    targets: np.ndarray
    n_tauP: int
    n_tauF: int

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]


def make_windows(features: np.ndarray, n_tauP: int, n_tauF: int) -> WindowedDataset:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if n_tauP < 1 or n_tauF < 1:
        raise ConfigError("n_tauP and n_tauF must be >= 1")
    n = x.shape[0] - n_tauP - n_tauF + 1
    if n < 1:
        raise DataError(f"span of {x.shape[0]} steps is shorter than n_tauP + n_tauF = {n_tauP + n_tauF}")
    win = sliding_window_view(x, n_tauP + n_tauF, axis=0)  # (n+..., F, P+F)
    win = np.moveaxis(win[:n], 2, 1)  # (n, P+F, F)
    inputs = np.ascontiguousarray(win[:, :n_tauP])
    targets = np.ascontiguousarray(win[:, n_tauP:]).reshape(n, -1)
    return WindowedDataset(inputs, targets, n_tauP, n_tauF)


# ---------------------------------------------------------------------------
# LSTM core (stacked over networks)


@dataclass(frozen=True)
class Hyperparams:
    n_cells: int = 25
    epochs: int = 130
    batch_size: int = 32
    lr: float = 1e-3
    dropout: float = 0.15
    seed: int = 0
    clip_norm: Optional[float] = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.n_cells < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError(f"invalid hyperparameters {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class LstmModel:
    """Single-layer LSTM with a linear head on the last hidden state.

    Gate blocks are stacked ``[input, forget, output, candidate]`` along the
    last axis of ``Wx`` (``F x 4H``), ``Wh`` (``H x 4H``) and ``b`` (``4H``).
    The head is ``Wy`` (``H x O``), ``by`` (``O``).
    """

    params: Dict[str, np.ndarray]
    dropout: float = 0.0
    seed: int = 0
    history: Dict[str, list] = field(default_factory=dict)

    @property
    def n_cells(self) -> int:
        return self.params["Wh"].shape[0]

    @property
    def n_features(self) -> int:
        return self.params["Wx"].shape[0]

    @property
    def n_out(self) -> int:
        return self.params["Wy"].shape[1]


def _glorot(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_lstm(n_features: int, n_out: int, n_cells: int, rng, *, zeros: bool = False) -> Dict[str, np.ndarray]:
    """Glorot input weights, orthogonal recurrent weights, unit forget bias."""
    H = n_cells
    if zeros:
        return {"Wx": np.zeros((n_features, 4 * H)), "Wh": np.zeros((H, 4 * H)),
                "b": np.zeros(4 * H), "Wy": np.zeros((H, n_out)), "by": np.zeros(n_out)}
    wx = _glorot(rng, n_features, 4 * H)
    qmat, rmat = np.linalg.qr(rng.standard_normal((4 * H, H)))
    wh = (qmat * np.sign(np.diag(rmat))).T
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0
    return {"Wx": wx, "Wh": wh, "b": b, "Wy": _glorot(rng, H, n_out), "by": np.zeros(n_out)}


def _forward(P, x, mask=None, keep_cache=False):
    """Stacked forward pass. ``x``: (E, B, T, F); returns (E, B, O) and a cache.

    Caches are stored time-major so that each step touches contiguous memory.
    """
    E, B, T, F = x.shape
    H = P["Wh"].shape[1]
    if mask is not None:
        x = x * mask
    xt = np.ascontiguousarray(x.transpose(2, 0, 1, 3))  # (T, E, B, F)
    # sigmoid(z) = (1 + tanh(z/2)) / 2, so one tanh call covers all four gates
    half = np.ones(4 * H)
    half[: 3 * H] = 0.5
    zx = np.matmul(xt.reshape(T, E, B, F), P["Wx"] * half)  # (T, E, B, 4H)
    zx += P["b"][:, None, :] * half
    wh = P["Wh"] * half
    h = np.zeros((E, B, H))
    c = np.zeros((E, B, H))
    if keep_cache:
        acts = zx  # overwritten in place with the activations
        hs = np.zeros((T + 1, E, B, H))
        cs = np.zeros((T + 1, E, B, H))
        tcs = np.empty((T, E, B, H))
    for t in range(T):
        a = zx[t]
        a += np.matmul(h, wh)
        np.tanh(a, out=a)
        s = a[..., : 3 * H]
        s *= 0.5
        s += 0.5
        c = c * a[..., H : 2 * H]
        c += a[..., :H] * a[..., 3 * H :]
        tc = np.tanh(c)
        h = a[..., 2 * H : 3 * H] * tc
        if keep_cache:
            hs[t + 1] = h
            cs[t + 1] = c
            tcs[t] = tc
    y = np.matmul(h, P["Wy"]) + P["by"][:, None, :]
    cache = (xt, acts, hs, cs, tcs) if keep_cache else None
    return y, cache


def _backward(P, cache, dy):
    """BPTT through the stacked network; ``dy`` = dLoss/dy, shape (E, B, O)."""
    xt, acts, hs, cs, tcs = cache
    T, E, B, F = xt.shape
    H = P["Wh"].shape[1]
    grads = {"Wy": np.matmul(hs[T].transpose(0, 2, 1), dy), "by": dy.sum(axis=1)}
    dh = np.matmul(dy, P["Wy"].transpose(0, 2, 1))
    dc = np.zeros((E, B, H))
    # derivative factors: s(1-s) for the sigmoid gates, 1-g^2 for the candidate
    dz = acts * (1.0 - acts)
    dz[..., 3 * H :] = 1.0 - acts[..., 3 * H :] ** 2
    wh_t = P["Wh"].transpose(0, 2, 1)
    for t in range(T - 1, -1, -1):
        a = acts[t]
        tc = tcs[t]
        dc += dh * a[..., 2 * H : 3 * H] * (1.0 - tc * tc)
        d = dz[t]
        d[..., :H] *= dc * a[..., 3 * H :]
        d[..., H : 2 * H] *= dc * cs[t]
        d[..., 2 * H : 3 * H] *= dh * tc
        d[..., 3 * H :] *= dc * a[..., :H]
        dc *= a[..., H : 2 * H]
        dh = np.matmul(d, wh_t)
    dze = dz.transpose(1, 0, 2, 3).reshape(E, T * B, 4 * H)
    grads["Wx"] = np.matmul(xt.transpose(1, 3, 0, 2).reshape(E, F, T * B), dze)
    grads["Wh"] = np.matmul(hs[:T].transpose(1, 3, 0, 2).reshape(E, H, T * B), dze)
    grads["b"] = dze.sum(axis=1)
    return grads


def _stack(models: Sequence[LstmModel]) -> Dict[str, np.ndarray]:
    return {k: np.stack([m.params[k] for m in models]) for k in PARAM_NAMES}


def lstm_forward(m: LstmModel, window: np.ndarray, mode: str = "infer", rng=None) -> np.ndarray:
    """Prediction for one window (``n_tauP x F``) or a batch (``B x n_tauP x F``).

    ``mode="train"`` applies inverted input dropout (one mask per sequence,
    shared across time steps) drawn from ``rng``.
    """
    x = np.asarray(window, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[2] != m.n_features:
        raise DataError(f"window has {x.shape[2]} features, model expects {m.n_features}")
    mask = None
    if mode == "train" and m.dropout > 0:
        rng = np.random.default_rng(m.seed) if rng is None else rng
        keep = 1.0 - m.dropout
        mask = (rng.random((1, x.shape[0], 1, x.shape[2])) < keep) / keep
    elif mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    y, _ = _forward(_stack([m]), x[None], mask)
    y = y[0]
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite LSTM activation")
    return y[0] if single else y


def lstm_loss_and_grads(m: LstmModel, inputs: np.ndarray, targets: np.ndarray):
    """Mean squared error of an unmasked batch and its gradient for every parameter block."""
    P = _stack([m])
    y, cache = _forward(P, np.asarray(inputs, dtype=np.float64)[None], keep_cache=True)
    r = y - np.asarray(targets)[None]
    loss = float(np.mean(r * r))
    grads = _backward(P, cache, 2.0 * r / r[0].size)
    return loss, {k: v[0] for k, v in grads.items()}


# ---------------------------------------------------------------------------
# Training


def _infer_loss(P, series, starts, n_tauP, n_tauF, chunk=256):
    """Per-network MSE over windows starting at ``starts`` (infer mode)."""
    E = series.shape[0]
    total = np.zeros(E)
    n = 0
    for s0 in range(0, len(starts), chunk):
        st = starts[s0 : s0 + chunk]
        x, t = _gather(series, np.broadcast_to(st, (E, len(st))), n_tauP, n_tauF)
        y, _ = _forward(P, x)
        total += np.sum((y - t) ** 2, axis=(1, 2))
        n += len(st)
    return total / (n * t.shape[2])


def _gather(series, idx, n_tauP, n_tauF):
    """Windows for start indices ``idx`` (E, B) from ``series`` (E, T, F)."""
    E = series.shape[0]
    tt = idx[:, :, None] + np.arange(n_tauP + n_tauF)
    w = series[np.arange(E)[:, None, None], tt]  # (E, B, P+F, F)
    return w[:, :, :n_tauP], w[:, :, n_tauP:].reshape(E, idx.shape[1], -1)


def _train_stack(series, hps: Sequence[Hyperparams], n_tauP, n_tauF, val_series=None,
                 init_params=None, net_ids=None):
    """Train a stack of independent networks on aligned feature series.

    ``series``: (E, T, F) scaled features. Each network ``e`` uses
    ``hps[e].seed`` for initialization, shuffling and dropout.
    """
    E, T, F = series.shape
    hp0 = hps[0]
    H, O = hp0.n_cells, n_tauF * F
    n_samples = T - n_tauP - n_tauF + 1
    if n_samples < 1:
        raise DataError(f"span of {T} steps is shorter than n_tauP + n_tauF = {n_tauP + n_tauF}")
    net_ids = list(range(E)) if net_ids is None else list(net_ids)
    rngs = [np.random.default_rng(hp.seed) for hp in hps]
    if init_params is None:
        init_params = [init_lstm(F, O, H, r) for r in rngs]
    P = {k: np.stack([p[k] for p in init_params]) for k in PARAM_NAMES}
    m1 = {k: np.zeros_like(v) for k, v in P.items()}
    m2 = {k: np.zeros_like(v) for k, v in P.items()}
    starts = np.arange(n_samples)
    history = {"initial_loss": _infer_loss(P, series, starts, n_tauP, n_tauF).tolist(),
               "loss": [], "val_loss": []}
    if val_series is not None:
        n_val = val_series.shape[1] - n_tauP - n_tauF + 1
        val_starts = np.arange(n_val) if n_val >= 1 else None
    step = 0
    B = hp0.batch_size
    keep = 1.0 - hp0.dropout
    for epoch in range(hp0.epochs):
        perms = np.stack([r.permutation(n_samples) for r in rngs])
        ep_loss = np.zeros(E)
        for b0 in range(0, n_samples, B):
            idx = perms[:, b0 : b0 + B]
            x, tgt = _gather(series, idx, n_tauP, n_tauF)
            mask = None
            if hp0.dropout > 0:
                mask = np.stack([(r.random((idx.shape[1], 1, F)) < keep) for r in rngs]) / keep
            y, cache = _forward(P, x, mask, keep_cache=True)
            r_ = y - tgt
            with np.errstate(over="ignore", invalid="ignore"):  # reported below
                loss = np.mean(r_ * r_, axis=(1, 2))
            if not np.all(np.isfinite(loss)):
                bad = [net_ids[e] for e in np.flatnonzero(~np.isfinite(loss))]
                raise DivergenceError(f"loss became non-finite for network(s) {bad} "
                                      f"at epoch {epoch}, batch starting {b0}")
            ep_loss += loss * idx.shape[1]
            grads = _backward(P, cache, 2.0 * r_ / (r_.shape[1] * r_.shape[2]))
            if hp0.clip_norm is not None:
                sq = sum(np.sum(g.reshape(E, -1) ** 2, axis=1) for g in grads.values())
                factor = np.minimum(1.0, hp0.clip_norm / np.maximum(np.sqrt(sq), 1e-300))
                for g in grads.values():
                    g *= factor.reshape((E,) + (1,) * (g.ndim - 1))
            step += 1
            bc1 = 1.0 - hp0.beta1**step
            bc2 = 1.0 - hp0.beta2**step
            for k in PARAM_NAMES:
                g = grads[k]
                m1[k] = hp0.beta1 * m1[k] + (1.0 - hp0.beta1) * g
                m2[k] = hp0.beta2 * m2[k] + (1.0 - hp0.beta2) * g * g
                P[k] -= hp0.lr * (m1[k] / bc1) / (np.sqrt(m2[k] / bc2) + hp0.eps)
        history["loss"].append((ep_loss / n_samples).tolist())
        if val_series is not None and val_starts is not None:
            history["val_loss"].append(_infer_loss(P, val_series, val_starts, n_tauP, n_tauF).tolist())
        logger.debug("epoch %d loss %s", epoch, history["loss"][-1])
    if not all(np.all(np.isfinite(v)) for v in P.values()):
        raise DivergenceError("parameters became non-finite during training")
    models = []
    for e in range(E):
        hist = {
            "initial_loss": history["initial_loss"][e],
            "loss": [row[e] for row in history["loss"]],
            "val_loss": [row[e] for row in history["val_loss"]],
        }
        models.append(LstmModel({k: P[k][e].copy() for k in PARAM_NAMES},
                                dropout=hps[e].dropout, seed=hps[e].seed, history=hist))
    return models


def lstm_train(
    ds: WindowedDataset,
    hp: Hyperparams,
    validation: Optional[WindowedDataset] = None,
    init: Optional[LstmModel] = None,
) -> LstmModel:
    """Train one network on a windowed dataset with Adam and BPTT.

    The dataset must come from a single contiguous series (as produced by
    :func:`make_windows` with stride 1); the series is rebuilt from it so that
    batches can be gathered without materializing every window. ``init``
    replaces the random initialization.
    """
    if ds.n_samples < 1:
        raise DataError("empty dataset")
    if hp.epochs == 0:
        warnings.warn("epochs=0: returning an untrained model")
    series = _series_from_windows(ds)
    val = _series_from_windows(validation)[None] if validation is not None else None
    init_params = None
    if init is not None:
        if init.n_features != ds.n_features or init.n_out != ds.targets.shape[1] or init.n_cells != hp.n_cells:
            raise ConfigError("initial model shapes do not match the dataset and hyperparameters")
        init_params = [{k: v.copy() for k, v in init.params.items()}]
    return _train_stack(series[None], [hp], ds.n_tauP, ds.n_tauF, val, init_params=init_params)[0]


def _series_from_windows(ds: WindowedDataset) -> np.ndarray:
    last = ds.targets[-1].reshape(ds.n_tauF, -1)
    head = ds.inputs[:, 0]
    tail = np.concatenate([ds.inputs[-1, 1:], last], axis=0)
    return np.concatenate([head, tail], axis=0)


# ---------------------------------------------------------------------------
# Ensembles


@dataclass
class EmulatorEnsemble:
    """One LSTM per retained mode plus its feature scaler.

    ``groups[n]`` lists the coefficient rows handled by network ``n``.
    """

    models: List[LstmModel]
    scalers: List[FeatureScaler]
    groups: List[np.ndarray]
    is_complex: bool
    n_tauP: int
    n_tauF: int
    hp: Hyperparams
    index: List[Tuple[int, int]]
    kind: str

    @property
    def n_networks(self) -> int:
        return len(self.models)


def _default_groups(a: CoeffMatrix) -> List[np.ndarray]:
    modes = np.array([j for j, _ in a.index])
    return [np.flatnonzero(modes == j) for j in np.unique(modes)]


def _feature_rows(rows: np.ndarray, is_complex: bool) -> np.ndarray:
    if not is_complex:
        return np.asarray(rows)
    return np.stack([2 * np.asarray(rows), 2 * np.asarray(rows) + 1], axis=1).ravel()


def train_ensemble(
    a: CoeffMatrix,
    hp: Hyperparams,
    n_tauP: int = 60,
    n_tauF: int = 1,
    *,
    groups: Optional[Sequence[Sequence[int]]] = None,
    validation: Optional[CoeffMatrix] = None,
    n_jobs: int = 1,
) -> EmulatorEnsemble:
    """Train one network per mode; network ``n`` is seeded with ``hp.seed + n``.

    ``groups`` partitions the coefficient rows (default: all frequencies of
    each mode). ``validation`` coefficients are only used to record a
    held-out loss curve.
    """
    is_complex = np.iscomplexobj(a.values)
    groups = _default_groups(a) if groups is None else [np.asarray(g, dtype=int) for g in groups]
    covered = np.sort(np.concatenate(groups)) if groups else np.array([], dtype=int)
    if not np.array_equal(covered, np.arange(a.d)):
        raise ConfigError("feature groups must cover every coefficient row exactly once")
    feats = complexify_features(a).T  # (T, 2d or d)
    vfeats = complexify_features(validation).T if validation is not None else None
    scalers, series, vseries = [], [], []
    for g in groups:
        cols = _feature_rows(g, is_complex)
        sc = fit_scaler(feats[:, cols], lo=-0.1, hi=0.1)
        scalers.append(sc)
        series.append(sc.apply(feats[:, cols]))
        if vfeats is not None:
            vseries.append(sc.apply(vfeats[:, cols]))
    if hp.epochs == 0:
        warnings.warn("epochs=0: ensemble is untrained")
    hps = [replace(hp, seed=hp.seed + n) for n in range(len(groups))]

    # Stack networks that share a feature count.
    by_width: Dict[int, List[int]] = {}
    for n, s in enumerate(series):
        by_width.setdefault(s.shape[1], []).append(n)
    jobs = [ns for ns in by_width.values()]

    def run(ns):
        val = np.stack([vseries[n] for n in ns]) if vseries else None
        return _train_stack(np.stack([series[n] for n in ns]), [hps[n] for n in ns],
                            n_tauP, n_tauF, val, net_ids=ns)

    if n_jobs and n_jobs > 1 and len(jobs) > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(run)(ns) for ns in jobs)
    else:
        results = [run(ns) for ns in jobs]
    models: List[Optional[LstmModel]] = [None] * len(groups)
    for ns, ms in zip(jobs, results):
        for n, m in zip(ns, ms):
            models[n] = m
    return EmulatorEnsemble(models, scalers, list(groups), is_complex, n_tauP, n_tauF, hp,
                            list(a.index), a.kind)


def predict_over_test(e: EmulatorEnsemble, test, lead: Optional[int] = None) -> CoeffMatrix:
    """One-shot forecasts over a test record from true past windows.

    Every window of ``n_tauP`` true steps yields ``n_tauF`` predicted steps;
    the step ``lead`` ahead (default ``n_tauF``, the furthest) is kept, so the
    returned matrix covers test times ``n_tauP + lead - 1`` onwards, one
    column per window.
    """
    vals = test.values if isinstance(test, CoeffMatrix) else np.asarray(test)
    lead = e.n_tauF if lead is None else int(lead)
    if not 1 <= lead <= e.n_tauF:
        raise ConfigError(f"lead must be in [1, {e.n_tauF}]")
    n_win = vals.shape[1] - e.n_tauP - e.n_tauF + 1
    if n_win < 1:
        raise DataError(f"test span {vals.shape[1]} shorter than n_tauP + n_tauF")
    feats = complexify_features(vals).T
    out = np.empty((n_win, feats.shape[1]))
    by_width: Dict[int, List[int]] = {}
    for n, m in enumerate(e.models):
        by_width.setdefault(m.n_features, []).append(n)
    starts = np.arange(n_win)
    for ns in by_width.values():
        cols = [_feature_rows(e.groups[n], e.is_complex) for n in ns]
        series = np.stack([e.scalers[n].apply(feats[:, c]) for n, c in zip(ns, cols)])
        P = _stack([e.models[n] for n in ns])
        for s0 in range(0, n_win, 512):
            st = starts[s0 : s0 + 512]
            x, _ = _gather(series[:, : vals.shape[1]], np.broadcast_to(st, (len(ns), len(st))),
                           e.n_tauP, 0)
            y, _ = _forward(P, x)
            F = series.shape[2]
            y = y.reshape(len(ns), len(st), e.n_tauF, F)[:, :, lead - 1]
            for i, (n, c) in enumerate(zip(ns, cols)):
                out[s0 : s0 + len(st), c] = e.scalers[n].invert(y[i])
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite forecast")
    pred = decomplexify_features(out.T, e.is_complex)
    return CoeffMatrix(pred, list(e.index), e.kind, t0=e.n_tauP + lead - 1)


def save_ensemble(e: EmulatorEnsemble, directory, extra: Optional[dict] = None) -> None:
    """Checkpoint: ``hyperparams.json``, ``scaler.json`` and ``net_XXX_<block>.npy``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "hyperparams": asdict(e.hp),
        "n_tauP": e.n_tauP,
        "n_tauF": e.n_tauF,
        "is_complex": bool(e.is_complex),
        "kind": e.kind,
        "index": [list(map(int, ij)) for ij in e.index],
        "groups": [list(map(int, g)) for g in e.groups],
        "networks": [{"seed": m.seed, "dropout": m.dropout, "history": m.history} for m in e.models],
    }
    meta.update(extra or {})
    (d / "hyperparams.json").write_text(json.dumps(meta))
    (d / "scaler.json").write_text(json.dumps([s.to_dict() for s in e.scalers]))
    for n, m in enumerate(e.models):
        for k in PARAM_NAMES:
            np.save(d / f"net_{n:03d}_{k}.npy", m.params[k])


def load_ensemble(directory) -> Tuple[EmulatorEnsemble, dict]:
    d = Path(directory)
    if not (d / "hyperparams.json").exists():
        raise DataError(f"no checkpoint in {d}")
    meta = json.loads((d / "hyperparams.json").read_text())
    scalers = [FeatureScaler.from_dict(s) for s in json.loads((d / "scaler.json").read_text())]
    models = []
    for n, info in enumerate(meta["networks"]):
        params = {k: np.load(d / f"net_{n:03d}_{k}.npy") for k in PARAM_NAMES}
        models.append(LstmModel(params, info["dropout"], info["seed"], info["history"]))
    e = EmulatorEnsemble(
        models, scalers, [np.asarray(g, dtype=int) for g in meta["groups"]], meta["is_complex"],
        meta["n_tauP"], meta["n_tauF"], Hyperparams(**meta["hyperparams"]),
        [tuple(ij) for ij in meta["index"]], meta["kind"],
    )
    return e, meta
