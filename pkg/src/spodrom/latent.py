"""Latent coefficients: projection onto reduced bases and reconstruction."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from .data import SnapshotMatrix
from .decomposition import PodBasis, ReducedBasis, SpectralEnsemble, SpodBasis, _as_values
from .exceptions import ConfigError, DataError, ProvenanceError, RankWarning, ShapeMismatchError

__all__ = [
    "CoeffMatrix",
    "FreqCoeffMatrix",
    "oblique_project",
    "reconstruct_time_domain",
    "imaginary_residue",
    "freq_project",
    "reconstruct_frequency_domain",
    "reconstruct_time_series",
    "freq_coeffs_to_series",
    "series_to_freq_coeffs",
    "pod_project",
    "compression_ratio",
    "save_coeffs",
    "load_coeffs",
]

TAU_PINV = 1e-10
WINDOW_FLOOR = 1e-3


@dataclass(frozen=True)
class CoeffMatrix:
    """Time-domain latent coefficients, one row per basis column.

    ``t0`` is the time index (within the record the coefficients came from)
    of the first column; it is nonzero for forecasts, which only exist after
    the first full input window.
    """

    values: np.ndarray
    index: List[Tuple[int, int]]
    kind: str
    t0: int = 0

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.index):
            raise ShapeMismatchError(
                f"coefficient matrix {self.values.shape} does not match {len(self.index)} index rows"
            )

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n_time(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FreqCoeffMatrix:
    """Frequency-domain coefficients ``values[k, j, l]`` of mode ``j`` at bin ``k`` for block ``l``."""

    values: np.ndarray
    welch: object

    @property
    def n_blocks(self) -> int:
        return self.values.shape[2]


def _weighted_gram_pinv(cols: np.ndarray, w: np.ndarray, tau: float):
    gram = cols.conj().T @ (cols * w[:, None])
    u, s, vh = linalg.svd(gram)
    cutoff = tau * s[0] if s.size and s[0] > 0 else np.inf
    keep = s > cutoff
    inv = (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T
    return inv, int(keep.sum())


def oblique_project(rb: ReducedBasis, w, q, *, tau: float = TAU_PINV) -> CoeffMatrix:
    """Weighted least-squares coefficients ``(Phi^H W Phi)^+ Phi^H W Q``.

    The Gram pseudoinverse drops singular values below ``tau`` times the
    largest; a ``RankWarning`` reports the effective rank when it is below ``d``.
    ``q`` is normally real snapshot data but complex fields are accepted.
    """
    values = q.values if isinstance(q, SnapshotMatrix) else np.asarray(q)
    if not np.iscomplexobj(values):
        values = _as_values(values)
    w = np.asarray(w, dtype=np.float64).ravel()
    if values.ndim != 2 or values.shape[0] != rb.M or w.shape != (rb.M,):
        raise ShapeMismatchError(
            f"basis has M={rb.M}, data has M={values.shape[0]}, weights {w.size}"
        )
    ginv, rank = _weighted_gram_pinv(rb.columns, w, tau)
    if rank < rb.d:
        warnings.warn(f"reduced basis Gram matrix has effective rank {rank} < d={rb.d}", RankWarning)
    a = ginv @ (rb.columns.conj().T @ (values * w[:, None]))
    if rb.kind == "pod":
        return CoeffMatrix(a.real.copy(), list(rb.index), "pod")
    return CoeffMatrix(a, list(rb.index), "spod-time")


def _coeff_values(rb: ReducedBasis, a) -> np.ndarray:
    vals = a.values if isinstance(a, CoeffMatrix) else np.asarray(a)
    if vals.ndim != 2 or vals.shape[0] != rb.d:
        raise ShapeMismatchError(f"coefficients shape {vals.shape} incompatible with d={rb.d}")
    return vals


def reconstruct_time_domain(rb: ReducedBasis, a, mean=None, *, dt: float = 1.0) -> SnapshotMatrix:
    """``Re(Phi_r A) (+ mean)`` as a snapshot matrix.

    With ``mean`` given the result is the full field (``mean`` attribute
    ``None``); otherwise it holds fluctuations.
    """
    fields = (rb.columns @ _coeff_values(rb, a)).real
    if mean is not None:
        mean = np.asarray(mean, dtype=np.float64).ravel()
        if mean.shape != (rb.M,):
            raise ShapeMismatchError(f"mean has length {mean.size}, expected {rb.M}")
        fields = fields + mean[:, None]
    return SnapshotMatrix(fields, dt=dt)


def imaginary_residue(rb: ReducedBasis, a) -> float:
    """RMS of ``Im(Phi_r A)``: what ``reconstruct_time_domain`` discards."""
    im = (rb.columns @ _coeff_values(rb, a)).imag
    return float(np.sqrt(np.mean(im**2))) if im.size else 0.0


def pod_project(b: PodBasis, q, L_r: int) -> CoeffMatrix:
    """Orthogonal projection ``Phi_r^T W Q`` onto the leading ``L_r`` POD modes."""
    values = _as_values(q)
    if not 1 <= int(L_r) <= b.n_modes:
        raise ConfigError(f"L_r must be in [1, {b.n_modes}], got {L_r}")
    if values.shape[0] != b.M:
        raise ShapeMismatchError(f"basis has M={b.M}, data has M={values.shape[0]}")
    phi = b.modes[:, : int(L_r)]
    a = phi.T @ (values * b.weights[:, None])
    return CoeffMatrix(a, [(j, -1) for j in range(int(L_r))], "pod")


def compression_ratio(rb: ReducedBasis, M: int) -> float:
    if M <= 0:
        raise ConfigError("M must be positive")
    return rb.d / M


def freq_project(b: SpodBasis, ens: SpectralEnsemble, w=None) -> FreqCoeffMatrix:
    """Orthogonal projection of the block transforms: ``a[k, j, l] = phi_kj^H W qhat_k^(l)``."""
    if ens.welch != b.welch:
        raise ProvenanceError(f"ensemble Welch parameters {ens.welch} differ from basis {b.welch}")
    w = b.weights if w is None else np.asarray(w, dtype=np.float64).ravel()
    if ens.qhat.shape[:2] != (b.n_freq, b.M):
        raise ShapeMismatchError(f"ensemble shape {ens.qhat.shape} incompatible with basis")
    a = np.einsum("kmj,kml->kjl", b.modes.conj(), ens.qhat * w[None, :, None], optimize=True)
    return FreqCoeffMatrix(a, b.welch)


def _block_spectrum(b: SpodBasis, a: FreqCoeffMatrix, keep, block: int) -> np.ndarray:
    if not 0 <= block < a.n_blocks:
        raise DataError(f"block {block} outside 0..{a.n_blocks - 1}")
    keep_idx = np.arange(b.n_freq) if keep is None else np.asarray(sorted(set(keep)), dtype=int)
    if keep_idx.size and (keep_idx.min() < 0 or keep_idx.max() >= b.n_freq):
        raise DataError(f"frequency ids must lie in 0..{b.n_freq - 1}")
    n_modes = a.values.shape[1]
    spec = np.zeros((b.M, b.n_freq), dtype=np.complex128)
    for k in keep_idx:
        spec[:, k] = b.modes[k, :, :n_modes] @ a.values[k, :, block]
    return spec


def _inverse_block(b: SpodBasis, spec: np.ndarray) -> np.ndarray:
    p = b.welch
    # irfft mirrors interior bins with conjugation and keeps only the real part of DC/Nyquist.
    return np.fft.irfft(spec * p.n_fft, n=p.n_fft, axis=1) / p.window_gain()


def reconstruct_frequency_domain(
    b: SpodBasis,
    a: FreqCoeffMatrix,
    keep: Optional[Iterable[int]] = None,
    block: int = 0,
    *,
    divide_window: bool = True,
    window_floor: float = WINDOW_FLOOR,
) -> np.ndarray:
    """Inverse transform of one block from its frequency coefficients.

    Bins outside ``keep`` (all bins by default) are zeroed. When the forward
    pass used a window, the block is divided by it, with window samples
    floored at ``window_floor * max(window)``.
    """
    out = _inverse_block(b, _block_spectrum(b, a, keep, block))
    if divide_window:
        win = b.welch.window_values()
        out = out / np.maximum(win, window_floor * win.max())
    return out


def reconstruct_time_series(
    b: SpodBasis,
    a: FreqCoeffMatrix,
    keep: Optional[Iterable[int]] = None,
    *,
    method: str = "overlap-add",
    n_time: Optional[int] = None,
) -> np.ndarray:
    """Stitch all reconstructed blocks back into an ``M x Nt`` record.

    ``method="overlap-add"`` combines windowed blocks as
    ``sum(w * y) / sum(w^2)`` and needs no window division;
    ``method="average"`` averages the window-divided blocks.
    """
    p = b.welch
    n_time = (a.n_blocks - 1) * p.stride + p.n_fft if n_time is None else int(n_time)
    win = p.window_values()
    num = np.zeros((b.M, n_time))
    den = np.zeros(n_time)
    for l in range(a.n_blocks):
        sl = slice(l * p.stride, l * p.stride + p.n_fft)
        y = _inverse_block(b, _block_spectrum(b, a, keep, l))
        if method == "overlap-add":
            num[:, sl] += y * win
            den[sl] += win**2
        elif method == "average":
            num[:, sl] += y / np.maximum(win, WINDOW_FLOOR * win.max())
            den[sl] += 1.0
        else:
            raise ConfigError(f"unknown method {method!r}")
    covered = den > 0
    num[:, covered] /= den[covered]
    return num


def freq_coeffs_to_series(a: FreqCoeffMatrix, L_r: int, band: Tuple[int, int]) -> CoeffMatrix:
    """Block-indexed frequency coefficients as a ``d x n_blocks`` series.

    Rows follow the :func:`select_band` ordering (frequency-major, modes
    fastest), so per-mode feature groups carry over unchanged.
    """
    flb, fub = band
    n_f, n_modes, _ = a.values.shape
    if not (1 <= L_r <= n_modes and 0 <= flb <= fub < n_f):
        raise ConfigError(f"L_r={L_r}, band={band} incompatible with coefficients {a.values.shape}")
    vals = a.values[flb : fub + 1, :L_r, :].reshape(-1, a.n_blocks)
    index = [(j, k) for k in range(flb, fub + 1) for j in range(L_r)]
    return CoeffMatrix(vals, index, "spod-freq")


def series_to_freq_coeffs(c: CoeffMatrix, n_freq: int, welch) -> FreqCoeffMatrix:
    """Inverse of :func:`freq_coeffs_to_series`; bins and modes not in ``c.index`` are zero."""
    L_r = max(j for j, _ in c.index) + 1
    out = np.zeros((n_freq, L_r, c.n_time), dtype=np.complex128)
    for row, (j, k) in enumerate(c.index):
        out[k, j] = c.values[row]
    return FreqCoeffMatrix(out, welch)


def save_coeffs(a: CoeffMatrix, directory, name: str = "coeffs", extra: Optional[dict] = None) -> None:
    """Write ``<name>.npy`` (complex128, ``d x Nt``) and ``<name>.index.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.save(d / f"{name}.npy", np.ascontiguousarray(a.values, dtype=np.complex128))
    meta = {"kind": a.kind, "t0": a.t0, "index": [list(map(int, ij)) for ij in a.index]}
    meta.update(extra or {})
    (d / f"{name}.index.json").write_text(json.dumps(meta))


def load_coeffs(directory, name: str = "coeffs") -> Tuple[CoeffMatrix, dict]:
    d = Path(directory)
    path = d / f"{name}.npy"
    if not path.exists():
        raise DataError(f"no coefficients at {path}")
    meta = json.loads((d / f"{name}.index.json").read_text())
    values = np.load(path)
    if meta["kind"] == "pod":
        values = values.real.copy()
    index = [tuple(ij) for ij in meta["index"]]
    return CoeffMatrix(values, index, meta["kind"], meta.get("t0", 0)), meta
