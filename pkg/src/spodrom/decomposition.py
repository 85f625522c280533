"""SPOD and POD bases.

SPOD follows the Welch/snapshot route: the centered record is cut into
(possibly overlapping) blocks, each block is windowed and Fourier
transformed, the ``L`` block transforms at a given frequency form an ``M x L``
ensemble, and the weighted ``L x L`` cross-spectral eigenproblem of that
ensemble gives the modes and modal energies at that frequency.

Mode arrays are stored ``[frequency, space, mode]`` so that ``modes[k]`` is the
``M x L`` matrix of modes at frequency bin ``k``.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .data import SnapshotMatrix, data_hash
from .exceptions import ConfigError, DataError, EigensolveError, ShapeMismatchError

logger = logging.getLogger(__name__)

__all__ = [
    "WelchParams",
    "SpodBasis",
    "PodBasis",
    "ReducedBasis",
    "SpectralEnsemble",
    "partition_blocks",
    "window_and_fft",
    "assemble_frequency_ensembles",
    "fourier_ensembles",
    "solve_frequency_eigenproblem",
    "compute_spod",
    "compute_pod",
    "select_band",
    "save_basis",
    "load_basis",
]

EPS_RANK = 1e-12
_WINDOWS = ("hamming", "boxcar")


@dataclass(frozen=True)
class WelchParams:
    """Blocking and windowing parameters for the spectral estimate."""

    n_fft: int = 64
    overlap_fraction: float = 0.5
    window: str = "hamming"
    normalize_window: bool = True

    def __post_init__(self):
        if int(self.n_fft) < 2:
            raise ConfigError(f"n_fft must be >= 2, got {self.n_fft}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ConfigError(f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")
        if self.window not in _WINDOWS:
            raise ConfigError(f"window must be one of {_WINDOWS}, got {self.window!r}")
        object.__setattr__(self, "n_fft", int(self.n_fft))
        if self.n_overlap >= self.n_fft:
            raise ConfigError("overlap leaves no stride between blocks")

    @property
    def n_overlap(self) -> int:
        return int(np.floor(self.overlap_fraction * self.n_fft + 1e-9))

    @property
    def stride(self) -> int:
        return self.n_fft - self.n_overlap

    @property
    def n_freq(self) -> int:
        """Number of one-sided frequency bins, ``n_fft // 2 + 1``."""
        return self.n_fft // 2 + 1

    def n_blocks(self, n_time: int) -> int:
        if n_time < self.n_fft:
            return 0
        return (n_time - self.n_overlap) // self.stride

    def window_values(self) -> np.ndarray:
        if self.window == "hamming":
            return np.hamming(self.n_fft)
        return np.ones(self.n_fft)

    def window_gain(self) -> float:
        """Energy correction ``1/sqrt(mean(window^2))`` (1 when normalization is off)."""
        if not self.normalize_window:
            return 1.0
        w = self.window_values()
        return float(1.0 / np.sqrt(np.mean(w**2)))

    def freqs(self, dt: float) -> np.ndarray:
        return np.arange(self.n_freq) / (self.n_fft * dt)


def _as_values(q) -> np.ndarray:
    if isinstance(q, SnapshotMatrix):
        return q.values
    a = np.asarray(q, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatchError(f"expected an M x Nt matrix, got shape {a.shape}")
    return a


def partition_blocks(q, p: WelchParams) -> List[np.ndarray]:
    """Split the record into ``L`` blocks of ``n_fft`` snapshots (views, no copy).

    Block ``l`` starts at column ``l * (n_fft - n_overlap)``; trailing columns
    that do not fill a block are dropped.
    """
    values = _as_values(q)
    nt = values.shape[1]
    if nt < p.n_fft:
        raise DataError(f"{nt} snapshots is fewer than n_fft={p.n_fft}")
    return [values[:, l * p.stride : l * p.stride + p.n_fft] for l in range(p.n_blocks(nt))]


def window_and_fft(block: np.ndarray, p: WelchParams) -> np.ndarray:
    """Windowed one-sided DFT of every row of an ``M x n_fft`` block.

    The transform is unnormalized (a constant row ``c`` under a boxcar window
    gives ``c * n_fft`` in bin 0); the window energy correction is applied when
    ``p.normalize_window`` is set.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[1] != p.n_fft:
        raise ShapeMismatchError(f"block shape {block.shape} does not match n_fft={p.n_fft}")
    windowed = block * (p.window_values() * p.window_gain())
    return np.fft.rfft(windowed, axis=1)


def assemble_frequency_ensembles(blocks_fft: Sequence[np.ndarray], scale: float = 1.0) -> np.ndarray:
    """Stack block transforms into per-frequency ensembles.

    Returns an array of shape ``(N_f, M, L)``: entry ``[k]`` is the matrix whose
    column ``l`` is bin ``k`` of block ``l``, multiplied by ``scale``.
    """
    if len(blocks_fft) == 0:
        raise DataError("no blocks to assemble")
    shape = np.shape(blocks_fft[0])
    if any(np.shape(b) != shape for b in blocks_fft):
        raise ShapeMismatchError("block transforms do not share a shape")
    m, n_f = shape
    out = np.empty((n_f, m, len(blocks_fft)), dtype=np.complex128)
    for l, b in enumerate(blocks_fft):
        out[:, :, l] = np.asarray(b).T * scale
    return out


@dataclass(frozen=True)
class SpectralEnsemble:
    """Per-frequency block ensembles ``qhat[k]`` (``M x L``) with their provenance.

    ``qhat`` holds the windowed block transforms divided by ``n_fft``, the
    scaling under which SPOD eigenvalues integrate to the windowed energy.
    """

    qhat: np.ndarray
    welch: WelchParams
    n_time: int

    @property
    def n_blocks(self) -> int:
        return self.qhat.shape[2]


def fourier_ensembles(q, p: WelchParams) -> SpectralEnsemble:
    """Block, window and transform a centered record into frequency ensembles."""
    values = _as_values(q)
    blocks = partition_blocks(values, p)
    n_f, m = p.n_freq, values.shape[0]
    qhat = np.empty((n_f, m, len(blocks)), dtype=np.complex128)
    for l, block in enumerate(blocks):
        qhat[:, :, l] = window_and_fft(block, p).T / p.n_fft
    return SpectralEnsemble(qhat=qhat, welch=p, n_time=values.shape[1])


def _fix_phase(modes: np.ndarray) -> np.ndarray:
    # Rotate each column so its largest-magnitude entry is real and positive.
    if modes.size == 0:
        return modes
    idx = np.argmax(np.abs(modes), axis=0)
    pivot = modes[idx, np.arange(modes.shape[1])]
    mag = np.abs(pivot)
    phase = np.where(mag > 0, np.conj(pivot) / np.where(mag > 0, mag, 1.0), 1.0)
    return modes * phase


def solve_frequency_eigenproblem(qhat_k: np.ndarray, w) -> Tuple[np.ndarray, np.ndarray]:
    """SPOD modes and energies at one frequency.

    Solves ``X^H X V = V Lambda`` with ``X = diag(w)^(1/2) qhat_k / sqrt(L)`` and
    forms ``Phi = qhat_k V Lambda^(-1/2) / sqrt(L)``. Eigenvalues below
    ``1e-12`` times the largest are set to zero and their modes to zero
    columns.

    Returns
    -------
    modes : ndarray, shape (M, L), complex
    eigvals : ndarray, shape (L,), descending
    """
    qhat_k = np.asarray(qhat_k, dtype=np.complex128)
    if qhat_k.ndim != 2 or qhat_k.shape[1] < 1:
        raise ShapeMismatchError(f"ensemble must be M x L with L >= 1, got {qhat_k.shape}")
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape != (qhat_k.shape[0],):
        raise ShapeMismatchError(f"weights have length {w.size}, expected {qhat_k.shape[0]}")
    n_blk = qhat_k.shape[1]
    gram = (qhat_k.conj().T * w) @ qhat_k / n_blk
    gram = 0.5 * (gram + gram.conj().T)
    try:
        lam, vecs = linalg.eigh(gram)
    except linalg.LinAlgError as exc:
        raise EigensolveError(f"Hermitian eigensolve failed: {exc}") from exc
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    top = lam[0] if lam.size else 0.0
    keep = lam > EPS_RANK * top if top > 0 else np.zeros(lam.shape, dtype=bool)
    lam = np.where(keep, lam, 0.0)
    scale = np.zeros_like(lam)
    scale[keep] = 1.0 / np.sqrt(lam[keep] * n_blk)
    modes = _fix_phase((qhat_k @ vecs) * scale)
    return modes, lam


@dataclass(frozen=True)
class SpodBasis:
    """Per-frequency SPOD modes.

    ``modes`` has shape ``(N_f, M, n_modes)``; ``eigvals`` has shape
    ``(N_f, n_modes)`` and is sorted descending along the mode axis. A zero
    eigenvalue marks a degenerate (zero-filled) mode.
    """

    modes: np.ndarray
    eigvals: np.ndarray
    freqs: np.ndarray
    weights: np.ndarray
    welch: WelchParams
    n_blocks: int
    provenance: str = ""

    kind = "spod"

    @property
    def n_freq(self) -> int:
        return self.modes.shape[0]

    @property
    def n_modes(self) -> int:
        return self.modes.shape[2]

    @property
    def M(self) -> int:
        return self.modes.shape[1]

    @property
    def degenerate(self) -> np.ndarray:
        return self.eigvals <= 0.0


@dataclass(frozen=True)
class PodBasis:
    """Space-only POD modes, orthonormal under ``diag(weights)``."""

    modes: np.ndarray
    eigvals: np.ndarray
    weights: np.ndarray
    provenance: str = ""

    kind = "pod"

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]

    @property
    def n_freq(self) -> int:
        return 1

    @property
    def M(self) -> int:
        return self.modes.shape[0]


def _check_weights(w, m: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape != (m,):
        raise ShapeMismatchError(f"weights have length {w.size}, expected {m}")
    if np.any(w < 0) or not np.any(w > 0) or not np.all(np.isfinite(w)):
        raise DataError("weights must be finite, nonnegative and not all zero")
    return w


def compute_spod(
    q,
    p: WelchParams,
    w,
    *,
    dt: Optional[float] = None,
    n_modes: Optional[int] = None,
    n_jobs: int = 1,
) -> SpodBasis:
    """SPOD of a centered snapshot matrix.

    Parameters
    ----------
    q : SnapshotMatrix or ndarray (M, Nt)
        Mean-removed data.
    p : WelchParams
    w : array_like (M,)
        Spatial quadrature weights.
    dt : float, optional
        Time step; taken from ``q`` when it is a ``SnapshotMatrix``.
    n_modes : int, optional
        Keep only the leading modes per frequency (all ``L`` by default).
    n_jobs : int
        Threads for the per-frequency eigensolves. Results do not depend on it.
    """
    values = _as_values(q)
    if dt is None:
        dt = q.dt if isinstance(q, SnapshotMatrix) else 1.0
    w = _check_weights(w, values.shape[0])
    ens = fourier_ensembles(values, p)
    n_blk = ens.n_blocks
    keep = n_blk if n_modes is None else min(int(n_modes), n_blk)
    logger.info("SPOD: %d blocks, %d frequencies, M=%d", n_blk, p.n_freq, values.shape[0])

    def solve(k):
        return solve_frequency_eigenproblem(ens.qhat[k], w)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(solve, range(p.n_freq)))
    else:
        results = [solve(k) for k in range(p.n_freq)]

    modes = np.empty((p.n_freq, values.shape[0], keep), dtype=np.complex128)
    eigvals = np.empty((p.n_freq, keep))
    for k, (phi, lam) in enumerate(results):
        modes[k] = phi[:, :keep]
        eigvals[k] = lam[:keep]
    return SpodBasis(
        modes=modes,
        eigvals=eigvals,
        freqs=p.freqs(dt),
        weights=w,
        welch=p,
        n_blocks=n_blk,
        provenance=data_hash(values),
    )


def compute_pod(q, w, L_max: Optional[int] = None) -> PodBasis:
    """POD by the method of snapshots.

    Solves ``Q^T W Q V = V Lambda`` and returns ``Phi = Q V Lambda^(-1/2)``, so
    the modes are orthonormal under ``diag(w)``.
    """
    values = _as_values(q)
    m, nt = values.shape
    w = _check_weights(w, m)
    L_max = min(m, nt) if L_max is None else int(L_max)
    if not 1 <= L_max <= min(m, nt):
        raise ConfigError(f"L_max must be in [1, {min(m, nt)}], got {L_max}")
    gram = values.T @ (values * w[:, None])
    gram = 0.5 * (gram + gram.T)
    try:
        lam, vecs = linalg.eigh(gram, subset_by_index=[nt - L_max, nt - 1])
    except linalg.LinAlgError as exc:
        raise EigensolveError(f"POD eigensolve failed: {exc}") from exc
    lam, vecs = lam[::-1], vecs[:, ::-1]
    top = lam[0]
    keep = lam > EPS_RANK * top if top > 0 else np.zeros(lam.shape, dtype=bool)
    lam = np.where(keep, lam, 0.0)
    scale = np.zeros_like(lam)
    scale[keep] = 1.0 / np.sqrt(lam[keep])
    modes = (values @ vecs) * scale
    # Real analogue of the SPOD phase rule: largest entry positive.
    idx = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[idx, np.arange(modes.shape[1])])
    modes = modes * np.where(signs == 0, 1.0, signs)
    return PodBasis(modes=modes, eigvals=lam, weights=w, provenance=data_hash(values))


@dataclass(frozen=True)
class ReducedBasis:
    """Truncated basis as a single ``M x d`` matrix.

    ``index[i] = (mode, frequency)`` labels column ``i``; columns are grouped
    by frequency, modes varying fastest. POD columns carry frequency ``-1``.
    """

    kind: str
    columns: np.ndarray
    index: List[Tuple[int, int]]
    band: Tuple[int, int]
    L_r: int
    provenance: str = ""

    @property
    def d(self) -> int:
        return self.columns.shape[1]

    @property
    def M(self) -> int:
        return self.columns.shape[0]

    @property
    def n_freq(self) -> int:
        return self.band[1] - self.band[0] + 1 if self.kind == "spod" else 1

    def feature_groups(self) -> List[np.ndarray]:
        """Column indices per retained mode (all frequencies of that mode)."""
        modes = np.array([j for j, _ in self.index])
        return [np.flatnonzero(modes == j) for j in range(self.L_r)]


def select_band(
    b: Union[SpodBasis, PodBasis],
    L_r: int,
    flb: Optional[int] = None,
    fub: Optional[int] = None,
) -> ReducedBasis:
    """Keep ``L_r`` modes and, for SPOD, frequency bins ``flb..fub`` inclusive."""
    L_r = int(L_r)
    if not 1 <= L_r <= b.n_modes:
        raise ConfigError(f"L_r must be in [1, {b.n_modes}], got {L_r}")
    if isinstance(b, PodBasis):
        cols = b.modes[:, :L_r].astype(np.complex128)
        return ReducedBasis("pod", cols, [(j, -1) for j in range(L_r)], (0, 0), L_r, b.provenance)
    flb = 0 if flb is None else int(flb)
    fub = b.n_freq - 1 if fub is None else int(fub)
    if not 0 <= flb <= fub < b.n_freq:
        raise ConfigError(f"band ({flb}, {fub}) outside 0..{b.n_freq - 1}")
    cols = b.modes[flb : fub + 1, :, :L_r]  # (n_fr, M, L_r)
    cols = np.transpose(cols, (1, 0, 2)).reshape(b.M, -1)
    index = [(j, k) for k in range(flb, fub + 1) for j in range(L_r)]
    return ReducedBasis("spod", np.ascontiguousarray(cols), index, (flb, fub), L_r, b.provenance)


def save_basis(b: Union[SpodBasis, PodBasis], directory) -> None:
    """Persist a basis as ``meta.json`` plus ``.npy`` arrays."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"kind": b.kind, "provenance": b.provenance, "shape_modes": list(b.modes.shape)}
    if isinstance(b, SpodBasis):
        meta.update(welch=asdict(b.welch), freqs=b.freqs.tolist(), n_blocks=b.n_blocks)
    np.save(d / "modes.npy", np.ascontiguousarray(b.modes))
    np.save(d / "eigvals.npy", np.ascontiguousarray(b.eigvals))
    np.save(d / "weights.npy", np.ascontiguousarray(b.weights))
    (d / "meta.json").write_text(json.dumps(meta, indent=2))


def load_basis(directory) -> Union[SpodBasis, PodBasis]:
    d = Path(directory)
    meta_path = d / "meta.json"
    if not meta_path.exists():
        raise DataError(f"no basis found in {d}")
    meta = json.loads(meta_path.read_text())
    modes = np.load(d / "modes.npy")
    eigvals = np.load(d / "eigvals.npy")
    weights = np.load(d / "weights.npy")
    if meta["kind"] == "pod":
        return PodBasis(modes=modes, eigvals=eigvals, weights=weights, provenance=meta["provenance"])
    return SpodBasis(
        modes=modes,
        eigvals=eigvals,
        freqs=np.asarray(meta["freqs"]),
        weights=weights,
        welch=WelchParams(**meta["welch"]),
        n_blocks=meta["n_blocks"],
        provenance=meta["provenance"],
    )
