"""Snapshot matrices: loading, centering, spatial weights and train/test split.

Snapshot matrices are stored space-by-time, ``values.shape == (M, Nt)``, with
``M = n_space * n_vars`` rows grouped by variable (all points of variable 0,
then all points of variable 1, ...).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from .exceptions import (
    ConfigError,
    DataError,
    FileMissingError,
    NonFiniteError,
    ShapeMismatchError,
)

__all__ = [
    "SnapshotMatrix",
    "load_snapshot_matrix",
    "save_snapshot_matrix",
    "subtract_temporal_mean",
    "build_uniform_weights",
    "build_spherical_weights",
    "split_train_test",
    "data_hash",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SnapshotMatrix:
    """Real ``M x Nt`` data matrix, one column per time snapshot.

    Parameters
    ----------
    values : ndarray, shape (M, Nt)
        Snapshot data. Stored as a read-only float64 copy.
    n_vars : int
        Number of variables stacked along the rows.
    dt : float
        Time step between snapshots (metadata only).
    grid : mapping, optional
        Per-axis coordinates, e.g. ``{"lat": [...], "lon": [...]}``.
    mean : ndarray, shape (M,), optional
        Temporal mean that was removed from ``values``; ``None`` when the
        matrix has not been centered.
    """

    values: np.ndarray
    n_vars: int = 1
    dt: float = 1.0
    grid: Optional[Mapping[str, Any]] = None
    mean: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ShapeMismatchError(f"snapshot matrix must be 2-D, got shape {values.shape}")
        if self.n_vars < 1 or values.shape[0] % self.n_vars:
            raise ShapeMismatchError(
                f"M={values.shape[0]} is not a multiple of n_vars={self.n_vars}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("snapshot matrix contains non-finite entries")
        object.__setattr__(self, "values", _frozen(values))
        if self.mean is not None:
            mean = np.asarray(self.mean, dtype=np.float64).ravel()
            if mean.shape != (values.shape[0],):
                raise ShapeMismatchError(
                    f"mean has length {mean.size}, expected {values.shape[0]}"
                )
            object.__setattr__(self, "mean", _frozen(mean))

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def n_time(self) -> int:
        return self.values.shape[1]

    @property
    def n_space(self) -> int:
        return self.M // self.n_vars

    @property
    def is_centered(self) -> bool:
        return self.mean is not None

    def restored(self) -> np.ndarray:
        """Values with the stored mean added back (a new writable array)."""
        if self.mean is None:
            return np.array(self.values)
        return self.values + self.mean[:, None]

    def take(self, start: int, stop: int) -> "SnapshotMatrix":
        """Contiguous time slice ``[start, stop)`` sharing metadata."""
        return replace(self, values=self.values[:, start:stop])


def data_hash(values: np.ndarray) -> str:
    """SHA-256 of the array shape and float64 bytes, used for provenance."""
    a = np.ascontiguousarray(values, dtype=np.float64)
    h = hashlib.sha256()
    h.update(repr(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()


_DTYPES = {"f8": np.dtype("<f8"), "f4": np.dtype("<f4")}


def _read_layout(path: Path, layout: Optional[Mapping[str, Any]]) -> dict:
    if layout is None:
        sidecar = path.with_name(path.name + ".json")
        if not sidecar.exists():
            raise FileMissingError(f"raw binary {path} needs a layout or sidecar {sidecar}")
        layout = json.loads(sidecar.read_text())
    layout = dict(layout)
    if "shape" not in layout:
        raise ConfigError("layout must define 'shape'")
    layout.setdefault("order", "C")
    layout.setdefault("dtype", "f8")
    if layout["order"] not in ("C", "F"):
        raise ConfigError(f"layout order must be 'C' or 'F', got {layout['order']!r}")
    if layout["dtype"] not in _DTYPES:
        raise ConfigError(f"layout dtype must be one of {sorted(_DTYPES)}, got {layout['dtype']!r}")
    return layout


def load_snapshot_matrix(
    path,
    layout: Optional[Mapping[str, Any]] = None,
    *,
    n_vars: int = 1,
    dt: float = 1.0,
    grid: Optional[Mapping[str, Any]] = None,
) -> SnapshotMatrix:
    """Read an ``M x Nt`` snapshot matrix from disk.

    Supported formats, chosen by file extension:

    * ``.npy`` -- standard NumPy array file (float64 or float32).
    * ``.csv`` / ``.txt`` -- comma separated, one row per spatial point.
    * anything else -- raw little-endian binary described by ``layout``
      (``{"shape": [M, Nt], "order": "C"|"F", "dtype": "f8"|"f4"}``) or by a
      JSON sidecar named ``<path>.json``.

    float32 input is promoted to float64. No centering is applied.
    """
    path = Path(path)
    if not path.exists():
        raise FileMissingError(f"no such file: {path}")
    suffix = path.suffix.lower()
    if suffix == ".npy":
        values = np.load(path, allow_pickle=False)
        if layout is not None and "shape" in layout and tuple(layout["shape"]) != values.shape:
            raise ShapeMismatchError(
                f"declared shape {tuple(layout['shape'])} != stored shape {values.shape}"
            )
    elif suffix in (".csv", ".txt"):
        values = np.loadtxt(path, delimiter=",", ndmin=2)
        if layout is not None and "shape" in layout and tuple(layout["shape"]) != values.shape:
            raise ShapeMismatchError(
                f"declared shape {tuple(layout['shape'])} != parsed shape {values.shape}"
            )
    else:
        layout = _read_layout(path, layout)
        shape = tuple(int(s) for s in layout["shape"])
        flat = np.fromfile(path, dtype=_DTYPES[layout["dtype"]])
        if flat.size != math.prod(shape):
            raise ShapeMismatchError(
                f"{path} holds {flat.size} elements, layout declares {shape}"
            )
        values = flat.reshape(shape, order=layout["order"])
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D array, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{path} contains non-finite entries")
    return SnapshotMatrix(values, n_vars=n_vars, dt=dt, grid=grid)


def save_snapshot_matrix(q: SnapshotMatrix, path) -> None:
    """Write ``q.values`` as ``.npy`` (or raw ``f8`` + sidecar for other suffixes)."""
    path = Path(path)
    if path.suffix.lower() == ".npy":
        np.save(path, np.ascontiguousarray(q.values))
        return
    np.ascontiguousarray(q.values, dtype="<f8").tofile(path)
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps({"shape": list(q.values.shape), "order": "C", "dtype": "f8"}))


def subtract_temporal_mean(q: SnapshotMatrix) -> SnapshotMatrix:
    """Remove the per-row time average and keep it in ``mean``."""
    if q.n_time < 2:
        raise DataError(f"need at least 2 snapshots to center, got {q.n_time}")
    raw = q.restored()
    mean = raw.mean(axis=1)
    return replace(q, values=raw - mean[:, None], mean=mean)


def build_uniform_weights(M: int) -> np.ndarray:
    """Identity inner-product weights."""
    if int(M) < 1:
        raise ConfigError(f"M must be >= 1, got {M}")
    return np.ones(int(M))


def _spacing(x: np.ndarray, name: str) -> np.ndarray:
    if x.size == 1:
        raise ConfigError(f"{name} needs at least 2 points to define a spacing")
    d = np.diff(x)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise DataError(f"{name} grid is not strictly monotone")
    return np.abs(np.gradient(x))


def build_spherical_weights(lats, lons, n_vars: int = 1, radius: float = 1.0) -> np.ndarray:
    """Surface-element weights ``r^2 cos(lat) dlat dlon`` on a lat-lon grid.

    Points are ordered latitude-major (``lat`` varies slowest), matching a
    C-order flatten of a ``(n_lat, n_lon)`` field; the pattern is repeated
    for each variable. Spacings come from the grid (central differences in
    the interior, one-sided at the ends).
    """
    lats = np.asarray(lats, dtype=np.float64).ravel()
    lons = np.asarray(lons, dtype=np.float64).ravel()
    if np.any(np.abs(lats) > 90.0):
        raise DataError("latitudes must lie in [-90, 90] degrees")
    dlat = np.deg2rad(_spacing(lats, "latitude"))
    dlon = np.deg2rad(_spacing(lons, "longitude"))
    coslat = np.clip(np.cos(np.deg2rad(lats)), 0.0, None)
    w = radius**2 * np.outer(coslat * dlat, dlon).ravel()
    return np.tile(w, int(n_vars))


def split_train_test(q: SnapshotMatrix, train_fraction: float):
    """Contiguous split into train and test parts, both centered on the train mean.

    The train length is ``floor(train_fraction * Nt)``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(math.floor(train_fraction * q.n_time + 1e-9))
    if n_train < 2 or n_train >= q.n_time:
        raise DataError(
            f"split of {q.n_time} snapshots at {train_fraction} leaves an empty or "
            f"degenerate partition ({n_train} train)"
        )
    raw = q.restored()
    mean = raw[:, :n_train].mean(axis=1)
    fluct = raw - mean[:, None]
    train = replace(q, values=fluct[:, :n_train], mean=mean)
    test = replace(q, values=fluct[:, n_train:], mean=mean)
    return train, test
